// atfs: command-line front end for the attack harness.
#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "atfs/harness.hpp"
#include "atfs/image_io.hpp"

namespace {

// Flags are collected as raw strings so a config file can be applied first
// and then overridden by whatever was given on the command line.
struct Flags {
    std::string config;
    std::map<std::string, std::string> values;
    std::size_t height = 32;
    std::size_t width = 32;
};

void add_common(CLI::App* cmd, Flags& f, bool attack_flags) {
    cmd->add_option("--config", f.config, "key=value config file (flags override it)");
    auto opt = [&](const char* flag, const char* key, const char* help) {
        cmd->add_option_function<std::string>(flag, [&f, key](const std::string& v) { f.values[key] = v; }, help);
    };
    opt("--out-dir", "out_dir", "output directory");
    opt("--seed", "seed", "base seed");
    if (!attack_flags) return;
    opt("--input", "input", "fixture:SEED, file:PATH or a PNG path");
    opt("--target", "target", "pattern:stripes:P, pattern:moire:A1:A2, pattern:texture:S, fixture:S or file:PATH");
    opt("--models", "models", "comma list of KIND:SEED (vae_proxy, gan_proxy, vqvae_proxy)");
    opt("--method", "method", "atfs, naive_joint, pcgrad or single_pgd");
    opt("--eps", "eps", "L-inf budget in 1/255 units");
    opt("--alpha", "alpha", "step size in 1/255 units (default eps/10)");
    opt("--steps", "steps", "iterations");
    opt("--weights", "weights", "comma list of per-model weights");
    opt("--xi", "xi", "gradient normalization stabilizer");
    opt("--baseline-loss", "baseline_loss", "objective of naive_joint/pcgrad: deviation or alignment");
}

atfs::ExperimentConfig resolve(const Flags& f) {
    atfs::ExperimentConfig c;
    if (!f.config.empty()) {
        for (const auto& [k, v] : atfs::read_config_file(f.config)) atfs::apply_setting(c, k, v);
    }
    for (const auto& [k, v] : f.values) atfs::apply_setting(c, k, v);
    return c;
}

void print_report(const atfs::AttackReport& r) {
    std::printf("%s eps=%.4g  loss %s -> %s  linf=%.6g  psnr=%.2f dB  ms-ssim=%.4f\n", r.method.c_str(),
                r.epsilon * 255.0, atfs::format_number(r.init_total).c_str(),
                atfs::format_number(r.final_total).c_str(), r.linf, r.psnr_db, r.ms_ssim);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Targeted multi-extractor feature perturbation"};
    app.require_subcommand(1);

    Flags attack, sweep, robust, conflict, pattern;

    auto* c_attack = app.add_subcommand("attack", "run one attack; writes adv.png, trace.csv, report.csv");
    add_common(c_attack, attack, true);

    auto* c_sweep = app.add_subcommand("sweep-budget", "attack at several budgets; writes sweep.csv");
    add_common(c_sweep, sweep, true);
    c_sweep->add_option_function<std::string>(
        "--sweep-eps", [&](const std::string& v) { sweep.values["sweep_eps"] = v; }, "comma list of budgets (1/255)");

    auto* c_robust = app.add_subcommand("robustness", "attack then re-evaluate under transforms");
    add_common(c_robust, robust, true);
    c_robust->add_option_function<std::string>(
        "--transforms", [&](const std::string& v) { robust.values["transforms"] = v; },
        "comma list of jpeg:Q, noise:SIGMA[:SEED], rescale:F");

    auto* c_conflict = app.add_subcommand("conflict", "pairwise gradient cosine over fixture faces");
    add_common(c_conflict, conflict, true);
    c_conflict->add_option_function<std::string>(
        "--images", [&](const std::string& v) { conflict.values["images"] = v; }, "number of fixture images");

    auto* c_pattern = app.add_subcommand("gen-pattern", "render a target pattern to target.png");
    add_common(c_pattern, pattern, false);
    c_pattern->add_option_function<std::string>(
        "--target", [&](const std::string& v) { pattern.values["target"] = v; }, "pattern spec");
    c_pattern->add_option("--height", pattern.height)->check(CLI::PositiveNumber);
    c_pattern->add_option("--width", pattern.width)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*c_attack) {
            print_report(atfs::cmd_attack(resolve(attack)));
        } else if (*c_sweep) {
            for (const auto& r : atfs::cmd_sweep_budget(resolve(sweep))) print_report(r);
        } else if (*c_robust) {
            for (const auto& r : atfs::cmd_robustness(resolve(robust))) {
                std::printf("%-14s reduction %.3f -> %.3f\n", r.transform.c_str(), r.reduction_pre, r.reduction_post);
            }
        } else if (*c_conflict) {
            for (const auto& r : atfs::cmd_conflict(resolve(conflict))) {
                std::printf("%-10s mean cosine %.4f +- %.4f (n=%zu)\n", std::string(atfs::to_string(r.kind)).c_str(),
                            r.stats.mean_cosine, r.stats.std_error, r.stats.sample_count);
            }
        } else if (*c_pattern) {
            atfs::cmd_gen_pattern(resolve(pattern), pattern.height, pattern.width);
        }
    } catch (const atfs::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
