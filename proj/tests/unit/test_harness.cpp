#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "atfs/harness.hpp"
#include "atfs/image_io.hpp"
#include "atfs/metrics.hpp"
#include "atfs/patterns.hpp"

using namespace atfs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "atfs_test_harness" / name;
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

ExperimentConfig small(const std::string& dir) {
    ExperimentConfig c;
    c.steps = 10;
    c.out_dir = scratch(dir);
    return c;
}

}  // namespace

TEST_CASE("settings and config text") {
    ExperimentConfig c;
    apply_setting(c, "models", "vae_proxy:1, gan_proxy:2,vqvae_proxy:3");
    CHECK(c.models.size() == 3);
    apply_setting(c, "eps", "8");
    apply_setting(c, "alpha", "0.5");
    apply_setting(c, "method", "pcgrad");
    apply_setting(c, "weights", "1,2,3");
    apply_setting(c, "baseline-loss", "alignment");
    const auto a = c.attack_config();
    CHECK(a.epsilon == 8.0 / 255.0);
    CHECK(a.alpha == 0.5 / 255.0);
    CHECK(a.method == Method::pcgrad);
    CHECK(a.weights == std::vector<double>{1, 2, 3});
    CHECK(a.baseline_loss == LossKind::alignment);
    ExperimentConfig d;
    CHECK(d.attack_config(2.0).alpha == doctest::Approx(0.2 / 255.0));

    CHECK_THROWS_AS(apply_setting(c, "bogus", "1"), UsageError);
    CHECK_THROWS_AS(apply_setting(c, "eps", "six"), UsageError);
    CHECK_THROWS_AS(apply_setting(c, "steps", "-3"), UsageError);
    CHECK_THROWS_AS(apply_setting(c, "method", "fgsm"), UsageError);

    const auto kv = parse_config_text("# comment\n\nsteps = 7\n models=vae_proxy:4 \n");
    CHECK(kv.at("steps") == "7");
    CHECK(kv.at("models") == "vae_proxy:4");
    CHECK_THROWS_AS(parse_config_text("steps 7"), UsageError);
    CHECK_THROWS_AS(read_config_file("/nonexistent/atfs.cfg"), UsageError);
}

TEST_CASE("input and target specs") {
    CHECK(load_input_image("fixture:3").to_vector() == gen_face_fixture(3).to_vector());
    CHECK_THROWS_AS(load_input_image("/nonexistent.png"), UsageError);
    CHECK(load_target_image("pattern:stripes:4", 32, 32).to_vector() == gen_stripes(32, 32, 4).to_vector());
    CHECK(load_target_image("pattern:moire:0:45", 32, 32).to_vector() == gen_moire(32, 32, 0, 45).to_vector());
    CHECK(load_target_image("pattern:texture:5", 16, 16).to_vector() == gen_texture(16, 16, 5).to_vector());
    CHECK_THROWS_AS(load_target_image("pattern:moire:10:10", 32, 32), UsageError);
    CHECK_THROWS_AS(load_target_image("pattern:spiral:1", 32, 32), UsageError);
    CHECK_THROWS_AS(load_target_image("stripes", 32, 32), UsageError);
    CHECK_THROWS_AS(build_extractors({}, {}), UsageError);
    CHECK_THROWS_AS(build_extractors({"vae_proxy:1", "resnet:2"}, {}), UsageError);
}

TEST_CASE("number formatting round-trips") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(6.0 / 255.0) == "0.023529411764705882");
    CHECK(format_number(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_number(std::nan("")) == "nan");
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("attack writes its outputs") {
    const auto c = small("attack");
    const auto r = cmd_attack(c);
    CHECK(fs::exists(c.out_dir / "adv.png"));
    CHECK(r.linf <= 6.0 / 255.0 + 1e-15);
    CHECK(r.final_total < r.init_total);
    const auto report = lines(slurp(c.out_dir / "report.csv"));
    REQUIRE(report.size() == 3);
    CHECK(report[0] == kReportSchema);
    const auto trace = lines(slurp(c.out_dir / "trace.csv"));
    CHECK(trace[0] == kTraceSchema);
    CHECK(trace.size() == 2 + 10 + 1);
    const auto adv = load_png(c.out_dir / "adv.png");
    CHECK(perturbation_norms(gen_face_fixture(0), adv).linf == doctest::Approx(r.linf_quantized).epsilon(1e-12));
}

TEST_CASE("zero steps report zero norms") {
    auto c = small("zero");
    c.steps = 0;
    const auto r = cmd_attack(c);
    CHECK(r.linf == 0.0);
    CHECK(r.l2 == 0.0);
    CHECK(r.ms_ssim == 1.0);
    CHECK(std::isinf(r.psnr_db));
    CHECK(r.init_losses == r.final_losses);
}

TEST_CASE("methods give different images") {
    auto a = small("m_atfs");
    auto n = small("m_naive");
    n.method = Method::naive_joint;
    cmd_attack(a);
    cmd_attack(n);
    CHECK(load_png(a.out_dir / "adv.png").to_vector() != load_png(n.out_dir / "adv.png").to_vector());
}

TEST_CASE("sweep rows carry requested budgets; singleton equals attack") {
    auto s = small("sweep");
    s.sweep_eps_255 = {2.0, 4.0, 8.0, 16.0};
    const auto rows = cmd_sweep_budget(s);
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(rows[i].epsilon == s.sweep_eps_255[i] / 255.0);
    CHECK(lines(slurp(s.out_dir / "sweep.csv")).size() == 6);
    CHECK(fs::exists(s.out_dir / "adv_eps16.png"));

    auto one = small("sweep_one");
    one.sweep_eps_255 = {6.0};
    const auto att = small("sweep_ref");
    cmd_sweep_budget(one);
    cmd_attack(att);
    CHECK(slurp(one.out_dir / "sweep.csv") == slurp(att.out_dir / "report.csv"));
    CHECK(slurp(one.out_dir / "adv_eps6.png") == slurp(att.out_dir / "adv.png"));

    auto empty = small("sweep_empty");
    empty.sweep_eps_255.clear();
    CHECK_THROWS_AS(cmd_sweep_budget(empty), UsageError);
}

TEST_CASE("robustness") {
    auto c = small("robust");
    CHECK_THROWS_AS(cmd_robustness(c), UsageError);
    c.transforms = {"rescale:1.0", "jpeg:75", "noise:0.02:1"};
    const auto rows = cmd_robustness(c);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].retention == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rows[0].reduction_post == doctest::Approx(rows[0].reduction_pre).epsilon(1e-9));
    CHECK(rows[1].transform == "jpeg:75");
    CHECK(lines(slurp(c.out_dir / "robustness.csv")).size() == 5);
    c.transforms = {"blur:3"};
    CHECK_THROWS_AS(cmd_robustness(c), UsageError);
}

TEST_CASE("conflict and gen-pattern") {
    auto c = small("conflict");
    c.conflict_images = 3;
    const auto rows = cmd_conflict(c);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].kind == LossKind::deviation);
    CHECK(rows[0].stats.sample_count == 3);
    CHECK(lines(slurp(c.out_dir / "conflict.csv")).size() == 4);
    c.models = {"vae_proxy:1"};
    CHECK_THROWS_AS(cmd_conflict(c), UsageError);

    auto g = small("pattern");
    g.target = "pattern:stripes:2";
    cmd_gen_pattern(g, 8, 8);
    CHECK(load_png(g.out_dir / "target.png").to_vector() == gen_stripes(8, 8, 2).to_vector());
}

TEST_CASE("identical runs are byte-identical") {
    const auto a = small("det_a");
    const auto b = small("det_b");
    cmd_attack(a);
    cmd_attack(b);
    for (const char* f : {"adv.png", "trace.csv", "report.csv"}) CHECK(slurp(a.out_dir / f) == slurp(b.out_dir / f));
}
