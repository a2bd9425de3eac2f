#include "atfs/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include "atfs/image_io.hpp"
#include "atfs/metrics.hpp"
#include "atfs/patterns.hpp"

namespace atfs {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string_view s, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto pos = s.find(sep, start);
        const auto item = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (!item.empty()) out.emplace_back(item);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <class T>
T parse_value(std::string_view key, std::string_view value) {
    value = trim(value);
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
        throw UsageError("bad value '" + std::string(value) + "' for " + std::string(key));
    }
    return out;
}

std::string join(const std::vector<double>& v, char sep = ';') {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += format_number(v[i]);
    }
    return out;
}

std::string join(const std::vector<std::string>& v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

void prepare_out_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Wall-clock goes to its own log so CSV outputs stay byte-reproducible.
void log_timing(const std::filesystem::path& dir, const std::string& what, double seconds) {
    std::ofstream f(dir / "timing.log", std::ios::app);
    f << what << ' ' << seconds << "s\n";
}

struct Setup {
    Tensor x;
    Tensor target;
    std::vector<FeatureExtractor> extractors;
};

Setup load_setup(const ExperimentConfig& config) {
    Setup s;
    s.x = load_input_image(config.input);
    const ImageGeometry geom{s.x.shape()[0], s.x.shape()[1], s.x.shape()[2]};
    s.target = load_target_image(config.target, geom.height, geom.width);
    if (s.target.shape() != s.x.shape()) {
        throw UsageError("target image " + shape_str(s.target.shape()) + " does not match input " +
                         shape_str(s.x.shape()));
    }
    s.extractors = build_extractors(config.models, geom);
    return s;
}

std::string eps_label(double eps_255) {
    std::string s = format_number(eps_255);
    std::replace(s.begin(), s.end(), '.', 'p');
    return s;
}

}  // namespace

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Configuration

AttackConfig ExperimentConfig::attack_config() const { return attack_config(eps_255); }

AttackConfig ExperimentConfig::attack_config(double eps_override) const {
    AttackConfig c = AttackConfig::with_budget(eps_override / 255.0);
    if (alpha_255) c.alpha = *alpha_255 / 255.0;
    c.steps = steps;
    c.weights = weights;
    c.xi = xi;
    c.method = method;
    c.seed = seed;
    c.baseline_loss = baseline_loss;
    return c;
}

void apply_setting(ExperimentConfig& c, std::string_view key, std::string_view value) {
    key = trim(key);
    value = trim(value);
    try {
        if (key == "input") c.input = value;
        else if (key == "target") c.target = value;
        else if (key == "models") c.models = split_list(value);
        else if (key == "method") c.method = parse_method(value);
        else if (key == "eps") c.eps_255 = parse_value<double>(key, value);
        else if (key == "alpha") c.alpha_255 = parse_value<double>(key, value);
        else if (key == "steps") c.steps = parse_value<std::size_t>(key, value);
        else if (key == "seed") c.seed = parse_value<std::uint64_t>(key, value);
        else if (key == "xi") c.xi = parse_value<double>(key, value);
        else if (key == "images") c.conflict_images = parse_value<std::size_t>(key, value);
        else if (key == "out_dir" || key == "out-dir") c.out_dir = std::string(value);
        else if (key == "transforms") c.transforms = split_list(value);
        else if (key == "weights") {
            c.weights.clear();
            for (const auto& w : split_list(value)) c.weights.push_back(parse_value<double>(key, w));
        } else if (key == "sweep_eps" || key == "sweep-eps") {
            c.sweep_eps_255.clear();
            for (const auto& e : split_list(value)) c.sweep_eps_255.push_back(parse_value<double>(key, e));
        } else if (key == "baseline_loss" || key == "baseline-loss") {
            if (value == "deviation") c.baseline_loss = LossKind::deviation;
            else if (value == "alignment") c.baseline_loss = LossKind::alignment;
            else throw UsageError("baseline_loss must be deviation or alignment");
        } else {
            throw UsageError("unknown setting '" + std::string(key) + "'");
        }
    } catch (const UsageError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

std::map<std::string, std::string> parse_config_text(std::string_view text) {
    std::map<std::string, std::string> out;
    std::size_t line_no = 0, start = 0;
    while (start <= text.size()) {
        const auto end = text.find('\n', start);
        const auto line = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
        ++line_no;
        if (!line.empty() && line.front() != '#') {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
            }
            out[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
        }
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// Inputs

Tensor load_input_image(std::string_view spec) {
    if (spec.starts_with("fixture:")) {
        return gen_face_fixture(parse_value<std::uint64_t>("fixture", spec.substr(8)));
    }
    const auto path = spec.starts_with("file:") ? spec.substr(5) : spec;
    if (!std::filesystem::exists(std::filesystem::path(path))) {
        throw UsageError("input image '" + std::string(path) + "' does not exist");
    }
    return load_png(std::filesystem::path(path));
}

Tensor load_target_image(std::string_view spec, std::size_t h, std::size_t w) {
    if (spec.starts_with("pattern:")) {
        const auto parts = split_list(spec.substr(8), ':');
        if (parts.empty()) throw UsageError("empty pattern spec");
        try {
            if (parts[0] == "stripes" && parts.size() == 2)
                return gen_stripes(h, w, parse_value<std::size_t>("stripes period", parts[1]));
            if (parts[0] == "moire" && parts.size() == 3)
                return gen_moire(h, w, parse_value<double>("moire angle", parts[1]),
                                 parse_value<double>("moire angle", parts[2]));
            if (parts[0] == "texture" && parts.size() == 2)
                return gen_texture(h, w, parse_value<std::uint64_t>("texture seed", parts[1]));
        } catch (const UsageError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        throw UsageError("bad pattern spec '" + std::string(spec) +
                         "' (expected stripes:PERIOD, moire:A1:A2 or texture:SEED)");
    }
    if (spec.starts_with("fixture:")) {
        return gen_face_fixture(parse_value<std::uint64_t>("fixture", spec.substr(8)), h, w);
    }
    if (spec.starts_with("file:")) return load_input_image(spec);
    throw UsageError("bad target spec '" + std::string(spec) + "' (expected pattern:..., fixture:SEED or file:PATH)");
}

std::vector<FeatureExtractor> build_extractors(const std::vector<std::string>& specs, const ImageGeometry& geometry) {
    if (specs.empty()) throw UsageError("no models given");
    std::vector<FeatureExtractor> out;
    try {
        for (const auto& s : specs) out.push_back(parse_extractor_spec(s, geometry));
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

RobustnessRow evaluate_robustness(std::span<const FeatureExtractor> extractors, const TargetSet& targets,
                                  const Tensor& clean, const Tensor& adversarial, const TransformSpec& transform) {
    RobustnessRow r;
    r.transform = transform.str();
    r.loss_clean = total(alignment_losses(extractors, targets, clean));
    r.loss_adv = total(alignment_losses(extractors, targets, adversarial));
    r.loss_transformed = total(alignment_losses(extractors, targets, apply_transform(adversarial, transform)));
    const double gained = r.loss_clean - r.loss_adv;
    const double kept = r.loss_clean - r.loss_transformed;
    r.reduction_pre = r.loss_clean > 0.0 ? gained / r.loss_clean : 0.0;
    r.reduction_post = r.loss_clean > 0.0 ? kept / r.loss_clean : 0.0;
    r.retention = gained > 0.0 ? kept / gained : std::numeric_limits<double>::quiet_NaN();
    return r;
}

AttackOutcome run_experiment(std::span<const FeatureExtractor> extractors, const Tensor& x, const Tensor& target,
                             const AttackConfig& attack, const std::string& models_label) {
    AttackOutcome out;
    out.result = run_attack(extractors, x, target, attack);
    const TargetSet targets = precompute_targets(extractors, target);
    auto& r = out.report;
    r.method = to_string(attack.method);
    r.models = models_label;
    r.seed = attack.seed;
    r.epsilon = attack.epsilon;
    r.alpha = attack.alpha;
    r.steps = attack.steps;
    r.init_losses = alignment_losses(extractors, targets, x);
    r.final_losses = alignment_losses(extractors, targets, out.result.adversarial);
    r.init_total = total(r.init_losses);
    r.final_total = total(r.final_losses);
    const auto summary = synergy_report(out.result.state);
    r.convergence_index = summary.convergence_index;
    r.mean_cosine = summary.overall_mean_cosine;
    const auto metrics = evaluate_metrics(x, out.result.adversarial);
    r.linf = metrics.linf;
    r.l2 = metrics.l2;
    r.psnr_db = metrics.psnr_db;
    r.ms_ssim = metrics.ms_ssim;
    r.linf_quantized = perturbation_norms(x, quantize_8bit(out.result.adversarial)).linf;
    return out;
}

// ---------------------------------------------------------------------------
// Commands

AttackReport cmd_attack(const ExperimentConfig& config) {
    const Stopwatch clock;
    const Setup s = load_setup(config);
    prepare_out_dir(config.out_dir);
    const auto outcome = run_experiment(s.extractors, s.x, s.target, config.attack_config(), join(config.models, '+'));
    save_png(outcome.result.adversarial, config.out_dir / "adv.png");
    write_text(config.out_dir / "trace.csv", trace_csv(outcome.result.state));
    write_text(config.out_dir / "report.csv", report_csv({outcome.report}));
    log_timing(config.out_dir, "attack", clock.seconds());
    return outcome.report;
}

std::vector<AttackReport> cmd_sweep_budget(const ExperimentConfig& config) {
    if (config.sweep_eps_255.empty()) throw UsageError("sweep-budget needs a nonempty --sweep-eps list");
    const Stopwatch clock;
    const Setup s = load_setup(config);
    prepare_out_dir(config.out_dir);
    const std::string label = join(config.models, '+');
    // Independent runs; each writes its own PNG, the CSV is written once below.
    std::vector<std::future<AttackReport>> jobs;
    for (double eps : config.sweep_eps_255) {
        jobs.push_back(std::async(std::launch::async, [&, eps] {
            const auto outcome = run_experiment(s.extractors, s.x, s.target, config.attack_config(eps), label);
            save_png(outcome.result.adversarial, config.out_dir / ("adv_eps" + eps_label(eps) + ".png"));
            return outcome.report;
        }));
    }
    std::vector<AttackReport> rows;
    for (auto& j : jobs) rows.push_back(j.get());
    write_text(config.out_dir / "sweep.csv", report_csv(rows));
    log_timing(config.out_dir, "sweep-budget", clock.seconds());
    return rows;
}

std::vector<RobustnessRow> cmd_robustness(const ExperimentConfig& config) {
    if (config.transforms.empty()) throw UsageError("robustness needs at least one --transforms entry");
    std::vector<TransformSpec> specs;
    try {
        for (const auto& t : config.transforms) specs.push_back(parse_transform_spec(t));
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const Stopwatch clock;
    const Setup s = load_setup(config);
    prepare_out_dir(config.out_dir);
    const auto outcome = run_experiment(s.extractors, s.x, s.target, config.attack_config(), join(config.models, '+'));
    save_png(outcome.result.adversarial, config.out_dir / "adv.png");
    write_text(config.out_dir / "report.csv", report_csv({outcome.report}));
    const TargetSet targets = precompute_targets(s.extractors, s.target);
    std::vector<RobustnessRow> rows;
    for (const auto& spec : specs) {
        rows.push_back(evaluate_robustness(s.extractors, targets, s.x, outcome.result.adversarial, spec));
    }
    write_text(config.out_dir / "robustness.csv", robustness_csv(rows));
    log_timing(config.out_dir, "robustness", clock.seconds());
    return rows;
}

std::vector<ConflictRow> cmd_conflict(const ExperimentConfig& config) {
    if (config.models.size() < 2) throw UsageError("conflict needs at least two models");
    if (config.conflict_images == 0) throw UsageError("conflict needs --images >= 1");
    const Stopwatch clock;
    const Tensor first = gen_face_fixture(config.seed);
    const ImageGeometry geom{first.shape()[0], first.shape()[1], first.shape()[2]};
    const auto extractors = build_extractors(config.models, geom);
    const Tensor target = load_target_image(config.target, geom.height, geom.width);
    std::vector<Tensor> images;
    for (std::size_t i = 0; i < config.conflict_images; ++i) images.push_back(gen_face_fixture(config.seed + i));
    prepare_out_dir(config.out_dir);
    ConflictProbe probe;
    probe.probe_epsilon = config.eps_255 / 255.0;
    probe.seed = config.seed;
    std::vector<ConflictRow> rows;
    for (LossKind kind : {LossKind::deviation, LossKind::alignment}) {
        rows.push_back({kind, measure_pixel_conflict(extractors, images, kind, target, probe)});
    }
    write_text(config.out_dir / "conflict.csv", conflict_csv(rows));
    log_timing(config.out_dir, "conflict", clock.seconds());
    return rows;
}

void cmd_gen_pattern(const ExperimentConfig& config, std::size_t height, std::size_t width) {
    const Tensor img = load_target_image(config.target, height, width);
    prepare_out_dir(config.out_dir);
    save_png(img, config.out_dir / "target.png");
}

// ---------------------------------------------------------------------------
// CSV

std::string report_csv(const std::vector<AttackReport>& rows) {
    std::ostringstream os;
    os << kReportSchema << '\n'
       << "method,models,seed,epsilon,alpha,steps,init_losses,final_losses,init_total,final_total,"
          "convergence_index,mean_cosine,linf,l2,linf_quantized,psnr_db,ms_ssim\n";
    for (const auto& r : rows) {
        os << r.method << ',' << r.models << ',' << r.seed << ',' << format_number(r.epsilon) << ','
           << format_number(r.alpha) << ',' << r.steps << ',' << join(r.init_losses) << ',' << join(r.final_losses)
           << ',' << format_number(r.init_total) << ',' << format_number(r.final_total) << ','
           << r.convergence_index << ',' << format_number(r.mean_cosine) << ',' << format_number(r.linf) << ','
           << format_number(r.l2) << ',' << format_number(r.linf_quantized) << ',' << format_number(r.psnr_db)
           << ',' << format_number(r.ms_ssim) << '\n';
    }
    return os.str();
}

std::string trace_csv(const PerturbationState& state) {
    std::ostringstream os;
    os << kTraceSchema << '\n' << "iteration,losses,grad_norms,cosines,total_loss,delta_linf\n";
    for (std::size_t t = 0; t < state.trace.size(); ++t) {
        const auto& r = state.trace[t];
        os << t << ',' << join(r.losses) << ',' << join(r.grad_norms) << ',' << join(r.cosines) << ','
           << format_number(total(r.losses)) << ',' << format_number(r.delta_linf) << '\n';
    }
    if (!state.final_losses.empty()) {
        os << state.trace.size() << ',' << join(state.final_losses) << ",,," << format_number(total(state.final_losses))
           << ",\n";
    }
    return os.str();
}

std::string robustness_csv(const std::vector<RobustnessRow>& rows) {
    std::ostringstream os;
    os << kRobustnessSchema << '\n'
       << "transform,loss_clean,loss_adv,loss_transformed,reduction_pre,reduction_post,retention\n";
    for (const auto& r : rows) {
        os << r.transform << ',' << format_number(r.loss_clean) << ',' << format_number(r.loss_adv) << ','
           << format_number(r.loss_transformed) << ',' << format_number(r.reduction_pre) << ','
           << format_number(r.reduction_post) << ',' << format_number(r.retention) << '\n';
    }
    return os.str();
}

std::string conflict_csv(const std::vector<ConflictRow>& rows) {
    std::ostringstream os;
    os << kConflictSchema << '\n'
       << "loss_kind,mean_cosine,std_cosine,std_error,mean_inner_product,sample_count,dimension\n";
    for (const auto& r : rows) {
        os << to_string(r.kind) << ',' << format_number(r.stats.mean_cosine) << ','
           << format_number(r.stats.std_cosine) << ',' << format_number(r.stats.std_error) << ','
           << format_number(r.stats.mean_inner_product) << ',' << r.stats.sample_count << ','
           << r.stats.dimension << '\n';
    }
    return os.str();
}

}  // namespace atfs
