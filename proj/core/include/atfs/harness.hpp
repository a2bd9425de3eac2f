#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "atfs/attack.hpp"
#include "atfs/diagnostics.hpp"
#include "atfs/extractors.hpp"
#include "atfs/robustness.hpp"

namespace atfs {

/// Bad configuration or command-line input (exit code 1).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr std::string_view kReportSchema = "# atfs-report v1";
inline constexpr std::string_view kTraceSchema = "# atfs-trace v1";
inline constexpr std::string_view kRobustnessSchema = "# atfs-robustness v1";
inline constexpr std::string_view kConflictSchema = "# atfs-conflict v1";

/// Everything a CLI command needs. Budgets are in 1/255 units.
struct ExperimentConfig {
    std::string input = "fixture:0";
    std::string target = "pattern:moire:0:45";
    std::vector<std::string> models = {"vae_proxy:1", "gan_proxy:2"};
    Method method = Method::atfs;
    double eps_255 = 6.0;
    std::optional<double> alpha_255;  // default eps / 10
    std::size_t steps = 100;
    std::uint64_t seed = 0;
    std::vector<double> weights;
    double xi = 1e-8;
    LossKind baseline_loss = LossKind::deviation;
    std::vector<std::string> transforms;
    std::vector<double> sweep_eps_255 = {2.0, 4.0, 8.0, 16.0};
    std::size_t conflict_images = 100;
    std::filesystem::path out_dir = "atfs_out";

    AttackConfig attack_config() const;
    AttackConfig attack_config(double eps_255_override) const;
};

/// Sets one key (same names as the CLI flags without dashes; list values are
/// comma-separated). Throws UsageError for unknown keys or bad values.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);

/// Flat key=value text; blank lines and lines starting with '#' are skipped.
std::map<std::string, std::string> parse_config_text(std::string_view text);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// "fixture:SEED", "file:PATH" or a bare PNG path.
Tensor load_input_image(std::string_view spec);

/// "pattern:stripes:PERIOD", "pattern:moire:A1:A2", "pattern:texture:SEED",
/// "fixture:SEED" or "file:PATH.png". Patterns are generated at h×w.
Tensor load_target_image(std::string_view spec, std::size_t h, std::size_t w);

std::vector<FeatureExtractor> build_extractors(const std::vector<std::string>& specs, const ImageGeometry& geometry);

struct AttackReport {
    std::string method;
    std::string models;
    std::uint64_t seed = 0;
    double epsilon = 0.0;
    double alpha = 0.0;
    std::size_t steps = 0;
    std::vector<double> init_losses;   // alignment loss of each model at x
    std::vector<double> final_losses;  // alignment loss of each model at x_adv
    double init_total = 0.0;
    double final_total = 0.0;
    std::size_t convergence_index = 0;
    double mean_cosine = 0.0;
    double linf = 0.0;
    double l2 = 0.0;
    double linf_quantized = 0.0;
    double psnr_db = 0.0;
    double ms_ssim = 0.0;
};

struct RobustnessRow {
    std::string transform;
    double loss_clean = 0.0;        // Σ L_k(x)
    double loss_adv = 0.0;          // Σ L_k(x_adv)
    double loss_transformed = 0.0;  // Σ L_k(T(x_adv))
    /// (loss_clean - loss_adv) / loss_clean
    double reduction_pre = 0.0;
    /// (loss_clean - loss_transformed) / loss_clean
    double reduction_post = 0.0;
    /// reduction_post / reduction_pre; NaN when reduction_pre <= 0.
    double retention = 0.0;
};

struct ConflictRow {
    LossKind kind;
    ConflictStats stats;
};

/// Re-evaluates an adversarial image after a transform.
RobustnessRow evaluate_robustness(std::span<const FeatureExtractor> extractors, const TargetSet& targets,
                                  const Tensor& clean, const Tensor& adversarial, const TransformSpec& transform);

/// Runs one attack in memory and fills the report row (no files written).
struct AttackOutcome {
    AttackResult result;
    AttackReport report;
};
AttackOutcome run_experiment(std::span<const FeatureExtractor> extractors, const Tensor& x, const Tensor& target,
                             const AttackConfig& attack, const std::string& models_label);

// Commands. Each writes into config.out_dir (created if missing).
/// adv.png, trace.csv, report.csv
AttackReport cmd_attack(const ExperimentConfig& config);
/// adv_eps<E>.png per budget and sweep.csv
std::vector<AttackReport> cmd_sweep_budget(const ExperimentConfig& config);
/// adv.png, report.csv, robustness.csv
std::vector<RobustnessRow> cmd_robustness(const ExperimentConfig& config);
/// conflict.csv
std::vector<ConflictRow> cmd_conflict(const ExperimentConfig& config);
/// target.png
void cmd_gen_pattern(const ExperimentConfig& config, std::size_t height = 32, std::size_t width = 32);

// CSV serialization.
std::string report_csv(const std::vector<AttackReport>& rows);
std::string trace_csv(const PerturbationState& state);
std::string robustness_csv(const std::vector<RobustnessRow>& rows);
std::string conflict_csv(const std::vector<ConflictRow>& rows);

/// Shortest round-trippable decimal form; "inf"/"nan" for non-finite values.
std::string format_number(double v);

}  // namespace atfs
