#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "atfs/extractors.hpp"
#include "atfs/rng.hpp"
#include "atfs/tensor.hpp"

namespace atfs {

enum class Method { atfs, naive_joint, pcgrad, single_pgd };

std::string_view to_string(Method m);
/// Accepts "atfs", "naive"/"naive_joint", "pcgrad", "single"/"single_pgd".
Method parse_method(std::string_view s);

/// Per-model objective.
///   alignment: ||Φ(x+δ) - t||², minimized toward a target feature vector.
///   deviation: -||Φ(x+δ) - Φ(x)||², the untargeted surrogate the baselines
///              descend (i.e. they push features away from the clean ones).
enum class LossKind { alignment, deviation };

std::string_view to_string(LossKind k);

struct AttackConfig {
    double epsilon = 6.0 / 255.0;
    double alpha = 6.0 / 2550.0;
    std::size_t steps = 100;
    /// One weight per extractor; empty means all ones.
    std::vector<double> weights;
    double xi = 1e-8;
    Method method = Method::atfs;
    std::uint64_t seed = 0;
    /// Objective used by naive_joint and pcgrad.
    LossKind baseline_loss = LossKind::deviation;

    /// Config at budget eps with alpha = eps / 10.
    static AttackConfig with_budget(double epsilon);

    std::vector<double> resolved_weights(std::size_t k) const;
    /// Throws std::invalid_argument on a violated invariant.
    void validate(std::size_t num_extractors) const;
};

struct IterationRecord {
    std::vector<double> losses;      // L_k at δ_t, per model
    std::vector<double> grad_norms;  // ||g_k||₂, per model
    std::vector<double> cosines;     // cos(g_i, g_j) for i < j, row-major pair order
    double delta_linf = 0.0;         // ||δ_{t+1}||∞ after this step
};

struct PerturbationState {
    Tensor delta;
    std::size_t iteration = 0;
    std::vector<IterationRecord> trace;
    /// L_k at the final δ (x + δ_T, before range clipping).
    std::vector<double> final_losses;
};

struct TargetSet {
    std::vector<Tensor> targets;
};

struct AttackResult {
    Tensor adversarial;
    PerturbationState state;
};

/// Raised when a loss or gradient turns non-finite mid-run.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, std::size_t iteration)
        : std::runtime_error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}
    std::size_t iteration() const { return iteration_; }

private:
    std::size_t iteration_;
};

TargetSet precompute_targets(std::span<const FeatureExtractor> extractors, const Tensor& target_image);

/// Squared L2 distance (sum, not mean). Tape-linked when f requires grad.
Tensor alignment_loss(const Tensor& features, const Tensor& target);

/// g / (||g||₂ + xi).
Tensor normalize_gradient(const Tensor& g, double xi);

/// Σ_k w_k g_k.
Tensor aggregate(std::span<const Tensor> grads, std::span<const double> weights);

/// clip(delta - alpha * sign(g), -eps, eps), with sign(0) = 0.
Tensor pgd_step(const Tensor& delta, const Tensor& g, double alpha, double epsilon);

/// g_i minus its component along g_j when they conflict (<g_i, g_j> < 0).
Tensor project_conflicting(const Tensor& g_i, const Tensor& g_j);

/// PCGrad surgery: each g_i is projected against the other gradients
/// (originals, not projected copies) in an order shuffled by rng.
std::vector<Tensor> pcgrad_project(std::span<const Tensor> grads, SplitMix64& rng);

struct LossGradient {
    double loss = 0.0;
    Tensor grad;
};

/// Loss of one model at image and its gradient with respect to the image.
/// reference is t_k for alignment, Φ_k(x) for deviation.
LossGradient loss_and_gradient(const FeatureExtractor& extractor, const Tensor& image, LossKind kind,
                               const Tensor& reference);

/// L_k^align of every model at image.
std::vector<double> alignment_losses(std::span<const FeatureExtractor> extractors, const TargetSet& targets,
                                     const Tensor& image);

/// Elementwise clip(x + delta, 0, 1).
Tensor apply_perturbation(const Tensor& x, const Tensor& delta);

AttackResult run_atfs(std::span<const FeatureExtractor> extractors, const Tensor& x, const Tensor& target_image,
                      const AttackConfig& config);

AttackResult run_naive_joint(std::span<const FeatureExtractor> extractors, const Tensor& x,
                             const std::optional<Tensor>& target_image, const AttackConfig& config);

AttackResult run_pcgrad(std::span<const FeatureExtractor> extractors, const Tensor& x,
                        const std::optional<Tensor>& target_image, const AttackConfig& config);

AttackResult run_single_pgd(const FeatureExtractor& extractor, const Tensor& x, const Tensor& target_image,
                            const AttackConfig& config);

/// Dispatches on config.method. single_pgd attacks extractors[0] only.
AttackResult run_attack(std::span<const FeatureExtractor> extractors, const Tensor& x, const Tensor& target_image,
                        const AttackConfig& config);

}  // namespace atfs
