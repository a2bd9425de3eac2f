#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "atfs/attack.hpp"
#include "atfs/tensor.hpp"

namespace atfs {

struct ConflictStats {
    double mean_cosine = 0.0;
    double std_cosine = 0.0;
    /// Standard error of mean_cosine.
    double std_error = 0.0;
    /// Mean raw inner product of the paired gradients.
    double mean_inner_product = 0.0;
    std::size_t sample_count = 0;
    std::size_t dimension = 0;
};

/// ⟨u,v⟩ / (||u|| ||v||); 0 when either vector is zero.
double cosine(std::span<const double> u, std::span<const double> v);
double cosine(const Tensor& u, const Tensor& v);

struct ConflictProbe {
    /// Half-width of the shared uniform random offset at which deviation-loss
    /// gradients are taken (their gradient vanishes at the clean image).
    double probe_epsilon = 6.0 / 255.0;
    std::uint64_t seed = 0;
};

/// Pairwise cosine statistics of per-model pixel gradients over images.
///
/// alignment: gradient of ||Φ_k(x) - Φ_k(target)||² at x.
/// deviation: gradient of -||Φ_k(x + r) - Φ_k(x)||² at x + r, where r is a
///            uniform offset shared by all models, seeded from probe.seed and
///            the image contents (so the result does not depend on image order).
/// Every unordered model pair of every image contributes one sample.
ConflictStats measure_pixel_conflict(std::span<const FeatureExtractor> extractors, std::span<const Tensor> images,
                                     LossKind kind, const std::optional<Tensor>& target_image,
                                     const ConflictProbe& probe = {});

struct SynergySummary {
    /// Mean pairwise gradient cosine per iteration; empty for K = 1.
    std::vector<double> mean_cosine;
    /// loss_curves[k][t] for t = 0..T (the last entry is the final loss).
    std::vector<std::vector<double>> loss_curves;
    /// Unweighted sum over models, t = 0..T.
    std::vector<double> total_loss;
    /// First t with total_loss[t] - total_loss[T] <= 0.1 |total_loss[T]|.
    std::size_t convergence_index = 0;
    /// Mean of mean_cosine over iterations (0 when empty).
    double overall_mean_cosine = 0.0;
};

SynergySummary synergy_report(const PerturbationState& state);

}  // namespace atfs
