#pragma once

#include <array>
#include <limits>

#include "atfs/tensor.hpp"

namespace atfs {

/// Returned by psnr() for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// MS-SSIM parameters (dynamic range L = 1).
struct MsSsimParams {
    static constexpr double k1 = 0.01;
    static constexpr double k2 = 0.03;
    static constexpr double sigma = 1.5;
    static constexpr int window = 11;
    static constexpr std::array<double, 5> scale_weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    static constexpr std::size_t min_size = 32;
};

struct MetricReport {
    double ms_ssim = 1.0;
    double psnr_db = kPsnrIdentical;
    double linf = 0.0;
    double l2 = 0.0;
};

/// 10 log10(1 / MSE) for images in [0,1]; kPsnrIdentical when MSE is 0.
double psnr(const Tensor& a, const Tensor& b);

/// Five-scale MS-SSIM, averaged over channels.
///
/// Each scale filters with an 11x11 Gaussian (sigma 1.5); at image borders the
/// window is truncated and renormalized so every scale keeps its full size.
/// Scales are produced by 2x2 average pooling. Scales 1-4 contribute their
/// mean contrast-structure term, scale 5 the full SSIM mean; negative terms
/// are clamped to 0 before raising to the scale weight.
double ms_ssim(const Tensor& a, const Tensor& b);

struct PerturbationNorms {
    double linf = 0.0;
    double l2 = 0.0;
};

PerturbationNorms perturbation_norms(const Tensor& x, const Tensor& x_adv);

MetricReport evaluate_metrics(const Tensor& clean, const Tensor& adversarial);

}  // namespace atfs
