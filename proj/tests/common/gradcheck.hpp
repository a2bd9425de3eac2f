#pragma once

// Central-difference gradient oracle shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "atfs/extractors.hpp"
#include "atfs/rng.hpp"
#include "atfs/tensor.hpp"

namespace atfs::testing {

inline constexpr double kFdStep = 1e-4;
// Relative error uses max(|analytic|, |numeric|) as denominator, floored here
// so entries that are zero up to rounding compare on an absolute scale.
inline constexpr double kFdFloor = 1e-6;

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    /// Stencils that crossed a ReLU kink or a codebook boundary; central
    /// differences are not an oracle there, so they are left out.
    std::size_t skipped = 0;
};

/// Which linear piece a piecewise-smooth function is on at a given input.
using Signature = std::function<std::vector<std::int64_t>(const Tensor&)>;

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFdFloor});
}

/// Compares the autodiff gradient of f at x with central differences on
/// `coords` coordinates (all of them when coords >= numel), chosen by seed.
/// With a signature, stencils whose endpoints land on a different piece
/// than x are skipped. One extra check runs along a seeded random unit
/// direction, which touches every coordinate at once.
inline GradCheck check_gradient(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                std::size_t coords = static_cast<std::size_t>(-1), std::uint64_t seed = 0,
                                const Signature& signature = {}) {
    Tensor leaf = Tensor::from(x.shape(), x.to_vector(), true);
    backward(f(leaf));
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());

    std::vector<std::size_t> idx(x.numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (coords < idx.size()) {
        SplitMix64 rng(seed);
        for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
        idx.resize(coords);
    }

    GradCheck out;
    const auto base_sig = signature ? signature(x) : std::vector<std::int64_t>{};
    auto probe = [&](const std::vector<double>& up_v, const std::vector<double>& down_v, double analytic_value) {
        const Tensor up = Tensor::from(x.shape(), up_v);
        const Tensor down = Tensor::from(x.shape(), down_v);
        if (signature && (signature(up) != base_sig || signature(down) != base_sig)) {
            ++out.skipped;
            return;
        }
        const double numeric = (f(up).item() - f(down).item()) / (2.0 * kFdStep);
        out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic_value, numeric));
        ++out.checked;
    };

    std::vector<double> up = x.to_vector();
    std::vector<double> down = up;
    for (std::size_t i : idx) {
        up[i] += kFdStep;
        down[i] -= kFdStep;
        probe(up, down, analytic[i]);
        up[i] = down[i] = x[i];
    }

    SplitMix64 rng(seed ^ 0xD1EC7ULL);
    std::vector<double> dir(x.numel());
    double norm = 0.0;
    for (auto& d : dir) {
        d = rng.normal();
        norm += d * d;
    }
    norm = std::sqrt(norm);
    double along = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
        dir[i] /= norm;
        up[i] = x[i] + kFdStep * dir[i];
        down[i] = x[i] - kFdStep * dir[i];
        along += analytic[i] * dir[i];
    }
    probe(up, down, along);
    return out;
}

/// Signs of every activation input plus the chosen code of every quantized
/// vector, following the same layer sequence as FeatureExtractor.
inline Signature extractor_signature(const FeatureExtractor& e, bool quantize) {
    return [&e, quantize](const Tensor& img) {
        std::vector<std::int64_t> sig;
        Tensor h = add_scalar(scale(img, 2.0), -1.0);
        for (const auto& layer : e.layers()) {
            if (const auto* c = std::get_if<layers::Conv>(&layer)) {
                h = conv2d(h, c->weight, c->bias, c->options);
            } else if (const auto* a = std::get_if<layers::Activation>(&layer)) {
                for (double v : h.values()) sig.push_back(v > 0.0);
                h = a->leaky ? leaky_relu(h, a->slope) : relu(h);
            } else if (const auto* q = std::get_if<layers::Quantize>(&layer)) {
                if (!quantize) continue;
                const auto& s = h.shape();
                const std::size_t d = s[0], n = s[1] * s[2];
                std::vector<double> vec(d);
                for (std::size_t p = 0; p < n; ++p) {
                    for (std::size_t k = 0; k < d; ++k) vec[k] = h[k * n + p];
                    sig.push_back(static_cast<std::int64_t>(nearest_code(q->codebook, vec)));
                }
                h = quantize_straight_through(h, q->codebook);
            } else {
                break;  // the linear head is smooth
            }
        }
        return sig;
    };
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    SplitMix64 rng(seed);
    std::vector<double> v(shape_numel(shape));
    for (auto& e : v) e = rng.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace atfs::testing
