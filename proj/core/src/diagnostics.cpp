#include "atfs/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "atfs/rng.hpp"

namespace atfs {

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw ShapeError("cosine: length mismatch " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
    }
    double d = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        d += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return std::clamp(d / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

double cosine(const Tensor& u, const Tensor& v) {
    if (u.shape() != v.shape()) {
        throw ShapeError("cosine: shape mismatch " + shape_str(u.shape()) + " vs " + shape_str(v.shape()));
    }
    return cosine(u.values(), v.values());
}

namespace {

// FNV-1a over the raw bytes of the image values.
std::uint64_t content_hash(const Tensor& img) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (double v : img.values()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xFF;
            h *= 0x100000001B3ULL;
        }
    }
    return h;
}

}  // namespace

ConflictStats measure_pixel_conflict(std::span<const FeatureExtractor> extractors, std::span<const Tensor> images,
                                     LossKind kind, const std::optional<Tensor>& target_image,
                                     const ConflictProbe& probe) {
    if (extractors.size() < 2) throw std::invalid_argument("measure_pixel_conflict: needs at least 2 extractors");
    if (images.empty()) throw std::invalid_argument("measure_pixel_conflict: no images");
    std::optional<TargetSet> targets;
    if (kind == LossKind::alignment) {
        if (!target_image) throw std::invalid_argument("measure_pixel_conflict: alignment loss needs a target image");
        targets = precompute_targets(extractors, *target_image);
    }

    std::vector<double> cosines, inners;
    for (const auto& img : images) {
        std::vector<Tensor> grads;
        if (kind == LossKind::alignment) {
            for (std::size_t k = 0; k < extractors.size(); ++k)
                grads.push_back(loss_and_gradient(extractors[k], img, kind, targets->targets[k]).grad);
        } else {
            SplitMix64 rng(derive_seed(probe.seed, content_hash(img)));
            auto v = img.to_vector();
            for (auto& e : v) e += rng.uniform(-probe.probe_epsilon, probe.probe_epsilon);
            const Tensor probe_img = Tensor::from(img.shape(), std::move(v));
            const Tensor clean = img.detach();
            for (const auto& e : extractors)
                grads.push_back(loss_and_gradient(e, probe_img, kind, e.extract(clean).detach()).grad);
        }
        for (std::size_t i = 0; i < grads.size(); ++i)
            for (std::size_t j = i + 1; j < grads.size(); ++j) {
                cosines.push_back(cosine(grads[i], grads[j]));
                double d = 0.0;
                for (std::size_t n = 0; n < grads[i].numel(); ++n) d += grads[i][n] * grads[j][n];
                inners.push_back(d);
            }
    }
    // Summation in sorted order keeps the statistics independent of image order.
    std::sort(cosines.begin(), cosines.end());
    std::sort(inners.begin(), inners.end());
    ConflictStats s;
    s.sample_count = cosines.size();
    s.dimension = images.front().numel();
    const auto n = static_cast<double>(s.sample_count);
    double sum = 0.0, isum = 0.0;
    for (double c : cosines) sum += c;
    for (double d : inners) isum += d;
    s.mean_cosine = sum / n;
    s.mean_inner_product = isum / n;
    double ss = 0.0;
    for (double c : cosines) ss += (c - s.mean_cosine) * (c - s.mean_cosine);
    s.std_cosine = s.sample_count > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    s.std_error = s.std_cosine / std::sqrt(n);
    return s;
}

SynergySummary synergy_report(const PerturbationState& state) {
    SynergySummary out;
    std::size_t k_models = state.final_losses.size();
    if (k_models == 0 && !state.trace.empty()) k_models = state.trace.front().losses.size();
    out.loss_curves.assign(k_models, {});
    for (const auto& rec : state.trace) {
        for (std::size_t k = 0; k < k_models; ++k) out.loss_curves[k].push_back(rec.losses[k]);
        if (!rec.cosines.empty()) {
            double s = 0.0;
            for (double c : rec.cosines) s += c;
            out.mean_cosine.push_back(s / static_cast<double>(rec.cosines.size()));
        }
    }
    if (!state.final_losses.empty()) {
        for (std::size_t k = 0; k < k_models; ++k) out.loss_curves[k].push_back(state.final_losses[k]);
    }
    const std::size_t len = k_models ? out.loss_curves[0].size() : 0;
    for (std::size_t t = 0; t < len; ++t) {
        double s = 0.0;
        for (std::size_t k = 0; k < k_models; ++k) s += out.loss_curves[k][t];
        out.total_loss.push_back(s);
    }
    if (!out.total_loss.empty()) {
        const double final_total = out.total_loss.back();
        for (std::size_t t = 0; t < out.total_loss.size(); ++t) {
            if (out.total_loss[t] - final_total <= 0.1 * std::abs(final_total)) {
                out.convergence_index = t;
                break;
            }
        }
    }
    if (!out.mean_cosine.empty()) {
        double s = 0.0;
        for (double c : out.mean_cosine) s += c;
        out.overall_mean_cosine = s / static_cast<double>(out.mean_cosine.size());
    }
    return out;
}

}  // namespace atfs
