#include "atfs/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace atfs {

std::string_view to_string(Method m) {
    switch (m) {
        case Method::atfs: return "atfs";
        case Method::naive_joint: return "naive_joint";
        case Method::pcgrad: return "pcgrad";
        case Method::single_pgd: return "single_pgd";
    }
    return "unknown";
}

Method parse_method(std::string_view s) {
    if (s == "atfs") return Method::atfs;
    if (s == "naive" || s == "naive_joint") return Method::naive_joint;
    if (s == "pcgrad") return Method::pcgrad;
    if (s == "single" || s == "single_pgd") return Method::single_pgd;
    throw std::invalid_argument("unknown method '" + std::string(s) + "' (expected atfs|naive|pcgrad|single)");
}

std::string_view to_string(LossKind k) { return k == LossKind::alignment ? "alignment" : "deviation"; }

AttackConfig AttackConfig::with_budget(double epsilon) {
    AttackConfig c;
    c.epsilon = epsilon;
    c.alpha = epsilon / 10.0;
    return c;
}

std::vector<double> AttackConfig::resolved_weights(std::size_t k) const {
    return weights.empty() ? std::vector<double>(k, 1.0) : weights;
}

void AttackConfig::validate(std::size_t num_extractors) const {
    if (num_extractors == 0) throw std::invalid_argument("attack needs at least one extractor");
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1]");
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    if (!(xi > 0.0)) throw std::invalid_argument("xi must be positive");
    const auto w = resolved_weights(num_extractors);
    if (w.size() != num_extractors) {
        throw std::invalid_argument("got " + std::to_string(w.size()) + " weights for " +
                                    std::to_string(num_extractors) + " extractors");
    }
    double total = 0.0;
    for (double wi : w) {
        if (!(wi >= 0.0) || !std::isfinite(wi)) throw std::invalid_argument("weights must be finite and >= 0");
        total += wi;
    }
    if (!(total > 0.0)) throw std::invalid_argument("weights must not all be zero");
}

TargetSet precompute_targets(std::span<const FeatureExtractor> extractors, const Tensor& target_image) {
    TargetSet set;
    const Tensor img = target_image.detach();
    for (const auto& e : extractors) set.targets.push_back(e.extract(img).detach());
    return set;
}

Tensor alignment_loss(const Tensor& features, const Tensor& target) {
    if (features.shape() != target.shape()) {
        throw ShapeError("alignment_loss: shape mismatch " + shape_str(features.shape()) + " vs " +
                         shape_str(target.shape()));
    }
    return sq_l2_norm(sub(features, target));
}

namespace {

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double cosine_of(std::span<const double> a, std::span<const double> b) {
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

}  // namespace

Tensor normalize_gradient(const Tensor& g, double xi) {
    if (!(xi > 0.0)) throw std::invalid_argument("normalize_gradient: xi must be positive");
    auto v = g.to_vector();
    const double denom = l2_norm(v) + xi;
    for (auto& e : v) e /= denom;
    return Tensor::from(g.shape(), std::move(v));
}

Tensor aggregate(std::span<const Tensor> grads, std::span<const double> weights) {
    if (grads.size() != weights.size()) {
        throw std::invalid_argument("aggregate: " + std::to_string(grads.size()) + " gradients vs " +
                                    std::to_string(weights.size()) + " weights");
    }
    if (grads.empty()) throw std::invalid_argument("aggregate: no gradients");
    std::vector<double> acc(grads[0].numel(), 0.0);
    for (std::size_t k = 0; k < grads.size(); ++k) {
        if (grads[k].shape() != grads[0].shape()) {
            throw ShapeError("aggregate: shape mismatch " + shape_str(grads[0].shape()) + " vs " +
                             shape_str(grads[k].shape()));
        }
        auto v = grads[k].values();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weights[k] * v[i];
    }
    return Tensor::from(grads[0].shape(), std::move(acc));
}

Tensor pgd_step(const Tensor& delta, const Tensor& g, double alpha, double epsilon) {
    if (delta.shape() != g.shape()) {
        throw ShapeError("pgd_step: shape mismatch " + shape_str(delta.shape()) + " vs " + shape_str(g.shape()));
    }
    auto d = delta.to_vector();
    auto gv = g.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double s = gv[i] > 0.0 ? 1.0 : (gv[i] < 0.0 ? -1.0 : 0.0);
        d[i] = std::clamp(d[i] - alpha * s, -epsilon, epsilon);
    }
    return Tensor::from(delta.shape(), std::move(d));
}

Tensor project_conflicting(const Tensor& g_i, const Tensor& g_j) {
    if (g_i.shape() != g_j.shape()) {
        throw ShapeError("project_conflicting: shape mismatch " + shape_str(g_i.shape()) + " vs " +
                         shape_str(g_j.shape()));
    }
    const double d = dot(g_i.values(), g_j.values());
    const double nn = dot(g_j.values(), g_j.values());
    if (!(d < 0.0) || nn == 0.0) return g_i;
    auto out = g_i.to_vector();
    auto gj = g_j.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= d / nn * gj[i];
    return Tensor::from(g_i.shape(), std::move(out));
}

std::vector<Tensor> pcgrad_project(std::span<const Tensor> grads, SplitMix64& rng) {
    std::vector<Tensor> out;
    out.reserve(grads.size());
    for (std::size_t i = 0; i < grads.size(); ++i) {
        std::vector<std::size_t> order;
        for (std::size_t j = 0; j < grads.size(); ++j) {
            if (j != i) order.push_back(j);
        }
        for (std::size_t n = order.size(); n > 1; --n) std::swap(order[n - 1], order[rng.below(n)]);
        Tensor g = grads[i];
        for (std::size_t j : order) g = project_conflicting(g, grads[j]);
        out.push_back(g);
    }
    return out;
}

LossGradient loss_and_gradient(const FeatureExtractor& extractor, const Tensor& image, LossKind kind,
                               const Tensor& reference) {
    Tensor leaf = Tensor::from(image.shape(), image.to_vector(), true);
    Tensor f = extractor.extract(leaf);
    Tensor loss = alignment_loss(f, reference);
    if (kind == LossKind::deviation) loss = scale(loss, -1.0);
    LossGradient out;
    out.loss = loss.item();
    if (loss.requires_grad()) {
        backward(loss);
        out.grad = leaf.grad_tensor();
    } else {
        out.grad = Tensor::zeros(image.shape());
    }
    return out;
}

std::vector<double> alignment_losses(std::span<const FeatureExtractor> extractors, const TargetSet& targets,
                                     const Tensor& image) {
    if (targets.targets.size() != extractors.size()) {
        throw std::invalid_argument("alignment_losses: target count does not match extractor count");
    }
    std::vector<double> out;
    const Tensor img = image.detach();
    for (std::size_t k = 0; k < extractors.size(); ++k) {
        out.push_back(alignment_loss(extractors[k].extract(img), targets.targets[k]).item());
    }
    return out;
}

Tensor apply_perturbation(const Tensor& x, const Tensor& delta) {
    if (x.shape() != delta.shape()) {
        throw ShapeError("apply_perturbation: shape mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(delta.shape()));
    }
    auto v = x.to_vector();
    auto d = delta.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i] + d[i], 0.0, 1.0);
    return Tensor::from(x.shape(), std::move(v));
}

namespace {

enum class Combine { normalized_sum, raw_sum, pcgrad };

struct LoopSpec {
    LossKind loss;
    Combine combine;
    bool random_start;
};

Tensor add_values(const Tensor& a, const Tensor& b) {
    auto v = a.to_vector();
    auto bv = b.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
    return Tensor::from(a.shape(), std::move(v));
}

void check_image(const Tensor& img, const char* what) {
    for (double v : img.values()) {
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " contains non-finite values");
    }
}

AttackResult run_loop(std::span<const FeatureExtractor> extractors, const Tensor& x,
                      const std::vector<Tensor>& references, const AttackConfig& config, const LoopSpec& spec) {
    const std::size_t k_models = extractors.size();
    const auto weights = config.resolved_weights(k_models);
    SplitMix64 pcgrad_rng(derive_seed(config.seed, 0x5043475241444ULL));

    PerturbationState state;
    if (spec.random_start) {
        SplitMix64 init_rng(derive_seed(config.seed, 0x494E4954ULL));
        std::vector<double> d(x.numel());
        for (auto& e : d) e = init_rng.uniform(-config.epsilon, config.epsilon);
        state.delta = Tensor::from(x.shape(), std::move(d));
    } else {
        state.delta = Tensor::zeros(x.shape());
    }

    auto losses_at = [&](const Tensor& img) {
        std::vector<double> out;
        for (std::size_t k = 0; k < k_models; ++k) {
            double l = alignment_loss(extractors[k].extract(img), references[k]).item();
            out.push_back(spec.loss == LossKind::deviation ? -l : l);
        }
        return out;
    };

    for (std::size_t t = 0; t < config.steps; ++t) {
        const Tensor x_t = add_values(x, state.delta);
        IterationRecord rec;
        std::vector<Tensor> grads;
        for (std::size_t k = 0; k < k_models; ++k) {
            auto lg = loss_and_gradient(extractors[k], x_t, spec.loss, references[k]);
            if (!std::isfinite(lg.loss)) throw NumericalError("non-finite loss for " + extractors[k].name(), t);
            const double n = l2_norm(lg.grad.values());
            if (!std::isfinite(n)) throw NumericalError("non-finite gradient for " + extractors[k].name(), t);
            rec.losses.push_back(lg.loss);
            rec.grad_norms.push_back(n);
            grads.push_back(std::move(lg.grad));
        }
        for (std::size_t i = 0; i < k_models; ++i)
            for (std::size_t j = i + 1; j < k_models; ++j)
                rec.cosines.push_back(cosine_of(grads[i].values(), grads[j].values()));

        Tensor g_syn;
        switch (spec.combine) {
            case Combine::normalized_sum: {
                std::vector<Tensor> normed;
                for (const auto& g : grads) normed.push_back(normalize_gradient(g, config.xi));
                g_syn = aggregate(normed, weights);
                break;
            }
            case Combine::raw_sum: g_syn = aggregate(grads, weights); break;
            case Combine::pcgrad: g_syn = aggregate(pcgrad_project(grads, pcgrad_rng), weights); break;
        }
        state.delta = pgd_step(state.delta, g_syn, config.alpha, config.epsilon);
        for (double v : state.delta.values()) rec.delta_linf = std::max(rec.delta_linf, std::abs(v));
        state.trace.push_back(std::move(rec));
        state.iteration = t + 1;
    }

    state.final_losses = losses_at(add_values(x, state.delta));
    for (double l : state.final_losses) {
        if (!std::isfinite(l)) throw NumericalError("non-finite final loss", config.steps);
    }
    AttackResult result;
    result.adversarial = apply_perturbation(x, state.delta);
    result.state = std::move(state);
    return result;
}

std::vector<Tensor> references_for(std::span<const FeatureExtractor> extractors, const Tensor& x,
                                   const std::optional<Tensor>& target_image, LossKind kind) {
    if (kind == LossKind::alignment) {
        if (!target_image) throw std::invalid_argument("alignment objective needs a target image");
        check_image(*target_image, "target image");
        return precompute_targets(extractors, *target_image).targets;
    }
    return precompute_targets(extractors, x).targets;
}

}  // namespace

AttackResult run_atfs(std::span<const FeatureExtractor> extractors, const Tensor& x, const Tensor& target_image,
                      const AttackConfig& config) {
    config.validate(extractors.size());
    check_image(x, "input image");
    const auto refs = references_for(extractors, x, target_image, LossKind::alignment);
    return run_loop(extractors, x, refs, config, {LossKind::alignment, Combine::normalized_sum, false});
}

AttackResult run_naive_joint(std::span<const FeatureExtractor> extractors, const Tensor& x,
                             const std::optional<Tensor>& target_image, const AttackConfig& config) {
    config.validate(extractors.size());
    check_image(x, "input image");
    const auto refs = references_for(extractors, x, target_image, config.baseline_loss);
    return run_loop(extractors, x, refs, config,
                    {config.baseline_loss, Combine::raw_sum, config.baseline_loss == LossKind::deviation});
}

AttackResult run_pcgrad(std::span<const FeatureExtractor> extractors, const Tensor& x,
                        const std::optional<Tensor>& target_image, const AttackConfig& config) {
    config.validate(extractors.size());
    check_image(x, "input image");
    const auto refs = references_for(extractors, x, target_image, config.baseline_loss);
    return run_loop(extractors, x, refs, config,
                    {config.baseline_loss, Combine::pcgrad, config.baseline_loss == LossKind::deviation});
}

AttackResult run_single_pgd(const FeatureExtractor& extractor, const Tensor& x, const Tensor& target_image,
                            const AttackConfig& config) {
    AttackConfig c = config;
    if (c.weights.size() > 1) c.weights.resize(1);
    c.validate(1);
    check_image(x, "input image");
    std::span<const FeatureExtractor> one(&extractor, 1);
    const auto refs = references_for(one, x, target_image, LossKind::alignment);
    return run_loop(one, x, refs, c, {LossKind::alignment, Combine::raw_sum, false});
}

AttackResult run_attack(std::span<const FeatureExtractor> extractors, const Tensor& x, const Tensor& target_image,
                        const AttackConfig& config) {
    switch (config.method) {
        case Method::atfs: return run_atfs(extractors, x, target_image, config);
        case Method::naive_joint: return run_naive_joint(extractors, x, target_image, config);
        case Method::pcgrad: return run_pcgrad(extractors, x, target_image, config);
        case Method::single_pgd:
            if (extractors.empty()) throw std::invalid_argument("attack needs at least one extractor");
            return run_single_pgd(extractors[0], x, target_image, config);
    }
    throw std::invalid_argument("unknown method");
}

}  // namespace atfs
