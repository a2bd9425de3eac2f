#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "atfs/attack.hpp"
#include "atfs/diagnostics.hpp"
#include "atfs/patterns.hpp"
#include "gradcheck.hpp"

using namespace atfs;
using atfs::testing::check_gradient;
using atfs::testing::extractor_signature;
using atfs::testing::random_tensor;

namespace {

std::vector<double> vec(const Tensor& t) { return t.to_vector(); }

double linf(const Tensor& t) {
    double m = 0.0;
    for (double v : t.values()) m = std::max(m, std::abs(v));
    return m;
}

double total(const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e;
    return s;
}

std::vector<FeatureExtractor> pair() { return {build_vae_proxy(1), build_gan_proxy(2)}; }

AttackConfig quick(Method m, std::size_t steps = 15) {
    AttackConfig c;
    c.method = m;
    c.steps = steps;
    return c;
}

}  // namespace

TEST_CASE("config defaults and validation") {
    const AttackConfig c;
    CHECK(c.epsilon == 6.0 / 255.0);
    CHECK(c.alpha == 6.0 / 2550.0);
    CHECK(AttackConfig::with_budget(6.0 / 255.0).alpha == doctest::Approx(6.0 / 2550.0).epsilon(1e-15));
    CHECK(c.resolved_weights(3) == std::vector<double>{1, 1, 1});
    CHECK_NOTHROW(c.validate(2));
    AttackConfig bad = c;
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(bad.validate(1), std::invalid_argument);
    bad = c;
    bad.epsilon = 1.5;
    CHECK_THROWS_AS(bad.validate(1), std::invalid_argument);
    bad = c;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(bad.validate(1), std::invalid_argument);
    bad = c;
    bad.weights = {1.0};
    CHECK_THROWS_AS(bad.validate(2), std::invalid_argument);
    bad.weights = {0.0, 0.0};
    CHECK_THROWS_AS(bad.validate(2), std::invalid_argument);
    CHECK_THROWS_AS(c.validate(0), std::invalid_argument);
    CHECK(parse_method("naive") == Method::naive_joint);
    CHECK(parse_method("single") == Method::single_pgd);
    CHECK(to_string(Method::pcgrad) == "pcgrad");
    CHECK_THROWS_AS(parse_method("fgsm"), std::invalid_argument);
}

TEST_CASE("targets") {
    const auto ex = pair();
    const auto t = gen_moire(32, 32, 0, 45);
    const auto a = precompute_targets(ex, t);
    const auto b = precompute_targets(ex, t);
    REQUIRE(a.targets.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) CHECK(vec(a.targets[k]) == vec(b.targets[k]));
    std::vector<FeatureExtractor> three = {build_vae_proxy(1), build_gan_proxy(2), build_vqvae_proxy(3)};
    const auto c = precompute_targets(three, t);
    REQUIRE(c.targets.size() == 3);
    for (const auto& tk : c.targets) CHECK(tk.shape() == Shape{64});
}

TEST_CASE("alignment loss") {
    const auto t = Tensor::zeros({2});
    CHECK(alignment_loss(Tensor::from({2}, {1, 2}), Tensor::from({2}, {1, 2})).item() == 0.0);
    CHECK(alignment_loss(Tensor::from({2}, {1, 2}), t).item() == 5.0);
    auto f = Tensor::from({2}, {1, -3}, true);
    const auto target = Tensor::from({2}, {0.5, 1});
    backward(alignment_loss(f, target));
    CHECK(vec(f.grad_tensor()) == std::vector<double>{1.0, -8.0});
    CHECK_THROWS_AS(alignment_loss(f, Tensor::zeros({3})), ShapeError);
}

TEST_CASE("normalize_gradient") {
    const auto n = normalize_gradient(Tensor::from({2}, {3, 4}), 1e-15);
    CHECK_THROWS_AS(normalize_gradient(Tensor::from({2}, {3, 4}), 0.0), std::invalid_argument);
    CHECK(n[0] == doctest::Approx(0.6));
    CHECK(n[1] == doctest::Approx(0.8));
    CHECK(vec(normalize_gradient(Tensor::zeros({4}), 1e-8)) == std::vector<double>(4, 0.0));
    const auto tiny = normalize_gradient(Tensor::from({1}, {1e-8}), 1e-8);
    CHECK(tiny[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("aggregate") {
    const auto g1 = Tensor::from({2}, {0.6, 0.8});
    const auto g2 = Tensor::from({2}, {-0.6, -0.8});
    const std::vector<Tensor> one{g1};
    CHECK(vec(aggregate(one, std::vector<double>{1.0})) == vec(g1));
    const std::vector<Tensor> both{g1, g2};
    CHECK(vec(aggregate(both, std::vector<double>{1.0, 1.0})) == std::vector<double>{0.0, 0.0});
    CHECK(vec(aggregate(both, std::vector<double>{2.0, 0.0})) == std::vector<double>{1.2, 1.6});
    CHECK_THROWS_AS(aggregate(both, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("pgd_step") {
    const double eps = 6.0 / 255.0;
    const auto d = pgd_step(Tensor::zeros({3}), Tensor::from({3}, {2.0, -5.0, 0.0}), 0.01, eps);
    CHECK(vec(d) == std::vector<double>{-0.01, 0.01, 0.0});
    const auto at_edge = pgd_step(Tensor::full({3}, eps), Tensor::full({3}, -1.0), 0.01, eps);
    CHECK(vec(at_edge) == std::vector<double>(3, eps));
    CHECK_THROWS_AS(pgd_step(Tensor::zeros({3}), Tensor::zeros({2}), 0.01, eps), ShapeError);
}

TEST_CASE("pcgrad projection") {
    const auto p = project_conflicting(Tensor::from({2}, {1, -1}), Tensor::from({2}, {0, 1}));
    CHECK(vec(p) == std::vector<double>{1, 0});
    const auto orth = Tensor::from({2}, {1, 0});
    CHECK(vec(project_conflicting(orth, Tensor::from({2}, {0, 3}))) == vec(orth));
    const auto z = project_conflicting(Tensor::from({2}, {1, 2}), Tensor::from({2}, {-1, -2}));
    CHECK(std::abs(z[0]) < 1e-15);
    CHECK(std::abs(z[1]) < 1e-15);
    // Agreeing gradients are untouched.
    CHECK(vec(project_conflicting(orth, Tensor::from({2}, {1, 1}))) == vec(orth));

    SplitMix64 rng(0);
    const std::vector<Tensor> gs{Tensor::from({2}, {1, -1}), Tensor::from({2}, {0, 1})};
    const auto out = pcgrad_project(gs, rng);
    REQUIRE(out.size() == 2);
    CHECK(vec(out[0]) == std::vector<double>{1, 0});
    // g_1 against the original g_0: dot = -1, so g_1 - (-1/2) g_0.
    CHECK(vec(out[1]) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("loss gradients match finite differences") {
    const auto ex = pair();
    const auto target = gen_moire(32, 32, 0, 45);
    const auto targets = precompute_targets(ex, target);
    for (std::size_t k = 0; k < ex.size(); ++k) {
        const auto sig = extractor_signature(ex[k], false);
        const auto x = random_tensor({3, 32, 32}, 40 + k);
        const auto clean = ex[k].extract(x);
        const auto xr = random_tensor({3, 32, 32}, 50 + k, -0.02, 0.02);
        const auto probe = add(x, xr);
        for (auto kind : {LossKind::alignment, LossKind::deviation}) {
            const auto& ref = kind == LossKind::alignment ? targets.targets[k] : clean;
            const double sgn = kind == LossKind::alignment ? 1.0 : -1.0;
            const auto f = [&](const Tensor& im) { return scale(alignment_loss(ex[k].extract(im), ref), sgn); };
            const auto r = check_gradient(f, probe, 48, k, sig);
            CHECK(r.max_rel_error < 1e-4);
            const auto lg = loss_and_gradient(ex[k], probe, kind, ref);
            CHECK(lg.loss == doctest::Approx(f(probe).item()).epsilon(1e-14));
            Tensor leaf = Tensor::from(probe.shape(), probe.to_vector(), true);
            backward(f(leaf));
            CHECK(vec(lg.grad) == vec(leaf.grad_tensor()));
        }
    }
}

TEST_CASE("budget holds after every iteration and x_adv is in range") {
    const auto ex = pair();
    const auto x = gen_face_fixture(1);
    const auto target = gen_moire(32, 32, 0, 45);
    for (auto m : {Method::atfs, Method::naive_joint, Method::pcgrad, Method::single_pgd}) {
        auto c = quick(m, 20);
        c.epsilon = 4.0 / 255.0;
        c.alpha = 1.0 / 255.0;
        const auto r = run_attack(ex, x, target, c);
        CHECK(linf(r.state.delta) <= c.epsilon);
        CHECK(r.state.iteration == 20);
        CHECK(r.state.trace.size() == 20);
        for (double v : r.adversarial.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        // x + δ then the subtraction back can round up by an ulp.
        for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(r.adversarial[i] - x[i]) <= c.epsilon + 1e-15);
    }
}

TEST_CASE("zero steps returns the input exactly") {
    const auto ex = pair();
    const auto x = gen_face_fixture(2);
    const auto r = run_atfs(ex, x, gen_moire(32, 32, 0, 45), quick(Method::atfs, 0));
    CHECK(vec(r.adversarial) == vec(x));
    CHECK(r.state.trace.empty());
    CHECK(r.state.final_losses.size() == 2);
}

TEST_CASE("target equal to input: no movement") {
    const auto ex = pair();
    const auto x = gen_face_fixture(3);
    const auto r = run_atfs(ex, x, x, quick(Method::atfs, 10));
    for (double l : r.state.trace.front().losses) CHECK(l == 0.0);
    CHECK(linf(r.state.delta) == 0.0);
    CHECK(vec(r.adversarial) == vec(x));
}

TEST_CASE("default toy run halves the total alignment loss") {
    const auto ex = pair();
    const auto x = gen_face_fixture(0);
    const auto r = run_atfs(ex, x, gen_moire(32, 32, 0, 45), AttackConfig{});
    const double before = total(r.state.trace.front().losses);
    const double after = total(r.state.final_losses);
    CHECK(after < 0.5 * before);
}

TEST_CASE("K=1 reduces to single-model sign PGD") {
    const auto e = build_vae_proxy(1);
    const std::vector<FeatureExtractor> one{e};
    const auto x = gen_face_fixture(4);
    const auto t = gen_moire(32, 32, 0, 45);
    const auto a = run_atfs(one, x, t, quick(Method::atfs, 25));
    const auto s = run_single_pgd(e, x, t, quick(Method::single_pgd, 25));
    const auto n = run_naive_joint(one, x, t, [] {
        auto c = quick(Method::naive_joint, 25);
        c.baseline_loss = LossKind::alignment;
        return c;
    }());
    CHECK(vec(a.state.delta) == vec(s.state.delta));
    CHECK(vec(a.adversarial) == vec(s.adversarial));
    CHECK(vec(n.state.delta) == vec(a.state.delta));
    CHECK(synergy_report(a.state).mean_cosine.empty());
}

TEST_CASE("weight scale does not change ATFS") {
    const auto ex = pair();
    const auto x = gen_face_fixture(5);
    const auto t = gen_moire(32, 32, 0, 45);
    auto c = quick(Method::atfs, 20);
    c.weights = {1.0, 3.0};
    const auto base = run_atfs(ex, x, t, c);
    for (double k : {2.0, 0.5}) {
        auto ck = c;
        ck.weights = {k * 1.0, k * 3.0};
        CHECK(vec(run_atfs(ex, x, t, ck).state.delta) == vec(base.state.delta));
    }
}

TEST_CASE("attacks are deterministic for a fixed seed") {
    const auto ex = pair();
    const auto x = gen_face_fixture(6);
    const auto t = gen_moire(32, 32, 0, 45);
    for (auto m : {Method::atfs, Method::naive_joint, Method::pcgrad}) {
        auto c = quick(m, 10);
        c.seed = 3;
        const auto a = run_attack(ex, x, t, c);
        const auto b = run_attack(ex, x, t, c);
        CHECK(vec(a.adversarial) == vec(b.adversarial));
        CHECK(a.state.trace.back().losses == b.state.trace.back().losses);
    }
    auto c = quick(Method::pcgrad, 10);
    auto c2 = c;
    c2.seed = 4;
    CHECK(vec(run_attack(ex, x, t, c).state.delta) != vec(run_attack(ex, x, t, c2).state.delta));
}

TEST_CASE("inputs are not mutated") {
    const auto ex = pair();
    const auto x = gen_face_fixture(7);
    const auto t = gen_moire(32, 32, 0, 45);
    const auto xs = vec(x), ts = vec(t);
    const auto targets = precompute_targets(ex, t);
    const auto before = vec(targets.targets[0]);
    run_atfs(ex, x, t, quick(Method::atfs, 5));
    CHECK(vec(x) == xs);
    CHECK(vec(t) == ts);
    CHECK(vec(precompute_targets(ex, t).targets[0]) == before);
}

TEST_CASE("trace bookkeeping") {
    std::vector<FeatureExtractor> three = {build_vae_proxy(1), build_gan_proxy(2), build_vqvae_proxy(3)};
    const auto r = run_atfs(three, gen_face_fixture(0), gen_moire(32, 32, 0, 45), quick(Method::atfs, 5));
    REQUIRE(r.state.trace.size() == 5);
    for (const auto& rec : r.state.trace) {
        CHECK(rec.losses.size() == 3);
        CHECK(rec.grad_norms.size() == 3);
        CHECK(rec.cosines.size() == 3);
        for (double c : rec.cosines) CHECK(std::abs(c) <= 1.0);
    }
}

TEST_CASE("gradient dominance: naive sum follows the loud model, ATFS stays balanced") {
    const auto loud = build_gan_proxy(2).scaled(100.0);
    const std::vector<FeatureExtractor> ex{build_vae_proxy(1), loud};
    const auto x = gen_face_fixture(8);
    const auto targets = precompute_targets(ex, gen_moire(32, 32, 0, 45));
    std::vector<Tensor> grads, normed;
    for (std::size_t k = 0; k < 2; ++k) {
        grads.push_back(loss_and_gradient(ex[k], x, LossKind::alignment, targets.targets[k]).grad);
        normed.push_back(normalize_gradient(grads.back(), 1e-8));
    }
    const std::vector<double> w{1.0, 1.0};
    const auto naive = aggregate(grads, w);
    const auto atfs_dir = aggregate(normed, w);
    CHECK(cosine(naive, grads[1]) > 0.99);
    CHECK(std::abs(cosine(atfs_dir, grads[0]) - cosine(atfs_dir, grads[1])) < 0.05);
    CHECK(cosine(atfs_dir, grads[0]) > 0.5);
}

TEST_CASE("non-finite values") {
    const auto ex = pair();
    auto v = gen_face_fixture(0).to_vector();
    v[10] = std::numeric_limits<double>::quiet_NaN();
    const auto bad = Tensor::from({3, 32, 32}, v);
    CHECK_THROWS_AS(run_atfs(ex, bad, gen_moire(32, 32, 0, 45), quick(Method::atfs, 5)), std::invalid_argument);

    // Features near 1e300 overflow the squared loss.
    const std::vector<FeatureExtractor> huge{build_vae_proxy(1).scaled(1e300)};
    try {
        run_atfs(huge, gen_face_fixture(0), gen_moire(32, 32, 0, 45), quick(Method::atfs, 5));
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(e.iteration() == 0);
    }
}

TEST_CASE("shape mismatches are rejected") {
    const auto ex = pair();
    CHECK_THROWS(run_atfs(ex, Tensor::zeros({3, 16, 16}), gen_moire(32, 32, 0, 45), quick(Method::atfs)));
    CHECK_THROWS(run_atfs(ex, gen_face_fixture(0), Tensor::zeros({3, 16, 16}), quick(Method::atfs)));
}
