#include "doctest.h"

#include <cmath>

#include "atfs/patterns.hpp"

using namespace atfs;

namespace {

double mean_of(const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v;
    return s / static_cast<double>(t.numel());
}

}  // namespace

TEST_CASE("stripes") {
    const auto s = gen_stripes(4, 6, 2);
    CHECK(s.shape() == Shape{3, 4, 6});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 6; ++x) CHECK(s[(c * 4 + y) * 6 + x] == (x % 2 == 0 ? 0.0 : 1.0));
    const auto flat = gen_stripes(8, 8, 4, 0.0);
    for (double v : flat.values()) CHECK(v == 0.5);
    const auto p = gen_stripes(5, 12, 6, 0.5);
    for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t x = 0; x < 12; ++x) CHECK(p[y * 12 + x] == p[x]);
    CHECK_THROWS_AS(gen_stripes(4, 4, 0), std::invalid_argument);
}

TEST_CASE("moire") {
    CHECK_THROWS_AS(gen_moire(32, 32, 30, 30), std::invalid_argument);
    const auto m = gen_moire(32, 32, 0, 45, 0.6);
    for (double v : m.values()) {
        CHECK(v >= 0.2 - 1e-12);
        CHECK(v <= 0.8 + 1e-12);
    }
    CHECK(m.to_vector() == gen_moire(32, 32, 0, 45, 0.6).to_vector());
    const auto full = gen_moire(32, 32, 0, 45);
    double lo = 1.0, hi = 0.0;
    for (double v : full.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(hi - lo > 0.5);
}

TEST_CASE("texture") {
    CHECK(gen_texture(16, 16, 3).to_vector() == gen_texture(16, 16, 3).to_vector());
    CHECK(gen_texture(16, 16, 3).to_vector() != gen_texture(16, 16, 4).to_vector());
    const auto flat = gen_texture(16, 16, 3, 0.0);
    for (double v : flat.values()) CHECK(v == 0.5);
    const double m = mean_of(gen_texture(64, 64, 1));
    CHECK(m >= 0.45);
    CHECK(m <= 0.55);
    const auto tex = gen_texture(16, 16, 3);
    for (double v : tex.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("gen_pattern dispatches") {
    PatternSpec spec;
    spec.kind = PatternKind::moire;
    CHECK(gen_pattern(32, 32, spec).to_vector() == gen_moire(32, 32, 0, 45, 1.0, 4).to_vector());
    spec.kind = PatternKind::stripes;
    CHECK(gen_pattern(8, 8, spec).to_vector() == gen_stripes(8, 8, 4).to_vector());
    spec.kind = PatternKind::texture;
    spec.seed = 9;
    CHECK(gen_pattern(8, 8, spec).to_vector() == gen_texture(8, 8, 9).to_vector());
}

TEST_CASE("face fixtures") {
    const auto a = gen_face_fixture(0);
    CHECK(a.shape() == Shape{3, 32, 32});
    CHECK(a.to_vector() == gen_face_fixture(0).to_vector());
    CHECK(a.to_vector() != gen_face_fixture(1).to_vector());
    for (double v : a.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // Not a flat image: enough contrast for structural metrics to mean something.
    double lo = 1.0, hi = 0.0;
    for (double v : a.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(hi - lo > 0.4);
    CHECK(gen_face_fixture(2, 64, 48).shape() == Shape{3, 64, 48});
}
