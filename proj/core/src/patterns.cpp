#include "atfs/patterns.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "atfs/rng.hpp"

namespace atfs {

namespace {

void check_contrast(double contrast) {
    if (!(contrast >= 0.0 && contrast <= 1.0)) throw std::invalid_argument("contrast must lie in [0, 1]");
}

void check_dims(std::size_t h, std::size_t w) {
    if (h == 0 || w == 0) throw std::invalid_argument("pattern dimensions must be positive");
}

Tensor replicate(std::size_t h, std::size_t w, const std::vector<double>& plane) {
    std::vector<double> out;
    out.reserve(3 * h * w);
    for (int c = 0; c < 3; ++c) out.insert(out.end(), plane.begin(), plane.end());
    return Tensor::from({3, h, w}, std::move(out));
}

}  // namespace

Tensor gen_stripes(std::size_t h, std::size_t w, std::size_t period, double contrast) {
    check_dims(h, w);
    check_contrast(contrast);
    if (period < 2) throw std::invalid_argument("stripe period must be at least 2");
    const double lo = std::clamp(0.5 - contrast / 2.0, 0.0, 1.0);
    const double hi = std::clamp(0.5 + contrast / 2.0, 0.0, 1.0);
    std::vector<double> plane(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) plane[y * w + x] = 2 * (x % period) < period ? lo : hi;
    return replicate(h, w, plane);
}

Tensor gen_moire(std::size_t h, std::size_t w, double angle1, double angle2, double contrast, double period) {
    check_dims(h, w);
    check_contrast(contrast);
    if (angle1 == angle2) throw std::invalid_argument("moire angles must differ");
    if (!(period > 0.0)) throw std::invalid_argument("moire period must be positive");
    const double r1 = angle1 * std::numbers::pi / 180.0, r2 = angle2 * std::numbers::pi / 180.0;
    const double k = 2.0 * std::numbers::pi / period;
    std::vector<double> plane(h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double fx = static_cast<double>(x), fy = static_cast<double>(y);
            const double g1 = std::cos(k * (fx * std::cos(r1) + fy * std::sin(r1)));
            const double g2 = std::cos(k * (fx * std::cos(r2) + fy * std::sin(r2)));
            plane[y * w + x] = std::clamp(0.5 + 0.5 * contrast * g1 * g2, 0.0, 1.0);
        }
    }
    return replicate(h, w, plane);
}

Tensor gen_texture(std::size_t h, std::size_t w, std::uint64_t seed, double contrast) {
    check_dims(h, w);
    check_contrast(contrast);
    SplitMix64 rng(seed);
    std::vector<double> u(h * w);
    for (auto& v : u) v = rng.uniform();
    std::vector<double> plane(h * w);
    const auto ih = static_cast<long>(h), iw = static_cast<long>(w);
    for (long y = 0; y < ih; ++y) {
        for (long x = 0; x < iw; ++x) {
            double acc = 0.0;
            int n = 0;
            for (long dy = -1; dy <= 1; ++dy)
                for (long dx = -1; dx <= 1; ++dx) {
                    const long yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= ih || xx < 0 || xx >= iw) continue;
                    acc += u[yy * iw + xx];
                    ++n;
                }
            const double c = u[y * iw + x];
            const double sharp = c + (c - acc / n);
            plane[y * iw + x] = std::clamp(0.5 + contrast * (sharp - 0.5), 0.0, 1.0);
        }
    }
    return replicate(h, w, plane);
}

Tensor gen_pattern(std::size_t h, std::size_t w, const PatternSpec& spec) {
    switch (spec.kind) {
        case PatternKind::stripes: return gen_stripes(h, w, spec.period, spec.contrast);
        case PatternKind::moire:
            return gen_moire(h, w, spec.angle1, spec.angle2, spec.contrast, static_cast<double>(spec.period));
        case PatternKind::texture: return gen_texture(h, w, spec.seed, spec.contrast);
    }
    throw std::invalid_argument("unknown pattern kind");
}

Tensor gen_face_fixture(std::uint64_t seed, std::size_t h, std::size_t w) {
    check_dims(h, w);
    SplitMix64 rng(derive_seed(seed, 0x46414345ULL));
    auto color = [&](double lo, double hi) {
        return std::array<double, 3>{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
    };
    const auto bg_top = color(0.2, 0.8);
    const auto bg_bottom = color(0.2, 0.8);
    const std::array<double, 3> skin{rng.uniform(0.55, 0.85), rng.uniform(0.4, 0.65), rng.uniform(0.3, 0.55)};
    const auto hair = color(0.05, 0.35);
    const double cx = 0.5 + rng.uniform(-0.06, 0.06), cy = 0.55 + rng.uniform(-0.05, 0.05);
    const double rx = rng.uniform(0.24, 0.32), ry = rng.uniform(0.30, 0.38);
    const double eye_dx = rng.uniform(0.09, 0.13), eye_y = cy - rng.uniform(0.06, 0.10);
    const double eye_r = rng.uniform(0.035, 0.05);
    const double mouth_y = cy + rng.uniform(0.14, 0.19), mouth_w = rng.uniform(0.07, 0.12);
    const double light = rng.uniform(-0.15, 0.15);

    std::vector<double> img(3 * h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
            const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
            std::array<double, 3> px{};
            for (int c = 0; c < 3; ++c) px[c] = bg_top[c] * (1.0 - v) + bg_bottom[c] * v;
            const double ex = (u - cx) / rx, ey = (v - cy) / ry;
            const double r2 = ex * ex + ey * ey;
            const double hx = (u - cx) / (rx * 1.12), hy = (v - (cy - 0.04)) / (ry * 1.1);
            if (hx * hx + hy * hy < 1.0 && v < cy - 0.12) px = hair;
            if (r2 < 1.0) {
                const double shade = 1.0 + light * ex - 0.12 * r2;
                for (int c = 0; c < 3; ++c) px[c] = skin[c] * shade;
                for (double side : {-1.0, 1.0}) {
                    const double dx = u - (cx + side * eye_dx), dy = v - eye_y;
                    if (dx * dx + dy * dy < eye_r * eye_r) px = {0.08, 0.06, 0.05};
                }
                const double my = v - mouth_y;
                if (std::abs(u - cx) < mouth_w && std::abs(my) < 0.025) px = {0.55, 0.15, 0.15};
            }
            for (int c = 0; c < 3; ++c) {
                const double noise = 0.02 * (rng.uniform() - 0.5);
                img[(c * h + y) * w + x] = std::clamp(px[c] + noise, 0.0, 1.0);
            }
        }
    }
    return Tensor::from({3, h, w}, std::move(img));
}

}  // namespace atfs
