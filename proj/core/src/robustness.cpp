#include "atfs/robustness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "atfs/rng.hpp"

namespace atfs {

namespace {

void require_chw(const Tensor& img, const char* op) {
    if (img.rank() != 3) throw ShapeError(std::string(op) + ": expected C×H×W image, got " + shape_str(img.shape()));
}

template <class T>
T parse_number(std::string_view s, std::string_view whole) {
    T value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw std::invalid_argument("transform spec '" + std::string(whole) + "': bad number '" + std::string(s) + "'");
    }
    return value;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

// Orthonormal 8-point DCT-II basis: basis[u][x] = c(u) cos((2x+1)uπ/16).
const std::array<std::array<double, 8>, 8>& dct_basis() {
    static const auto basis = [] {
        std::array<std::array<double, 8>, 8> b{};
        for (int u = 0; u < 8; ++u) {
            const double c = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int x = 0; x < 8; ++x) b[u][x] = c * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
        }
        return b;
    }();
    return basis;
}

std::size_t reflect(long i, std::size_t n) {
    if (n == 1) return 0;
    const long period = 2 * (static_cast<long>(n) - 1);
    i = ((i % period) + period) % period;
    return static_cast<std::size_t>(i < static_cast<long>(n) ? i : period - i);
}

}  // namespace

std::string TransformSpec::str() const {
    std::ostringstream os;
    switch (kind) {
        case TransformKind::jpeg: os << "jpeg:" << quality; break;
        case TransformKind::gaussian_noise: os << "noise:" << sigma << ':' << seed; break;
        case TransformKind::rescale: os << "rescale:" << factor; break;
    }
    return os.str();
}

TransformSpec parse_transform_spec(std::string_view s) {
    const auto parts = split(s, ':');
    TransformSpec spec;
    if (parts[0] == "jpeg" && parts.size() == 2) {
        spec.kind = TransformKind::jpeg;
        spec.quality = parse_number<int>(parts[1], s);
        if (spec.quality < 1 || spec.quality > 100) throw std::invalid_argument("jpeg quality must lie in [1, 100]");
    } else if (parts[0] == "noise" && (parts.size() == 2 || parts.size() == 3)) {
        spec.kind = TransformKind::gaussian_noise;
        spec.sigma = parse_number<double>(parts[1], s);
        if (parts.size() == 3) spec.seed = parse_number<std::uint64_t>(parts[2], s);
        if (!(spec.sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
    } else if (parts[0] == "rescale" && parts.size() == 2) {
        spec.kind = TransformKind::rescale;
        spec.factor = parse_number<double>(parts[1], s);
        if (!(spec.factor > 0.0 && spec.factor <= 1.0)) throw std::invalid_argument("rescale factor must lie in (0, 1]");
    } else {
        throw std::invalid_argument("unrecognized transform spec '" + std::string(s) +
                                    "' (expected jpeg:Q, noise:SIGMA[:SEED] or rescale:F)");
    }
    return spec;
}

std::array<int, 64> jpeg_quant_table(int quality) {
    if (quality < 1 || quality > 100) {
        throw std::invalid_argument("jpeg quality must lie in [1, 100], got " + std::to_string(quality));
    }
    const int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    std::array<int, 64> out{};
    for (std::size_t i = 0; i < 64; ++i) out[i] = std::clamp((kJpegLumaTable[i] * s + 50) / 100, 1, 255);
    return out;
}

Tensor jpeg_approx(const Tensor& img, int quality) {
    require_chw(img, "jpeg_approx");
    const auto table = jpeg_quant_table(quality);
    const auto& basis = dct_basis();
    const std::size_t c_n = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
    const std::size_t ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;
    auto src = img.values();
    std::vector<double> out(img.numel());
    std::vector<double> plane(ph * pw);
    for (std::size_t c = 0; c < c_n; ++c) {
        for (std::size_t y = 0; y < ph; ++y)
            for (std::size_t x = 0; x < pw; ++x)
                plane[y * pw + x] =
                    src[(c * h + reflect(static_cast<long>(y), h)) * w + reflect(static_cast<long>(x), w)] * 255.0 -
                    128.0;
        for (std::size_t by = 0; by < ph; by += 8) {
            for (std::size_t bx = 0; bx < pw; bx += 8) {
                double block[8][8], tmp[8][8], coef[8][8];
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) block[y][x] = plane[(by + y) * pw + bx + x];
                // Rows, then columns.
                for (int y = 0; y < 8; ++y)
                    for (int u = 0; u < 8; ++u) {
                        double acc = 0.0;
                        for (int x = 0; x < 8; ++x) acc += basis[u][x] * block[y][x];
                        tmp[y][u] = acc;
                    }
                for (int v = 0; v < 8; ++v)
                    for (int u = 0; u < 8; ++u) {
                        double acc = 0.0;
                        for (int y = 0; y < 8; ++y) acc += basis[v][y] * tmp[y][u];
                        const double q = table[v * 8 + u];
                        coef[v][u] = std::round(acc / q) * q;
                    }
                for (int y = 0; y < 8; ++y)
                    for (int u = 0; u < 8; ++u) {
                        double acc = 0.0;
                        for (int v = 0; v < 8; ++v) acc += basis[v][y] * coef[v][u];
                        tmp[y][u] = acc;
                    }
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        double acc = 0.0;
                        for (int u = 0; u < 8; ++u) acc += basis[u][x] * tmp[y][u];
                        block[y][x] = acc;
                    }
                for (int y = 0; y < 8; ++y) {
                    const std::size_t yy = by + y;
                    if (yy >= h) break;
                    for (int x = 0; x < 8; ++x) {
                        const std::size_t xx = bx + x;
                        if (xx >= w) break;
                        out[(c * h + yy) * w + xx] = std::clamp((block[y][x] + 128.0) / 255.0, 0.0, 1.0);
                    }
                }
            }
        }
    }
    return Tensor::from(img.shape(), std::move(out));
}

Tensor add_gaussian_noise(const Tensor& img, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
    auto v = img.to_vector();
    if (sigma == 0.0) return Tensor::from(img.shape(), std::move(v));
    SplitMix64 rng(seed);
    for (auto& e : v) e = std::clamp(e + sigma * rng.normal(), 0.0, 1.0);
    return Tensor::from(img.shape(), std::move(v));
}

Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w) {
    require_chw(img, "resize_bilinear");
    if (out_h == 0 || out_w == 0) throw std::invalid_argument("resize_bilinear: output dimensions must be positive");
    const std::size_t c_n = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
    auto src = img.values();
    struct Tap {
        std::size_t i0, i1;
        double frac;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double ratio = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t d = 0; d < out; ++d) {
            const double s = std::clamp((static_cast<double>(d) + 0.5) * ratio - 0.5, 0.0,
                                        static_cast<double>(in - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(s));
            t[d] = {i0, std::min(i0 + 1, in - 1), s - static_cast<double>(i0)};
        }
        return t;
    };
    const auto ty = taps(h, out_h), tx = taps(w, out_w);
    std::vector<double> out(c_n * out_h * out_w);
    for (std::size_t c = 0; c < c_n; ++c) {
        const double* p = &src[c * h * w];
        for (std::size_t y = 0; y < out_h; ++y) {
            const auto& a = ty[y];
            for (std::size_t x = 0; x < out_w; ++x) {
                const auto& b = tx[x];
                const double top = p[a.i0 * w + b.i0] * (1.0 - b.frac) + p[a.i0 * w + b.i1] * b.frac;
                const double bottom = p[a.i1 * w + b.i0] * (1.0 - b.frac) + p[a.i1 * w + b.i1] * b.frac;
                out[(c * out_h + y) * out_w + x] = top * (1.0 - a.frac) + bottom * a.frac;
            }
        }
    }
    return Tensor::from({c_n, out_h, out_w}, std::move(out));
}

Tensor rescale(const Tensor& img, double factor) {
    require_chw(img, "rescale");
    if (!(factor > 0.0 && factor <= 1.0)) throw std::invalid_argument("rescale: factor must lie in (0, 1]");
    const std::size_t h = img.shape()[1], w = img.shape()[2];
    const auto sh = static_cast<long>(std::lround(static_cast<double>(h) * factor));
    const auto sw = static_cast<long>(std::lround(static_cast<double>(w) * factor));
    if (sh < 1 || sw < 1) {
        throw std::invalid_argument("rescale: factor " + std::to_string(factor) + " collapses " + shape_str(img.shape()));
    }
    const Tensor small = resize_bilinear(img, static_cast<std::size_t>(sh), static_cast<std::size_t>(sw));
    auto v = resize_bilinear(small, h, w).to_vector();
    for (auto& e : v) e = std::clamp(e, 0.0, 1.0);
    return Tensor::from(img.shape(), std::move(v));
}

Tensor apply_transform(const Tensor& img, const TransformSpec& spec) {
    switch (spec.kind) {
        case TransformKind::jpeg: return jpeg_approx(img, spec.quality);
        case TransformKind::gaussian_noise: return add_gaussian_noise(img, spec.sigma, spec.seed);
        case TransformKind::rescale: return rescale(img, spec.factor);
    }
    throw std::invalid_argument("unknown transform");
}

}  // namespace atfs
