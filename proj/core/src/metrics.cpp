#include "atfs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace atfs {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

struct Plane {
    std::size_t h = 0, w = 0;
    std::vector<double> v;
};

const std::vector<double>& gaussian_taps() {
    static const std::vector<double> taps = [] {
        const int r = MsSsimParams::window / 2;
        std::vector<double> t;
        double s = 0.0;
        for (int i = -r; i <= r; ++i) {
            t.push_back(std::exp(-(i * i) / (2.0 * MsSsimParams::sigma * MsSsimParams::sigma)));
            s += t.back();
        }
        for (auto& e : t) e /= s;
        return t;
    }();
    return taps;
}

// Separable Gaussian filter, same-size output, truncated and renormalized
// at the borders.
Plane blur(const Plane& p) {
    const auto& taps = gaussian_taps();
    const long r = static_cast<long>(taps.size() / 2);
    const auto h = static_cast<long>(p.h), w = static_cast<long>(p.w);
    std::vector<double> tmp(p.v.size()), out(p.v.size());
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            double acc = 0.0, norm = 0.0;
            for (long k = -r; k <= r; ++k) {
                const long xx = x + k;
                if (xx < 0 || xx >= w) continue;
                acc += taps[k + r] * p.v[y * w + xx];
                norm += taps[k + r];
            }
            tmp[y * w + x] = acc / norm;
        }
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            double acc = 0.0, norm = 0.0;
            for (long k = -r; k <= r; ++k) {
                const long yy = y + k;
                if (yy < 0 || yy >= h) continue;
                acc += taps[k + r] * tmp[yy * w + x];
                norm += taps[k + r];
            }
            out[y * w + x] = acc / norm;
        }
    return {p.h, p.w, std::move(out)};
}

Plane product(const Plane& a, const Plane& b) {
    Plane out{a.h, a.w, std::vector<double>(a.v.size())};
    for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    return out;
}

Plane downsample(const Plane& p) {
    Plane out{p.h / 2, p.w / 2, {}};
    out.v.resize(out.h * out.w);
    for (std::size_t y = 0; y < out.h; ++y)
        for (std::size_t x = 0; x < out.w; ++x)
            out.v[y * out.w + x] = 0.25 * (p.v[(2 * y) * p.w + 2 * x] + p.v[(2 * y) * p.w + 2 * x + 1] +
                                           p.v[(2 * y + 1) * p.w + 2 * x] + p.v[(2 * y + 1) * p.w + 2 * x + 1]);
    return out;
}

struct ScaleStats {
    double ssim = 0.0;
    double cs = 0.0;
};

ScaleStats ssim_stats(const Plane& a, const Plane& b) {
    constexpr double c1 = MsSsimParams::k1 * MsSsimParams::k1;
    constexpr double c2 = MsSsimParams::k2 * MsSsimParams::k2;
    const Plane mu_a = blur(a), mu_b = blur(b);
    const Plane e_aa = blur(product(a, a)), e_bb = blur(product(b, b)), e_ab = blur(product(a, b));
    double ssim_sum = 0.0, cs_sum = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double ma = mu_a.v[i], mb = mu_b.v[i];
        const double var_a = e_aa.v[i] - ma * ma;
        const double var_b = e_bb.v[i] - mb * mb;
        const double cov = e_ab.v[i] - ma * mb;
        const double cs = (2.0 * cov + c2) / (var_a + var_b + c2);
        const double lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs_sum += cs;
        ssim_sum += lum * cs;
    }
    const auto n = static_cast<double>(a.v.size());
    return {ssim_sum / n, cs_sum / n};
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "psnr");
    auto av = a.values(), bv = b.values();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        s += d * d;
    }
    const double mse = s / static_cast<double>(av.size());
    if (mse == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(1.0 / mse);
}

double ms_ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ms_ssim");
    if (a.rank() != 3) throw ShapeError("ms_ssim: expected C×H×W image, got " + shape_str(a.shape()));
    const std::size_t c_n = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
    if (std::min(h, w) < MsSsimParams::min_size) {
        throw std::invalid_argument("ms_ssim: image " + shape_str(a.shape()) + " too small; H and W must be >= " +
                                    std::to_string(MsSsimParams::min_size));
    }
    const auto& weights = MsSsimParams::scale_weights;
    double total = 0.0;
    for (std::size_t c = 0; c < c_n; ++c) {
        Plane pa{h, w, {a.values().begin() + c * h * w, a.values().begin() + (c + 1) * h * w}};
        Plane pb{h, w, {b.values().begin() + c * h * w, b.values().begin() + (c + 1) * h * w}};
        double value = 1.0;
        for (std::size_t s = 0; s < weights.size(); ++s) {
            const ScaleStats st = ssim_stats(pa, pb);
            const bool last = s + 1 == weights.size();
            const double term = std::max(last ? st.ssim : st.cs, 0.0);
            value *= std::pow(term, weights[s]);
            if (!last) {
                pa = downsample(pa);
                pb = downsample(pb);
            }
        }
        total += value;
    }
    return total / static_cast<double>(c_n);
}

PerturbationNorms perturbation_norms(const Tensor& x, const Tensor& x_adv) {
    require_same_shape(x, x_adv, "perturbation_norms");
    auto xv = x.values(), av = x_adv.values();
    PerturbationNorms n;
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double d = av[i] - xv[i];
        n.linf = std::max(n.linf, std::abs(d));
        s += d * d;
    }
    n.l2 = std::sqrt(s);
    return n;
}

MetricReport evaluate_metrics(const Tensor& clean, const Tensor& adversarial) {
    MetricReport r;
    const auto n = perturbation_norms(clean, adversarial);
    r.linf = n.linf;
    r.l2 = n.l2;
    r.psnr_db = psnr(clean, adversarial);
    if (clean.rank() == 3 && std::min(clean.shape()[1], clean.shape()[2]) >= MsSsimParams::min_size) {
        r.ms_ssim = ms_ssim(clean, adversarial);
    } else {
        r.ms_ssim = std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

}  // namespace atfs
