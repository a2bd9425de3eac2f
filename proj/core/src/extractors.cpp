#include "atfs/extractors.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "atfs/rng.hpp"

namespace atfs {

std::string_view to_string(ExtractorKind kind) {
    switch (kind) {
        case ExtractorKind::vae_proxy: return "vae_proxy";
        case ExtractorKind::gan_proxy: return "gan_proxy";
        case ExtractorKind::vqvae_proxy: return "vqvae_proxy";
    }
    return "unknown";
}

namespace {

// Spread of the VQ codebook; matches the typical magnitude of the encoder's
// pre-quantization outputs on [0,1] images.
constexpr double kCodebookStddev = 0.05;

std::uint64_t kind_tag(ExtractorKind kind) { return static_cast<std::uint64_t>(kind) + 1; }

// Glorot-uniform weights drawn in row-major order from the shared stream.
Tensor glorot(SplitMix64& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(shape_numel(shape));
    for (auto& e : v) e = rng.uniform(-a, a);
    return Tensor::from(std::move(shape), std::move(v));
}

layers::Conv conv(SplitMix64& rng, std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t stride,
                  std::size_t pad) {
    return {glorot(rng, {out_c, in_c, k, k}, in_c * k * k, out_c * k * k), Tensor::zeros({out_c}),
            Conv2dOptions{stride, pad}};
}

layers::Linear linear(SplitMix64& rng, std::size_t in, std::size_t out) {
    return {glorot(rng, {out, in}, in, out), Tensor::zeros({out})};
}

void check_geometry(ExtractorKind kind, const ImageGeometry& g) {
    const std::size_t s = total_stride(kind);
    if (g.channels == 0 || g.height == 0 || g.width == 0 || g.height % s != 0 || g.width % s != 0) {
        throw std::invalid_argument(std::string(to_string(kind)) + ": image " + shape_str(g.shape()) +
                                    " must have H and W divisible by " + std::to_string(s));
    }
}

}  // namespace

std::size_t total_stride(ExtractorKind kind) {
    switch (kind) {
        case ExtractorKind::vae_proxy: return 8;
        case ExtractorKind::gan_proxy: return 4;
        case ExtractorKind::vqvae_proxy: return 4;
    }
    return 1;
}

FeatureExtractor::FeatureExtractor(std::string name, ExtractorKind kind, std::uint64_t seed,
                                   ImageGeometry geometry, std::vector<Layer> layers, double output_scale)
    : name_(std::move(name)),
      kind_(kind),
      seed_(seed),
      geometry_(geometry),
      layers_(std::move(layers)),
      output_scale_(output_scale) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        if (auto* lin = std::get_if<layers::Linear>(&*it)) {
            feature_dim_ = lin->weight.shape()[0];
            break;
        }
    }
    if (feature_dim_ == 0) throw std::invalid_argument("FeatureExtractor: network must end in a linear layer");
}

std::vector<Tensor> FeatureExtractor::params() const {
    std::vector<Tensor> out;
    for (const auto& layer : layers_) {
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, layers::Conv> || std::is_same_v<L, layers::Linear>) {
                    out.push_back(l.weight);
                    out.push_back(l.bias);
                } else if constexpr (std::is_same_v<L, layers::Quantize>) {
                    out.push_back(l.codebook);
                }
            },
            layer);
    }
    return out;
}

std::size_t FeatureExtractor::param_count() const {
    std::size_t n = 0;
    for (const auto& p : params()) n += p.numel();
    return n;
}

std::vector<std::string> FeatureExtractor::describe() const {
    std::vector<std::string> out;
    for (const auto& layer : layers_) {
        std::ostringstream os;
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, layers::Conv>) {
                    const auto& s = l.weight.shape();
                    os << "conv " << s[1] << "->" << s[0] << " k" << s[2] << " s" << l.options.stride << " p"
                       << l.options.padding;
                } else if constexpr (std::is_same_v<L, layers::Activation>) {
                    if (l.leaky) os << "leaky_relu " << l.slope;
                    else os << "relu";
                } else if constexpr (std::is_same_v<L, layers::Quantize>) {
                    os << "quantize " << l.codebook.shape()[0] << "x" << l.codebook.shape()[1];
                } else {
                    os << "linear " << l.weight.shape()[1] << "->" << l.weight.shape()[0];
                }
            },
            layer);
        out.push_back(os.str());
    }
    return out;
}

const Tensor* FeatureExtractor::codebook() const {
    for (const auto& layer : layers_) {
        if (auto* q = std::get_if<layers::Quantize>(&layer)) return &q->codebook;
    }
    return nullptr;
}

Tensor FeatureExtractor::extract(const Tensor& img) const { return run(img, true); }

Tensor FeatureExtractor::extract_unquantized(const Tensor& img) const { return run(img, false); }

FeatureExtractor FeatureExtractor::scaled(double factor) const {
    FeatureExtractor copy = *this;
    copy.output_scale_ *= factor;
    return copy;
}

Tensor FeatureExtractor::run(const Tensor& img, bool quantize) const {
    if (img.shape() != geometry_.shape()) {
        throw ShapeError(name_ + ": expected image " + shape_str(geometry_.shape()) + ", got " +
                         shape_str(img.shape()));
    }
    // Encoders see inputs in [-1, 1].
    Tensor h = add_scalar(scale(img, 2.0), -1.0);
    for (const auto& layer : layers_) {
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, layers::Conv>) {
                    h = conv2d(h, l.weight, l.bias, l.options);
                } else if constexpr (std::is_same_v<L, layers::Activation>) {
                    h = l.leaky ? leaky_relu(h, l.slope) : relu(h);
                } else if constexpr (std::is_same_v<L, layers::Quantize>) {
                    if (quantize) h = quantize_straight_through(h, l.codebook);
                } else {
                    h = add(matmul(l.weight, flatten(h)), l.bias);
                }
            },
            layer);
    }
    if (output_scale_ != 1.0) h = scale(h, output_scale_);
    return h;
}

FeatureExtractor build_vae_proxy(std::uint64_t seed, ImageGeometry g) {
    constexpr auto kind = ExtractorKind::vae_proxy;
    check_geometry(kind, g);
    SplitMix64 rng(derive_seed(seed, kind_tag(kind)));
    std::vector<Layer> net;
    net.emplace_back(conv(rng, g.channels, 16, 3, 2, 1));
    net.emplace_back(layers::Activation{true, 0.2});
    net.emplace_back(conv(rng, 16, 32, 3, 2, 1));
    net.emplace_back(layers::Activation{true, 0.2});
    net.emplace_back(conv(rng, 32, 32, 3, 2, 1));
    net.emplace_back(layers::Activation{true, 0.2});
    net.emplace_back(linear(rng, 32 * (g.height / 8) * (g.width / 8), kFeatureDim));
    return FeatureExtractor("vae_proxy:" + std::to_string(seed), kind, seed, g, std::move(net));
}

FeatureExtractor build_gan_proxy(std::uint64_t seed, ImageGeometry g) {
    constexpr auto kind = ExtractorKind::gan_proxy;
    check_geometry(kind, g);
    SplitMix64 rng(derive_seed(seed, kind_tag(kind)));
    std::vector<Layer> net;
    net.emplace_back(conv(rng, g.channels, 24, 5, 2, 2));
    net.emplace_back(layers::Activation{});
    net.emplace_back(conv(rng, 24, 48, 3, 2, 1));
    net.emplace_back(layers::Activation{});
    net.emplace_back(conv(rng, 48, 16, 3, 1, 1));
    net.emplace_back(layers::Activation{});
    net.emplace_back(linear(rng, 16 * (g.height / 4) * (g.width / 4), kFeatureDim));
    return FeatureExtractor("gan_proxy:" + std::to_string(seed), kind, seed, g, std::move(net));
}

FeatureExtractor build_vqvae_proxy(std::uint64_t seed, ImageGeometry g) {
    constexpr auto kind = ExtractorKind::vqvae_proxy;
    check_geometry(kind, g);
    SplitMix64 rng(derive_seed(seed, kind_tag(kind)));
    std::vector<Layer> net;
    net.emplace_back(conv(rng, g.channels, 16, 4, 2, 1));
    net.emplace_back(layers::Activation{});
    net.emplace_back(conv(rng, 16, kCodeDim, 3, 2, 1));
    net.emplace_back(layers::Quantize{make_codebook(rng.next(), kCodebookSize, kCodeDim, kCodebookStddev)});
    net.emplace_back(linear(rng, kCodeDim * (g.height / 4) * (g.width / 4), kFeatureDim));
    return FeatureExtractor("vqvae_proxy:" + std::to_string(seed), kind, seed, g, std::move(net));
}

Tensor make_codebook(std::uint64_t seed, std::size_t entries, std::size_t dim, double stddev) {
    if (entries < 2 || dim == 0) throw std::invalid_argument("make_codebook: need at least 2 entries");
    SplitMix64 rng(seed);
    std::set<std::vector<double>> seen;
    std::vector<double> values;
    values.reserve(entries * dim);
    while (seen.size() < entries) {
        std::vector<double> row(dim);
        for (auto& e : row) e = stddev * rng.normal();
        if (seen.insert(row).second) values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor::from({entries, dim}, std::move(values));
}

FeatureExtractor parse_extractor_spec(std::string_view spec, ImageGeometry geometry) {
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos) {
        throw std::invalid_argument("extractor spec '" + std::string(spec) + "' must look like NAME:SEED");
    }
    const auto name = spec.substr(0, colon);
    const auto seed_str = spec.substr(colon + 1);
    std::uint64_t seed = 0;
    auto [ptr, ec] = std::from_chars(seed_str.data(), seed_str.data() + seed_str.size(), seed);
    if (ec != std::errc{} || ptr != seed_str.data() + seed_str.size()) {
        throw std::invalid_argument("extractor spec '" + std::string(spec) + "': bad seed");
    }
    if (name == "vae_proxy") return build_vae_proxy(seed, geometry);
    if (name == "gan_proxy") return build_gan_proxy(seed, geometry);
    if (name == "vqvae_proxy") return build_vqvae_proxy(seed, geometry);
    throw std::invalid_argument("unknown extractor '" + std::string(name) +
                                "' (expected vae_proxy, gan_proxy or vqvae_proxy)");
}

}  // namespace atfs
