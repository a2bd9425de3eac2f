#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "atfs/tensor.hpp"

namespace atfs {

enum class ExtractorKind { vae_proxy, gan_proxy, vqvae_proxy };

std::string_view to_string(ExtractorKind kind);

struct ImageGeometry {
    std::size_t channels = 3;
    std::size_t height = 32;
    std::size_t width = 32;

    Shape shape() const { return {channels, height, width}; }
    bool operator==(const ImageGeometry&) const = default;
};

inline constexpr std::size_t kFeatureDim = 64;
inline constexpr std::size_t kCodebookSize = 32;
inline constexpr std::size_t kCodeDim = 8;

namespace layers {

struct Conv {
    Tensor weight;
    Tensor bias;
    Conv2dOptions options;
};

struct Activation {
    bool leaky = false;
    double slope = 0.0;
};

struct Quantize {
    Tensor codebook;
};

/// Flattens its input, then applies weight (out×in) and bias.
struct Linear {
    Tensor weight;
    Tensor bias;
};

}  // namespace layers

using Layer = std::variant<layers::Conv, layers::Activation, layers::Quantize, layers::Linear>;

/// Differentiable map from a C×H×W image to a flat feature vector. Immutable
/// after construction and safe to share between concurrent attack runs.
class FeatureExtractor {
public:
    FeatureExtractor(std::string name, ExtractorKind kind, std::uint64_t seed, ImageGeometry geometry,
                     std::vector<Layer> layers, double output_scale = 1.0);

    const std::string& name() const { return name_; }
    ExtractorKind kind() const { return kind_; }
    std::uint64_t seed() const { return seed_; }
    const ImageGeometry& geometry() const { return geometry_; }
    std::size_t feature_dim() const { return feature_dim_; }
    double output_scale() const { return output_scale_; }
    const std::vector<Layer>& layers() const { return layers_; }

    /// Weight tensors in layer order (codebook included).
    std::vector<Tensor> params() const;
    std::size_t param_count() const;
    /// One line per layer, e.g. "conv 3->16 k3 s2 p1".
    std::vector<std::string> describe() const;
    /// Codebook of the quantizer layer, or nullptr.
    const Tensor* codebook() const;

    /// Feature vector of shape (feature_dim). Tape-linked when img requires grad.
    Tensor extract(const Tensor& img) const;
    /// Same network with quantization skipped: the surrogate whose gradient
    /// the straight-through estimator reproduces.
    Tensor extract_unquantized(const Tensor& img) const;

    /// Copy whose features are multiplied by factor.
    FeatureExtractor scaled(double factor) const;

private:
    Tensor run(const Tensor& img, bool quantize) const;

    std::string name_;
    ExtractorKind kind_;
    std::uint64_t seed_;
    ImageGeometry geometry_;
    std::vector<Layer> layers_;
    double output_scale_;
    std::size_t feature_dim_ = 0;
};

/// Diffusion-encoder stand-in: three stride-2 3x3 convs with leaky ReLU,
/// then a linear projection. Total stride 8.
FeatureExtractor build_vae_proxy(std::uint64_t seed, ImageGeometry geometry = {});

/// GAN-encoder stand-in: 5x5 and 3x3 convs with ReLU, wider channels,
/// features from the deep activation map. Total stride 4.
FeatureExtractor build_gan_proxy(std::uint64_t seed, ImageGeometry geometry = {});

/// VQ-VAE stand-in: conv encoder to 8-dim patch vectors snapped to a
/// 32-entry codebook, then a linear projection. Total stride 4.
FeatureExtractor build_vqvae_proxy(std::uint64_t seed, ImageGeometry geometry = {});

/// M×D codebook drawn from N(0, stddev^2); duplicate rows are redrawn.
Tensor make_codebook(std::uint64_t seed, std::size_t entries, std::size_t dim, double stddev);

/// Total stride of an architecture; H and W must be multiples of it.
std::size_t total_stride(ExtractorKind kind);

/// Parses "vae_proxy:SEED", "gan_proxy:SEED" or "vqvae_proxy:SEED".
FeatureExtractor parse_extractor_spec(std::string_view spec, ImageGeometry geometry = {});

}  // namespace atfs
