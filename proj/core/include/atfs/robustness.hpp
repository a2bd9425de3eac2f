#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "atfs/tensor.hpp"

namespace atfs {

enum class TransformKind { jpeg, gaussian_noise, rescale };

struct TransformSpec {
    TransformKind kind = TransformKind::jpeg;
    int quality = 75;
    double sigma = 0.0;
    double factor = 1.0;
    std::uint64_t seed = 0;

    /// Canonical string form: "jpeg:75", "noise:0.05:SEED", "rescale:0.5".
    std::string str() const;
};

/// Parses the canonical string forms above.
TransformSpec parse_transform_spec(std::string_view s);

/// Standard JPEG luminance quantization table (row-major, natural order).
inline constexpr std::array<int, 64> kJpegLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

/// Table scaled for a quality in [1,100]: s = 5000/q (q < 50) or 200 - 2q,
/// entry = clamp(floor((base * s + 50) / 100), 1, 255).
std::array<int, 64> jpeg_quant_table(int quality);

/// JPEG-style lossy round trip without chroma subsampling or entropy coding.
/// Per channel and 8x8 block: level-shift (v*255 - 128), orthonormal DCT-II,
/// divide by the scaled table, round half away from zero, dequantize,
/// inverse DCT, undo the shift, clip to [0,1]. H and W not divisible by 8 are
/// reflect-padded and cropped afterwards.
Tensor jpeg_approx(const Tensor& img, int quality);

/// img + N(0, sigma^2) per pixel from SplitMix64(seed), clipped to [0,1].
Tensor add_gaussian_noise(const Tensor& img, double sigma, std::uint64_t seed);

/// Bilinear resize to explicit dimensions using half-pixel centers:
/// src = (dst + 0.5) * in / out - 0.5, clamped to the valid range.
Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w);

/// Bilinear downscale to round(H*factor) × round(W*factor), then back up to
/// H × W, clipped to [0,1].
Tensor rescale(const Tensor& img, double factor);

Tensor apply_transform(const Tensor& img, const TransformSpec& spec);

}  // namespace atfs
