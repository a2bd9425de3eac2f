#pragma once

#include <cstdint>
#include <string_view>

#include "atfs/tensor.hpp"

namespace atfs {

/// Target guidance images. All outputs are 3×h×w in [0,1] with the same
/// values in every channel.
enum class PatternKind { stripes, moire, texture };

struct PatternSpec {
    PatternKind kind = PatternKind::stripes;
    std::size_t period = 4;       // stripes; also the grating wavelength for moire
    double angle1 = 0.0;          // moire, degrees
    double angle2 = 45.0;         // moire, degrees
    std::uint64_t seed = 0;       // texture
    double contrast = 1.0;
};

/// Vertical square wave: column c is low (0.5 - contrast/2) while
/// (c mod period) < period/2, high (0.5 + contrast/2) otherwise.
Tensor gen_stripes(std::size_t h, std::size_t w, std::size_t period, double contrast = 1.0);

/// Product of two cosine gratings of wavelength `period` pixels, oriented at
/// angle1 and angle2 degrees, mapped affinely from [-1,1] onto
/// [0.5 - contrast/2, 0.5 + contrast/2].
Tensor gen_moire(std::size_t h, std::size_t w, double angle1, double angle2, double contrast = 1.0,
                 double period = 8.0);

/// Per-pixel uniform noise sharpened by u + (u - box3x3(u)), then
/// v = 0.5 + contrast * (u' - 0.5), clipped.
Tensor gen_texture(std::size_t h, std::size_t w, std::uint64_t seed, double contrast = 1.0);

Tensor gen_pattern(std::size_t h, std::size_t w, const PatternSpec& spec);

/// Procedural face-like RGB test image (skin ellipse, hair, eyes, mouth on a
/// shaded background), fully determined by the seed.
Tensor gen_face_fixture(std::uint64_t seed, std::size_t h = 32, std::size_t w = 32);

}  // namespace atfs
