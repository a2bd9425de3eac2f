#pragma once

#include <filesystem>
#include <stdexcept>

#include "atfs/tensor.hpp"

namespace atfs {

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads an 8-bit RGB PNG into a 3×H×W tensor with values v/255.
/// Other bit depths and color types are rejected.
Tensor load_png(const std::filesystem::path& path);

/// Writes a 3×H×W tensor as 8-bit RGB; each value maps to
/// floor(clamp(v, 0, 1) * 255 + 0.5).
void save_png(const Tensor& image, const std::filesystem::path& path);

/// The 8-bit round trip of save_png followed by load_png, without touching disk.
Tensor quantize_8bit(const Tensor& image);

}  // namespace atfs
