#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "uwe/image.hpp"

namespace uwe {

enum class ImageFormat { png, ppm };

/// Upper bound on decoded pixel count; larger headers are rejected as
/// dimension overflow before any allocation.
inline constexpr std::uint64_t kMaxPixels = std::uint64_t{1} << 28;

/// Decodes PNG (8/16-bit; gray, palette and alpha are expanded/dropped) or
/// binary PPM (P6, maxval 255 or 65535). Format is sniffed from the bytes.
RgbImage decode_image(std::span<const std::uint8_t> bytes);
RgbImage load_image(const std::filesystem::path& path);

/// Quantizes with round-half-up after clamping to [0,1].
std::vector<std::uint8_t> encode_image(const RgbImage& img, ImageFormat format, int bit_depth = 8);
/// Format chosen from the extension (.png / .ppm).
void save_image(const RgbImage& img, const std::filesystem::path& path, int bit_depth = 8);

bool has_image_extension(const std::filesystem::path& path);

}  // namespace uwe
