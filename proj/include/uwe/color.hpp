#pragma once

#include <array>

#include "uwe/image.hpp"

namespace uwe {

using Triple = std::array<double, 3>;

/// Per-channel mean and population standard deviation of a Lab image.
struct ChannelStats {
  Triple mean{};
  Triple std{};
};

// Pixel-level conversions. sRGB input is clamped to [0,1] first; Lab→sRGB
// output is clamped to [0,1]. D65 white, 2° observer.
Triple srgb_to_lab_pixel(const Triple& rgb) noexcept;
Triple lab_to_srgb_pixel(const Triple& lab) noexcept;

LabImage srgb_to_lab(const RgbImage& img);
RgbImage lab_to_srgb(const LabImage& img);

ChannelStats channel_stats(const LabImage& img);

bool is_finite(const ChannelStats& s) noexcept;

}  // namespace uwe
