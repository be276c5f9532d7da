#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "uwe/error.hpp"

namespace uwe {

/// Interleaved H×W×3 raster of doubles. The tag distinguishes color spaces at
/// the type level so an sRGB buffer cannot be passed where Lab is expected.
template <class Tag>
class Raster {
 public:
  Raster() = default;
  Raster(std::size_t width, std::size_t height, double fill = 0.0)
      : width_(width), height_(height), data_(width * height * 3, fill) {}
  Raster(std::size_t width, std::size_t height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    require(data_.size() == width_ * height_ * 3, Errc::shape_mismatch,
            "raster data length must equal width*height*3");
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t pixels() const noexcept { return width_ * height_; }
  bool empty() const noexcept { return data_.empty(); }

  double& at(std::size_t x, std::size_t y, std::size_t c) { return data_[(y * width_ + x) * 3 + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c) const { return data_[(y * width_ + x) * 3 + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  bool same_shape(const Raster& o) const noexcept { return width_ == o.width_ && height_ == o.height_; }
  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> data_;
};

struct SrgbTag {};
struct LabTag {};

/// sRGB samples, nominal range [0,1]; out-of-range values are allowed in
/// flight and clamped when written to disk.
using RgbImage = Raster<SrgbTag>;
/// CIELAB (D65, 2°): L* in [0,100], a*, b* roughly in [-128,128].
using LabImage = Raster<LabTag>;

/// Single-channel plane, row-major.
struct Plane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), data(w * h, fill) {}
  double& operator()(std::size_t x, std::size_t y) { return data[y * width + x]; }
  double operator()(std::size_t x, std::size_t y) const { return data[y * width + x]; }
};

/// BT.601 luma of an sRGB image, same [0,1] scale as the input.
Plane luminance_bt601(const RgbImage& img);

/// Copy of channel c as a plane.
Plane channel_plane(const RgbImage& img, std::size_t c);

RgbImage flip_horizontal(const RgbImage& img);
/// Clockwise rotation by quarter_turns × 90°.
RgbImage rotate90(const RgbImage& img, int quarter_turns);
RgbImage clamp01(RgbImage img);

}  // namespace uwe
