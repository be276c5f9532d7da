#include <algorithm>

#include "uwe/error.hpp"
#include "uwe/image.hpp"

namespace uwe {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::empty_input: return "empty input";
    case Errc::parameter: return "invalid parameter";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::out_of_range: return "out of range";
    case Errc::unsupported_format: return "unsupported format";
    case Errc::truncated: return "truncated file";
    case Errc::dimension_overflow: return "dimension overflow";
    case Errc::io: return "i/o error";
    case Errc::non_finite: return "non-finite value";
    case Errc::single_class: return "single-class dataset";
    case Errc::divergence: return "divergence";
    case Errc::config: return "configuration error";
  }
  return "unknown error";
}

Plane luminance_bt601(const RgbImage& img) {
  Plane p(img.width(), img.height());
  const auto d = img.data();
  for (std::size_t i = 0; i < img.pixels(); ++i)
    p.data[i] = 0.299 * d[3 * i] + 0.587 * d[3 * i + 1] + 0.114 * d[3 * i + 2];
  return p;
}

Plane channel_plane(const RgbImage& img, std::size_t c) {
  Plane p(img.width(), img.height());
  const auto d = img.data();
  for (std::size_t i = 0; i < img.pixels(); ++i) p.data[i] = d[3 * i + c];
  return p;
}

RgbImage flip_horizontal(const RgbImage& img) {
  RgbImage out(img.width(), img.height());
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(img.width() - 1 - x, y, c) = img.at(x, y, c);
  return out;
}

RgbImage rotate90(const RgbImage& img, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return img;
  const std::size_t w = img.width(), h = img.height();
  RgbImage out = (q == 2) ? RgbImage(w, h) : RgbImage(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = img.at(x, y, c);
        if (q == 1)
          out.at(h - 1 - y, x, c) = v;
        else if (q == 2)
          out.at(w - 1 - x, h - 1 - y, c) = v;
        else
          out.at(y, w - 1 - x, c) = v;
      }
  return out;
}

RgbImage clamp01(RgbImage img) {
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace uwe
