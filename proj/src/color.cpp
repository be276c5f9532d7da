#include "uwe/color.hpp"

#include <algorithm>
#include <cmath>

#include "uwe/kernels.hpp"

namespace uwe {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

// Linear sRGB → XYZ, D65.
constexpr Mat3 kRgbToXyz{{{0.4124564, 0.3575761, 0.1804375},
                          {0.2126729, 0.7151522, 0.0721750},
                          {0.0193339, 0.1191920, 0.9503041}}};

constexpr Mat3 invert(const Mat3& m) {
  const double a = m[0][0], b = m[0][1], c = m[0][2];
  const double d = m[1][0], e = m[1][1], f = m[1][2];
  const double g = m[2][0], h = m[2][1], i = m[2][2];
  const double det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  return {{{(e * i - f * h) / det, (c * h - b * i) / det, (b * f - c * e) / det},
           {(f * g - d * i) / det, (a * i - c * g) / det, (c * d - a * f) / det},
           {(d * h - e * g) / det, (b * g - a * h) / det, (a * e - b * d) / det}}};
}

constexpr Mat3 kXyzToRgb = invert(kRgbToXyz);

// White point as the image of RGB (1,1,1), so white maps to a* = b* = 0.
constexpr std::array<double, 3> kWhite{kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
                                       kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
                                       kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2]};

constexpr double kEpsilon = 216.0 / 24389.0;
constexpr double kKappa = 24389.0 / 27.0;

double decode_gamma(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
double encode_gamma(double c) { return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055; }

double lab_f(double t) { return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0; }

}  // namespace

Triple srgb_to_lab_pixel(const Triple& rgb) noexcept {
  Triple lin{};
  for (int c = 0; c < 3; ++c) lin[c] = decode_gamma(std::clamp(rgb[c], 0.0, 1.0));
  Triple xyz{};
  for (int r = 0; r < 3; ++r)
    xyz[r] = (kRgbToXyz[r][0] * lin[0] + kRgbToXyz[r][1] * lin[1] + kRgbToXyz[r][2] * lin[2]) / kWhite[r];
  const double fx = lab_f(xyz[0]), fy = lab_f(xyz[1]), fz = lab_f(xyz[2]);
  const double L = xyz[1] > kEpsilon ? 116.0 * fy - 16.0 : kKappa * xyz[1];
  return {L, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Triple lab_to_srgb_pixel(const Triple& lab) noexcept {
  const double fy = (lab[0] + 16.0) / 116.0;
  const double fx = fy + lab[1] / 500.0;
  const double fz = fy - lab[2] / 200.0;
  const double fx3 = fx * fx * fx, fz3 = fz * fz * fz;
  Triple xyz{};
  xyz[0] = (fx3 > kEpsilon ? fx3 : (116.0 * fx - 16.0) / kKappa) * kWhite[0];
  xyz[1] = (lab[0] > kKappa * kEpsilon ? fy * fy * fy : lab[0] / kKappa) * kWhite[1];
  xyz[2] = (fz3 > kEpsilon ? fz3 : (116.0 * fz - 16.0) / kKappa) * kWhite[2];
  Triple rgb{};
  for (int r = 0; r < 3; ++r) {
    const double lin = kXyzToRgb[r][0] * xyz[0] + kXyzToRgb[r][1] * xyz[1] + kXyzToRgb[r][2] * xyz[2];
    rgb[r] = std::clamp(encode_gamma(std::clamp(lin, 0.0, 1.0)), 0.0, 1.0);
  }
  return rgb;
}

LabImage srgb_to_lab(const RgbImage& img) {
  require(!img.empty(), Errc::empty_input, "srgb_to_lab on a zero-sized image");
  LabImage out(img.width(), img.height());
  kernels::srgb_to_lab(img.data(), out.data(), kernels::default_exec());
  return out;
}

RgbImage lab_to_srgb(const LabImage& img) {
  require(!img.empty(), Errc::empty_input, "lab_to_srgb on a zero-sized image");
  RgbImage out(img.width(), img.height());
  kernels::lab_to_srgb(img.data(), out.data(), kernels::default_exec());
  return out;
}

ChannelStats channel_stats(const LabImage& img) {
  require(img.pixels() > 0, Errc::empty_input, "channel_stats on a zero-pixel image");
  // Welford update per channel.
  ChannelStats s;
  Triple m2{};
  const auto d = img.data();
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    const double n = static_cast<double>(i + 1);
    for (int c = 0; c < 3; ++c) {
      const double x = d[3 * i + c];
      const double delta = x - s.mean[c];
      s.mean[c] += delta / n;
      m2[c] += delta * (x - s.mean[c]);
    }
  }
  for (int c = 0; c < 3; ++c) s.std[c] = std::sqrt(std::max(0.0, m2[c] / static_cast<double>(img.pixels())));
  return s;
}

bool is_finite(const ChannelStats& s) noexcept {
  for (int c = 0; c < 3; ++c)
    if (!std::isfinite(s.mean[c]) || !std::isfinite(s.std[c])) return false;
  return true;
}

}  // namespace uwe
