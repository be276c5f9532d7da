#pragma once

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "uwe/image.hpp"

namespace uwe::metrics {

/// +inf: returned by psnr() for identical inputs.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10·log10(1/MSE) over all samples, peak value 1.0.
double psnr(const RgbImage& a, const RgbImage& b);

/// Mean SSIM on BT.601 luma: 11×11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1, averaged over fully contained windows.
double ssim(const RgbImage& a, const RgbImage& b);

struct UiqmScore {
  double uiqm = 0.0;
  double uicm = 0.0;
  double uism = 0.0;
  double uiconm = 0.0;
};

inline constexpr std::size_t kUiqmBlock = 8;

/// Underwater image quality measure on the 0..255 scale:
///  - UICM: asymmetric alpha-trimmed (0.1/0.1) mean and variance of the RG
///    and YB opponent channels, -0.0268·|mu| + 0.1586·sigma;
///  - UISM: per-channel EME of (Sobel magnitude × channel), weighted
///    0.299/0.587/0.114, block term log((max+1)/(min+1));
///  - UIConM: logAMEE of intensity, -(1/K)·Σ r·ln r with r = (max-min)/(max+min);
///  - UIQM = 0.0282·UICM + 0.2953·UISM + 3.5753·UIConM.
/// Blocks are 8×8, tiled from the top-left; partial blocks are dropped.
UiqmScore uiqm(const RgbImage& img);

/// 0.4680·std(chroma) + 0.2745·(p99(L*) - p1(L*))/100 + 0.2576·mean(saturation),
/// chroma = sqrt(a*² + b*²), saturation = chroma / sqrt(chroma² + L*²) (0/0 → 0).
/// Percentiles use linear interpolation between order statistics.
double uciqe(const RgbImage& img);

inline constexpr std::size_t kCpbdBlock = 64;

/// Cumulative probability of blur detection on BT.601 luma (0..255 scale).
/// Sobel edges (b = gx²+gy² > 4·mean(b), thinned to local maxima along the
/// dominant gradient axis); 64×64 edge blocks hold > 0.2% edge pixels; edge
/// width is the run to the local extrema on both sides along that axis;
/// P = 1 - exp(-(w / w_jnb)^3.6) with w_jnb = 5 for block contrast <= 50 and 3
/// above; the score is the fraction of edges with round(100·P) <= 63. An image
/// without edge blocks scores 0.
double cpbd(const RgbImage& img);

struct MetricReport {
  std::optional<double> psnr;  // full-reference metrics need a reference
  std::optional<double> ssim;
  double uiqm = 0.0;
  double uciqe = 0.0;
  double cpbd = 0.0;
  double uicm = 0.0;
  double uism = 0.0;
  double uiconm = 0.0;
};

struct MetricToggles {
  bool psnr = true, ssim = true, uiqm = true, uciqe = true, cpbd = true;
};

MetricReport evaluate(const RgbImage& img, const RgbImage* reference = nullptr, const MetricToggles& on = {});

struct EvalItem {
  const RgbImage* image = nullptr;
  const RgbImage* reference = nullptr;  // may be null
};

/// Evaluates items in parallel; results are returned in input order.
std::vector<MetricReport> evaluate_batch(std::span<const EvalItem> items, const MetricToggles& on = {});

/// Arithmetic mean of each column; psnr mean is +inf if any entry is +inf and
/// absent if any entry lacks it.
MetricReport mean_report(std::span<const MetricReport> reports);

// Building blocks, exposed for tests.
struct SobelResponse {
  Plane gx, gy;
};
/// 3×3 Sobel with clamp-to-edge borders.
SobelResponse sobel(const Plane& p);
/// Alpha-trimmed mean: drop ceil(alpha_l·K) smallest and floor(alpha_r·K)
/// largest samples.
double trimmed_mean(std::vector<double> values, double alpha_l, double alpha_r);
/// Linear-interpolation percentile, q in [0,1].
double percentile(std::vector<double> values, double q);

}  // namespace uwe::metrics
