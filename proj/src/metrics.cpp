#include "uwe/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "uwe/color.hpp"
#include "uwe/kernels.hpp"

namespace uwe::metrics {

namespace {

void require_pair(const RgbImage& a, const RgbImage& b) {
  require(!a.empty() && !b.empty(), Errc::empty_input, "metric input image is empty");
  require(a.same_shape(b), Errc::shape_mismatch, "metric inputs differ in size");
}

std::array<double, 11> ssim_window() {
  std::array<double, 11> w{};
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

Plane scaled(Plane p, double k) {
  for (double& v : p.data) v *= k;
  return p;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out(a.width, a.height);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

// log((max+1)/(min+1)) summed over 8×8 blocks, scaled by 2/(k1·k2).
double eme(const Plane& p) {
  const std::size_t k1 = p.width / kUiqmBlock, k2 = p.height / kUiqmBlock;
  double sum = 0.0;
  for (std::size_t by = 0; by < k2; ++by)
    for (std::size_t bx = 0; bx < k1; ++bx) {
      double lo = p(bx * kUiqmBlock, by * kUiqmBlock), hi = lo;
      for (std::size_t y = by * kUiqmBlock; y < (by + 1) * kUiqmBlock; ++y)
        for (std::size_t x = bx * kUiqmBlock; x < (bx + 1) * kUiqmBlock; ++x) {
          lo = std::min(lo, p(x, y));
          hi = std::max(hi, p(x, y));
        }
      sum += std::log((hi + 1.0) / (lo + 1.0));
    }
  return 2.0 / static_cast<double>(k1 * k2) * sum;
}

double log_amee(const Plane& p) {
  const std::size_t k1 = p.width / kUiqmBlock, k2 = p.height / kUiqmBlock;
  double sum = 0.0;
  for (std::size_t by = 0; by < k2; ++by)
    for (std::size_t bx = 0; bx < k1; ++bx) {
      double lo = p(bx * kUiqmBlock, by * kUiqmBlock), hi = lo;
      for (std::size_t y = by * kUiqmBlock; y < (by + 1) * kUiqmBlock; ++y)
        for (std::size_t x = bx * kUiqmBlock; x < (bx + 1) * kUiqmBlock; ++x) {
          lo = std::min(lo, p(x, y));
          hi = std::max(hi, p(x, y));
        }
      if (hi + lo <= 0.0 || hi == lo) continue;
      const double r = (hi - lo) / (hi + lo);
      sum += r * std::log(r);
    }
  return -sum / static_cast<double>(k1 * k2);
}

double uicm_of(const RgbImage& img) {
  const std::size_t n = img.pixels();
  std::vector<double> rg(n), yb(n);
  const auto d = img.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double r = 255.0 * d[3 * i], g = 255.0 * d[3 * i + 1], b = 255.0 * d[3 * i + 2];
    rg[i] = r - g;
    yb[i] = (r + g) / 2.0 - b;
  }
  auto spread = [](const std::vector<double>& v, double mu) {
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return s / static_cast<double>(v.size());
  };
  const double mu_rg = trimmed_mean(rg, 0.1, 0.1), mu_yb = trimmed_mean(yb, 0.1, 0.1);
  const double var_rg = spread(rg, mu_rg), var_yb = spread(yb, mu_yb);
  return -0.0268 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb) + 0.1586 * std::sqrt(var_rg + var_yb);
}

double uism_of(const RgbImage& img) {
  constexpr std::array<double, 3> weight{0.299, 0.587, 0.114};
  double total = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const Plane ch = channel_plane(img, c);
    const SobelResponse s = sobel(scaled(ch, 255.0));
    Plane edge(ch.width, ch.height);
    for (std::size_t i = 0; i < ch.data.size(); ++i)
      edge.data[i] = std::hypot(s.gx.data[i], s.gy.data[i]) * ch.data[i];
    total += weight[c] * eme(edge);
  }
  return total;
}

// Steps from p to the local extrema on both sides of an edge along one axis.
// `at(k)` reads the profile; `rising` says whether values grow with k.
template <class At>
std::size_t edge_width(At at, std::size_t p, std::size_t n, bool rising) {
  std::size_t hi = p, lo = p;
  if (rising) {
    while (hi + 1 < n && at(hi + 1) > at(hi)) ++hi;
    while (lo > 0 && at(lo - 1) < at(lo)) --lo;
  } else {
    while (hi + 1 < n && at(hi + 1) < at(hi)) ++hi;
    while (lo > 0 && at(lo - 1) > at(lo)) --lo;
  }
  return hi - lo;
}

}  // namespace

SobelResponse sobel(const Plane& p) {
  SobelResponse r{Plane(p.width, p.height), Plane(p.width, p.height)};
  const auto W = static_cast<std::ptrdiff_t>(p.width), H = static_cast<std::ptrdiff_t>(p.height);
  auto v = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
    return p(static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x, 0, W - 1)),
             static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y, 0, H - 1)));
  };
  for (std::ptrdiff_t y = 0; y < H; ++y)
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      const double gx = (v(x + 1, y - 1) - v(x - 1, y - 1)) + 2.0 * (v(x + 1, y) - v(x - 1, y)) +
                        (v(x + 1, y + 1) - v(x - 1, y + 1));
      const double gy = (v(x - 1, y + 1) - v(x - 1, y - 1)) + 2.0 * (v(x, y + 1) - v(x, y - 1)) +
                        (v(x + 1, y + 1) - v(x + 1, y - 1));
      r.gx(x, y) = gx;
      r.gy(x, y) = gy;
    }
  return r;
}

double trimmed_mean(std::vector<double> values, double alpha_l, double alpha_r) {
  require(!values.empty(), Errc::empty_input, "trimmed mean of no samples");
  std::sort(values.begin(), values.end());
  const auto k = static_cast<double>(values.size());
  auto lo = static_cast<std::size_t>(std::ceil(alpha_l * k));
  auto hi = values.size() - static_cast<std::size_t>(std::floor(alpha_r * k));
  if (lo >= hi) {  // too few samples to trim
    lo = 0;
    hi = values.size();
  }
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += values[i];
  return s / static_cast<double>(hi - lo);
}

double percentile(std::vector<double> values, double q) {
  require(!values.empty(), Errc::empty_input, "percentile of no samples");
  require(q >= 0.0 && q <= 1.0, Errc::parameter, "percentile rank must be in [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= values.size()) return values.back();
  const double t = pos - static_cast<double>(i);
  return values[i] + t * (values[i + 1] - values[i]);
}

double psnr(const RgbImage& a, const RgbImage& b) {
  require_pair(a, b);
  const auto da = a.data(), db = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) s += (da[i] - db[i]) * (da[i] - db[i]);
  const double mse = s / static_cast<double>(da.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const RgbImage& a, const RgbImage& b) {
  require_pair(a, b);
  require(a.width() >= 11 && a.height() >= 11, Errc::parameter, "ssim needs images of at least 11x11");
  const auto w = ssim_window();
  const auto exec = kernels::default_exec();
  const Plane x = luminance_bt601(a), y = luminance_bt601(b);
  const Plane mx = kernels::separable_filter_valid(x, w, exec);
  const Plane my = kernels::separable_filter_valid(y, w, exec);
  const Plane mxx = kernels::separable_filter_valid(product(x, x), w, exec);
  const Plane myy = kernels::separable_filter_valid(product(y, y), w, exec);
  const Plane mxy = kernels::separable_filter_valid(product(x, y), w, exec);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0.0;
  for (std::size_t i = 0; i < mx.data.size(); ++i) {
    const double ux = mx.data[i], uy = my.data[i];
    const double vx = mxx.data[i] - ux * ux, vy = myy.data[i] - uy * uy, vxy = mxy.data[i] - ux * uy;
    sum += ((2.0 * ux * uy + c1) * (2.0 * vxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return sum / static_cast<double>(mx.data.size());
}

UiqmScore uiqm(const RgbImage& img) {
  require(!img.empty(), Errc::empty_input, "uiqm input image is empty");
  require(img.width() >= 16 && img.height() >= 16, Errc::parameter, "uiqm needs images of at least 16x16");
  UiqmScore s;
  s.uicm = uicm_of(img);
  s.uism = uism_of(img);
  s.uiconm = log_amee(scaled(luminance_bt601(img), 255.0));
  s.uiqm = 0.0282 * s.uicm + 0.2953 * s.uism + 3.5753 * s.uiconm;
  return s;
}

double uciqe(const RgbImage& img) {
  require(!img.empty(), Errc::empty_input, "uciqe input image is empty");
  const LabImage lab = srgb_to_lab(img);
  const std::size_t n = lab.pixels();
  const auto d = lab.data();
  std::vector<double> L(n), chroma(n);
  double sat = 0.0, mean_c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    L[i] = d[3 * i];
    chroma[i] = std::hypot(d[3 * i + 1], d[3 * i + 2]);
    const double den = std::sqrt(chroma[i] * chroma[i] + L[i] * L[i]);
    sat += den > 0.0 ? chroma[i] / den : 0.0;
    mean_c += chroma[i];
  }
  mean_c /= static_cast<double>(n);
  double var_c = 0.0;
  for (double c : chroma) var_c += (c - mean_c) * (c - mean_c);
  var_c /= static_cast<double>(n);
  const double contrast = (percentile(L, 0.99) - percentile(L, 0.01)) / 100.0;
  return 0.4680 * std::sqrt(var_c) + 0.2745 * contrast + 0.2576 * sat / static_cast<double>(n);
}

double cpbd(const RgbImage& img) {
  require(!img.empty(), Errc::empty_input, "cpbd input image is empty");
  require(img.width() >= kCpbdBlock && img.height() >= kCpbdBlock, Errc::parameter,
          "cpbd needs images of at least 64x64");
  const Plane Y = scaled(luminance_bt601(img), 255.0);
  const std::size_t W = Y.width, H = Y.height;
  const SobelResponse g = sobel(Y);
  Plane mag(W, H);
  double mean = 0.0;
  for (std::size_t i = 0; i < mag.data.size(); ++i) {
    mag.data[i] = g.gx.data[i] * g.gx.data[i] + g.gy.data[i] * g.gy.data[i];
    mean += mag.data[i];
  }
  const double cutoff = 4.0 * mean / static_cast<double>(mag.data.size());

  auto horizontal = [&](std::size_t x, std::size_t y) { return std::abs(g.gx(x, y)) >= std::abs(g.gy(x, y)); };
  auto is_edge = [&](std::size_t x, std::size_t y) {
    const double b = mag(x, y);
    if (!(b > cutoff)) return false;
    if (horizontal(x, y))
      return b >= mag(x > 0 ? x - 1 : x, y) && b >= mag(x + 1 < W ? x + 1 : x, y);
    return b >= mag(x, y > 0 ? y - 1 : y) && b >= mag(x, y + 1 < H ? y + 1 : y);
  };

  std::size_t total = 0, sharp = 0;
  const double min_edges = 0.002 * static_cast<double>(kCpbdBlock * kCpbdBlock);
  for (std::size_t by = 0; by + kCpbdBlock <= H; by += kCpbdBlock)
    for (std::size_t bx = 0; bx + kCpbdBlock <= W; bx += kCpbdBlock) {
      std::vector<std::pair<std::size_t, std::size_t>> edges;
      double lo = Y(bx, by), hi = lo;
      for (std::size_t y = by; y < by + kCpbdBlock; ++y)
        for (std::size_t x = bx; x < bx + kCpbdBlock; ++x) {
          lo = std::min(lo, Y(x, y));
          hi = std::max(hi, Y(x, y));
          if (is_edge(x, y)) edges.emplace_back(x, y);
        }
      if (static_cast<double>(edges.size()) <= min_edges) continue;
      const double w_jnb = hi - lo <= 50.0 ? 5.0 : 3.0;
      for (auto [x, y] : edges) {
        std::size_t w;
        if (horizontal(x, y))
          w = edge_width([&](std::size_t k) { return Y(k, y); }, x, W, g.gx(x, y) > 0.0);
        else
          w = edge_width([&](std::size_t k) { return Y(x, k); }, y, H, g.gy(x, y) > 0.0);
        const double p = 1.0 - std::exp(-std::pow(static_cast<double>(w) / w_jnb, 3.6));
        ++total;
        if (std::floor(100.0 * p + 0.5) <= 63.0) ++sharp;
      }
    }
  return total == 0 ? 0.0 : static_cast<double>(sharp) / static_cast<double>(total);
}

MetricReport evaluate(const RgbImage& img, const RgbImage* reference, const MetricToggles& on) {
  MetricReport r;
  if (reference) {
    if (on.psnr) r.psnr = psnr(img, *reference);
    if (on.ssim) r.ssim = ssim(img, *reference);
  }
  if (on.uiqm) {
    const UiqmScore u = uiqm(img);
    r.uiqm = u.uiqm;
    r.uicm = u.uicm;
    r.uism = u.uism;
    r.uiconm = u.uiconm;
  }
  if (on.uciqe) r.uciqe = uciqe(img);
  if (on.cpbd) r.cpbd = cpbd(img);
  return r;
}

std::vector<MetricReport> evaluate_batch(std::span<const EvalItem> items, const MetricToggles& on) {
  std::vector<MetricReport> out(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  const auto n = static_cast<std::ptrdiff_t>(items.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = evaluate(*items[i].image, items[i].reference, on);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

MetricReport mean_report(std::span<const MetricReport> reports) {
  MetricReport m;
  if (reports.empty()) return m;
  const auto n = static_cast<double>(reports.size());
  bool has_psnr = true, has_ssim = true;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& r : reports) {
    has_psnr = has_psnr && r.psnr.has_value();
    has_ssim = has_ssim && r.ssim.has_value();
    if (r.psnr) psnr_sum += *r.psnr;
    if (r.ssim) ssim_sum += *r.ssim;
    m.uiqm += r.uiqm / n;
    m.uciqe += r.uciqe / n;
    m.cpbd += r.cpbd / n;
    m.uicm += r.uicm / n;
    m.uism += r.uism / n;
    m.uiconm += r.uiconm / n;
  }
  if (has_psnr) m.psnr = psnr_sum / n;
  if (has_ssim) m.ssim = ssim_sum / n;
  return m;
}

}  // namespace uwe::metrics
