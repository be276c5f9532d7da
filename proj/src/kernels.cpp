#include "uwe/kernels.hpp"

#include <algorithm>
#include <utility>

#include "uwe/color.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace uwe::kernels {

Exec default_exec() noexcept {
#ifdef _OPENMP
  return Exec::parallel;
#else
  return Exec::serial;
#endif
}

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

using PixelFn = Triple (*)(const Triple&) noexcept;

void convert_serial(std::span<const double> in, std::span<double> out, PixelFn fn) {
  const std::size_t n = in.size() / 3;
  for (std::size_t i = 0; i < n; ++i) {
    const Triple r = fn({in[3 * i], in[3 * i + 1], in[3 * i + 2]});
    out[3 * i] = r[0];
    out[3 * i + 1] = r[1];
    out[3 * i + 2] = r[2];
  }
}

void convert_parallel(std::span<const double> in, std::span<double> out, PixelFn fn) {
  const auto n = static_cast<std::ptrdiff_t>(in.size() / 3);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Triple r = fn({in[3 * i], in[3 * i + 1], in[3 * i + 2]});
    out[3 * i] = r[0];
    out[3 * i + 1] = r[1];
    out[3 * i + 2] = r[2];
  }
}

void check_pixels(std::span<const double> in, std::span<double> out) {
  require(in.size() % 3 == 0 && in.size() == out.size(), Errc::shape_mismatch,
          "color conversion buffers must be equal-length pixel triples");
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

}  // namespace

void srgb_to_lab(std::span<const double> rgb, std::span<double> lab, Exec exec) {
  check_pixels(rgb, lab);
  if (exec == Exec::parallel)
    convert_parallel(rgb, lab, &srgb_to_lab_pixel);
  else
    convert_serial(rgb, lab, &srgb_to_lab_pixel);
}

void lab_to_srgb(std::span<const double> lab, std::span<double> rgb, Exec exec) {
  check_pixels(lab, rgb);
  if (exec == Exec::parallel)
    convert_parallel(lab, rgb, &lab_to_srgb_pixel);
  else
    convert_serial(lab, rgb, &lab_to_srgb_pixel);
}

Plane separable_filter(const Plane& in, std::span<const double> taps, Exec exec) {
  const std::size_t w = in.width, h = in.height;
  const auto r = static_cast<std::ptrdiff_t>(taps.size() / 2);
  Plane tmp(w, h), out(w, h);
  auto row_pass = [&](std::size_t y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -r; k <= r; ++k)
        acc += taps[k + r] * in(clamp_index(static_cast<std::ptrdiff_t>(x) + k, w), y);
      tmp(x, y) = acc;
    }
  };
  auto col_pass = [&](std::size_t y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -r; k <= r; ++k)
        acc += taps[k + r] * tmp(x, clamp_index(static_cast<std::ptrdiff_t>(y) + k, h));
      out(x, y) = acc;
    }
  };
  if (exec == Exec::parallel) {
    const auto hh = static_cast<std::ptrdiff_t>(h);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t y = 0; y < hh; ++y) row_pass(static_cast<std::size_t>(y));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t y = 0; y < hh; ++y) col_pass(static_cast<std::size_t>(y));
  } else {
    for (std::size_t y = 0; y < h; ++y) row_pass(y);
    for (std::size_t y = 0; y < h; ++y) col_pass(y);
  }
  return out;
}

Plane separable_filter_valid(const Plane& in, std::span<const double> taps, Exec exec) {
  const std::size_t k = taps.size();
  require(in.width >= k && in.height >= k, Errc::out_of_range, "plane smaller than filter window");
  const std::size_t ow = in.width - k + 1, oh = in.height - k + 1;
  Plane tmp(ow, in.height), out(ow, oh);
  auto row_pass = [&](std::size_t y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += taps[j] * in(x + j, y);
      tmp(x, y) = acc;
    }
  };
  auto col_pass = [&](std::size_t y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += taps[j] * tmp(x, y + j);
      out(x, y) = acc;
    }
  };
  if (exec == Exec::parallel) {
    const auto ih = static_cast<std::ptrdiff_t>(in.height), ohh = static_cast<std::ptrdiff_t>(oh);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t y = 0; y < ih; ++y) row_pass(static_cast<std::size_t>(y));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t y = 0; y < ohh; ++y) col_pass(static_cast<std::size_t>(y));
  } else {
    for (std::size_t y = 0; y < in.height; ++y) row_pass(y);
    for (std::size_t y = 0; y < oh; ++y) col_pass(y);
  }
  return out;
}

namespace {

void check_conv(std::span<const double> in, std::span<const double> weight, std::span<const double> bias,
                const ConvShape& s) {
  require(s.valid(), Errc::shape_mismatch, "invalid convolution shape");
  require(in.size() == s.in_c * s.in_h * s.in_w, Errc::shape_mismatch, "conv input size mismatch");
  require(weight.size() == s.out_c * s.in_c * s.kernel * s.kernel, Errc::shape_mismatch,
          "conv weight size mismatch");
  require(bias.empty() || bias.size() == s.out_c, Errc::shape_mismatch, "conv bias size mismatch");
}

// out[o,y,x] = bias[o] + sum_{c,ky,kx} w[o,c,ky,kx] * in[c, y*s+ky-p, x*s+kx-p]
double conv_output(std::span<const double> in, std::span<const double> weight, std::span<const double> bias,
                   const ConvShape& s, std::size_t o, std::size_t y, std::size_t x) {
  double acc = bias.empty() ? 0.0 : bias[o];
  const std::size_t k = s.kernel;
  for (std::size_t c = 0; c < s.in_c; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * s.stride + ky) - static_cast<std::ptrdiff_t>(s.pad);
      if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
      for (std::size_t kx = 0; kx < k; ++kx) {
        const std::ptrdiff_t ix =
            static_cast<std::ptrdiff_t>(x * s.stride + kx) - static_cast<std::ptrdiff_t>(s.pad);
        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
        acc += weight[((o * s.in_c + c) * k + ky) * k + kx] * in[(c * s.in_h + iy) * s.in_w + ix];
      }
    }
  }
  return acc;
}

// Gradient w.r.t. one input element, gathering contributions in (o, y, x)
// order.
double conv_grad_input(std::span<const double> weight, std::span<const double> grad_out, const ConvShape& s,
                       std::size_t c, std::size_t iy, std::size_t ix) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  // Output rows/cols whose window covers (iy, ix).
  auto range = [&](std::size_t i, std::size_t n_out) {
    const std::size_t hi_num = i + s.pad;
    const std::size_t lo = hi_num + 1 >= k ? (hi_num + 1 - k + s.stride - 1) / s.stride : 0;
    const std::size_t hi = std::min(n_out - 1, hi_num / s.stride);
    return std::pair{lo, hi};
  };
  const auto [y_lo, y_hi] = range(iy, oh);
  const auto [x_lo, x_hi] = range(ix, ow);
  double acc = 0.0;
  for (std::size_t o = 0; o < s.out_c; ++o) {
    for (std::size_t y = y_lo; y <= y_hi && y_lo <= y_hi; ++y) {
      const std::size_t ky = iy + s.pad - y * s.stride;
      for (std::size_t x = x_lo; x <= x_hi && x_lo <= x_hi; ++x) {
        const std::size_t kx = ix + s.pad - x * s.stride;
        acc += grad_out[(o * oh + y) * ow + x] * weight[((o * s.in_c + c) * k + ky) * k + kx];
      }
    }
  }
  return acc;
}

double conv_grad_weight(std::span<const double> in, std::span<const double> grad_out, const ConvShape& s,
                        std::size_t o, std::size_t c, std::size_t ky, std::size_t kx) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  double acc = 0.0;
  for (std::size_t y = 0; y < oh; ++y) {
    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * s.stride + ky) - static_cast<std::ptrdiff_t>(s.pad);
    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
    for (std::size_t x = 0; x < ow; ++x) {
      const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * s.stride + kx) - static_cast<std::ptrdiff_t>(s.pad);
      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
      acc += grad_out[(o * oh + y) * ow + x] * in[(c * s.in_h + iy) * s.in_w + ix];
    }
  }
  return acc;
}

}  // namespace

void conv2d_forward(std::span<const double> in, std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out, const ConvShape& s, Exec exec) {
  check_conv(in, weight, bias, s);
  const std::size_t oh = s.out_h(), ow = s.out_w();
  require(out.size() == s.out_c * oh * ow, Errc::shape_mismatch, "conv output size mismatch");
  if (exec == Exec::parallel) {
    const auto rows = static_cast<std::ptrdiff_t>(s.out_c * oh);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
      const std::size_t o = static_cast<std::size_t>(r) / oh, y = static_cast<std::size_t>(r) % oh;
      for (std::size_t x = 0; x < ow; ++x) out[(o * oh + y) * ow + x] = conv_output(in, weight, bias, s, o, y, x);
    }
  } else {
    for (std::size_t o = 0; o < s.out_c; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) out[(o * oh + y) * ow + x] = conv_output(in, weight, bias, s, o, y, x);
  }
}

void conv2d_backward(std::span<const double> in, std::span<const double> weight, std::span<const double> grad_out,
                     std::span<double> grad_in, std::span<double> grad_weight, std::span<double> grad_bias,
                     const ConvShape& s, Exec exec) {
  check_conv(in, weight, {}, s);
  const std::size_t oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  require(grad_out.size() == s.out_c * oh * ow, Errc::shape_mismatch, "conv grad_out size mismatch");
  require(grad_in.empty() || grad_in.size() == in.size(), Errc::shape_mismatch, "conv grad_in size mismatch");
  require(grad_weight.empty() || grad_weight.size() == weight.size(), Errc::shape_mismatch,
          "conv grad_weight size mismatch");
  require(grad_bias.empty() || grad_bias.size() == s.out_c, Errc::shape_mismatch, "conv grad_bias size mismatch");

  if (exec == Exec::parallel) {
    if (!grad_in.empty()) {
      const auto n = static_cast<std::ptrdiff_t>(s.in_c * s.in_h);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t r = 0; r < n; ++r) {
        const std::size_t c = static_cast<std::size_t>(r) / s.in_h, iy = static_cast<std::size_t>(r) % s.in_h;
        for (std::size_t ix = 0; ix < s.in_w; ++ix)
          grad_in[(c * s.in_h + iy) * s.in_w + ix] += conv_grad_input(weight, grad_out, s, c, iy, ix);
      }
    }
    const auto oc = static_cast<std::ptrdiff_t>(s.out_c);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t oi = 0; oi < oc; ++oi) {
      const auto o = static_cast<std::size_t>(oi);
      if (!grad_weight.empty())
        for (std::size_t c = 0; c < s.in_c; ++c)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx)
              grad_weight[((o * s.in_c + c) * k + ky) * k + kx] += conv_grad_weight(in, grad_out, s, o, c, ky, kx);
      if (!grad_bias.empty()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < oh * ow; ++i) acc += grad_out[o * oh * ow + i];
        grad_bias[o] += acc;
      }
    }
    return;
  }

  if (!grad_in.empty())
    for (std::size_t c = 0; c < s.in_c; ++c)
      for (std::size_t iy = 0; iy < s.in_h; ++iy)
        for (std::size_t ix = 0; ix < s.in_w; ++ix)
          grad_in[(c * s.in_h + iy) * s.in_w + ix] += conv_grad_input(weight, grad_out, s, c, iy, ix);
  for (std::size_t o = 0; o < s.out_c; ++o) {
    if (!grad_weight.empty())
      for (std::size_t c = 0; c < s.in_c; ++c)
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx)
            grad_weight[((o * s.in_c + c) * k + ky) * k + kx] += conv_grad_weight(in, grad_out, s, o, c, ky, kx);
    if (!grad_bias.empty()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < oh * ow; ++i) acc += grad_out[o * oh * ow + i];
      grad_bias[o] += acc;
    }
  }
}

}  // namespace uwe::kernels
