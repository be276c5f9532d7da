#pragma once

// Data-parallel inner loops. Every kernel has a serial reference and an
// OpenMP variant; both write disjoint outputs in a fixed summation order, so
// their results are bit-identical and tests compare them with ==.

#include <cstddef>
#include <span>

#include "uwe/image.hpp"

namespace uwe::kernels {

enum class Exec { serial, parallel };

/// Exec::parallel when the library was built with OpenMP, else serial.
Exec default_exec() noexcept;
int max_threads() noexcept;

void srgb_to_lab(std::span<const double> rgb, std::span<double> lab, Exec exec);
void lab_to_srgb(std::span<const double> lab, std::span<double> rgb, Exec exec);

/// Same-size separable correlation with clamp-to-edge borders.
Plane separable_filter(const Plane& in, std::span<const double> taps, Exec exec);
/// Separable correlation over fully contained windows only; output is
/// (W-k+1)×(H-k+1).
Plane separable_filter_valid(const Plane& in, std::span<const double> taps, Exec exec);

struct ConvShape {
  std::size_t in_c = 0, in_h = 0, in_w = 0;
  std::size_t out_c = 0, kernel = 1, stride = 1, pad = 0;

  std::size_t out_h() const noexcept { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const noexcept { return (in_w + 2 * pad - kernel) / stride + 1; }
  bool valid() const noexcept {
    return in_c && out_c && kernel && stride && in_h + 2 * pad >= kernel && in_w + 2 * pad >= kernel;
  }
};

/// CHW cross-correlation with zero padding. weight is out_c×in_c×k×k; bias
/// may be empty.
void conv2d_forward(std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out, const ConvShape& s, Exec exec);

/// Accumulates (+=) into grad_in / grad_weight / grad_bias; any of them may be
/// empty to skip.
void conv2d_backward(std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_weight, std::span<double> grad_bias, const ConvShape& s,
                     Exec exec);

}  // namespace uwe::kernels
