#pragma once

#include <cstddef>
#include <vector>

namespace uwe {

/// lr₀·(1 - k/K): the rate in effect after k of K steps.
double linear_decay(double lr0, std::size_t k, std::size_t K);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed list of parameter buffers.
class Adam {
 public:
  explicit Adam(std::vector<std::size_t> sizes, AdamOptions opt = {});

  /// One update of params[i] -= lr·m̂/(√v̂ + eps). A zero rate leaves the
  /// parameters bit-identical.
  void step(std::vector<std::vector<double>*> params, const std::vector<const std::vector<double>*>& grads,
            double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  AdamOptions opt_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace uwe
