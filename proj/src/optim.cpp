#include "uwe/optim.hpp"

#include <cmath>

#include "uwe/error.hpp"

namespace uwe {

double linear_decay(double lr0, std::size_t k, std::size_t K) {
  require(K >= 1, Errc::parameter, "decay needs at least one step");
  require(k <= K, Errc::out_of_range, "decay step beyond the schedule");
  return lr0 * (1.0 - static_cast<double>(k) / static_cast<double>(K));
}

Adam::Adam(std::vector<std::size_t> sizes, AdamOptions opt) : opt_(opt) {
  for (auto n : sizes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

void Adam::step(std::vector<std::vector<double>*> params, const std::vector<const std::vector<double>*>& grads,
                double lr) {
  require(params.size() == m_.size() && grads.size() == m_.size(), Errc::shape_mismatch,
          "optimizer parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    const auto& g = *grads[k];
    require(p.size() == m_[k].size() && g.size() == m_[k].size(), Errc::shape_mismatch,
            "optimizer parameter size changed");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[k][i] = opt_.beta1 * m_[k][i] + (1.0 - opt_.beta1) * g[i];
      v_[k][i] = opt_.beta2 * v_[k][i] + (1.0 - opt_.beta2) * g[i] * g[i];
      if (lr != 0.0) p[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + opt_.eps);
    }
  }
}

}  // namespace uwe
