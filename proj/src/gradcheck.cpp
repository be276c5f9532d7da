#include "uwe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "uwe/error.hpp"
#include "uwe/rng.hpp"

namespace uwe {

std::string GradCheckReport::describe() const {
  std::ostringstream os;
  for (const auto& g : groups) {
    os << g.name << ": ";
    if (!g.finite)
      os << "non-finite gradient at index " << g.worst_index;
    else
      os << "max rel error " << g.max_rel_error << " (index " << g.worst_index << ", " << g.checked << " coords)";
    os << '\n';
  }
  os << (passed ? "PASS" : "FAIL") << " at tolerance " << tolerance;
  return os.str();
}

GradCheckReport grad_check(const std::function<double()>& f, std::vector<GradGroup>& groups, double tolerance,
                           double h, std::size_t max_per_group, std::uint64_t seed) {
  require(h > 0.0 && tolerance > 0.0, Errc::parameter, "gradient check needs positive step and tolerance");
  GradCheckReport rep;
  rep.tolerance = tolerance;
  rep.passed = true;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    auto& g = groups[gi];
    require(g.values && g.values->size() == g.analytic.size(), Errc::shape_mismatch,
            "gradient group '" + g.name + "' size mismatch");
    GroupReport r;
    r.name = g.name;
    std::vector<std::size_t> idx(g.values->size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_per_group && idx.size() > max_per_group) {
      Rng rng(seed, gi);
      for (std::size_t i = 0; i < max_per_group; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
      idx.resize(max_per_group);
      std::sort(idx.begin(), idx.end());
    }
    double max_a = 0.0, max_n = 0.0, max_d = 0.0;
    for (std::size_t i : idx) {
      const double a = g.analytic[i];
      if (!std::isfinite(a)) {
        r.finite = false;
        r.worst_index = i;
        break;
      }
      double& x = (*g.values)[i];
      const double saved = x;
      x = saved + h;
      const double fp = f();
      x = saved - h;
      const double fm = f();
      x = saved;
      const double n = (fp - fm) / (2.0 * h);
      if (!std::isfinite(n)) {
        r.finite = false;
        r.worst_index = i;
        break;
      }
      max_a = std::max(max_a, std::abs(a));
      max_n = std::max(max_n, std::abs(n));
      if (std::abs(a - n) > max_d) {
        max_d = std::abs(a - n);
        r.worst_index = i;
      }
      ++r.checked;
    }
    const double scale = std::max({max_a, max_n, 1e-12});
    r.max_rel_error = r.finite ? max_d / scale : INFINITY;
    rep.passed = rep.passed && r.finite && r.max_rel_error < tolerance;
    rep.groups.push_back(r);
  }
  return rep;
}

}  // namespace uwe
