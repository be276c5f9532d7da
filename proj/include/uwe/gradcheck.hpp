#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace uwe {

/// A parameter buffer perturbed in place plus the reverse-mode gradient to
/// compare against.
struct GradGroup {
  std::string name;
  std::vector<double>* values = nullptr;
  std::vector<double> analytic;
};

struct GroupReport {
  std::string name;
  double max_rel_error = 0.0;  // max|a - n| / max(max|a|, max|n|)
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool finite = true;
};

struct GradCheckReport {
  std::vector<GroupReport> groups;
  double tolerance = 0.0;
  bool passed = false;
  std::string describe() const;
};

inline constexpr double kGradCheckStep = 1e-5;

/// Central differences (f(x+h) - f(x-h)) / 2h on each group's coordinates;
/// groups larger than max_per_group are checked on a seeded random subset
/// (0 checks everything). f must read the current buffer contents.
GradCheckReport grad_check(const std::function<double()>& f, std::vector<GradGroup>& groups, double tolerance,
                           double h = kGradCheckStep, std::size_t max_per_group = 0, std::uint64_t seed = 0);

}  // namespace uwe
