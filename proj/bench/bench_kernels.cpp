// Serial reference vs OpenMP timings for the data-parallel kernels. Each row
// also confirms both variants produce identical output.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uwe/diffusion.hpp"
#include "uwe/kernels.hpp"
#include "uwe/rng.hpp"

using namespace uwe;
using kernels::Exec;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Median wall time in milliseconds; `run` returns the output for comparison.
double time_ms(const std::function<std::vector<double>()>& run, int repeats, std::vector<double>& result) {
  std::vector<double> times;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    result = run();
    times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

struct Case {
  std::string name;
  std::function<std::vector<double>(Exec)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmark: serial reference vs OpenMP"};
  int repeats = 5;
  std::size_t side = 256;
  app.add_option("--repeats", repeats, "timed runs per variant (median reported)")->check(CLI::PositiveNumber);
  app.add_option("--side", side, "image side in pixels")->check(CLI::Range(16, 4096));
  CLI11_PARSE(app, argc, argv);

  const std::size_t px = side * side;
  const auto rgb = random_vec(px * 3, 1);
  std::vector<double> lab(px * 3);
  kernels::srgb_to_lab(rgb, lab, Exec::serial);
  Plane plane(side, side);
  plane.data = random_vec(px, 2);
  const std::vector<double> taps{0.0625, 0.25, 0.375, 0.25, 0.0625};

  kernels::ConvShape cs{16, side / 2, side / 2, 16, 3, 1, 1};
  const auto conv_in = random_vec(cs.in_c * cs.in_h * cs.in_w, 3, -1.0, 1.0);
  const auto conv_w = random_vec(cs.out_c * cs.in_c * 9, 4, -0.2, 0.2);
  const auto conv_b = random_vec(cs.out_c, 5, -0.1, 0.1);
  const std::size_t conv_out = cs.out_c * cs.out_h() * cs.out_w();
  const auto grad_out = random_vec(conv_out, 6, -1.0, 1.0);

  const auto schedule = diffusion::make_matched_schedule(200);
  const auto world = diffusion::AnalyticGaussianWorld::isotropic(1, 0.0, 1.0, 0.5);
  diffusion::GuidedSampler sampler;
  sampler.schedule = &schedule;
  sampler.eps_theta = [&](std::span<const double> x, std::size_t t) { return world.exact_eps(x, t, schedule); };

  const std::vector<Case> cases{
      {"srgb_to_lab",
       [&](Exec e) {
         std::vector<double> out(px * 3);
         kernels::srgb_to_lab(rgb, out, e);
         return out;
       }},
      {"lab_to_srgb",
       [&](Exec e) {
         std::vector<double> out(px * 3);
         kernels::lab_to_srgb(lab, out, e);
         return out;
       }},
      {"separable_filter", [&](Exec e) { return kernels::separable_filter(plane, taps, e).data; }},
      {"separable_filter_valid", [&](Exec e) { return kernels::separable_filter_valid(plane, taps, e).data; }},
      {"conv2d_forward",
       [&](Exec e) {
         std::vector<double> out(conv_out);
         kernels::conv2d_forward(conv_in, conv_w, conv_b, out, cs, e);
         return out;
       }},
      {"conv2d_backward",
       [&](Exec e) {
         std::vector<double> gi(conv_in.size(), 0.0), gw(conv_w.size(), 0.0), gb(conv_b.size(), 0.0);
         kernels::conv2d_backward(conv_in, conv_w, grad_out, gi, gw, gb, cs, e);
         gi.insert(gi.end(), gw.begin(), gw.end());
         gi.insert(gi.end(), gb.begin(), gb.end());
         return gi;
       }},
      {"sample_trajectories",
       [&](Exec e) { return diffusion::sample_trajectories(sampler, 2000, 1, 7, e); }},
  };

  std::printf("threads: %d, image side: %zu, repeats: %d\n", kernels::max_threads(), side, repeats);
  std::printf("%-24s %12s %12s %9s %s\n", "kernel", "serial ms", "parallel ms", "speedup", "identical");
  bool all_identical = true;
  for (const auto& c : cases) {
    std::vector<double> a, b;
    const double ts = time_ms([&] { return c.run(Exec::serial); }, repeats, a);
    const double tp = time_ms([&] { return c.run(Exec::parallel); }, repeats, b);
    const bool same = a == b;
    all_identical = all_identical && same;
    std::printf("%-24s %12.3f %12.3f %8.2fx %s\n", c.name.c_str(), ts, tp, ts / tp, same ? "yes" : "NO");
  }
  return all_identical ? 0 : 1;
}
