#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "uwe/image_io.hpp"
#include "uwe/kernels.hpp"
#include "uwe/synthesis.hpp"

namespace uwe::test {

RgbImage random_image(std::size_t w, std::size_t h, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  RgbImage img(w, h);
  for (double& v : img.data()) v = rng.uniform(lo, hi);
  return img;
}

RgbImage checker_chart(std::size_t w, std::size_t h, std::size_t cell) {
  static constexpr double kPalette[6][3] = {{0.9, 0.2, 0.1}, {0.1, 0.7, 0.3}, {0.2, 0.3, 0.9},
                                            {0.95, 0.9, 0.2}, {0.1, 0.1, 0.15}, {0.85, 0.85, 0.9}};
  RgbImage img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t k = ((x / cell) * 7 + (y / cell) * 3) % 6;
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = kPalette[k][c];
    }
  return img;
}

RgbImage oracle_image(std::uint64_t seed, std::size_t w, std::size_t h) {
  static constexpr int kPalette[6][3] = {{230, 51, 26}, {26, 179, 77},  {51, 77, 230},
                                         {242, 230, 51}, {26, 26, 38}, {217, 217, 230}};
  const int shift = 58 + static_cast<int>(seed % 3);
  const int half = 1 << (63 - shift);
  RgbImage img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const auto& base = kPalette[(x / 16 + 3 * (y / 16) + seed) % 6];
      for (std::size_t c = 0; c < 3; ++c) {
        const auto n = static_cast<int>(mix64(seed * 1000003 + (y * w + x) * 3 + c) >> shift);
        img.at(x, y, c) = std::clamp(base[c] + n - half, 0, 255) / 255.0;
      }
    }
  return img;
}

RgbImage mosaic(std::size_t side, std::size_t block, Rng& rng) {
  RgbImage img(side, side);
  for (std::size_t by = 0; by < side; by += block)
    for (std::size_t bx = 0; bx < side; bx += block) {
      const double rgb[3] = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
      for (std::size_t y = by; y < std::min(side, by + block); ++y)
        for (std::size_t x = bx; x < std::min(side, bx + block); ++x)
          for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = rgb[c];
    }
  return img;
}

DomainSet toy_domain_set(std::size_t n, std::size_t side, std::uint64_t seed) {
  DomainSet set;
  synthesis::ScatterRanges deep;
  deep.depth_min = 3.0;
  deep.veil_from_template = false;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(seed, i);
    RgbImage img = mosaic(side, 2, rng);
    const bool natural = i % 2 == 0;
    if (!natural) img = synthesis::scatter_degrade(img, synthesis::sample_degradation(rng, deep));
    set.images.push_back(std::move(img));
    set.labels.push_back(natural ? 1.0 : 0.0);
  }
  return set;
}

RgbImage gaussian_blur(const RgbImage& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += taps[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& t : taps) t /= sum;
  RgbImage out(img.width(), img.height());
  for (std::size_t c = 0; c < 3; ++c) {
    const Plane p = kernels::separable_filter(channel_plane(img, c), taps, kernels::Exec::serial);
    for (std::size_t i = 0; i < img.pixels(); ++i) out.data()[3 * i + c] = p.data[i];
  }
  return out;
}

double max_abs_diff(const RgbImage& a, const RgbImage& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("uwe_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Corpus write_corpus(const std::filesystem::path& root, std::size_t n_clean, std::size_t side,
                    std::uint64_t seed) {
  Corpus c{root / "clean", root / "templates"};
  std::filesystem::create_directories(c.clean_dir);
  std::filesystem::create_directories(c.template_dir);
  for (std::size_t i = 0; i < n_clean; ++i) {
    Rng rng(seed, i);
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03zu.png", i);
    save_image(mosaic(side, 4, rng), c.clean_dir / name);
  }
  // Blue-green water templates with a vertical light gradient.
  for (std::size_t k = 0; k < 4; ++k) {
    Rng rng(seed ^ 0x7465u, k);
    const double base[3] = {rng.uniform(0.02, 0.15), rng.uniform(0.35, 0.6), rng.uniform(0.45, 0.75)};
    RgbImage t(side, side);
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x)
        for (std::size_t ch = 0; ch < 3; ++ch)
          t.at(x, y, ch) = std::clamp(base[ch] * (1.2 - 0.4 * static_cast<double>(y) / static_cast<double>(side)) +
                                          0.03 * rng.normal(),
                                      0.0, 1.0);
    char name[32];
    std::snprintf(name, sizeof name, "water_%zu.png", k);
    save_image(t, c.template_dir / name);
  }
  return c;
}

}  // namespace uwe::test
