#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uwe/image.hpp"
#include "uwe/rng.hpp"

namespace uwe::test {

/// Uniform random sRGB image in [lo, hi].
RgbImage random_image(std::size_t w, std::size_t h, std::uint64_t seed, double lo = 0.0, double hi = 1.0);

/// Smooth colorful chart with hard-edged squares; every 8×8 block contains
/// edges when cell <= 4.
RgbImage checker_chart(std::size_t w, std::size_t h, std::size_t cell);

/// Integer-level test image (samples k/255) built from a hash of the pixel
/// index; tests/oracles/metrics_oracle.py generates the same pixels.
RgbImage oracle_image(std::uint64_t seed, std::size_t w = 128, std::size_t h = 128);

/// Labeled two-domain toy set: even indices are colorful mosaics of 2×2
/// patches (label 1, in-air), odd indices are mosaics pushed through a deep
/// scatter degradation (label 0, underwater).
struct DomainSet {
  std::vector<RgbImage> images;
  std::vector<double> labels;
};
/// Mosaic of uniformly colored block×block squares.
RgbImage mosaic(std::size_t side, std::size_t block, Rng& rng);

DomainSet toy_domain_set(std::size_t n, std::size_t side, std::uint64_t seed);

RgbImage gaussian_blur(const RgbImage& img, double sigma);

double max_abs_diff(const RgbImage& a, const RgbImage& b);

/// Fresh, empty scratch directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

/// Clean mosaics under root/clean and four water-colored templates under
/// root/templates, all PNG.
struct Corpus {
  std::filesystem::path clean_dir, template_dir;
};
Corpus write_corpus(const std::filesystem::path& root, std::size_t n_clean, std::size_t side, std::uint64_t seed);

}  // namespace uwe::test
