#pragma once

#include "cdfkan/hcr.hpp"
#include "cdfkan/kan.hpp"
#include "cdfkan/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cdfkan {

struct Dataset
{
  Matrix features;            // n x f, one example per row
  std::vector<int> labels;    // empty for unlabeled samples
  std::string name;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(features.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(features.cols()); }
  bool has_labels() const noexcept { return !labels.empty(); }

  Dataset select(std::span<const std::size_t> rows) const;
};

// IDX image/label pair (magic 0x00000803 / 0x00000801, big-endian sizes). Gzip-compressed
// files are read transparently. Pixels are scaled by 1/255.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Locates train/t10k files (plain or .gz) under `dir`.
struct MnistFiles
{
  std::filesystem::path train_images, train_labels, test_images, test_labels;
};
MnistFiles find_mnist_files(const std::filesystem::path& dir);

// Seeded sampling without replacement; n == rows gives a permutation.
Dataset subset(const Dataset& data, std::size_t n, std::uint64_t seed);

Dataset sample_gaussian_2d(std::size_t n, const Eigen::Matrix2d& covariance, std::uint64_t seed);

// Rejection sampling from an HCR density (d <= 2) with envelope 1.1 x the grid maximum.
// Fails if the density is negative anywhere on the verification grid.
Dataset sample_hcr_density(const HcrModel& model, std::size_t n, std::uint64_t seed,
                           double* acceptance_rate = nullptr);

// Column-wise normalizations of a dataset to [0,1].
enum class ColumnNorm
{
  minmax,
  edf,
  gaussian_cdf,
};
Dataset normalize_columns(const Dataset& data, ColumnNorm kind);

struct Histogram
{
  std::vector<double> edges;  // bins + 1 edges on [0,1]
  std::vector<double> mass;   // fraction of values per bin, sums to 1
  std::size_t count = 0;

  // max bin mass relative to the uniform mass 1/bins
  double max_bin_ratio() const;
};

Histogram histogram_unit(std::span<const double> values, int bins);

// Post-normalization inputs of `layer_index`, evaluated in mini-batches of `batch_size`
// (MinMax statistics are per batch), pooled over features.
Histogram activation_histogram(const Network& net, const Dataset& data, std::size_t layer_index,
                               int bins, std::size_t batch_size = 128);
// Same, one histogram per feature.
std::vector<Histogram> activation_histogram_per_feature(const Network& net, const Dataset& data,
                                                        std::size_t layer_index, int bins,
                                                        std::size_t batch_size = 128);

} // namespace cdfkan
