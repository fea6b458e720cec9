#pragma once

#include "cdfkan/types.hpp"

#include <span>
#include <vector>

namespace cdfkan {

inline constexpr double default_norm_epsilon = 1e-5;

//! Per-feature mean and guarded standard deviation sqrt(eps + unbiased variance).
struct BatchStats
{
  double mu = 0.0;
  double sigma = 1.0;
  double epsilon = default_norm_epsilon;
};

// A single-element column has variance 0 by convention, so sigma = sqrt(epsilon).
BatchStats batch_stats(std::span<const double> column, double epsilon = default_norm_epsilon);
std::vector<BatchStats> batch_stats(const Matrix& batch, double epsilon = default_norm_epsilon);

// Exponential running average of batch statistics for evaluation time.
// new = momentum * old + (1 - momentum) * batch; the first update copies the batch.
class RunningStats
{
public:
  explicit RunningStats(std::size_t features, double momentum = 0.9);

  void update(std::span<const BatchStats> batch);
  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }
  std::size_t updates() const noexcept { return updates_; }
  const std::vector<BatchStats>& stats() const noexcept { return stats_; }

private:
  std::vector<BatchStats> stats_;
  double momentum_;
  std::size_t updates_ = 0;
  bool frozen_ = false;
};

//! Standard normal CDF, 0.5 erfc(-z / sqrt 2), kept strictly inside (0,1).
double gaussian_cdf(double z);
//! Standard normal density.
double gaussian_cdf_deriv(double z);

Matrix cdf_normalize(const Matrix& batch, std::span<const BatchStats> stats);

// Rank i (1-based, ascending) maps to (i - 1/2)/n; tied values share the mean of their positions.
std::vector<double> edf_transform(std::span<const double> sample);

double kde_density(std::span<const double> sample, double x, double bandwidth);
//! 1.06 sigma n^(-1/5); a constant sample falls back to unit scale.
double silverman_bandwidth(std::span<const double> sample);

// EDF values plus the kernel density at each input, the derivative surrogate used
// when gradients have to flow through the (piecewise constant) EDF.
struct EdfTransform
{
  std::vector<double> values;
  std::vector<double> derivative;
  double bandwidth = 0.0;
};

EdfTransform edf_transform_with_surrogate(std::span<const double> sample);

// Per-feature affine map of the column min to 0 and max to 1; constant features map to 0.5.
Matrix minmax_normalize(const Matrix& batch);

struct LayerNormParams
{
  Vector scale;
  Vector shift;
  bool frozen = false;
  double epsilon = default_norm_epsilon;

  static LayerNormParams identity(std::size_t features, bool frozen,
                                  double epsilon = default_norm_epsilon);
  std::size_t features() const noexcept { return static_cast<std::size_t>(scale.size()); }
};

struct LayerNormCache
{
  Matrix xhat;   // standardized rows
  Vector rstd;   // 1 / sqrt(var + eps) per row
};

// Standardizes each row over its features (population variance), then applies scale and shift.
Matrix layernorm_forward(const Matrix& x, const LayerNormParams& params,
                         LayerNormCache* cache = nullptr);

struct LayerNormGrads
{
  Matrix grad_x;
  Vector grad_scale;
  Vector grad_shift;
};

LayerNormGrads layernorm_backward(const Matrix& grad_y, const LayerNormParams& params,
                                  const LayerNormCache& cache);

} // namespace cdfkan
