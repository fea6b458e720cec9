#include "cdfkan/normalize.hpp"

#include "cdfkan/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace cdfkan {

namespace {

constexpr double inv_sqrt_2pi = 0.3989422804014326779399461;

} // namespace

BatchStats batch_stats(std::span<const double> column, double epsilon)
{
  require(!column.empty(), ErrorKind::invalid_argument, "batch_stats: empty column");
  require(epsilon >= 0.0, ErrorKind::invalid_argument, "batch_stats: epsilon must be >= 0");
  const auto n = static_cast<double>(column.size());
  const double mu = std::accumulate(column.begin(), column.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : column)
    ss += (v - mu) * (v - mu);
  const double var = column.size() > 1 ? ss / (n - 1.0) : 0.0;
  return {mu, std::sqrt(epsilon + var), epsilon};
}

std::vector<BatchStats> batch_stats(const Matrix& batch, double epsilon)
{
  require(batch.rows() > 0, ErrorKind::invalid_argument, "batch_stats: empty batch");
  std::vector<BatchStats> out(static_cast<std::size_t>(batch.cols()));
  std::vector<double> col(static_cast<std::size_t>(batch.rows()));
  for (Eigen::Index j = 0; j < batch.cols(); ++j) {
    for (Eigen::Index i = 0; i < batch.rows(); ++i)
      col[i] = batch(i, j);
    out[j] = batch_stats(col, epsilon);
  }
  return out;
}

RunningStats::RunningStats(std::size_t features, double momentum)
  : stats_(features)
  , momentum_(momentum)
{
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::invalid_argument,
          "running stats momentum must be in [0,1)");
}

void RunningStats::update(std::span<const BatchStats> batch)
{
  if (frozen_)
    return;
  require(batch.size() == stats_.size(), ErrorKind::shape_mismatch,
          "running stats: feature count mismatch");
  for (std::size_t j = 0; j < stats_.size(); ++j) {
    if (updates_ == 0) {
      stats_[j] = batch[j];
      continue;
    }
    stats_[j].mu = momentum_ * stats_[j].mu + (1.0 - momentum_) * batch[j].mu;
    stats_[j].sigma = momentum_ * stats_[j].sigma + (1.0 - momentum_) * batch[j].sigma;
    stats_[j].epsilon = batch[j].epsilon;
  }
  ++updates_;
}

double gaussian_cdf(double z)
{
  // erfc keeps full relative accuracy in the lower tail, unlike 1 + erf.
  const double v = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::clamp(v, lo, hi);
}

double gaussian_cdf_deriv(double z)
{
  return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

Matrix cdf_normalize(const Matrix& batch, std::span<const BatchStats> stats)
{
  require(static_cast<std::size_t>(batch.cols()) == stats.size(), ErrorKind::shape_mismatch,
          "cdf_normalize: one BatchStats per feature required");
  require(batch.allFinite(), ErrorKind::invalid_argument, "cdf_normalize: non-finite input");
  Matrix out(batch.rows(), batch.cols());
  for (Eigen::Index i = 0; i < batch.rows(); ++i)
    for (Eigen::Index j = 0; j < batch.cols(); ++j)
      out(i, j) = gaussian_cdf((batch(i, j) - stats[j].mu) / stats[j].sigma);
  return out;
}

std::vector<double> edf_transform(std::span<const double> sample)
{
  const std::size_t n = sample.size();
  require(n > 0, ErrorKind::invalid_argument, "edf_transform: empty sample");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sample[a] < sample[b]; });
  std::vector<double> out(n);
  const auto dn = static_cast<double>(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && sample[order[j]] == sample[order[i]])
      ++j;
    // positions i..j-1 (0-based) -> mean of (k + 1/2)/n
    const double value = (0.5 * static_cast<double>(i + j - 1) + 0.5) / dn;
    for (std::size_t k = i; k < j; ++k)
      out[order[k]] = value;
    i = j;
  }
  return out;
}

double kde_density(std::span<const double> sample, double x, double bandwidth)
{
  require(!sample.empty(), ErrorKind::invalid_argument, "kde_density: empty sample");
  require(bandwidth > 0.0, ErrorKind::invalid_argument, "kde_density: bandwidth must be > 0");
  double acc = 0.0;
  for (double xi : sample) {
    const double t = (x - xi) / bandwidth;
    acc += std::exp(-0.5 * t * t);
  }
  return inv_sqrt_2pi * acc / (static_cast<double>(sample.size()) * bandwidth);
}

double silverman_bandwidth(std::span<const double> sample)
{
  require(!sample.empty(), ErrorKind::invalid_argument, "silverman_bandwidth: empty sample");
  const double sigma = batch_stats(sample, 0.0).sigma;
  const double scale = sigma > 0.0 ? sigma : 1.0;
  return 1.06 * scale * std::pow(static_cast<double>(sample.size()), -0.2);
}

EdfTransform edf_transform_with_surrogate(std::span<const double> sample)
{
  EdfTransform out;
  out.values = edf_transform(sample);
  out.bandwidth = silverman_bandwidth(sample);
  out.derivative.resize(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i)
    out.derivative[i] = kde_density(sample, sample[i], out.bandwidth);
  return out;
}

Matrix minmax_normalize(const Matrix& batch)
{
  require(batch.rows() > 0, ErrorKind::invalid_argument, "minmax_normalize: empty batch");
  Matrix out(batch.rows(), batch.cols());
  for (Eigen::Index j = 0; j < batch.cols(); ++j) {
    const double lo = batch.col(j).minCoeff();
    const double hi = batch.col(j).maxCoeff();
    if (hi > lo)
      out.col(j) = (batch.col(j).array() - lo) / (hi - lo);
    else
      out.col(j).setConstant(0.5);
  }
  return out;
}

LayerNormParams LayerNormParams::identity(std::size_t features, bool frozen, double epsilon)
{
  LayerNormParams p;
  p.scale = Vector::Ones(static_cast<Eigen::Index>(features));
  p.shift = Vector::Zero(static_cast<Eigen::Index>(features));
  p.frozen = frozen;
  p.epsilon = epsilon;
  return p;
}

Matrix layernorm_forward(const Matrix& x, const LayerNormParams& params, LayerNormCache* cache)
{
  const Eigen::Index n = x.cols();
  require(n >= 1, ErrorKind::invalid_argument, "layernorm: need at least one feature");
  require(params.scale.size() == n && params.shift.size() == n, ErrorKind::shape_mismatch,
          "layernorm: parameter length does not match feature count");
  Matrix xhat(x.rows(), n);
  Vector rstd(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    rstd[i] = 1.0 / std::sqrt(var + params.epsilon);
    xhat.row(i) = (x.row(i).array() - mean) * rstd[i];
  }
  Matrix y;
  if (params.frozen) {
    y = xhat;
  } else {
    y = (xhat.array().rowwise() * params.scale.transpose().array()).rowwise() +
        params.shift.transpose().array();
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

LayerNormGrads layernorm_backward(const Matrix& grad_y, const LayerNormParams& params,
                                  const LayerNormCache& cache)
{
  require(grad_y.rows() == cache.xhat.rows() && grad_y.cols() == cache.xhat.cols(),
          ErrorKind::shape_mismatch, "layernorm_backward: gradient shape does not match cache");
  require(params.scale.size() == grad_y.cols(), ErrorKind::shape_mismatch,
          "layernorm_backward: parameter length mismatch");
  const Eigen::Index n = grad_y.cols();
  LayerNormGrads g;
  g.grad_scale = Vector::Zero(n);
  g.grad_shift = Vector::Zero(n);
  Matrix g_xhat;
  if (params.frozen) {
    g_xhat = grad_y;
  } else {
    g_xhat = grad_y.array().rowwise() * params.scale.transpose().array();
    g.grad_scale = (grad_y.array() * cache.xhat.array()).colwise().sum().transpose();
    g.grad_shift = grad_y.colwise().sum().transpose();
  }
  g.grad_x.resize(grad_y.rows(), n);
  for (Eigen::Index i = 0; i < grad_y.rows(); ++i) {
    const double mean_g = g_xhat.row(i).mean();
    const double mean_gx = g_xhat.row(i).dot(cache.xhat.row(i)) / static_cast<double>(n);
    g.grad_x.row(i) =
      cache.rstd[i] * (g_xhat.row(i).array() - mean_g - cache.xhat.row(i).array() * mean_gx);
  }
  return g;
}

} // namespace cdfkan
