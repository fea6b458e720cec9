#pragma once

#include "cdfkan/data.hpp"
#include "cdfkan/kan.hpp"
#include "cdfkan/types.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cdfkan {

struct LossResult
{
  double loss = 0.0;      // mean over the batch
  Matrix grad_logits;     // (softmax - onehot) / b
};

// Log-sum-exp stabilized mean negative log-softmax of the true class.
LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

struct AdamHyper
{
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamMoments
{
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update at step t (1-based).
void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& state,
               const AdamHyper& hyper, std::size_t t);

//! Adam over a network's parameter blocks; the block layout is fixed at the first step.
class Adam
{
public:
  explicit Adam(AdamHyper hyper = {})
    : hyper_(hyper)
  {
  }

  void step(std::span<const ParamBlock> blocks);
  std::size_t steps() const noexcept { return t_; }

private:
  AdamHyper hyper_;
  std::vector<AdamMoments> state_;
  std::size_t t_ = 0;
};

struct TrainConfig
{
  double learning_rate = 1e-3;
  int epochs = 5;
  int batch_size = 128;
  std::uint64_t seed = 0;
};

struct EpochMetrics
{
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  double wall_seconds = 0.0;   // optimization pass only, evaluation excluded
};

struct EvalResult
{
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate(const Network& net, const Dataset& data, std::size_t batch_size = 128);

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Seeded per-epoch shuffling, Adam on every trainable block, test evaluation after each epoch.
std::vector<EpochMetrics> train(Network& net, const Dataset& train_set, const Dataset& test_set,
                                const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct GradCheckEntry
{
  std::string block;
  std::size_t size = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport
{
  double tolerance = 0.0;
  double step = 0.0;
  std::vector<GradCheckEntry> blocks;
  double worst = 0.0;
  bool passed = false;
};

// Relative error |a - n| / max(|a|, |n|, grad_check_floor) between analytic and central-difference
// gradients of the cross-entropy loss, for every trainable parameter.
inline constexpr double grad_check_floor = 1e-6;

GradCheckReport grad_check(Network& net, const Matrix& x, std::span<const int> labels,
                           double tolerance = 1e-4, double step = 1e-5);

} // namespace cdfkan
