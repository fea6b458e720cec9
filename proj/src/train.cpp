#include "cdfkan/train.hpp"

#include "cdfkan/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace cdfkan {

LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels)
{
  const auto b = logits.rows();
  const auto c = logits.cols();
  require(b >= 1, ErrorKind::invalid_argument, "cross entropy: empty batch");
  require(static_cast<std::size_t>(b) == labels.size(), ErrorKind::shape_mismatch,
          "cross entropy: one label per row required");
  LossResult r;
  r.grad_logits.resize(b, c);
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < c, ErrorKind::invalid_argument, "cross entropy: label out of range");
    const double mx = logits.row(i).maxCoeff();
    const auto shifted = (logits.row(i).array() - mx).eval();
    const double lse = std::log(shifted.exp().sum());
    total += lse - shifted(y);
    r.grad_logits.row(i) = (shifted - lse).exp();
    r.grad_logits(i, y) -= 1.0;
  }
  r.grad_logits /= static_cast<double>(b);
  r.loss = total / static_cast<double>(b);
  return r;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& state,
               const AdamHyper& hyper, std::size_t t)
{
  require(params.size() == grads.size(), ErrorKind::shape_mismatch, "adam: params/grads size mismatch");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  require(state.m.size() == params.size() && state.v.size() == params.size(), ErrorKind::shape_mismatch,
          "adam: state shape does not match parameters");
  require(t >= 1, ErrorKind::invalid_argument, "adam: step index is 1-based");
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= hyper.learning_rate * mhat / (std::sqrt(vhat) + hyper.epsilon);
  }
}

void Adam::step(std::span<const ParamBlock> blocks)
{
  if (state_.empty())
    state_.resize(blocks.size());
  require(state_.size() == blocks.size(), ErrorKind::shape_mismatch,
          "Adam: parameter block count changed between steps");
  ++t_;
  for (std::size_t i = 0; i < blocks.size(); ++i)
    adam_step(blocks[i].value, blocks[i].grad, state_[i], hyper_, t_);
}

EvalResult evaluate(const Network& net, const Dataset& data, std::size_t batch_size)
{
  require(data.rows() > 0 && data.has_labels(), ErrorKind::invalid_argument,
          "evaluate: need a nonempty labeled dataset");
  require(batch_size >= 1, ErrorKind::invalid_argument, "evaluate: batch size must be >= 1");
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.rows(); start += batch_size) {
    const std::size_t len = std::min(batch_size, data.rows() - start);
    const Matrix logits =
      net.predict(data.features.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)));
    const std::span<const int> lab(data.labels.data() + start, len);
    loss += softmax_cross_entropy(logits, lab).loss * static_cast<double>(len);
    for (std::size_t i = 0; i < len; ++i) {
      Eigen::Index arg = 0;
      logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
      if (arg == lab[i])
        ++correct;
    }
  }
  const auto n = static_cast<double>(data.rows());
  return {loss / n, static_cast<double>(correct) / n};
}

std::vector<EpochMetrics> train(Network& net, const Dataset& train_set, const Dataset& test_set,
                                const TrainConfig& cfg, const EpochCallback& on_epoch)
{
  require(cfg.learning_rate > 0.0 && cfg.epochs >= 1 && cfg.batch_size >= 1, ErrorKind::invalid_argument,
          "train: learning_rate > 0, epochs >= 1 and batch_size >= 1 required");
  require(train_set.rows() > 0 && train_set.has_labels(), ErrorKind::invalid_argument,
          "train: empty or unlabeled training set");
  require(test_set.rows() > 0 && test_set.has_labels(), ErrorKind::invalid_argument,
          "train: empty or unlabeled test set");
  require(static_cast<int>(train_set.cols()) == net.input_dim(), ErrorKind::shape_mismatch,
          "train: feature width does not match network input");

  AdamHyper hyper;
  hyper.learning_rate = cfg.learning_rate;
  Adam opt(hyper);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.rows());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const auto blocks = net.parameters();

  std::vector<EpochMetrics> history;
  Matrix xb;
  std::vector<int> yb;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      xb.resize(static_cast<Eigen::Index>(len), train_set.features.cols());
      yb.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        xb.row(static_cast<Eigen::Index>(i)) = train_set.features.row(static_cast<Eigen::Index>(order[start + i]));
        yb[i] = train_set.labels[order[start + i]];
      }
      const Matrix logits = net.forward(xb);
      const LossResult lr = softmax_cross_entropy(logits, yb);
      net.backward(lr.grad_logits);
      opt.step(blocks);
      loss_sum += lr.loss * static_cast<double>(len);
    }
    const auto t1 = std::chrono::steady_clock::now();

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    const EvalResult ev = evaluate(net, test_set, batch);
    m.test_loss = ev.loss;
    m.test_accuracy = ev.accuracy;
    history.push_back(m);
    if (on_epoch)
      on_epoch(m);
  }
  return history;
}

GradCheckReport grad_check(Network& net, const Matrix& x, std::span<const int> labels, double tolerance,
                           double step)
{
  GradCheckReport report;
  report.tolerance = tolerance;
  report.step = step;

  const Matrix logits = net.forward(x);
  net.backward(softmax_cross_entropy(logits, labels).grad_logits);
  auto blocks = net.parameters();

  report.passed = true;
  for (auto& blk : blocks) {
    GradCheckEntry e;
    e.block = blk.name;
    e.size = blk.value.size();
    // grad buffers are overwritten only by backward(), so they stay valid while probing
    for (std::size_t i = 0; i < blk.value.size(); ++i) {
      const double saved = blk.value[i];
      blk.value[i] = saved + step;
      const double up = softmax_cross_entropy(net.predict(x), labels).loss;
      blk.value[i] = saved - step;
      const double down = softmax_cross_entropy(net.predict(x), labels).loss;
      blk.value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = blk.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), grad_check_floor});
      e.max_rel_error = std::max(e.max_rel_error, std::abs(analytic - numeric) / denom);
    }
    e.passed = e.max_rel_error < tolerance;
    report.passed = report.passed && e.passed;
    report.worst = std::max(report.worst, e.max_rel_error);
    report.blocks.push_back(std::move(e));
  }
  return report;
}

} // namespace cdfkan
