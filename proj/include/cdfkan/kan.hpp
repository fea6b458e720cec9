#pragma once

// Legendre-KAN layers with CDF (LayerNorm -> Gaussian CDF) or MinMax input normalization,
// and the three-layer network built from them.

#include "cdfkan/basis.hpp"
#include "cdfkan/normalize.hpp"
#include "cdfkan/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdfkan {

enum class InputNorm
{
  layernorm_cdf,
  minmax,
};

// Reference set for the MinMax extremes.
enum class MinMaxScope
{
  batch_feature, // per feature over the mini-batch (default)
  batch_global,  // one min/max over the whole batch tensor
  per_example,   // per image, over its features
};

enum class Variant
{
  kal_net,
  cdfkal_net,
  cdfkal_net_fixednorm,
  cdfkal_silu,
};

std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);
inline constexpr Variant all_variants[] = {Variant::kal_net, Variant::cdfkal_net,
                                           Variant::cdfkal_net_fixednorm, Variant::cdfkal_silu};

struct LayerConfig
{
  int in_dim = 1;
  int out_dim = 1;
  int degree = 3;
  InputNorm norm = InputNorm::layernorm_cdf;
  MinMaxScope minmax_scope = MinMaxScope::batch_feature;
  bool input_ln_frozen = false;
  // Adds silu(h) to the output: through a learned m x n projection when n != m, identity when n == m.
  bool silu_residual = false;
  // Trailing LayerNorm followed by SiLU on the layer output.
  bool output_ln_silu = false;
};

struct LayerCache
{
  Matrix input;
  LayerNormCache in_ln;
  Matrix z;        // standardized input (CDF argument)
  Matrix u;        // normalized input in [0,1]
  Matrix p;        // basis features, b x n(d+1)
  Matrix dp;       // basis derivatives
  // minmax: per group the range and the rows/cols of the extremes
  std::vector<double> mm_range;
  std::vector<std::size_t> mm_argmin;
  std::vector<std::size_t> mm_argmax;
  Matrix silu_in;  // silu(h) for the residual
  LayerNormCache out_ln;
  Matrix out_pre_silu;
};

struct LayerGrads
{
  Matrix grad_h;
  Matrix grad_w;
  Matrix grad_residual;
  Vector grad_in_scale;
  Vector grad_in_shift;
  Vector grad_out_scale;
  Vector grad_out_shift;
};

class KanLayer
{
public:
  // Weights uniform in +-sqrt(6 / (n(d+1) + m)) times `init_gain`.
  KanLayer(const LayerConfig& cfg, std::uint64_t seed, double init_gain = 1.0);

  const LayerConfig& config() const noexcept { return cfg_; }
  int in_dim() const noexcept { return cfg_.in_dim; }
  int out_dim() const noexcept { return cfg_.out_dim; }
  const BasisSpec& basis() const noexcept { return basis_; }

  // m x n(d+1); column i*(d+1)+k multiplies f_k(u_i)
  Matrix& weights() noexcept { return w_; }
  const Matrix& weights() const noexcept { return w_; }
  bool has_residual_projection() const noexcept { return residual_.size() > 0; }
  Matrix& residual_weights() noexcept { return residual_; }
  const Matrix& residual_weights() const noexcept { return residual_; }
  bool has_input_ln() const noexcept { return cfg_.norm == InputNorm::layernorm_cdf; }
  LayerNormParams& input_ln() noexcept { return in_ln_; }
  const LayerNormParams& input_ln() const noexcept { return in_ln_; }
  LayerNormParams& output_ln() noexcept { return out_ln_; }
  const LayerNormParams& output_ln() const noexcept { return out_ln_; }

  // Input normalization only: u in [0,1] (strictly inside for the CDF path).
  Matrix normalize_input(const Matrix& h) const;

  Matrix forward(const Matrix& h, LayerCache* cache = nullptr) const;
  // With need_input_grad = false, grad_h is left empty and the path through the basis is
  // skipped unless learnable input LayerNorm parameters need it.
  LayerGrads backward(const Matrix& grad_y, const LayerCache& cache,
                      bool need_input_grad = true) const;

  std::size_t trainable_parameter_count() const;

  // Scales the basis derivative in backward(); only for negative-control tests of grad checks.
  void inject_derivative_fault_for_testing(double scale) noexcept { deriv_fault_ = scale; }

private:
  Matrix normalize_input(const Matrix& h, LayerCache* cache) const;

  LayerConfig cfg_;
  BasisSpec basis_;
  Matrix w_;
  Matrix residual_;
  LayerNormParams in_ln_;
  LayerNormParams out_ln_;
  double deriv_fault_ = 1.0;
};

//! A named, trainable parameter tensor with its gradient buffer.
struct ParamBlock
{
  std::string name;
  std::span<double> value;
  std::span<double> grad;
};

class Network
{
public:
  explicit Network(std::vector<KanLayer> layers, std::string name = "custom");

  // dims = {n_0, n_1, ..., n_L}; degree in [3, 11], the swept range. Layers built by hand accept any degree >= 1.
  static Network build(Variant variant, std::span<const int> dims, int degree, std::uint64_t seed);

  const std::string& name() const noexcept { return name_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  KanLayer& layer(std::size_t k) { return layers_.at(k); }
  const KanLayer& layer(std::size_t k) const { return layers_.at(k); }
  int input_dim() const { return layers_.front().in_dim(); }
  int output_dim() const { return layers_.back().out_dim(); }

  // Training forward: keeps per-layer caches for backward().
  Matrix forward(const Matrix& x);
  // Evaluation forward: no caches, safe to call concurrently.
  Matrix predict(const Matrix& x) const;
  // Normalized inputs u of layer k for the batch x.
  Matrix normalized_activations(const Matrix& x, std::size_t k) const;

  // Overwrites the gradient buffers exposed by parameters(); needs a preceding forward().
  void backward(const Matrix& grad_logits);
  bool has_cache() const noexcept { return !caches_.empty(); }

  // Trainable blocks only: frozen LayerNorm parameters are not listed.
  std::vector<ParamBlock> parameters();
  std::size_t trainable_parameter_count() const;

private:
  void allocate_grads();

  std::vector<KanLayer> layers_;
  std::string name_;
  std::vector<LayerCache> caches_;
  std::vector<LayerGrads> grads_;
};

// Plain-text checkpoint; doubles printed in shortest round-trip form.
void save_network(const Network& net, std::ostream& os);
Network load_network(std::istream& is);

double silu(double x);
double silu_deriv(double x);

} // namespace cdfkan
