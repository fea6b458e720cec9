#include "cdfkan/kan.hpp"

#include "cdfkan/error.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <string>

namespace cdfkan {

namespace {

// Maps (group, position) onto the flat row-major index of a b x n matrix.
struct MinMaxGroups
{
  MinMaxScope scope;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index count() const
  {
    switch (scope) {
      case MinMaxScope::batch_feature: return cols;
      case MinMaxScope::per_example: return rows;
      case MinMaxScope::batch_global: return 1;
    }
    return 0;
  }
  Eigen::Index length() const
  {
    switch (scope) {
      case MinMaxScope::batch_feature: return rows;
      case MinMaxScope::per_example: return cols;
      case MinMaxScope::batch_global: return rows * cols;
    }
    return 0;
  }
  Eigen::Index flat(Eigen::Index g, Eigen::Index t) const
  {
    switch (scope) {
      case MinMaxScope::batch_feature: return t * cols + g;
      case MinMaxScope::per_example: return g * cols + t;
      case MinMaxScope::batch_global: return t;
    }
    return 0;
  }
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt)
{
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void fill_uniform(Matrix& m, double bound, std::mt19937_64& rng)
{
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = dist(rng);
}

} // namespace

double silu(double x)
{
  return x / (1.0 + std::exp(-x));
}

double silu_deriv(double x)
{
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

std::string_view variant_name(Variant v)
{
  switch (v) {
    case Variant::kal_net: return "KAL_NET";
    case Variant::cdfkal_net: return "CDFKAL_NET";
    case Variant::cdfkal_net_fixednorm: return "CDFKAL_NET_FIXEDNORM";
    case Variant::cdfkal_silu: return "CDFKAL_SILU";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view name)
{
  for (Variant v : all_variants)
    if (variant_name(v) == name)
      return v;
  if (name == "FIXEDNORM")
    return Variant::cdfkal_net_fixednorm;
  return std::nullopt;
}

KanLayer::KanLayer(const LayerConfig& cfg, std::uint64_t seed, double init_gain)
  : cfg_(cfg)
  , basis_(cfg.degree)
{
  require(cfg.in_dim >= 1 && cfg.out_dim >= 1, ErrorKind::invalid_argument,
          "KanLayer: dimensions must be >= 1");
  require(cfg.degree >= 1, ErrorKind::invalid_argument, "KanLayer: degree must be >= 1");
  const auto n = static_cast<Eigen::Index>(cfg.in_dim);
  const auto m = static_cast<Eigen::Index>(cfg.out_dim);
  const auto features = n * (cfg.degree + 1);

  std::mt19937_64 rng(seed);
  w_.resize(m, features);
  fill_uniform(w_, init_gain * std::sqrt(6.0 / static_cast<double>(features + m)), rng);
  if (cfg.silu_residual && n != m) {
    residual_.resize(m, n);
    fill_uniform(residual_, init_gain * std::sqrt(6.0 / static_cast<double>(n + m)), rng);
  }
  in_ln_ = LayerNormParams::identity(static_cast<std::size_t>(n), cfg.input_ln_frozen);
  out_ln_ = LayerNormParams::identity(static_cast<std::size_t>(m), false);
}

Matrix KanLayer::normalize_input(const Matrix& h) const
{
  return normalize_input(h, nullptr);
}

Matrix KanLayer::normalize_input(const Matrix& h, LayerCache* cache) const
{
  require(h.cols() == cfg_.in_dim, ErrorKind::shape_mismatch,
          "KanLayer: input width does not match layer in_dim");
  require(h.rows() >= 1, ErrorKind::invalid_argument, "KanLayer: empty batch");
  require(h.allFinite(), ErrorKind::invalid_argument, "KanLayer: non-finite input");

  if (cfg_.norm == InputNorm::layernorm_cdf) {
    Matrix z = layernorm_forward(h, in_ln_, cache ? &cache->in_ln : nullptr);
    Matrix u = z.unaryExpr([](double v) { return gaussian_cdf(v); });
    if (cache)
      cache->z = std::move(z);
    return u;
  }

  const MinMaxGroups groups{cfg_.minmax_scope, h.rows(), h.cols()};
  Matrix u(h.rows(), h.cols());
  const double* src = h.data();
  double* dst = u.data();
  if (cache) {
    cache->mm_range.assign(static_cast<std::size_t>(groups.count()), 0.0);
    cache->mm_argmin.assign(static_cast<std::size_t>(groups.count()), 0);
    cache->mm_argmax.assign(static_cast<std::size_t>(groups.count()), 0);
  }
  for (Eigen::Index g = 0; g < groups.count(); ++g) {
    Eigen::Index imin = groups.flat(g, 0);
    Eigen::Index imax = imin;
    for (Eigen::Index t = 1; t < groups.length(); ++t) {
      const Eigen::Index f = groups.flat(g, t);
      if (src[f] < src[imin])
        imin = f;
      if (src[f] > src[imax])
        imax = f;
    }
    const double lo = src[imin];
    const double range = src[imax] - lo;
    for (Eigen::Index t = 0; t < groups.length(); ++t) {
      const Eigen::Index f = groups.flat(g, t);
      dst[f] = range > 0.0 ? (src[f] - lo) / range : 0.5;
    }
    if (cache) {
      cache->mm_range[g] = range;
      cache->mm_argmin[g] = static_cast<std::size_t>(imin);
      cache->mm_argmax[g] = static_cast<std::size_t>(imax);
    }
  }
  return u;
}

Matrix KanLayer::forward(const Matrix& h, LayerCache* cache) const
{
  Matrix u = normalize_input(h, cache);
  const auto b = h.rows();
  const auto n = static_cast<Eigen::Index>(cfg_.in_dim);
  const auto k = static_cast<Eigen::Index>(basis_.size());

  Matrix p(b, n * k);
  Matrix dp;
  if (cache)
    dp.resize(b, n * k);
  for (Eigen::Index r = 0; r < b; ++r) {
    for (Eigen::Index i = 0; i < n; ++i) {
      std::span<double> vals(p.row(r).data() + i * k, static_cast<std::size_t>(k));
      if (cache)
        basis_.eval_with_deriv(u(r, i), vals,
                               std::span<double>(dp.row(r).data() + i * k, static_cast<std::size_t>(k)));
      else
        basis_.eval(u(r, i), vals);
    }
  }

  Matrix y = p * w_.transpose();
  if (cfg_.silu_residual) {
    Matrix s = h.unaryExpr([](double v) { return silu(v); });
    if (has_residual_projection())
      y.noalias() += s * residual_.transpose();
    else
      y += s;
    if (cache)
      cache->silu_in = std::move(s);
  }
  if (cfg_.output_ln_silu) {
    Matrix a = layernorm_forward(y, out_ln_, cache ? &cache->out_ln : nullptr);
    y = a.unaryExpr([](double v) { return silu(v); });
    if (cache)
      cache->out_pre_silu = std::move(a);
  }

  if (cache) {
    cache->input = h;
    cache->u = std::move(u);
    cache->p = std::move(p);
    cache->dp = std::move(dp);
  }
  return y;
}

LayerGrads KanLayer::backward(const Matrix& grad_y, const LayerCache& cache, bool need_input_grad) const
{
  require(cache.p.rows() > 0 && cache.input.rows() == cache.p.rows(), ErrorKind::missing_cache,
          "KanLayer::backward: cache does not come from a forward pass");
  require(grad_y.rows() == cache.p.rows() && grad_y.cols() == cfg_.out_dim,
          ErrorKind::shape_mismatch, "KanLayer::backward: gradient shape does not match cache");

  const auto b = grad_y.rows();
  const auto n = static_cast<Eigen::Index>(cfg_.in_dim);
  const auto k = static_cast<Eigen::Index>(basis_.size());
  LayerGrads g;

  Matrix gy = grad_y;
  if (cfg_.output_ln_silu) {
    Matrix ga = gy.array() * cache.out_pre_silu.unaryExpr([](double v) { return silu_deriv(v); }).array();
    LayerNormGrads lg = layernorm_backward(ga, out_ln_, cache.out_ln);
    gy = std::move(lg.grad_x);
    g.grad_out_scale = std::move(lg.grad_scale);
    g.grad_out_shift = std::move(lg.grad_shift);
  }

  g.grad_w.noalias() = gy.transpose() * cache.p;
  if (has_residual_projection())
    g.grad_residual.noalias() = gy.transpose() * cache.silu_in;

  const bool learnable_in_ln = has_input_ln() && !in_ln_.frozen;
  if (has_input_ln()) {
    g.grad_in_scale = Vector::Zero(n);
    g.grad_in_shift = Vector::Zero(n);
  }
  if (!need_input_grad && !learnable_in_ln)
    return g;

  const Matrix gp = gy * w_;
  Matrix gu(b, n);
  for (Eigen::Index r = 0; r < b; ++r) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double acc = 0.0;
      for (Eigen::Index q = 0; q < k; ++q)
        acc += gp(r, i * k + q) * cache.dp(r, i * k + q);
      gu(r, i) = deriv_fault_ * acc;
    }
  }

  Matrix gh;
  if (has_input_ln()) {
    Matrix gz = gu.array() * cache.z.unaryExpr([](double v) { return gaussian_cdf_deriv(v); }).array();
    LayerNormGrads lg = layernorm_backward(gz, in_ln_, cache.in_ln);
    gh = std::move(lg.grad_x);
    g.grad_in_scale = std::move(lg.grad_scale);
    g.grad_in_shift = std::move(lg.grad_shift);
  } else {
    // Exact derivative of (h - min) / (max - min), including the paths through the extremes.
    const MinMaxGroups groups{cfg_.minmax_scope, b, n};
    gh = Matrix::Zero(b, n);
    const double* gus = gu.data();
    const double* us = cache.u.data();
    double* ghs = gh.data();
    for (Eigen::Index grp = 0; grp < groups.count(); ++grp) {
      const double range = cache.mm_range[grp];
      if (!(range > 0.0))
        continue;
      double g_lo = 0.0;
      double g_hi = 0.0;
      for (Eigen::Index t = 0; t < groups.length(); ++t) {
        const Eigen::Index f = groups.flat(grp, t);
        ghs[f] += gus[f] / range;
        g_lo += gus[f] * (us[f] - 1.0) / range;
        g_hi -= gus[f] * us[f] / range;
      }
      ghs[cache.mm_argmin[grp]] += g_lo;
      ghs[cache.mm_argmax[grp]] += g_hi;
    }
  }

  if (cfg_.silu_residual) {
    Matrix gs = has_residual_projection() ? Matrix(gy * residual_) : gy;
    gh.array() += gs.array() * cache.input.unaryExpr([](double v) { return silu_deriv(v); }).array();
  }
  if (need_input_grad)
    g.grad_h = std::move(gh);
  return g;
}

std::size_t KanLayer::trainable_parameter_count() const
{
  std::size_t count = static_cast<std::size_t>(w_.size() + residual_.size());
  if (has_input_ln() && !in_ln_.frozen)
    count += 2 * in_ln_.features();
  if (cfg_.output_ln_silu && !out_ln_.frozen)
    count += 2 * out_ln_.features();
  return count;
}

Network::Network(std::vector<KanLayer> layers, std::string name)
  : layers_(std::move(layers))
  , name_(std::move(name))
{
  require(!layers_.empty(), ErrorKind::invalid_argument, "Network: needs at least one layer");
  for (std::size_t k = 0; k + 1 < layers_.size(); ++k)
    require(layers_[k].out_dim() == layers_[k + 1].in_dim(), ErrorKind::shape_mismatch,
            "Network: consecutive layer dimensions do not chain");
  allocate_grads();
}

Network Network::build(Variant variant, std::span<const int> dims, int degree, std::uint64_t seed)
{
  require(dims.size() >= 2, ErrorKind::invalid_argument, "Network::build: need at least two dims");
  require(degree >= 3 && degree <= 11, ErrorKind::invalid_argument,
          "Network::build: degree must be in [3, 11]");
  std::vector<KanLayer> layers;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    LayerConfig cfg;
    cfg.in_dim = dims[k];
    cfg.out_dim = dims[k + 1];
    cfg.degree = degree;
    switch (variant) {
      case Variant::kal_net:
        cfg.norm = InputNorm::minmax;
        cfg.silu_residual = true;
        cfg.output_ln_silu = true;
        break;
      case Variant::cdfkal_net:
        break;
      case Variant::cdfkal_net_fixednorm:
        cfg.input_ln_frozen = true;
        break;
      case Variant::cdfkal_silu:
        cfg.silu_residual = true;
        break;
    }
    // Small output layer so that initial logits are near uniform.
    const double gain = k + 2 == dims.size() ? 0.1 : 1.0;
    layers.emplace_back(cfg, mix_seed(seed, k), gain);
  }
  return Network(std::move(layers), std::string(variant_name(variant)));
}

void Network::allocate_grads()
{
  grads_.assign(layers_.size(), {});
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const KanLayer& l = layers_[k];
    LayerGrads& g = grads_[k];
    g.grad_w = Matrix::Zero(l.weights().rows(), l.weights().cols());
    g.grad_residual = Matrix::Zero(l.residual_weights().rows(), l.residual_weights().cols());
    g.grad_in_scale = Vector::Zero(l.input_ln().scale.size());
    g.grad_in_shift = Vector::Zero(l.input_ln().shift.size());
    g.grad_out_scale = Vector::Zero(l.output_ln().scale.size());
    g.grad_out_shift = Vector::Zero(l.output_ln().shift.size());
  }
}

Matrix Network::forward(const Matrix& x)
{
  caches_.assign(layers_.size(), {});
  Matrix h = x;
  for (std::size_t k = 0; k < layers_.size(); ++k)
    h = layers_[k].forward(h, &caches_[k]);
  return h;
}

Matrix Network::predict(const Matrix& x) const
{
  Matrix h = x;
  for (const auto& l : layers_)
    h = l.forward(h);
  return h;
}

Matrix Network::normalized_activations(const Matrix& x, std::size_t k) const
{
  require(k < layers_.size(), ErrorKind::invalid_argument, "normalized_activations: bad layer index");
  Matrix h = x;
  for (std::size_t j = 0; j < k; ++j)
    h = layers_[j].forward(h);
  return layers_[k].normalize_input(h);
}

void Network::backward(const Matrix& grad_logits)
{
  require(!caches_.empty(), ErrorKind::missing_cache,
          "Network::backward called without a cached forward pass");
  Matrix g = grad_logits;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    LayerGrads lg = layers_[k].backward(g, caches_[k], k > 0);
    LayerGrads& dst = grads_[k];
    dst.grad_w = lg.grad_w;
    if (layers_[k].has_residual_projection())
      dst.grad_residual = lg.grad_residual;
    if (layers_[k].has_input_ln()) {
      dst.grad_in_scale = lg.grad_in_scale;
      dst.grad_in_shift = lg.grad_in_shift;
    }
    if (layers_[k].config().output_ln_silu) {
      dst.grad_out_scale = lg.grad_out_scale;
      dst.grad_out_shift = lg.grad_out_shift;
    }
    if (k > 0)
      g = std::move(lg.grad_h);
  }
}

std::vector<ParamBlock> Network::parameters()
{
  auto span_of = [](auto& m) { return std::span<double>(m.data(), static_cast<std::size_t>(m.size())); };
  std::vector<ParamBlock> out;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    KanLayer& l = layers_[k];
    LayerGrads& g = grads_[k];
    const std::string prefix = "layer" + std::to_string(k) + ".";
    out.push_back({prefix + "W", span_of(l.weights()), span_of(g.grad_w)});
    if (l.has_residual_projection())
      out.push_back({prefix + "residual", span_of(l.residual_weights()), span_of(g.grad_residual)});
    if (l.has_input_ln() && !l.input_ln().frozen) {
      out.push_back({prefix + "ln_in.scale", span_of(l.input_ln().scale), span_of(g.grad_in_scale)});
      out.push_back({prefix + "ln_in.shift", span_of(l.input_ln().shift), span_of(g.grad_in_shift)});
    }
    if (l.config().output_ln_silu && !l.output_ln().frozen) {
      out.push_back({prefix + "ln_out.scale", span_of(l.output_ln().scale), span_of(g.grad_out_scale)});
      out.push_back({prefix + "ln_out.shift", span_of(l.output_ln().shift), span_of(g.grad_out_shift)});
    }
  }
  return out;
}

std::size_t Network::trainable_parameter_count() const
{
  std::size_t total = 0;
  for (const auto& l : layers_)
    total += l.trainable_parameter_count();
  return total;
}

// ---- checkpoint ------------------------------------------------------------

namespace {

const char* norm_token(InputNorm n)
{
  return n == InputNorm::minmax ? "minmax" : "cdf";
}

const char* scope_token(MinMaxScope s)
{
  switch (s) {
    case MinMaxScope::batch_feature: return "batch_feature";
    case MinMaxScope::batch_global: return "batch_global";
    case MinMaxScope::per_example: return "per_example";
  }
  return "?";
}

void write_double(std::ostream& os, double v)
{
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  os.write(buf, end - buf);
}

template <class M>
void write_values(std::ostream& os, const M& m)
{
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (i)
      os << ' ';
    write_double(os, m.data()[i]);
  }
  os << '\n';
}

std::string next_token(std::istream& is)
{
  std::string t;
  if (!(is >> t))
    fail(ErrorKind::parse, "checkpoint: unexpected end of input");
  return t;
}

void expect_token(std::istream& is, const char* want)
{
  const std::string t = next_token(is);
  if (t != want)
    fail(ErrorKind::parse, std::string("checkpoint: expected '") + want + "', got '" + t + "'");
}

template <class T>
T read_number(std::istream& is)
{
  const std::string t = next_token(is);
  T v{};
  auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size())
    fail(ErrorKind::parse, "checkpoint: bad number '" + t + "'");
  return v;
}

template <class M>
void read_values(std::istream& is, M& m)
{
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = read_number<double>(is);
}

} // namespace

void save_network(const Network& net, std::ostream& os)
{
  os << "cdfkan-network v1 " << net.name() << '\n';
  os << "layers " << net.layer_count() << '\n';
  for (std::size_t k = 0; k < net.layer_count(); ++k) {
    const KanLayer& l = net.layer(k);
    const LayerConfig& c = l.config();
    os << "layer " << c.in_dim << ' ' << c.out_dim << ' ' << c.degree << ' ' << norm_token(c.norm) << ' '
       << scope_token(c.minmax_scope) << ' ' << int(c.input_ln_frozen) << ' ' << int(c.silu_residual) << ' '
       << int(c.output_ln_silu) << '\n';
    os << "W " << l.weights().rows() << ' ' << l.weights().cols() << '\n';
    write_values(os, l.weights());
    os << "R " << l.residual_weights().rows() << ' ' << l.residual_weights().cols() << '\n';
    write_values(os, l.residual_weights());
    for (const LayerNormParams* ln : {&l.input_ln(), &l.output_ln()}) {
      os << "ln " << ln->features() << ' ';
      write_double(os, ln->epsilon);
      os << '\n';
      write_values(os, ln->scale);
      write_values(os, ln->shift);
    }
  }
  os << "end\n";
}

Network load_network(std::istream& is)
{
  expect_token(is, "cdfkan-network");
  expect_token(is, "v1");
  const std::string name = next_token(is);
  expect_token(is, "layers");
  const auto count = read_number<std::size_t>(is);
  require(count >= 1 && count < 1000, ErrorKind::parse, "checkpoint: implausible layer count");
  std::vector<KanLayer> layers;
  for (std::size_t k = 0; k < count; ++k) {
    expect_token(is, "layer");
    LayerConfig c;
    c.in_dim = read_number<int>(is);
    c.out_dim = read_number<int>(is);
    c.degree = read_number<int>(is);
    const std::string norm = next_token(is);
    if (norm == "cdf")
      c.norm = InputNorm::layernorm_cdf;
    else if (norm == "minmax")
      c.norm = InputNorm::minmax;
    else
      fail(ErrorKind::parse, "checkpoint: unknown normalization '" + norm + "'");
    const std::string scope = next_token(is);
    if (scope == "batch_feature")
      c.minmax_scope = MinMaxScope::batch_feature;
    else if (scope == "batch_global")
      c.minmax_scope = MinMaxScope::batch_global;
    else if (scope == "per_example")
      c.minmax_scope = MinMaxScope::per_example;
    else
      fail(ErrorKind::parse, "checkpoint: unknown minmax scope '" + scope + "'");
    c.input_ln_frozen = read_number<int>(is) != 0;
    c.silu_residual = read_number<int>(is) != 0;
    c.output_ln_silu = read_number<int>(is) != 0;
    require(c.in_dim >= 1 && c.out_dim >= 1 && c.degree >= 1 && c.degree <= 64, ErrorKind::parse,
            "checkpoint: bad layer header");
    KanLayer layer(c, 0);

    expect_token(is, "W");
    const auto wr = read_number<Eigen::Index>(is);
    const auto wc = read_number<Eigen::Index>(is);
    require(wr == layer.weights().rows() && wc == layer.weights().cols(), ErrorKind::parse,
            "checkpoint: weight shape does not match layer header");
    read_values(is, layer.weights());
    expect_token(is, "R");
    const auto rr = read_number<Eigen::Index>(is);
    const auto rc = read_number<Eigen::Index>(is);
    require(rr == layer.residual_weights().rows() && rc == layer.residual_weights().cols(),
            ErrorKind::parse, "checkpoint: residual shape does not match layer header");
    read_values(is, layer.residual_weights());
    for (LayerNormParams* ln : {&layer.input_ln(), &layer.output_ln()}) {
      expect_token(is, "ln");
      const auto f = read_number<std::size_t>(is);
      require(f == ln->features(), ErrorKind::parse, "checkpoint: LayerNorm width mismatch");
      ln->epsilon = read_number<double>(is);
      read_values(is, ln->scale);
      read_values(is, ln->shift);
    }
    layers.push_back(std::move(layer));
  }
  expect_token(is, "end");
  return Network(std::move(layers), name);
}

} // namespace cdfkan
