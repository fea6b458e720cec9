#include "cdfkan/error.hpp"
#include "cdfkan/hcr.hpp"
#include "cdfkan/kan.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace cdfkan;

namespace {

Matrix random_matrix(int r, int c, std::uint64_t seed, double scale = 1.0)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = nd(rng);
  return m;
}

// Worst relative error of layer gradients for the linear loss sum(G o y), by central differences.
double layer_grad_error(KanLayer layer, const Matrix& h, const Matrix& G)
{
  LayerCache cache;
  layer.forward(h, &cache);
  const auto g = layer.backward(G, cache);
  const double step = 1e-6;
  auto loss = [&](const KanLayer& l, const Matrix& x) { return (l.forward(x).array() * G.array()).sum(); };
  double worst = 0.0;
  auto probe = [&](double& slot, double analytic, const Matrix& x) {
    const double keep = slot;
    slot = keep + step;
    const double up = loss(layer, x);
    slot = keep - step;
    const double down = loss(layer, x);
    slot = keep;
    worst = std::max(worst, oracle::rel_err(analytic, (up - down) / (2 * step), 1e-6));
  };
  for (Eigen::Index i = 0; i < layer.weights().size(); ++i)
    probe(layer.weights().data()[i], g.grad_w.data()[i], h);
  for (Eigen::Index i = 0; i < layer.residual_weights().size(); ++i)
    probe(layer.residual_weights().data()[i], g.grad_residual.data()[i], h);
  if (layer.has_input_ln() && !layer.input_ln().frozen)
    for (Eigen::Index i = 0; i < layer.input_ln().scale.size(); ++i) {
      probe(layer.input_ln().scale(i), g.grad_in_scale(i), h);
      probe(layer.input_ln().shift(i), g.grad_in_shift(i), h);
    }
  if (layer.config().output_ln_silu)
    for (Eigen::Index i = 0; i < layer.output_ln().scale.size(); ++i) {
      probe(layer.output_ln().scale(i), g.grad_out_scale(i), h);
      probe(layer.output_ln().shift(i), g.grad_out_shift(i), h);
    }
  Matrix x = h;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + step;
    const double up = loss(layer, x);
    x.data()[i] = keep - step;
    const double down = loss(layer, x);
    x.data()[i] = keep;
    worst = std::max(worst, oracle::rel_err(g.grad_h.data()[i], (up - down) / (2 * step), 1e-6));
  }
  return worst;
}

} // namespace

TEST_CASE("variant names")
{
  for (auto v : all_variants)
    CHECK(parse_variant(variant_name(v)) == v);
  CHECK(parse_variant("FIXEDNORM") == Variant::cdfkal_net_fixednorm);
  CHECK_FALSE(parse_variant("RESNET").has_value());
}

TEST_CASE("silu")
{
  CHECK(silu(0.0) == 0.0);
  CHECK(silu_deriv(0.0) == doctest::Approx(0.5));
  for (double x : {-3.0, -0.4, 0.7, 5.0})
    CHECK(oracle::rel_err(silu_deriv(x), oracle::central_diff(silu, x, 1e-6)) < 1e-8);
}

TEST_CASE("layer forward examples")
{
  LayerConfig cfg{.in_dim = 3, .out_dim = 2, .degree = 3};
  KanLayer layer(cfg, 1);
  REQUIRE(layer.weights().rows() == 2);
  REQUIRE(layer.weights().cols() == 3 * 4);
  layer.weights().setZero();
  CHECK(layer.forward(random_matrix(5, 3, 2)).cwiseAbs().maxCoeff() == 0.0);

  LayerConfig one{.in_dim = 1, .out_dim = 1, .degree = 1, .input_ln_frozen = true};
  KanLayer single(one, 3);
  single.weights() << 0.7, -1.3;
  Matrix h(2, 1);
  h << 4.0, -2.0;  // with one feature the LayerNorm output is the mean, so u = 1/2 and p = [1, 0]
  const auto y = single.forward(h);
  CHECK(y(0, 0) == doctest::Approx(0.7));
  CHECK(y(1, 0) == doctest::Approx(0.7));

  LayerConfig four{.in_dim = 4, .out_dim = 2, .degree = 3};
  KanLayer l4(four, 4);
  LayerCache cache;
  const Matrix x = random_matrix(3, 4, 5);
  l4.forward(x, &cache);
  REQUIRE(cache.p.cols() == 16);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k <= 3; ++k)
      CHECK(cache.p(1, i * 4 + k) == doctest::Approx(oracle::f(k, cache.u(1, i))).epsilon(1e-12));
  // y = W p
  const Matrix direct = cache.p * l4.weights().transpose();
  CHECK((l4.forward(x) - direct).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(l4.forward(random_matrix(3, 5, 1)), Error);
}

TEST_CASE("normalized inputs ranges")
{
  const Matrix x = random_matrix(64, 6, 8, 3.0);
  KanLayer cdf(LayerConfig{.in_dim = 6, .out_dim = 2, .degree = 3}, 1);
  const auto u = cdf.normalize_input(x);
  CHECK(u.minCoeff() > 0.0);
  CHECK(u.maxCoeff() < 1.0);
  KanLayer mm(LayerConfig{.in_dim = 6, .out_dim = 2, .degree = 3, .norm = InputNorm::minmax}, 1);
  const auto v = mm.normalize_input(x);
  CHECK(v.minCoeff() == 0.0);
  CHECK(v.maxCoeff() == 1.0);
  for (int c = 0; c < 6; ++c) {
    CHECK(v.col(c).minCoeff() == 0.0);
    CHECK(v.col(c).maxCoeff() == 1.0);
  }
  KanLayer per_ex(
    LayerConfig{.in_dim = 6, .out_dim = 2, .degree = 3, .norm = InputNorm::minmax,
                .minmax_scope = MinMaxScope::per_example},
    1);
  const auto w = per_ex.normalize_input(x);
  for (int r = 0; r < 64; ++r) {
    CHECK(w.row(r).minCoeff() == 0.0);
    CHECK(w.row(r).maxCoeff() == 1.0);
  }
}

TEST_CASE("layer gradients against finite differences")
{
  const Matrix h = random_matrix(5, 4, 10);
  const Matrix G = random_matrix(5, 3, 11);
  const Matrix Gsq = random_matrix(5, 4, 12);

  SUBCASE("cdf, learnable LN")
  {
    KanLayer l(LayerConfig{.in_dim = 4, .out_dim = 3, .degree = 3}, 1);
    l.input_ln().scale = Vector::Constant(4, 1.3);
    l.input_ln().shift = Vector::LinSpaced(4, -0.2, 0.3);
    CHECK(layer_grad_error(l, h, G) < 1e-6);
  }
  SUBCASE("cdf, frozen LN, degree 7")
  {
    KanLayer l(LayerConfig{.in_dim = 4, .out_dim = 3, .degree = 7, .input_ln_frozen = true}, 2);
    CHECK(layer_grad_error(l, h, G) < 1e-6);
  }
  SUBCASE("silu residual with projection and identity")
  {
    KanLayer proj(LayerConfig{.in_dim = 4, .out_dim = 3, .degree = 3, .silu_residual = true}, 3);
    CHECK(proj.has_residual_projection());
    CHECK(layer_grad_error(proj, h, G) < 1e-6);
    KanLayer ident(LayerConfig{.in_dim = 4, .out_dim = 4, .degree = 3, .silu_residual = true}, 3);
    CHECK_FALSE(ident.has_residual_projection());
    CHECK(layer_grad_error(ident, h, Gsq) < 1e-6);
  }
  SUBCASE("minmax scopes with output LN + SiLU")
  {
    for (auto scope : {MinMaxScope::batch_feature, MinMaxScope::batch_global, MinMaxScope::per_example}) {
      KanLayer l(LayerConfig{.in_dim = 4, .out_dim = 3, .degree = 4, .norm = InputNorm::minmax,
                             .minmax_scope = scope, .silu_residual = true, .output_ln_silu = true},
                 4);
      l.output_ln().scale = Vector::Constant(3, 0.8);
      CHECK(layer_grad_error(l, h, G) < 1e-6);
    }
  }
}

TEST_CASE("backward edge cases")
{
  KanLayer l(LayerConfig{.in_dim = 4, .out_dim = 3, .degree = 3}, 1);
  LayerCache cache;
  const Matrix h = random_matrix(2, 4, 1);
  l.forward(h, &cache);
  const auto g = l.backward(Matrix::Zero(2, 3), cache);
  CHECK(g.grad_w.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.grad_h.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.grad_in_scale.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(l.backward(Matrix::Zero(3, 3), cache), Error);

  KanLayer fz(LayerConfig{.in_dim = 4, .out_dim = 3, .degree = 3, .input_ln_frozen = true}, 1);
  fz.forward(h, &cache);
  const auto gf = fz.backward(random_matrix(2, 3, 4), cache);
  CHECK(gf.grad_in_scale.cwiseAbs().maxCoeff() == 0.0);
  CHECK(gf.grad_in_shift.cwiseAbs().maxCoeff() == 0.0);
  const auto skip = fz.backward(random_matrix(2, 3, 4), cache, false);
  CHECK(skip.grad_h.size() == 0);
  CHECK((skip.grad_w - gf.grad_w).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("network build and structure")
{
  const int dims[] = {6, 4, 3};
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  for (auto v : all_variants) {
    auto net = Network::build(v, dims, 3, 1);
    CHECK(net.layer_count() == 2);
    CHECK(net.name() == variant_name(v));
    for (std::size_t k = 0; k < 2; ++k)
      shapes.emplace_back(net.layer(k).weights().rows(), net.layer(k).weights().cols());
  }
  for (std::size_t i = 2; i < shapes.size(); ++i)
    CHECK(shapes[i] == shapes[i % 2]);

  // KAL_NET never passes through the Gaussian CDF
  auto kal = Network::build(Variant::kal_net, dims, 3, 1);
  for (std::size_t k = 0; k < kal.layer_count(); ++k) {
    CHECK(kal.layer(k).config().norm == InputNorm::minmax);
    CHECK_FALSE(kal.layer(k).has_input_ln());
  }
  kal.forward(random_matrix(4, 6, 2));

  CHECK_THROWS_AS(Network::build(Variant::cdfkal_net, dims, 2, 1), Error);
  CHECK_THROWS_AS(Network::build(Variant::cdfkal_net, dims, 12, 1), Error);
  const int one[] = {6};
  CHECK_THROWS_AS(Network::build(Variant::cdfkal_net, one, 3, 1), Error);

  std::vector<KanLayer> bad;
  bad.emplace_back(LayerConfig{.in_dim = 6, .out_dim = 4}, 1);
  bad.emplace_back(LayerConfig{.in_dim = 5, .out_dim = 3}, 2);
  CHECK_THROWS_AS(Network(std::move(bad)), Error);

  const int mnist[] = {784, 64, 64, 10};
  const auto net = Network::build(Variant::cdfkal_net, mnist, 3, 0);
  CHECK(net.predict(random_matrix(2, 784, 3)).cols() == 10);
}

TEST_CASE("parameter counts")
{
  const int dims[] = {6, 4, 3};
  const auto cdf = Network::build(Variant::cdfkal_net, dims, 3, 1);
  const auto fixed = Network::build(Variant::cdfkal_net_fixednorm, dims, 3, 1);
  const std::size_t w = 4 * 6 * 4 + 3 * 4 * 4;
  CHECK(fixed.trainable_parameter_count() == w);
  // freezing every LayerNorm removes scale and shift at each site
  CHECK(cdf.trainable_parameter_count() - fixed.trainable_parameter_count() == 2 * (6 + 4));

  const int square[] = {5, 5, 5};
  const auto c2 = Network::build(Variant::cdfkal_net, square, 4, 1);
  const auto s2 = Network::build(Variant::cdfkal_silu, square, 4, 1);
  const auto f2 = Network::build(Variant::cdfkal_net_fixednorm, square, 4, 1);
  CHECK(f2.trainable_parameter_count() < c2.trainable_parameter_count());
  CHECK(c2.trainable_parameter_count() == s2.trainable_parameter_count());

  auto fixed_mut = Network::build(Variant::cdfkal_net_fixednorm, dims, 3, 1);
  std::size_t listed = 0;
  for (const auto& b : fixed_mut.parameters()) {
    CHECK(b.name.find("ln_in") == std::string::npos);
    listed += b.value.size();
  }
  CHECK(listed == fixed_mut.trainable_parameter_count());
}

TEST_CASE("network forward determinism, zero weights and backward preconditions")
{
  const int dims[] = {6, 4, 3};
  auto net = Network::build(Variant::cdfkal_silu, dims, 3, 9);
  const Matrix x = random_matrix(7, 6, 4);
  const Matrix a = net.predict(x), b = net.predict(x);
  CHECK((a.array() == b.array()).all());
  CHECK((net.forward(x).array() == a.array()).all());

  auto fresh = Network::build(Variant::cdfkal_net, dims, 3, 9);
  CHECK_FALSE(fresh.has_cache());
  try {
    fresh.backward(Matrix::Zero(7, 3));
    FAIL("expected missing_cache");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::missing_cache);
  }

  auto zero = Network::build(Variant::cdfkal_net, dims, 3, 9);
  for (std::size_t k = 0; k < zero.layer_count(); ++k)
    zero.layer(k).weights().setZero();
  CHECK(zero.predict(x).cwiseAbs().maxCoeff() == 0.0);

  net.forward(x);
  net.backward(Matrix::Zero(7, 3));
  for (const auto& blk : net.parameters())
    for (double g : blk.grad)
      CHECK(g == 0.0);

  // differently seeded nets differ
  auto other = Network::build(Variant::cdfkal_silu, dims, 3, 10);
  CHECK((other.predict(x) - a).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("checkpoint round trip")
{
  const int dims[] = {6, 5, 3};
  for (auto v : all_variants) {
    auto net = Network::build(v, dims, 4, 21);
    // move LN parameters off their identity values
    for (std::size_t k = 0; k < net.layer_count(); ++k)
      if (net.layer(k).has_input_ln() && !net.layer(k).input_ln().frozen)
        net.layer(k).input_ln().scale.setConstant(1.25);
    std::stringstream ss;
    save_network(net, ss);
    const auto back = load_network(ss);
    CHECK(back.name() == net.name());
    CHECK(back.trainable_parameter_count() == net.trainable_parameter_count());
    const Matrix x = random_matrix(4, 6, 3);
    CHECK((back.predict(x).array() == net.predict(x).array()).all());
  }
  std::stringstream junk("not a checkpoint");
  CHECK_THROWS_AS(load_network(junk), Error);
}

TEST_CASE("a CDF neuron reproduces the pairwise HCR numerator")
{
  // weights taken from kan_reduce make the neuron compute the first-moment contraction at u
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> cd(-0.3, 0.3);
  const int dim = 4, deg = 3;
  HcrModel model(dim, deg);
  for (const auto& j : pairwise_basis_set(dim, deg))
    if (!j.is_zero())
      model.set_coeff(j, cd(rng));
  const auto red = kan_reduce(model, 0);

  KanLayer neuron(LayerConfig{.in_dim = dim - 1, .out_dim = 1, .degree = deg, .input_ln_frozen = true}, 1);
  for (int i = 0; i < dim - 1; ++i)
    for (int k = 0; k <= deg; ++k)
      neuron.weights()(0, i * (deg + 1) + k) = red.functions[i][k];

  const Matrix h = random_matrix(100, dim - 1, 5);
  const Matrix u = neuron.normalize_input(h);
  const Matrix y = neuron.forward(h);
  double worst = 0.0;
  for (int r = 0; r < 100; ++r) {
    double direct = 0.0;
    for (const auto& [j, a] : model.coeffs()) {
      if (j[0] != 1)
        continue;
      double prod = a;
      for (int i = 1; i < dim; ++i)
        prod *= oracle::f(j[i], u(r, i - 1));
      direct += prod;
    }
    worst = std::max(worst, std::abs(y(r, 0) - direct));
  }
  CHECK(worst < 1e-12);
}
