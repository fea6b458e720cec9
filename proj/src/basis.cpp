#include "cdfkan/basis.hpp"

#include "cdfkan/error.hpp"

#include <cmath>
#include <string>

namespace cdfkan {

namespace {

void check_degree(int k)
{
  if (k < 0)
    fail(ErrorKind::invalid_argument, "polynomial degree must be >= 0, got " + std::to_string(k));
}

void check_unit(double u)
{
  if (!(u >= 0.0 && u <= 1.0))
    fail(ErrorKind::out_of_domain,
         "basis argument must lie in [0,1], got " + std::to_string(u));
}

} // namespace

double legendre_p(int k, double x)
{
  check_degree(k);
  if (k == 0)
    return 1.0;
  double prev = 1.0;
  double cur = x;
  for (int j = 1; j < k; ++j) {
    const double next = ((2 * j + 1) * x * cur - j * prev) / (j + 1);
    prev = cur;
    cur = next;
  }
  return cur;
}

double legendre_p_deriv(int k, double x)
{
  check_degree(k);
  double p = 1.0;  // P_j
  double p_prev = 0.0;
  double dp = 0.0; // P'_j
  for (int j = 0; j < k; ++j) {
    const double dnext = (j + 1) * p + x * dp;
    const double pnext = j == 0 ? x : ((2 * j + 1) * x * p - j * p_prev) / (j + 1);
    p_prev = p;
    p = pnext;
    dp = dnext;
  }
  return dp;
}

double orthonormal_f(int k, double u)
{
  check_unit(u);
  return std::sqrt(2.0 * k + 1.0) * legendre_p(k, 2.0 * u - 1.0);
}

double orthonormal_f_deriv(int k, double u)
{
  check_unit(u);
  return 2.0 * std::sqrt(2.0 * k + 1.0) * legendre_p_deriv(k, 2.0 * u - 1.0);
}

BasisSpec::BasisSpec(int degree_max)
  : degree_max_(degree_max)
{
  check_degree(degree_max);
  norm_consts_.resize(static_cast<std::size_t>(degree_max) + 1);
  for (int k = 0; k <= degree_max; ++k)
    norm_consts_[k] = std::sqrt(2.0 * k + 1.0);
}

void BasisSpec::eval(double u, std::span<double> out) const
{
  check_unit(u);
  require(out.size() == size(), ErrorKind::shape_mismatch, "basis output span has wrong length");
  const double x = 2.0 * u - 1.0;
  double prev = 1.0;
  double cur = x;
  out[0] = 1.0;
  if (degree_max_ >= 1)
    out[1] = norm_consts_[1] * x;
  for (int j = 1; j < degree_max_; ++j) {
    const double next = ((2 * j + 1) * x * cur - j * prev) / (j + 1);
    prev = cur;
    cur = next;
    out[j + 1] = norm_consts_[j + 1] * cur;
  }
}

void BasisSpec::eval_with_deriv(double u, std::span<double> values, std::span<double> derivs) const
{
  check_unit(u);
  require(values.size() == size() && derivs.size() == size(), ErrorKind::shape_mismatch,
          "basis output span has wrong length");
  const double x = 2.0 * u - 1.0;
  double p_prev = 0.0;
  double p = 1.0;
  double dp = 0.0;
  values[0] = 1.0;
  derivs[0] = 0.0;
  for (int j = 0; j < degree_max_; ++j) {
    const double dnext = (j + 1) * p + x * dp;
    const double pnext = j == 0 ? x : ((2 * j + 1) * x * p - j * p_prev) / (j + 1);
    p_prev = p;
    p = pnext;
    dp = dnext;
    values[j + 1] = norm_consts_[j + 1] * p;
    // chain rule through x = 2u - 1
    derivs[j + 1] = 2.0 * norm_consts_[j + 1] * dp;
  }
}

std::vector<double> eval_basis_vector(const BasisSpec& spec, double u)
{
  std::vector<double> out(spec.size());
  spec.eval(u, out);
  return out;
}

} // namespace cdfkan
