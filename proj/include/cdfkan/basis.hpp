#pragma once

#include <span>
#include <vector>

namespace cdfkan {

//! Legendre polynomial P_k(x) by upward three-term recurrence from P_0 = 1, P_1 = x.
double legendre_p(int k, double x);

//! P'_k(x), using P'_{k+1} = (k+1) P_k + x P'_k.
double legendre_p_deriv(int k, double x);

// Orthonormal Legendre functions on [0,1]: f_k(u) = sqrt(2k+1) P_k(2u - 1), so that
// the integral of f_j f_k over [0,1] is the Kronecker delta. u outside [0,1] (or NaN)
// throws ErrorKind::out_of_domain; it almost always means a missing normalization.
double orthonormal_f(int k, double u);
double orthonormal_f_deriv(int k, double u);

//! Maximum degree plus the sqrt(2k+1) constants, evaluated in one recurrence pass.
class BasisSpec
{
public:
  explicit BasisSpec(int degree_max);

  int degree_max() const noexcept { return degree_max_; }
  std::size_t size() const noexcept { return norm_consts_.size(); }
  std::span<const double> norm_consts() const noexcept { return norm_consts_; }

  // out.size() must be degree_max + 1
  void eval(double u, std::span<double> out) const;
  void eval_with_deriv(double u, std::span<double> values, std::span<double> derivs) const;

private:
  int degree_max_;
  std::vector<double> norm_consts_;
};

std::vector<double> eval_basis_vector(const BasisSpec& spec, double u);

} // namespace cdfkan
