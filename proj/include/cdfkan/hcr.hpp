#pragma once

// Hierarchical correlation reconstruction: joint densities on [0,1]^d written as
//   rho(x) = sum_j a_j f_{j_1}(x_1) ... f_{j_d}(x_d)
// over the orthonormal Legendre product basis, with a_{0..0} = 1 fixing normalization.

#include "cdfkan/basis.hpp"
#include "cdfkan/types.hpp"

#include <compare>
#include <initializer_list>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace cdfkan {

class MultiIndex
{
public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<int> indices);
  MultiIndex(std::initializer_list<int> indices);

  static MultiIndex zero(std::size_t dim) { return MultiIndex(std::vector<int>(dim, 0)); }

  std::size_t size() const noexcept { return idx_.size(); }
  int operator[](std::size_t i) const { return idx_[i]; }
  const std::vector<int>& indices() const noexcept { return idx_; }
  std::size_t nonzero_count() const noexcept;
  bool is_zero() const noexcept { return nonzero_count() == 0; }
  int max_index() const noexcept;

  auto operator<=>(const MultiIndex&) const = default;

private:
  std::vector<int> idx_;
};

// Marginals and pairwise terms: every index with at most two nonzero entries, each <= degree.
std::vector<MultiIndex> pairwise_basis_set(int dim, int degree);
// The full (degree+1)^dim tensor; intended for dim <= 3 demonstrations.
std::vector<MultiIndex> full_basis_set(int dim, int degree);

class HcrModel
{
public:
  // Uniform density: only a_{0..0} = 1.
  HcrModel(int dim, int degree);

  int dim() const noexcept { return dim_; }
  int degree() const noexcept { return spec_.degree_max(); }
  const BasisSpec& spec() const noexcept { return spec_; }
  const std::map<MultiIndex, double>& coeffs() const noexcept { return coeffs_; }

  double coeff(const MultiIndex& j) const;
  // The zero index is pinned to 1; setting it to anything else throws.
  void set_coeff(const MultiIndex& j, double value);

private:
  void check_index(const MultiIndex& j) const;

  int dim_;
  BasisSpec spec_;
  std::map<MultiIndex, double> coeffs_;
};

// a_j = mean over samples of prod_i f_{j_i}(x_i). Samples must already be normalized to [0,1].
HcrModel estimate_coefficients(const Matrix& samples, std::span<const MultiIndex> basis_set,
                               int degree);

double eval_density(const HcrModel& model, std::span<const double> x);

// One free coordinate (std::nullopt), the rest fixed.
using PartialAssignment = std::vector<std::optional<double>>;

inline constexpr double singular_conditioning_threshold = 1e-9;

//! rho(x | fixed) = sum_i c_i f_i(x), normalized so that c_0 = 1.
class ConditionalDensity
{
public:
  ConditionalDensity(BasisSpec spec, std::vector<double> coeffs);

  double operator()(double x) const;
  double expectation() const;
  const std::vector<double>& coeffs() const noexcept { return coeffs_; }

private:
  BasisSpec spec_;
  std::vector<double> coeffs_;
};

ConditionalDensity conditional_density(const HcrModel& model, const PartialAssignment& fixed);
// 1/2 + (1/sqrt 12) * (first-moment contraction / normalization contraction)
double conditional_expectation(const HcrModel& model, const PartialAssignment& fixed);

// -sum over nonzero indices of a_j^2, in nats.
double entropy_approx(const HcrModel& model);
// Sum of a_j^2 over indices nonzero in both blocks; block[i] in {0, 1} assigns coordinate i.
double mutual_information_approx(const HcrModel& model, std::span<const int> block);

//! Univariate Legendre expansions, one per input coordinate, whose sum is the first-moment
//! contraction of a pairwise model (the KAN neuron hidden inside the conditional expectation).
struct KanReduction
{
  int output_coordinate = 0;
  std::vector<int> inputs;                      // coordinates other than the output, ascending
  std::vector<std::vector<double>> functions;   // functions[i][k] multiplies f_k(x_{inputs[i]})

  // x holds one value per input coordinate, in the order of `inputs`.
  double evaluate(const BasisSpec& spec, std::span<const double> x) const;
};

KanReduction kan_reduce(const HcrModel& model, int output_coordinate);

struct CalibratedGrid
{
  int grid = 0;                  // nodes per axis at t_i = i / (grid - 1)
  std::vector<double> values;    // row-major: values[ix * grid + iy]
  double floor = 0.0;
  double normalizer = 1.0;       // trapezoid integral of max(rho, floor) before rescaling
};

// d = 2 only: max(rho, floor) on the node grid, rescaled to integrate to 1 by the trapezoid rule.
CalibratedGrid calibrate_density_2d(const HcrModel& model, double floor, int grid);

// d = 2 only: fraction of grid x grid cell midpoints where rho < 0.
double negative_density_fraction(const HcrModel& model, int grid);

// Text format: "hcr d=<dim> degree=<d>" then one "j_1 ... j_d value" line per coefficient.
void save_hcr(const HcrModel& model, std::ostream& os);
HcrModel load_hcr(std::istream& is);

} // namespace cdfkan
