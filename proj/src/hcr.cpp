#include "cdfkan/hcr.hpp"

#include "cdfkan/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace cdfkan {

namespace {

constexpr double inv_sqrt_12 = 0.28867513459481288225457439025098;

// f_k(x_i) for every coordinate, laid out as table[i * (degree + 1) + k].
std::vector<double> basis_table(const BasisSpec& spec, std::span<const double> x)
{
  std::vector<double> table(x.size() * spec.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    spec.eval(x[i], std::span<double>(table.data() + i * spec.size(), spec.size()));
  return table;
}

// Product of basis values over all coordinates except `skip`.
double product_except(const MultiIndex& j, std::span<const double> table, std::size_t stride,
                      std::size_t skip)
{
  double prod = 1.0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (i == skip || j[i] == 0)
      continue;
    prod *= table[i * stride + static_cast<std::size_t>(j[i])];
  }
  return prod;
}

std::size_t free_coordinate(const HcrModel& model, const PartialAssignment& fixed)
{
  require(fixed.size() == static_cast<std::size_t>(model.dim()), ErrorKind::shape_mismatch,
          "conditional: assignment length must equal model dimension");
  std::size_t free_count = 0;
  std::size_t free_idx = 0;
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (!fixed[i]) {
      ++free_count;
      free_idx = i;
    }
  }
  require(free_count == 1, ErrorKind::invalid_argument,
          "conditional: exactly one coordinate must be left free");
  return free_idx;
}

} // namespace

MultiIndex::MultiIndex(std::vector<int> indices)
  : idx_(std::move(indices))
{
  for (int v : idx_)
    require(v >= 0, ErrorKind::invalid_argument, "multi-index entries must be >= 0");
}

MultiIndex::MultiIndex(std::initializer_list<int> indices)
  : MultiIndex(std::vector<int>(indices))
{
}

std::size_t MultiIndex::nonzero_count() const noexcept
{
  return static_cast<std::size_t>(std::count_if(idx_.begin(), idx_.end(), [](int v) { return v != 0; }));
}

int MultiIndex::max_index() const noexcept
{
  return idx_.empty() ? 0 : *std::max_element(idx_.begin(), idx_.end());
}

std::vector<MultiIndex> pairwise_basis_set(int dim, int degree)
{
  require(dim >= 1 && degree >= 0, ErrorKind::invalid_argument, "pairwise_basis_set: bad sizes");
  std::vector<MultiIndex> out;
  std::vector<int> idx(static_cast<std::size_t>(dim), 0);
  out.emplace_back(idx);
  for (int a = 0; a < dim; ++a) {
    for (int ja = 1; ja <= degree; ++ja) {
      idx.assign(dim, 0);
      idx[a] = ja;
      out.emplace_back(idx);
      for (int b = a + 1; b < dim; ++b) {
        for (int jb = 1; jb <= degree; ++jb) {
          idx[b] = jb;
          out.emplace_back(idx);
        }
        idx[b] = 0;
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<MultiIndex> full_basis_set(int dim, int degree)
{
  require(dim >= 1 && degree >= 0, ErrorKind::invalid_argument, "full_basis_set: bad sizes");
  require(std::pow(degree + 1.0, dim) <= 1e6, ErrorKind::invalid_argument,
          "full_basis_set: tensor too large; use pairwise_basis_set");
  std::vector<MultiIndex> out;
  std::vector<int> idx(static_cast<std::size_t>(dim), 0);
  while (true) {
    out.emplace_back(idx);
    int pos = dim - 1;
    while (pos >= 0 && idx[pos] == degree)
      idx[pos--] = 0;
    if (pos < 0)
      break;
    ++idx[pos];
  }
  return out;
}

HcrModel::HcrModel(int dim, int degree)
  : dim_(dim)
  , spec_(degree)
{
  require(dim >= 1, ErrorKind::invalid_argument, "HcrModel: dim must be >= 1");
  coeffs_[MultiIndex::zero(static_cast<std::size_t>(dim))] = 1.0;
}

void HcrModel::check_index(const MultiIndex& j) const
{
  require(j.size() == static_cast<std::size_t>(dim_), ErrorKind::shape_mismatch,
          "HcrModel: multi-index length differs from model dimension");
  require(j.max_index() <= degree(), ErrorKind::invalid_argument,
          "HcrModel: multi-index entry exceeds basis degree");
}

double HcrModel::coeff(const MultiIndex& j) const
{
  check_index(j);
  auto it = coeffs_.find(j);
  return it == coeffs_.end() ? 0.0 : it->second;
}

void HcrModel::set_coeff(const MultiIndex& j, double value)
{
  check_index(j);
  if (j.is_zero()) {
    require(value == 1.0, ErrorKind::invalid_argument,
            "HcrModel: the zero coefficient is fixed at 1 (normalization)");
    return;
  }
  coeffs_[j] = value;
}

HcrModel estimate_coefficients(const Matrix& samples, std::span<const MultiIndex> basis_set,
                               int degree)
{
  require(samples.rows() > 0, ErrorKind::invalid_argument, "estimate_coefficients: empty sample");
  const auto dim = static_cast<int>(samples.cols());
  HcrModel model(dim, degree);
  const MultiIndex zero = MultiIndex::zero(static_cast<std::size_t>(dim));
  require(std::find(basis_set.begin(), basis_set.end(), zero) != basis_set.end(),
          ErrorKind::invalid_argument, "estimate_coefficients: basis set lacks the zero index");
  for (const auto& j : basis_set)
    model.coeff(j); // validates length and degree
  require(((samples.array() >= 0.0) && (samples.array() <= 1.0)).all(), ErrorKind::out_of_domain,
          "estimate_coefficients: samples must lie in [0,1]; normalize first");

  const BasisSpec& spec = model.spec();
  std::vector<double> sums(basis_set.size(), 0.0);
  std::vector<double> row(static_cast<std::size_t>(dim));
  for (Eigen::Index s = 0; s < samples.rows(); ++s) {
    for (int i = 0; i < dim; ++i)
      row[i] = samples(s, i);
    const auto table = basis_table(spec, row);
    for (std::size_t b = 0; b < basis_set.size(); ++b)
      sums[b] += product_except(basis_set[b], table, spec.size(), row.size());
  }
  const auto n = static_cast<double>(samples.rows());
  for (std::size_t b = 0; b < basis_set.size(); ++b) {
    if (!basis_set[b].is_zero())
      model.set_coeff(basis_set[b], sums[b] / n);
  }
  return model;
}

double eval_density(const HcrModel& model, std::span<const double> x)
{
  require(x.size() == static_cast<std::size_t>(model.dim()), ErrorKind::shape_mismatch,
          "eval_density: point dimension differs from model");
  const auto table = basis_table(model.spec(), x);
  double rho = 0.0;
  for (const auto& [j, a] : model.coeffs())
    rho += a * product_except(j, table, model.spec().size(), x.size());
  return rho;
}

ConditionalDensity::ConditionalDensity(BasisSpec spec, std::vector<double> coeffs)
  : spec_(std::move(spec))
  , coeffs_(std::move(coeffs))
{
  require(coeffs_.size() == spec_.size(), ErrorKind::shape_mismatch,
          "ConditionalDensity: one coefficient per basis function required");
}

double ConditionalDensity::operator()(double x) const
{
  std::vector<double> f(spec_.size());
  spec_.eval(x, f);
  double v = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    v += coeffs_[i] * f[i];
  return v;
}

double ConditionalDensity::expectation() const
{
  // x f_0 integrates to 1/2, x f_1 to 1/sqrt(12), higher f_k are orthogonal to x.
  const double first = coeffs_.size() > 1 ? coeffs_[1] : 0.0;
  return 0.5 + inv_sqrt_12 * first;
}

ConditionalDensity conditional_density(const HcrModel& model, const PartialAssignment& fixed)
{
  const std::size_t free_idx = free_coordinate(model, fixed);
  const BasisSpec& spec = model.spec();
  std::vector<double> x(fixed.size());
  for (std::size_t i = 0; i < fixed.size(); ++i)
    x[i] = i == free_idx ? 0.5 : *fixed[i];
  const auto table = basis_table(spec, x);

  std::vector<double> raw(spec.size(), 0.0);
  for (const auto& [j, a] : model.coeffs())
    raw[static_cast<std::size_t>(j[free_idx])] += a * product_except(j, table, spec.size(), free_idx);

  const double denom = raw[0];
  if (std::abs(denom) < singular_conditioning_threshold)
    fail(ErrorKind::singular, "conditional density: normalization contraction is ~0 at this point");
  for (double& c : raw)
    c /= denom;
  return ConditionalDensity(spec, std::move(raw));
}

double conditional_expectation(const HcrModel& model, const PartialAssignment& fixed)
{
  return conditional_density(model, fixed).expectation();
}

double entropy_approx(const HcrModel& model)
{
  double h = 0.0;
  for (const auto& [j, a] : model.coeffs())
    if (!j.is_zero())
      h -= a * a;
  return h;
}

double mutual_information_approx(const HcrModel& model, std::span<const int> block)
{
  require(block.size() == static_cast<std::size_t>(model.dim()), ErrorKind::invalid_argument,
          "mutual information: partition must label every coordinate");
  bool has0 = false;
  bool has1 = false;
  for (int b : block) {
    require(b == 0 || b == 1, ErrorKind::invalid_argument,
            "mutual information: block labels must be 0 or 1");
    has0 |= b == 0;
    has1 |= b == 1;
  }
  require(has0 && has1, ErrorKind::invalid_argument, "mutual information: both blocks must be nonempty");
  double mi = 0.0;
  for (const auto& [j, a] : model.coeffs()) {
    bool in0 = false;
    bool in1 = false;
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (j[i] == 0)
        continue;
      (block[i] == 0 ? in0 : in1) = true;
    }
    if (in0 && in1)
      mi += a * a;
  }
  return mi;
}

double KanReduction::evaluate(const BasisSpec& spec, std::span<const double> x) const
{
  require(x.size() == inputs.size(), ErrorKind::shape_mismatch,
          "KanReduction: one value per input coordinate required");
  std::vector<double> f(spec.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    spec.eval(x[i], f);
    for (std::size_t k = 0; k < f.size(); ++k)
      sum += functions[i][k] * f[k];
  }
  return sum;
}

KanReduction kan_reduce(const HcrModel& model, int output_coordinate)
{
  require(output_coordinate >= 0 && output_coordinate < model.dim(), ErrorKind::invalid_argument,
          "kan_reduce: output coordinate out of range");
  require(model.dim() >= 2, ErrorKind::invalid_argument, "kan_reduce: need at least one input");
  const auto out = static_cast<std::size_t>(output_coordinate);
  KanReduction r;
  r.output_coordinate = output_coordinate;
  std::vector<std::size_t> slot(static_cast<std::size_t>(model.dim()), 0);
  for (int i = 0; i < model.dim(); ++i) {
    if (i == output_coordinate)
      continue;
    slot[i] = r.inputs.size();
    r.inputs.push_back(i);
  }
  r.functions.assign(r.inputs.size(), std::vector<double>(model.spec().size(), 0.0));

  for (const auto& [j, a] : model.coeffs()) {
    if (j[out] != 1)
      continue;
    std::size_t others = j.nonzero_count() - 1;
    if (others > 1)
      fail(ErrorKind::not_exact,
           "kan_reduce: model has a triple-or-higher term on the output; reduction is not exact");
    if (others == 0) {
      // Constant a_{1,0..0}: appears once, credited to the first input's f_0.
      r.functions[0][0] += a;
      continue;
    }
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (i != out && j[i] != 0)
        r.functions[slot[i]][static_cast<std::size_t>(j[i])] += a;
    }
  }
  return r;
}

CalibratedGrid calibrate_density_2d(const HcrModel& model, double floor, int grid)
{
  require(model.dim() == 2, ErrorKind::invalid_argument, "calibrate_density_2d: model must be 2-D");
  require(grid >= 8, ErrorKind::invalid_argument, "calibrate_density_2d: grid must be >= 8");
  require(floor > 0.0, ErrorKind::invalid_argument, "calibrate_density_2d: floor must be > 0");
  CalibratedGrid out;
  out.grid = grid;
  out.floor = floor;
  out.values.resize(static_cast<std::size_t>(grid) * grid);
  const double h = 1.0 / (grid - 1);
  double integral = 0.0;
  for (int ix = 0; ix < grid; ++ix) {
    const double wx = (ix == 0 || ix == grid - 1) ? 0.5 : 1.0;
    for (int iy = 0; iy < grid; ++iy) {
      const double wy = (iy == 0 || iy == grid - 1) ? 0.5 : 1.0;
      const double pt[2] = {ix * h, iy * h};
      const double v = std::max(eval_density(model, pt), floor);
      out.values[static_cast<std::size_t>(ix) * grid + iy] = v;
      integral += wx * wy * v;
    }
  }
  integral *= h * h;
  out.normalizer = integral;
  for (double& v : out.values)
    v /= integral;
  return out;
}

double negative_density_fraction(const HcrModel& model, int grid)
{
  require(model.dim() == 2, ErrorKind::invalid_argument, "negative_density_fraction: model must be 2-D");
  require(grid >= 1, ErrorKind::invalid_argument, "negative_density_fraction: grid must be >= 1");
  std::size_t negative = 0;
  for (int ix = 0; ix < grid; ++ix) {
    for (int iy = 0; iy < grid; ++iy) {
      const double pt[2] = {(ix + 0.5) / grid, (iy + 0.5) / grid};
      if (eval_density(model, pt) < 0.0)
        ++negative;
    }
  }
  return static_cast<double>(negative) / (static_cast<double>(grid) * grid);
}

void save_hcr(const HcrModel& model, std::ostream& os)
{
  os << "hcr d=" << model.dim() << " degree=" << model.degree() << '\n';
  char buf[64];
  for (const auto& [j, a] : model.coeffs()) {
    for (int v : j.indices())
      os << v << ' ';
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, a);
    os.write(buf, end - buf);
    os << '\n';
  }
}

HcrModel load_hcr(std::istream& is)
{
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorKind::parse, "load_hcr: missing header");
  int dim = 0;
  int degree = -1;
  {
    std::istringstream hs(line);
    std::string tag, dtok, degtok;
    hs >> tag >> dtok >> degtok;
    if (tag != "hcr" || dtok.rfind("d=", 0) != 0 || degtok.rfind("degree=", 0) != 0)
      fail(ErrorKind::parse, "load_hcr: header must read 'hcr d=<dim> degree=<d>'");
    auto r1 = std::from_chars(dtok.data() + 2, dtok.data() + dtok.size(), dim);
    auto r2 = std::from_chars(degtok.data() + 7, degtok.data() + degtok.size(), degree);
    if (r1.ec != std::errc() || r2.ec != std::errc() || dim < 1 || degree < 0)
      fail(ErrorKind::parse, "load_hcr: bad header values");
  }
  HcrModel model(dim, degree);
  while (std::getline(is, line)) {
    if (line.empty())
      continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;)
      tok.push_back(t);
    if (tok.size() != static_cast<std::size_t>(dim) + 1)
      fail(ErrorKind::parse, "load_hcr: coefficient line has wrong field count: " + line);
    std::vector<int> idx(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) {
      auto r = std::from_chars(tok[i].data(), tok[i].data() + tok[i].size(), idx[i]);
      if (r.ec != std::errc() || r.ptr != tok[i].data() + tok[i].size() || idx[i] < 0)
        fail(ErrorKind::parse, "load_hcr: bad index in line: " + line);
    }
    double value = 0.0;
    const auto& vt = tok.back();
    auto r = std::from_chars(vt.data(), vt.data() + vt.size(), value);
    if (r.ec != std::errc() || r.ptr != vt.data() + vt.size())
      fail(ErrorKind::parse, "load_hcr: bad value in line: " + line);
    model.set_coeff(MultiIndex(std::move(idx)), value);
  }
  return model;
}

} // namespace cdfkan
