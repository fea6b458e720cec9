#include "cdfkan/data.hpp"

#include "cdfkan/error.hpp"
#include "cdfkan/normalize.hpp"

#include <Eigen/Cholesky>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace cdfkan {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t idx_images_magic = 0x00000803;
constexpr std::uint32_t idx_labels_magic = 0x00000801;

std::vector<unsigned char> read_maybe_gz(const fs::path& path)
{
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f)
    fail(ErrorKind::io, "cannot open " + path.string());
  std::vector<unsigned char> bytes;
  std::array<unsigned char, 1 << 16> buf{};
  while (true) {
    const int got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (got < 0) {
      gzclose(f);
      // zlib reports a damaged stream this way; the file is cut short or corrupted.
      fail(ErrorKind::truncated, "read error (corrupt or truncated gzip stream) in " + path.string());
    }
    if (got == 0)
      break;
    bytes.insert(bytes.end(), buf.begin(), buf.begin() + got);
  }
  gzclose(f);
  return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off)
{
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

struct IdxFile
{
  std::vector<std::uint32_t> dims;
  std::vector<unsigned char> bytes;
  std::size_t payload_offset = 0;
};

IdxFile parse_idx(const fs::path& path, std::uint32_t magic)
{
  IdxFile f;
  f.bytes = read_maybe_gz(path);
  if (f.bytes.size() < 4)
    fail(ErrorKind::truncated, "IDX header truncated: " + path.string());
  const std::uint32_t got = be32(f.bytes, 0);
  if (got != magic) {
    char msg[96];
    std::snprintf(msg, sizeof msg, "bad IDX magic 0x%08x (expected 0x%08x) in ", got, magic);
    fail(ErrorKind::bad_magic, msg + path.string());
  }
  const std::size_t ndims = magic & 0xffu;
  if (f.bytes.size() < 4 + 4 * ndims)
    fail(ErrorKind::truncated, "IDX dimension header truncated: " + path.string());
  std::size_t payload = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    f.dims.push_back(be32(f.bytes, 4 + 4 * i));
    payload *= f.dims.back();
  }
  f.payload_offset = 4 + 4 * ndims;
  if (f.bytes.size() < f.payload_offset + payload)
    fail(ErrorKind::truncated, "IDX payload shorter than its header declares: " + path.string());
  return f;
}

fs::path find_one(const fs::path& dir, std::initializer_list<const char*> names)
{
  for (const char* n : names) {
    for (const char* ext : {"", ".gz"}) {
      fs::path p = dir / (std::string(n) + ext);
      if (fs::exists(p))
        return p;
    }
  }
  fail(ErrorKind::io, "MNIST file '" + std::string(*names.begin()) + "' not found under " + dir.string());
}

} // namespace

Dataset Dataset::select(std::span<const std::size_t> rows) const
{
  Dataset out;
  out.name = name;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  if (has_labels())
    out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < this->rows(), ErrorKind::invalid_argument, "Dataset::select: row out of range");
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    if (has_labels())
      out.labels[i] = labels[rows[i]];
  }
  return out;
}

Dataset load_mnist_idx(const fs::path& images, const fs::path& labels)
{
  const IdxFile img = parse_idx(images, idx_images_magic);
  const IdxFile lab = parse_idx(labels, idx_labels_magic);
  const std::size_t n = img.dims[0];
  if (lab.dims[0] != n)
    fail(ErrorKind::count_mismatch, "MNIST image count " + std::to_string(n) + " != label count " +
                                      std::to_string(lab.dims[0]));
  const std::size_t f = std::size_t(img.dims[1]) * img.dims[2];

  Dataset d;
  d.name = "mnist:" + images.filename().string();
  d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
  const unsigned char* px = img.bytes.data() + img.payload_offset;
  for (std::size_t i = 0; i < n * f; ++i)
    d.features.data()[i] = px[i] / 255.0;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int v = lab.bytes[lab.payload_offset + i];
    if (v > 9)
      fail(ErrorKind::parse, "MNIST label out of range 0..9 in " + labels.string());
    d.labels[i] = v;
  }
  return d;
}

MnistFiles find_mnist_files(const fs::path& dir)
{
  MnistFiles m;
  m.train_images = find_one(dir, {"train-images-idx3-ubyte", "train-images.idx3-ubyte"});
  m.train_labels = find_one(dir, {"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"});
  m.test_images = find_one(dir, {"t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"});
  m.test_labels = find_one(dir, {"t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"});
  return m;
}

Dataset subset(const Dataset& data, std::size_t n, std::uint64_t seed)
{
  require(n <= data.rows(), ErrorKind::invalid_argument, "subset: n exceeds dataset size");
  std::vector<std::size_t> idx(data.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  return data.select(idx);
}

Dataset sample_gaussian_2d(std::size_t n, const Eigen::Matrix2d& covariance, std::uint64_t seed)
{
  require(std::abs(covariance(0, 1) - covariance(1, 0)) <= 1e-12 * covariance.cwiseAbs().maxCoeff(),
          ErrorKind::invalid_argument, "sample_gaussian_2d: covariance must be symmetric");
  Eigen::LLT<Eigen::Matrix2d> llt(covariance);
  if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().array() > 0.0).all())
    fail(ErrorKind::invalid_argument, "sample_gaussian_2d: covariance is not positive definite");
  const Eigen::Matrix2d l = llt.matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Dataset d;
  d.name = "gaussian2d";
  d.features.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d z(normal(rng), normal(rng));
    d.features.row(static_cast<Eigen::Index>(i)) = (l * z).transpose();
  }
  return d;
}

Dataset sample_hcr_density(const HcrModel& model, std::size_t n, std::uint64_t seed, double* acceptance_rate)
{
  const int dim = model.dim();
  require(dim <= 2, ErrorKind::invalid_argument, "sample_hcr_density: only d <= 2 is supported");

  // Flattened coefficients for a tight inner loop.
  const std::size_t k = model.spec().size();
  std::vector<std::array<int, 2>> idx;
  std::vector<double> coef;
  for (const auto& [j, a] : model.coeffs()) {
    idx.push_back({j[0], dim == 2 ? j[1] : 0});
    coef.push_back(a);
  }
  std::vector<double> fx(k), fy(k, 0.0);
  fy[0] = 1.0;
  auto density = [&](double x, double y) {
    model.spec().eval(x, fx);
    if (dim == 2)
      model.spec().eval(y, fy);
    double rho = 0.0;
    for (std::size_t c = 0; c < coef.size(); ++c)
      rho += coef[c] * fx[idx[c][0]] * fy[idx[c][1]];
    return rho;
  };

  constexpr int grid = 101;
  double top = 0.0;
  for (int ix = 0; ix < grid; ++ix) {
    for (int iy = 0; iy < (dim == 2 ? grid : 1); ++iy) {
      const double v = density(ix / double(grid - 1), iy / double(grid - 1));
      if (v < 0.0)
        fail(ErrorKind::out_of_domain, "sample_hcr_density: model density is negative on the grid");
      top = std::max(top, v);
    }
  }
  const double envelope = 1.1 * top;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset d;
  d.name = "hcr_sample";
  d.features.resize(static_cast<Eigen::Index>(n), dim);
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  while (accepted < n) {
    const double x = unit(rng);
    const double y = dim == 2 ? unit(rng) : 0.0;
    const double t = envelope * unit(rng);
    ++proposals;
    if (t < density(x, y)) {
      d.features(static_cast<Eigen::Index>(accepted), 0) = x;
      if (dim == 2)
        d.features(static_cast<Eigen::Index>(accepted), 1) = y;
      ++accepted;
    }
  }
  if (acceptance_rate)
    *acceptance_rate = proposals ? double(accepted) / double(proposals) : 0.0;
  return d;
}

Dataset normalize_columns(const Dataset& data, ColumnNorm kind)
{
  require(data.rows() > 0, ErrorKind::invalid_argument, "normalize_columns: empty dataset");
  Dataset out = data;
  switch (kind) {
    case ColumnNorm::minmax:
      out.features = minmax_normalize(data.features);
      break;
    case ColumnNorm::gaussian_cdf:
      out.features = cdf_normalize(data.features, batch_stats(data.features));
      break;
    case ColumnNorm::edf: {
      std::vector<double> col(data.rows());
      for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
        for (std::size_t i = 0; i < col.size(); ++i)
          col[i] = data.features(static_cast<Eigen::Index>(i), j);
        const auto v = edf_transform(col);
        for (std::size_t i = 0; i < col.size(); ++i)
          out.features(static_cast<Eigen::Index>(i), j) = v[i];
      }
      break;
    }
  }
  return out;
}

double Histogram::max_bin_ratio() const
{
  if (mass.empty())
    return 0.0;
  return *std::max_element(mass.begin(), mass.end()) * static_cast<double>(mass.size());
}

Histogram histogram_unit(std::span<const double> values, int bins)
{
  require(bins >= 1, ErrorKind::invalid_argument, "histogram: bins must be >= 1");
  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i)
    h.edges[i] = double(i) / bins;
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    require(v >= 0.0 && v <= 1.0, ErrorKind::out_of_domain, "histogram: value outside [0,1]");
    const auto b = std::min(static_cast<std::size_t>(v * bins), static_cast<std::size_t>(bins - 1));
    ++counts[b];
  }
  h.count = values.size();
  h.mass.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    h.mass[i] = h.count ? double(counts[i]) / double(h.count) : 0.0;
  return h;
}

namespace {

Matrix collect_activations(const Network& net, const Dataset& data, std::size_t layer_index,
                           std::size_t batch_size)
{
  require(layer_index < net.layer_count(), ErrorKind::invalid_argument,
          "activation_histogram: layer index out of range");
  require(batch_size >= 1 && data.rows() > 0, ErrorKind::invalid_argument,
          "activation_histogram: empty data or zero batch");
  Matrix all(static_cast<Eigen::Index>(data.rows()), net.layer(layer_index).in_dim());
  for (std::size_t start = 0; start < data.rows(); start += batch_size) {
    const auto len = static_cast<Eigen::Index>(std::min(batch_size, data.rows() - start));
    const Matrix batch = data.features.middleRows(static_cast<Eigen::Index>(start), len);
    all.middleRows(static_cast<Eigen::Index>(start), len) = net.normalized_activations(batch, layer_index);
  }
  return all;
}

} // namespace

Histogram activation_histogram(const Network& net, const Dataset& data, std::size_t layer_index, int bins,
                               std::size_t batch_size)
{
  const Matrix u = collect_activations(net, data, layer_index, batch_size);
  return histogram_unit(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())), bins);
}

std::vector<Histogram> activation_histogram_per_feature(const Network& net, const Dataset& data,
                                                        std::size_t layer_index, int bins,
                                                        std::size_t batch_size)
{
  const Matrix u = collect_activations(net, data, layer_index, batch_size);
  std::vector<Histogram> out;
  std::vector<double> col(static_cast<std::size_t>(u.rows()));
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    for (Eigen::Index i = 0; i < u.rows(); ++i)
      col[i] = u(i, j);
    out.push_back(histogram_unit(col, bins));
  }
  return out;
}

} // namespace cdfkan
