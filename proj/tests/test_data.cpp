#include "cdfkan/data.hpp"
#include "cdfkan/error.hpp"
#include "oracles.hpp"

#include <doctest.h>
#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace cdfkan;
namespace fs = std::filesystem;

namespace {

void put_be32(std::vector<unsigned char>& out, std::uint32_t v)
{
  for (int s = 24; s >= 0; s -= 8)
    out.push_back(static_cast<unsigned char>(v >> s));
}

std::vector<unsigned char> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                      std::uint32_t magic = 0x00000803)
{
  std::vector<unsigned char> b;
  put_be32(b, magic);
  put_be32(b, n);
  put_be32(b, rows);
  put_be32(b, cols);
  for (std::uint32_t i = 0; i < n * rows * cols; ++i)
    b.push_back(static_cast<unsigned char>((i * 37) % 256));
  return b;
}

std::vector<unsigned char> idx_labels(std::uint32_t n, std::uint32_t magic = 0x00000801)
{
  std::vector<unsigned char> b;
  put_be32(b, magic);
  put_be32(b, n);
  for (std::uint32_t i = 0; i < n; ++i)
    b.push_back(static_cast<unsigned char>(i % 10));
  return b;
}

struct TempDir
{
  fs::path path;
  TempDir()
  {
    path = fs::temp_directory_path() / ("cdfkan_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::vector<unsigned char>& bytes) const
  {
    const auto p = path / name;
    std::ofstream os(p, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return p;
  }
  fs::path write_gz(const std::string& name, const std::vector<unsigned char>& bytes) const
  {
    const auto p = path / name;
    gzFile f = gzopen(p.c_str(), "wb");
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    return p;
  }
};

ErrorKind kind_of(auto&& fn)
{
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::invalid_argument;
}

} // namespace

TEST_CASE("IDX loading and validation")
{
  TempDir t;
  const auto img = t.write("img", idx_images(12, 2, 3));
  const auto lab = t.write("lab", idx_labels(12));
  const auto d = load_mnist_idx(img, lab);
  CHECK(d.rows() == 12);
  CHECK(d.cols() == 6);
  CHECK(d.features(0, 1) == doctest::Approx(37.0 / 255.0));
  CHECK(d.features.minCoeff() >= 0.0);
  CHECK(d.features.maxCoeff() <= 1.0);
  CHECK(d.labels[11] == 1);

  const auto gi = t.write_gz("img.gz", idx_images(12, 2, 3));
  const auto gl = t.write_gz("lab.gz", idx_labels(12));
  const auto dz = load_mnist_idx(gi, gl);
  CHECK((dz.features.array() == d.features.array()).all());
  CHECK(dz.labels == d.labels);

  CHECK(kind_of([&] { load_mnist_idx(t.write("bad", idx_images(12, 2, 3, 0x00000804)), lab); }) ==
        ErrorKind::bad_magic);
  CHECK(kind_of([&] { load_mnist_idx(img, t.write("badl", idx_labels(12, 0x00000803))); }) ==
        ErrorKind::bad_magic);
  auto cut = idx_images(12, 2, 3);
  cut.resize(cut.size() - 5);
  CHECK(kind_of([&] { load_mnist_idx(t.write("cut", cut), lab); }) == ErrorKind::truncated);
  CHECK(kind_of([&] { load_mnist_idx(img, t.write("lab11", idx_labels(11))); }) == ErrorKind::count_mismatch);
  CHECK(kind_of([&] { load_mnist_idx(t.path / "missing", lab); }) == ErrorKind::io);
  auto high = idx_labels(12);
  high.back() = 10;
  CHECK(kind_of([&] { load_mnist_idx(img, t.write("high", high)); }) == ErrorKind::parse);

  // directory discovery: plain or .gz, either naming style
  t.write_gz("train-images-idx3-ubyte.gz", idx_images(4, 2, 2));
  t.write("train-labels.idx1-ubyte", idx_labels(4));
  t.write("t10k-images-idx3-ubyte", idx_images(3, 2, 2));
  t.write("t10k-labels-idx1-ubyte", idx_labels(3));
  const auto files = find_mnist_files(t.path);
  CHECK(load_mnist_idx(files.train_images, files.train_labels).rows() == 4);
  CHECK(load_mnist_idx(files.test_images, files.test_labels).rows() == 3);
  CHECK_THROWS_AS(find_mnist_files(t.path / "nowhere"), Error);
}

TEST_CASE("MNIST files" * doctest::skip(oracle::mnist_dir().empty()))
{
  const auto files = find_mnist_files(oracle::mnist_dir());
  const auto train = load_mnist_idx(files.train_images, files.train_labels);
  CHECK(train.rows() == 60000);
  CHECK(train.cols() == 784);
  CHECK(train.features.minCoeff() == 0.0);
  CHECK(train.features.maxCoeff() == 1.0);
  const std::set<int> classes(train.labels.begin(), train.labels.end());
  CHECK(classes.size() == 10);
  CHECK(*classes.begin() == 0);
  CHECK(*classes.rbegin() == 9);
  const auto test = load_mnist_idx(files.test_images, files.test_labels);
  CHECK(test.rows() == 10000);

  const auto s = subset(train, 2000, 0);
  CHECK(s.rows() == 2000);
}

TEST_CASE("subset")
{
  Dataset d;
  d.features = Matrix(10, 1);
  for (int i = 0; i < 10; ++i)
    d.features(i, 0) = i;
  d.labels = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto all = subset(d, 10, 4);
  std::multiset<int> seen(all.labels.begin(), all.labels.end());
  CHECK(seen == std::multiset<int>(d.labels.begin(), d.labels.end()));
  for (int i = 0; i < 10; ++i)
    CHECK(all.features(i, 0) == all.labels[i]);
  const auto a = subset(d, 4, 7), b = subset(d, 4, 7);
  CHECK(a.labels == b.labels);
  CHECK((a.features.array() == b.features.array()).all());
  CHECK_THROWS_AS(subset(d, 11, 0), Error);
}

TEST_CASE("Gaussian 2D sampler")
{
  Eigen::Matrix2d cov;
  cov << 3, 2, 2, 3;
  const auto s = sample_gaussian_2d(100000, cov, 1);
  const Eigen::RowVector2d mean = s.features.colwise().mean();
  const Matrix c = s.features.rowwise() - mean;
  const Eigen::Matrix2d sc = (c.transpose() * c) / (s.rows() - 1.0);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(mean(i)) < 3 * std::sqrt(3.0 / s.rows()));
    for (int j = 0; j < 2; ++j)
      CHECK(std::abs(sc(i, j) - cov(i, j)) < 0.05 * cov(i, j));
  }

  const auto ind = sample_gaussian_2d(100000, Eigen::Matrix2d::Identity(), 2);
  const Matrix ci = ind.features.rowwise() - ind.features.colwise().mean();
  const double r = ci.col(0).dot(ci.col(1)) / (ci.col(0).norm() * ci.col(1).norm());
  CHECK(std::abs(r) < 0.02);

  for (std::size_t n : {100u, 1000u, 10000u})
    CHECK(sample_gaussian_2d(n, cov, 0).rows() == n);

  Eigen::Matrix2d notpd;
  notpd << 1, 2, 2, 1;
  CHECK_THROWS_AS(sample_gaussian_2d(10, notpd, 0), Error);
  Eigen::Matrix2d asym;
  asym << 2, 1, 0, 2;
  CHECK_THROWS_AS(sample_gaussian_2d(10, asym, 0), Error);
}

TEST_CASE("HCR density sampler")
{
  double rate = 0.0;
  const auto u = sample_hcr_density(HcrModel(2, 2), 10000, 3, &rate);
  CHECK(rate == doctest::Approx(1 / 1.1).epsilon(0.02));
  for (int c = 0; c < 2; ++c) {
    std::vector<double> col(u.rows());
    for (std::size_t i = 0; i < u.rows(); ++i)
      col[i] = u.features(static_cast<Eigen::Index>(i), c);
    CHECK(oracle::ks_uniform(col) < 0.02);
  }

  HcrModel dep(2, 2);
  dep.set_coeff({1, 1}, 0.5);
  dep.set_coeff({2, 0}, 0.25);
  dep.set_coeff({0, 2}, 0.25);
  // envelope is 1.1 x the grid maximum and proposals are uniform, so acceptance = 1 / envelope
  double max_rho = 0.0;
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; j <= 100; ++j) {
      const double x = i / 100.0, y = j / 100.0;
      max_rho = std::max(max_rho, 1 + 0.5 * oracle::f(1, x) * oracle::f(1, y) +
                                    0.25 * (oracle::f(2, x) + oracle::f(2, y)));
    }
  sample_hcr_density(dep, 20000, 4, &rate);
  const double expect = 1.0 / (1.1 * max_rho);
  CHECK(std::abs(rate - expect) < 4 * std::sqrt(expect * (1 - expect) / (20000 / expect)));

  HcrModel neg(2, 1);
  neg.set_coeff({1, 1}, 0.5);  // 1 + 0.5 f1 f1 dips to -0.5 at the corners
  CHECK_THROWS_AS(sample_hcr_density(neg, 10, 0), Error);
  CHECK_THROWS_AS(sample_hcr_density(HcrModel(3, 1), 10, 0), Error);
  const auto one_d = sample_hcr_density(HcrModel(1, 1), 50, 0);
  CHECK(one_d.cols() == 1);
}

TEST_CASE("column normalization")
{
  Eigen::Matrix2d cov;
  cov << 3, 2, 2, 3;
  const auto s = sample_gaussian_2d(1000, cov, 5);
  for (auto k : {ColumnNorm::minmax, ColumnNorm::edf, ColumnNorm::gaussian_cdf}) {
    const auto n = normalize_columns(s, k);
    CHECK(n.features.minCoeff() >= 0.0);
    CHECK(n.features.maxCoeff() <= 1.0);
  }
  const auto e = normalize_columns(s, ColumnNorm::edf);
  CHECK(e.features.col(0).minCoeff() == doctest::Approx(0.5 / 1000));
  const auto m = normalize_columns(s, ColumnNorm::minmax);
  CHECK(m.features.col(1).minCoeff() == 0.0);
  CHECK(m.features.col(1).maxCoeff() == 1.0);
}

TEST_CASE("histograms")
{
  const double vals[] = {0.0, 0.2, 0.5, 1.0};
  const auto h1 = histogram_unit(vals, 1);
  REQUIRE(h1.mass.size() == 1);
  CHECK(h1.mass[0] == 1.0);
  CHECK(h1.max_bin_ratio() == 1.0);
  const auto h4 = histogram_unit(vals, 4);
  CHECK(h4.edges.size() == 5);
  CHECK(h4.mass[3] == 0.25);  // 1.0 falls into the last bin
  CHECK(h4.mass[0] == 0.5);
  CHECK(h4.max_bin_ratio() == 2.0);
  CHECK_THROWS_AS(histogram_unit(vals, 0), Error);
  const double outside[] = {1.5};
  CHECK_THROWS_AS(histogram_unit(outside, 3), Error);

  // cdf variant, deeper layer, Gaussian-ish inputs: close to uniform
  Dataset g;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  g.features = Matrix(512, 16);
  for (Eigen::Index i = 0; i < g.features.size(); ++i)
    g.features.data()[i] = nd(rng);
  const int dims[] = {16, 12, 8, 4};
  const auto net = Network::build(Variant::cdfkal_net, dims, 3, 1);
  CHECK(activation_histogram(net, g, 1, 20).max_bin_ratio() < 3.0);
  const auto per = activation_histogram_per_feature(net, g, 1, 20);
  CHECK(per.size() == 12);
  CHECK_THROWS_AS(activation_histogram(net, g, 3, 20), Error);
}

TEST_CASE("MinMax layer 0 on MNIST is far from uniform" * doctest::skip(oracle::mnist_dir().empty()))
{
  const auto files = find_mnist_files(oracle::mnist_dir());
  const auto test = subset(load_mnist_idx(files.test_images, files.test_labels), 1000, 1);
  const int dims[] = {784, 64, 64, 10};
  const auto kal = Network::build(Variant::kal_net, dims, 3, 0);
  CHECK(activation_histogram(kal, test, 0, 20).max_bin_ratio() > 5.0);
}
