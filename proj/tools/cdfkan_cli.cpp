// cdfkan command-line front end. Talks to the library only through the C API.
#include "cdfkan/cdfkan.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum Exit : int
{
  exit_ok = 0,
  exit_check_failed = 1,
  exit_usage = 2,
  exit_io = 3,
};

// Carries an exit code out of a command.
struct CliError
{
  int code;
  std::string message;
};

[[noreturn]] void usage_error(const std::string& msg)
{
  throw CliError{exit_usage, msg};
}

int exit_for(cdfkan_status s)
{
  switch (s) {
    case CDFKAN_ERR_IO:
    case CDFKAN_ERR_BAD_MAGIC:
    case CDFKAN_ERR_TRUNCATED:
    case CDFKAN_ERR_COUNT_MISMATCH:
    case CDFKAN_ERR_PARSE: return exit_io;
    case CDFKAN_ERR_INVALID_ARGUMENT:
    case CDFKAN_ERR_OUT_OF_DOMAIN: return exit_usage;
    default: return exit_check_failed;
  }
}

void check(cdfkan_status s, const char* what)
{
  if (s != CDFKAN_OK)
    throw CliError{exit_for(s), std::string(what) + ": " + cdfkan_last_error()};
}

struct DatasetDeleter
{
  void operator()(cdfkan_dataset* d) const { cdfkan_dataset_free(d); }
};
struct NetworkDeleter
{
  void operator()(cdfkan_network* n) const { cdfkan_network_free(n); }
};
struct HcrDeleter
{
  void operator()(cdfkan_hcr_model* m) const { cdfkan_hcr_free(m); }
};
using DatasetPtr = std::unique_ptr<cdfkan_dataset, DatasetDeleter>;
using NetworkPtr = std::unique_ptr<cdfkan_network, NetworkDeleter>;
using HcrPtr = std::unique_ptr<cdfkan_hcr_model, HcrDeleter>;

std::string utc_now()
{
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string num(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::ofstream open_out(const fs::path& p)
{
  std::ofstream os(p);
  if (!os)
    throw CliError{exit_io, "cannot write " + p.string()};
  return os;
}

void prepare_out(const fs::path& dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw CliError{exit_io, "cannot create " + dir.string() + ": " + ec.message()};
}

void write_json(const fs::path& p, const json& j)
{
  auto os = open_out(p);
  os << j.dump(2) << '\n';
}

// Manifest common to every command; callers add config/outputs.
struct Manifest
{
  json j;
  Manifest(const std::string& command, const std::vector<std::string>& argv)
  {
    j["command"] = command;
    j["argv"] = argv;
    j["version"] = cdfkan_version();
    j["started_utc"] = utc_now();
  }
  void finish(const fs::path& out)
  {
    j["finished_utc"] = utc_now();
    write_json(out / "manifest.json", j);
  }
};

cdfkan_variant parse_variant_or_usage(const std::string& name)
{
  cdfkan_variant v{};
  if (cdfkan_variant_from_name(name.c_str(), &v) != CDFKAN_OK)
    usage_error("unknown variant '" + name + "' (KAL_NET, CDFKAL_NET, CDFKAL_NET_FIXEDNORM, CDFKAL_SILU)");
  return v;
}

void check_degree(int d)
{
  if (d < 3 || d > 11)
    usage_error("degree must be in [3, 11], got " + std::to_string(d));
}

std::string default_data_dir()
{
  if (const char* env = std::getenv("CDFKAN_MNIST_DIR"); env && *env)
    return env;
  return "data/mnist";
}

// ---- shared MNIST training options -----------------------------------------

struct TrainOptions
{
  int epochs = 5;
  std::size_t train_n = 2000;
  std::size_t test_n = 1000;
  int batch = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::vector<int> hidden{64, 64};
  std::string data_dir = default_data_dir();
  bool full_scale = false;
  std::string out;
};

void add_train_flags(CLI::App* cmd, TrainOptions& o)
{
  cmd->add_option("--epochs", o.epochs, "training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--train-n", o.train_n, "training subset size")->check(CLI::PositiveNumber);
  cmd->add_option("--test-n", o.test_n, "test subset size")->check(CLI::PositiveNumber);
  cmd->add_option("--batch", o.batch, "mini-batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "seed for subsets, init and shuffling");
  cmd->add_option("--hidden", o.hidden, "hidden layer widths")->delimiter(',');
  cmd->add_option("--data-dir", o.data_dir, "MNIST directory (env CDFKAN_MNIST_DIR)");
  cmd->add_flag("--full-scale", o.full_scale, "20 epochs, 20000 train / 10000 test unless overridden");
  cmd->add_option("--out", o.out, "output directory")->required();
}

void apply_full_scale(CLI::App* cmd, TrainOptions& o)
{
  if (!o.full_scale)
    return;
  if (cmd->count("--epochs") == 0)
    o.epochs = 20;
  if (cmd->count("--train-n") == 0)
    o.train_n = 20000;
  if (cmd->count("--test-n") == 0)
    o.test_n = 10000;
}

json train_config_json(const TrainOptions& o)
{
  return {{"epochs", o.epochs},   {"train_n", o.train_n}, {"test_n", o.test_n},
          {"batch", o.batch},     {"lr", o.lr},           {"seed", o.seed},
          {"hidden", o.hidden},   {"data_dir", fs::absolute(o.data_dir).string()},
          {"full_scale", o.full_scale}};
}

struct MnistSplits
{
  DatasetPtr train, test;
};

MnistSplits load_splits(const TrainOptions& o)
{
  cdfkan_dataset* raw = nullptr;
  check(cdfkan_dataset_load_mnist_dir(o.data_dir.c_str(), 0, &raw), "loading MNIST train split");
  DatasetPtr full_train(raw);
  check(cdfkan_dataset_load_mnist_dir(o.data_dir.c_str(), 1, &raw), "loading MNIST test split");
  DatasetPtr full_test(raw);
  MnistSplits s;
  check(cdfkan_dataset_subset(full_train.get(), o.train_n, o.seed, &raw), "train subset");
  s.train.reset(raw);
  check(cdfkan_dataset_subset(full_test.get(), o.test_n, o.seed + 1, &raw), "test subset");
  s.test.reset(raw);
  return s;
}

std::vector<int> network_dims(const TrainOptions& o, std::size_t input_dim)
{
  std::vector<int> dims{static_cast<int>(input_dim)};
  dims.insert(dims.end(), o.hidden.begin(), o.hidden.end());
  dims.push_back(10);
  return dims;
}

struct RunResult
{
  std::vector<cdfkan_epoch_metrics> metrics;
  std::size_t params = 0;
};

RunResult run_one(cdfkan_variant v, int degree, const TrainOptions& o, const MnistSplits& data,
                  const fs::path& csv_path)
{
  const auto dims = network_dims(o, cdfkan_dataset_cols(data.train.get()));
  cdfkan_network* raw = nullptr;
  check(cdfkan_network_build(v, dims.data(), dims.size(), degree, o.seed, &raw), "building network");
  NetworkPtr net(raw);

  RunResult r;
  check(cdfkan_network_trainable_params(net.get(), &r.params), "parameter count");

  cdfkan_train_config cfg;
  cdfkan_train_config_default(&cfg);
  cfg.learning_rate = o.lr;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.seed = o.seed;

  struct Ctx
  {
    const char* variant;
    int degree;
  } ctx{cdfkan_variant_name(v), degree};
  auto progress = [](const cdfkan_epoch_metrics* m, void* user) {
    const auto* c = static_cast<const Ctx*>(user);
    std::fprintf(stderr, "%s d=%d epoch %d: train_loss %.4f test_loss %.4f test_acc %.4f (%.2fs)\n", c->variant,
                 c->degree, m->epoch, m->train_loss, m->test_loss, m->test_accuracy, m->wall_seconds);
  };

  r.metrics.resize(static_cast<std::size_t>(o.epochs));
  std::size_t written = 0;
  check(cdfkan_train(net.get(), data.train.get(), data.test.get(), &cfg, r.metrics.data(), r.metrics.size(),
                     &written, progress, &ctx),
        "training");
  r.metrics.resize(written);

  auto os = open_out(csv_path);
  os << "epoch,train_loss,test_loss,test_accuracy,wall_seconds\n";
  for (const auto& m : r.metrics)
    os << m.epoch << ',' << num(m.train_loss) << ',' << num(m.test_loss) << ',' << num(m.test_accuracy) << ','
       << num(m.wall_seconds) << '\n';
  return r;
}

std::string metrics_name(cdfkan_variant v, int degree)
{
  return std::string("metrics_") + cdfkan_variant_name(v) + "_d" + std::to_string(degree) + ".csv";
}

// ---- commands ---------------------------------------------------------------

int cmd_train(CLI::App* cmd, TrainOptions o, const std::string& variant_name, int degree,
              const std::vector<std::string>& argv)
{
  const auto v = parse_variant_or_usage(variant_name);
  check_degree(degree);
  apply_full_scale(cmd, o);
  const fs::path out(o.out);
  Manifest man("train", argv);
  const auto data = load_splits(o);
  prepare_out(out);

  const auto csv = metrics_name(v, degree);
  const auto r = run_one(v, degree, o, data, out / csv);

  auto cfg = train_config_json(o);
  cfg["variant"] = cdfkan_variant_name(v);
  cfg["degree"] = degree;
  man.j["config"] = cfg;
  man.j["seed"] = o.seed;
  man.j["trainable_params"] = r.params;
  man.j["outputs"] = {csv};
  man.finish(out);
  return exit_ok;
}

int cmd_sweep(CLI::App* cmd, TrainOptions o, std::vector<std::string> variants, std::vector<int> degrees,
              const std::vector<std::string>& argv)
{
  std::vector<cdfkan_variant> vs;
  for (const auto& n : variants)
    vs.push_back(parse_variant_or_usage(n));
  if (degrees.empty())
    usage_error("--degrees is empty");
  for (int d : degrees)
    check_degree(d);
  apply_full_scale(cmd, o);
  const fs::path out(o.out);
  Manifest man("sweep", argv);
  const auto data = load_splits(o);
  prepare_out(out);

  json outputs = json::array();
  json params = json::object();
  std::ostringstream table;
  table << "variant,degree,best_test_accuracy,total_wall_seconds\n";
  for (const auto v : vs)
    for (const int d : degrees) {
      const auto csv = metrics_name(v, d);
      const auto r = run_one(v, d, o, data, out / csv);
      double best = 0.0, total = 0.0;
      for (const auto& m : r.metrics) {
        best = std::max(best, m.test_accuracy);
        total += m.wall_seconds;
      }
      table << cdfkan_variant_name(v) << ',' << d << ',' << num(best) << ',' << num(total) << '\n';
      outputs.push_back(csv);
      params[std::string(cdfkan_variant_name(v)) + "_d" + std::to_string(d)] = r.params;
    }
  {
    auto os = open_out(out / "sweep.csv");
    os << table.str();
  }
  outputs.push_back("sweep.csv");

  auto cfg = train_config_json(o);
  cfg["variants"] = variants;
  cfg["degrees"] = degrees;
  man.j["config"] = cfg;
  man.j["seed"] = o.seed;
  man.j["trainable_params"] = params;
  man.j["outputs"] = outputs;
  man.finish(out);
  std::cout << table.str();
  return exit_ok;
}

struct HcrDemoOptions
{
  std::size_t n = 10000;
  int degree = 4;
  std::uint64_t seed = 0;
  std::vector<double> cov{3.0, 2.0, 2.0, 3.0};
  int grid = 50;
  int negative_grid = 200;
  double floor = 1e-3;
  std::string out;
};

json fit_report(const cdfkan_dataset* raw, cdfkan_column_norm norm, const HcrDemoOptions& o)
{
  cdfkan_dataset* tmp = nullptr;
  check(cdfkan_dataset_normalize(raw, norm, &tmp), "normalizing");
  DatasetPtr unit(tmp);
  cdfkan_hcr_model* mraw = nullptr;
  check(cdfkan_hcr_fit(unit.get(), o.degree, CDFKAN_BASIS_FULL, &mraw), "fitting HCR");
  HcrPtr model(mraw);

  double neg = 0.0, entropy = 0.0, mi = 0.0, normalizer = 0.0;
  const int block[2] = {0, 1};
  check(cdfkan_hcr_negative_fraction(model.get(), o.negative_grid, &neg), "negative fraction");
  check(cdfkan_hcr_entropy(model.get(), &entropy), "entropy");
  check(cdfkan_hcr_mutual_information(model.get(), block, 2, &mi), "mutual information");

  const auto g = static_cast<std::size_t>(o.grid);
  std::vector<double> calibrated(g * g);
  check(cdfkan_hcr_calibrate_2d(model.get(), o.floor, o.grid, calibrated.data(), &normalizer), "calibration");
  json raw_grid = json::array(), cal_grid = json::array();
  for (std::size_t ix = 0; ix < g; ++ix) {
    json raw_row = json::array(), cal_row = json::array();
    for (std::size_t iy = 0; iy < g; ++iy) {
      const double x[2] = {static_cast<double>(ix) / (g - 1), static_cast<double>(iy) / (g - 1)};
      double rho = 0.0;
      check(cdfkan_hcr_density(model.get(), x, 2, &rho), "density");
      raw_row.push_back(rho);
      cal_row.push_back(calibrated[ix * g + iy]);
    }
    raw_grid.push_back(raw_row);
    cal_grid.push_back(cal_row);
  }

  json coeffs = json::array();
  for (int j = 0; j <= o.degree; ++j)
    for (int k = 0; k <= o.degree; ++k) {
      const int idx[2] = {j, k};
      double a = 0.0;
      check(cdfkan_hcr_get_coeff(model.get(), idx, 2, &a), "coefficient");
      coeffs.push_back({{"j", j}, {"k", k}, {"a", a}});
    }

  return {{"negative_density_fraction", neg},
          {"entropy_approx", entropy},
          {"mutual_information_approx", mi},
          {"calibration_normalizer", normalizer},
          {"coefficients", coeffs},
          {"density_grid", raw_grid},
          {"calibrated_grid", cal_grid}};
}

int cmd_hcr_demo(const HcrDemoOptions& o, const std::vector<std::string>& argv)
{
  if (o.degree < 1 || o.degree > 11)
    usage_error("--degree must be in [1, 11]");
  if (o.cov.size() != 4)
    usage_error("--cov needs 4 comma-separated values");
  if (o.grid < 8)
    usage_error("--grid must be at least 8");
  const fs::path out(o.out);
  Manifest man("hcr-demo", argv);
  prepare_out(out);

  cdfkan_dataset* raw = nullptr;
  check(cdfkan_dataset_sample_gaussian_2d(o.n, o.cov.data(), o.seed, &raw), "sampling");
  DatasetPtr sample(raw);

  // independence control: under no dependence each of the K = degree^2 cross coefficients has
  // variance ~1/n, so the MI approximation has mean K/n and sd sqrt(2K)/n
  const double identity[4] = {1.0, 0.0, 0.0, 1.0};
  check(cdfkan_dataset_sample_gaussian_2d(o.n, identity, o.seed + 1, &raw), "sampling control");
  DatasetPtr control(raw);

  json report;
  report["n"] = o.n;
  report["degree"] = o.degree;
  report["covariance"] = o.cov;
  report["grid"] = o.grid;
  report["grid_nodes"] = "x_i = i/(grid-1); density_grid[ix][iy]";
  report["minmax"] = fit_report(sample.get(), CDFKAN_NORM_MINMAX, o);
  report["edf"] = fit_report(sample.get(), CDFKAN_NORM_EDF, o);
  {
    const auto c = fit_report(control.get(), CDFKAN_NORM_EDF, o);
    const double k = static_cast<double>(o.degree) * o.degree;
    const double n = static_cast<double>(o.n);
    report["independent_control"] = {{"mutual_information_approx", c["mutual_information_approx"]},
                                     {"null_mean", k / n},
                                     {"null_sd", std::sqrt(2.0 * k) / n}};
  }
  write_json(out / "hcr_demo.json", report);

  man.j["config"] = {{"n", o.n},         {"degree", o.degree}, {"cov", o.cov},
                     {"grid", o.grid},   {"negative_grid", o.negative_grid},
                     {"floor", o.floor}, {"seed", o.seed}};
  man.j["seed"] = o.seed;
  man.j["outputs"] = {"hcr_demo.json"};
  man.finish(out);

  std::printf("negative-density fraction: minmax %.4f, edf %.4f\n",
              report["minmax"]["negative_density_fraction"].get<double>(),
              report["edf"]["negative_density_fraction"].get<double>());
  return exit_ok;
}

struct GradcheckOptions
{
  double tolerance = 1e-4;
  int degree = 3;
  std::uint64_t seed = 0;
  std::size_t batch = 4;
  std::string out;
};

int cmd_gradcheck(const GradcheckOptions& o, const std::vector<std::string>& argv)
{
  check_degree(o.degree);
  if (!(o.tolerance > 0.0))
    usage_error("--tolerance must be positive");

  const int dims[3] = {6, 4, 3};
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal;
  std::vector<double> x(o.batch * dims[0]);
  for (auto& v : x)
    v = normal(rng);
  std::vector<int> labels(o.batch);
  for (std::size_t i = 0; i < o.batch; ++i)
    labels[i] = static_cast<int>(i % dims[2]);
  cdfkan_dataset* raw = nullptr;
  check(cdfkan_dataset_from_arrays(x.data(), labels.data(), o.batch, dims[0], &raw), "batch");
  DatasetPtr batch(raw);

  std::ostringstream report;
  report << "variant,block,size,max_rel_error,passed\n";
  bool all = true;
  const cdfkan_variant variants[] = {CDFKAN_KAL_NET, CDFKAN_CDFKAL_NET, CDFKAN_CDFKAL_NET_FIXEDNORM,
                                     CDFKAN_CDFKAL_SILU};
  for (const auto v : variants) {
    cdfkan_network* nraw = nullptr;
    check(cdfkan_network_build(v, dims, 3, o.degree, o.seed, &nraw), "building network");
    NetworkPtr net(nraw);
    std::vector<cdfkan_gradcheck_entry> entries(64);
    std::size_t written = 0;
    int passed = 0;
    check(cdfkan_grad_check(net.get(), batch.get(), o.tolerance, entries.data(), entries.size(), &written,
                            &passed),
          "grad check");
    all = all && passed;
    for (std::size_t i = 0; i < written; ++i) {
      const auto& e = entries[i];
      std::printf("%-22s %-22s %5zu  max_rel %.3e  %s\n", cdfkan_variant_name(v), e.block, e.size,
                  e.max_rel_error, e.passed ? "PASS" : "FAIL");
      report << cdfkan_variant_name(v) << ',' << e.block << ',' << e.size << ',' << num(e.max_rel_error) << ','
             << (e.passed ? 1 : 0) << '\n';
    }
  }
  std::printf("gradcheck %s at tolerance %g\n", all ? "PASSED" : "FAILED", o.tolerance);

  if (!o.out.empty()) {
    const fs::path out(o.out);
    Manifest man("gradcheck", argv);
    prepare_out(out);
    auto os = open_out(out / "gradcheck.csv");
    os << report.str();
    os.close();
    man.j["config"] = {{"tolerance", o.tolerance}, {"degree", o.degree}, {"batch", o.batch},
                       {"dims", {6, 4, 3}},        {"seed", o.seed}};
    man.j["seed"] = o.seed;
    man.j["passed"] = all;
    man.j["outputs"] = {"gradcheck.csv"};
    man.finish(out);
  }
  return all ? exit_ok : exit_check_failed;
}

struct HistogramOptions
{
  std::string variant = "CDFKAL_NET";
  int degree = 3;
  std::size_t layer = 0;
  int bins = 20;
  TrainOptions train;
};

int cmd_histogram(CLI::App* cmd, HistogramOptions o, const std::vector<std::string>& argv)
{
  const auto v = parse_variant_or_usage(o.variant);
  check_degree(o.degree);
  if (o.bins < 1)
    usage_error("--bins must be positive");
  auto& t = o.train;
  apply_full_scale(cmd, t);
  const fs::path out(t.out);
  Manifest man("histogram", argv);
  const auto data = load_splits(t);
  prepare_out(out);

  const auto dims = network_dims(t, cdfkan_dataset_cols(data.train.get()));
  cdfkan_network* raw = nullptr;
  check(cdfkan_network_build(v, dims.data(), dims.size(), o.degree, t.seed, &raw), "building network");
  NetworkPtr net(raw);
  if (o.layer >= cdfkan_network_layer_count(net.get()))
    usage_error("--layer out of range");
  if (cmd->count("--epochs") > 0) {
    cdfkan_train_config cfg;
    cdfkan_train_config_default(&cfg);
    cfg.learning_rate = t.lr;
    cfg.epochs = t.epochs;
    cfg.batch_size = t.batch;
    cfg.seed = t.seed;
    check(cdfkan_train(net.get(), data.train.get(), data.test.get(), &cfg, nullptr, 0, nullptr, nullptr, nullptr),
          "training");
  }

  std::vector<double> mass(static_cast<std::size_t>(o.bins));
  check(cdfkan_activation_histogram(net.get(), data.test.get(), o.layer, o.bins, static_cast<std::size_t>(t.batch),
                                    mass.data()),
        "histogram");
  auto os = open_out(out / "histogram.csv");
  os << "bin_lo,bin_hi,mass\n";
  double peak = 0.0;
  for (int b = 0; b < o.bins; ++b) {
    os << num(static_cast<double>(b) / o.bins) << ',' << num(static_cast<double>(b + 1) / o.bins) << ','
       << num(mass[b]) << '\n';
    peak = std::max(peak, mass[b]);
  }
  os.close();
  const double ratio = peak * o.bins;
  std::printf("%s layer %zu: max bin / uniform mass = %.3f\n", o.variant.c_str(), o.layer, ratio);

  auto cfg = train_config_json(t);
  cfg["variant"] = o.variant;
  cfg["degree"] = o.degree;
  cfg["layer"] = o.layer;
  cfg["bins"] = o.bins;
  cfg["trained_epochs"] = cmd->count("--epochs") > 0 ? t.epochs : 0;
  man.j["config"] = cfg;
  man.j["seed"] = t.seed;
  man.j["max_bin_ratio"] = ratio;
  man.j["outputs"] = {"histogram.csv"};
  man.finish(out);
  return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"CDF-normalized Legendre KAN and HCR density toolkit"};
  app.set_version_flag("--version", std::string(cdfkan_version()));
  app.require_subcommand(1);

  TrainOptions train_opts;
  std::string variant = "CDFKAL_NET";
  int degree = 3;
  auto* train = app.add_subcommand("train", "train one (variant, degree) pair on an MNIST subset");
  train->add_option("--variant", variant, "KAL_NET, CDFKAL_NET, CDFKAL_NET_FIXEDNORM or CDFKAL_SILU");
  train->add_option("--degree", degree, "Legendre degree, 3..11");
  add_train_flags(train, train_opts);

  TrainOptions sweep_opts;
  std::vector<std::string> sweep_variants{"KAL_NET", "CDFKAL_NET", "CDFKAL_NET_FIXEDNORM", "CDFKAL_SILU"};
  std::vector<int> sweep_degrees{3, 4, 5, 6, 7, 8, 9, 10, 11};
  auto* sweep = app.add_subcommand("sweep", "train variants across a degree list");
  sweep->add_option("--variants", sweep_variants, "variants to run")->delimiter(',');
  sweep->add_option("--degrees", sweep_degrees, "degrees to run")->delimiter(',');
  add_train_flags(sweep, sweep_opts);

  HcrDemoOptions hcr_opts;
  auto* hcr = app.add_subcommand("hcr-demo", "Gaussian 2D sample: MinMax vs EDF normalized HCR fits");
  hcr->add_option("--n", hcr_opts.n, "sample size")->check(CLI::PositiveNumber);
  hcr->add_option("--degree", hcr_opts.degree, "HCR degree per coordinate");
  hcr->add_option("--seed", hcr_opts.seed, "sampling seed");
  hcr->add_option("--cov", hcr_opts.cov, "row-major 2x2 covariance")->delimiter(',');
  hcr->add_option("--grid", hcr_opts.grid, "exported grid nodes per axis");
  hcr->add_option("--negative-grid", hcr_opts.negative_grid, "midpoint grid for the negative fraction")
    ->check(CLI::PositiveNumber);
  hcr->add_option("--floor", hcr_opts.floor, "calibration floor")->check(CLI::PositiveNumber);
  hcr->add_option("--out", hcr_opts.out, "output directory")->required();

  GradcheckOptions gc_opts;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check of every variant (6-4-3 net)");
  gc->add_option("--tolerance", gc_opts.tolerance, "relative error bound");
  gc->add_option("--degree", gc_opts.degree, "Legendre degree, 3..11");
  gc->add_option("--seed", gc_opts.seed, "seed for init and inputs");
  gc->add_option("--batch", gc_opts.batch, "batch rows")->check(CLI::PositiveNumber);
  gc->add_option("--out", gc_opts.out, "optional output directory");

  HistogramOptions hist_opts;
  auto* hist = app.add_subcommand("histogram", "post-normalization activation histogram of one layer");
  hist->add_option("--variant", hist_opts.variant, "network variant");
  hist->add_option("--degree", hist_opts.degree, "Legendre degree, 3..11");
  hist->add_option("--layer", hist_opts.layer, "layer index");
  hist->add_option("--bins", hist_opts.bins, "bins on [0,1]");
  add_train_flags(hist, hist_opts.train);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_usage;
  }

  try {
    if (*train)
      return cmd_train(train, train_opts, variant, degree, args);
    if (*sweep)
      return cmd_sweep(sweep, sweep_opts, sweep_variants, sweep_degrees, args);
    if (*hcr)
      return cmd_hcr_demo(hcr_opts, args);
    if (*gc)
      return cmd_gradcheck(gc_opts, args);
    if (*hist)
      return cmd_histogram(hist, hist_opts, args);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  }
  return exit_usage;
}
