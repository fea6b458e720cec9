#include "cdfkan/cdfkan.h"

#include "cdfkan/data.hpp"
#include "cdfkan/error.hpp"
#include "cdfkan/hcr.hpp"
#include "cdfkan/kan.hpp"
#include "cdfkan/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <new>
#include <stdexcept>
#include <optional>
#include <string>
#include <utility>

struct cdfkan_dataset
{
  cdfkan::Dataset data;
};

struct cdfkan_network
{
  cdfkan::Network net;
};

struct cdfkan_hcr_model
{
  cdfkan::HcrModel model;
};

namespace {

thread_local std::string g_last_error;

cdfkan_status status_of(cdfkan::ErrorKind kind)
{
  using cdfkan::ErrorKind;
  switch (kind) {
    case ErrorKind::invalid_argument: return CDFKAN_ERR_INVALID_ARGUMENT;
    case ErrorKind::out_of_domain: return CDFKAN_ERR_OUT_OF_DOMAIN;
    case ErrorKind::shape_mismatch: return CDFKAN_ERR_SHAPE_MISMATCH;
    case ErrorKind::singular: return CDFKAN_ERR_SINGULAR;
    case ErrorKind::not_exact: return CDFKAN_ERR_NOT_EXACT;
    case ErrorKind::missing_cache: return CDFKAN_ERR_MISSING_CACHE;
    case ErrorKind::io: return CDFKAN_ERR_IO;
    case ErrorKind::bad_magic: return CDFKAN_ERR_BAD_MAGIC;
    case ErrorKind::truncated: return CDFKAN_ERR_TRUNCATED;
    case ErrorKind::count_mismatch: return CDFKAN_ERR_COUNT_MISMATCH;
    case ErrorKind::parse: return CDFKAN_ERR_PARSE;
  }
  return CDFKAN_ERR_INTERNAL;
}

cdfkan_status set_error(cdfkan_status s, std::string msg)
{
  g_last_error = std::move(msg);
  return s;
}

// Runs `fn`, translating exceptions into status codes.
template <class F>
cdfkan_status guarded(F&& fn) noexcept
{
  try {
    fn();
    g_last_error.clear();
    return CDFKAN_OK;
  } catch (const cdfkan::Error& e) {
    return set_error(status_of(e.kind()), e.what());
  } catch (const std::length_error& e) {
    return set_error(CDFKAN_ERR_BUFFER_TOO_SMALL, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(CDFKAN_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(CDFKAN_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(CDFKAN_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* what)
{
  if (!p)
    cdfkan::fail(cdfkan::ErrorKind::invalid_argument, std::string(what) + " is null");
}

void need_capacity(std::size_t have, std::size_t want)
{
  if (have < want)
    throw std::length_error("buffer too small: need " + std::to_string(want));
}

cdfkan::Variant to_variant(cdfkan_variant v)
{
  switch (v) {
    case CDFKAN_KAL_NET: return cdfkan::Variant::kal_net;
    case CDFKAN_CDFKAL_NET: return cdfkan::Variant::cdfkal_net;
    case CDFKAN_CDFKAL_NET_FIXEDNORM: return cdfkan::Variant::cdfkal_net_fixednorm;
    case CDFKAN_CDFKAL_SILU: return cdfkan::Variant::cdfkal_silu;
  }
  cdfkan::fail(cdfkan::ErrorKind::invalid_argument, "unknown variant");
}

cdfkan::MultiIndex to_index(const cdfkan_hcr_model* m, const int* index, std::size_t dim)
{
  need(index, "index");
  if (dim != static_cast<std::size_t>(m->model.dim()))
    cdfkan::fail(cdfkan::ErrorKind::shape_mismatch, "index length differs from model dimension");
  return cdfkan::MultiIndex(std::vector<int>(index, index + dim));
}

} // namespace

extern "C" {

const char* cdfkan_version(void)
{
  return CDFKAN_VERSION_STRING;
}

const char* cdfkan_last_error(void)
{
  return g_last_error.c_str();
}

const char* cdfkan_status_string(cdfkan_status status)
{
  switch (status) {
    case CDFKAN_OK: return "ok";
    case CDFKAN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CDFKAN_ERR_OUT_OF_DOMAIN: return "out of domain";
    case CDFKAN_ERR_SHAPE_MISMATCH: return "shape mismatch";
    case CDFKAN_ERR_SINGULAR: return "singular";
    case CDFKAN_ERR_NOT_EXACT: return "not exact";
    case CDFKAN_ERR_MISSING_CACHE: return "missing cache";
    case CDFKAN_ERR_IO: return "i/o error";
    case CDFKAN_ERR_BAD_MAGIC: return "bad magic number";
    case CDFKAN_ERR_TRUNCATED: return "truncated file";
    case CDFKAN_ERR_COUNT_MISMATCH: return "count mismatch";
    case CDFKAN_ERR_PARSE: return "parse error";
    case CDFKAN_ERR_BUFFER_TOO_SMALL: return "buffer too small";
    case CDFKAN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

// ---- datasets ---------------------------------------------------------------

cdfkan_status cdfkan_dataset_load_mnist(const char* images_path, const char* labels_path, cdfkan_dataset** out)
{
  return guarded([&] {
    need(images_path, "images_path");
    need(labels_path, "labels_path");
    need(out, "out");
    *out = new cdfkan_dataset{cdfkan::load_mnist_idx(images_path, labels_path)};
  });
}

cdfkan_status cdfkan_dataset_load_mnist_dir(const char* dir, int split, cdfkan_dataset** out)
{
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    if (split != 0 && split != 1)
      cdfkan::fail(cdfkan::ErrorKind::invalid_argument, "split must be 0 (train) or 1 (test)");
    const auto files = cdfkan::find_mnist_files(dir);
    *out = new cdfkan_dataset{split == 0 ? cdfkan::load_mnist_idx(files.train_images, files.train_labels)
                                         : cdfkan::load_mnist_idx(files.test_images, files.test_labels)};
  });
}

cdfkan_status cdfkan_dataset_from_arrays(const double* features, const int* labels, size_t rows, size_t cols,
                                         cdfkan_dataset** out)
{
  return guarded([&] {
    need(features, "features");
    need(out, "out");
    if (rows == 0 || cols == 0)
      cdfkan::fail(cdfkan::ErrorKind::invalid_argument, "dataset must be non-empty");
    cdfkan::Dataset d;
    d.features = Eigen::Map<const cdfkan::Matrix>(features, static_cast<Eigen::Index>(rows),
                                                  static_cast<Eigen::Index>(cols));
    if (labels)
      d.labels.assign(labels, labels + rows);
    d.name = "arrays";
    *out = new cdfkan_dataset{std::move(d)};
  });
}

cdfkan_status cdfkan_dataset_subset(const cdfkan_dataset* data, size_t n, uint64_t seed, cdfkan_dataset** out)
{
  return guarded([&] {
    need(data, "data");
    need(out, "out");
    *out = new cdfkan_dataset{cdfkan::subset(data->data, n, seed)};
  });
}

cdfkan_status cdfkan_dataset_sample_gaussian_2d(size_t n, const double cov[4], uint64_t seed, cdfkan_dataset** out)
{
  return guarded([&] {
    need(cov, "cov");
    need(out, "out");
    Eigen::Matrix2d c;
    c << cov[0], cov[1], cov[2], cov[3];
    *out = new cdfkan_dataset{cdfkan::sample_gaussian_2d(n, c, seed)};
  });
}

cdfkan_status cdfkan_dataset_sample_hcr(const cdfkan_hcr_model* model, size_t n, uint64_t seed,
                                        cdfkan_dataset** out, double* acceptance_rate)
{
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = new cdfkan_dataset{cdfkan::sample_hcr_density(model->model, n, seed, acceptance_rate)};
  });
}

cdfkan_status cdfkan_dataset_normalize(const cdfkan_dataset* data, cdfkan_column_norm kind, cdfkan_dataset** out)
{
  return guarded([&] {
    need(data, "data");
    need(out, "out");
    cdfkan::ColumnNorm k{};
    switch (kind) {
      case CDFKAN_NORM_MINMAX: k = cdfkan::ColumnNorm::minmax; break;
      case CDFKAN_NORM_EDF: k = cdfkan::ColumnNorm::edf; break;
      case CDFKAN_NORM_GAUSSIAN_CDF: k = cdfkan::ColumnNorm::gaussian_cdf; break;
      default: cdfkan::fail(cdfkan::ErrorKind::invalid_argument, "unknown normalization");
    }
    *out = new cdfkan_dataset{cdfkan::normalize_columns(data->data, k)};
  });
}

size_t cdfkan_dataset_rows(const cdfkan_dataset* data)
{
  return data ? data->data.rows() : 0;
}

size_t cdfkan_dataset_cols(const cdfkan_dataset* data)
{
  return data ? data->data.cols() : 0;
}

int cdfkan_dataset_has_labels(const cdfkan_dataset* data)
{
  return data && data->data.has_labels() ? 1 : 0;
}

cdfkan_status cdfkan_dataset_copy_features(const cdfkan_dataset* data, double* out, size_t capacity)
{
  return guarded([&] {
    need(data, "data");
    need(out, "out");
    const auto& f = data->data.features;
    need_capacity(capacity, static_cast<std::size_t>(f.size()));
    std::memcpy(out, f.data(), sizeof(double) * static_cast<std::size_t>(f.size()));
  });
}

cdfkan_status cdfkan_dataset_copy_labels(const cdfkan_dataset* data, int* out, size_t capacity)
{
  return guarded([&] {
    need(data, "data");
    need(out, "out");
    const auto& l = data->data.labels;
    if (l.empty())
      cdfkan::fail(cdfkan::ErrorKind::invalid_argument, "dataset has no labels");
    need_capacity(capacity, l.size());
    std::memcpy(out, l.data(), sizeof(int) * l.size());
  });
}

void cdfkan_dataset_free(cdfkan_dataset* data)
{
  delete data;
}

// ---- networks ---------------------------------------------------------------

const char* cdfkan_variant_name(cdfkan_variant variant)
{
  try {
    return cdfkan::variant_name(to_variant(variant)).data();
  } catch (...) {
    return "unknown";
  }
}

cdfkan_status cdfkan_variant_from_name(const char* name, cdfkan_variant* out)
{
  return guarded([&] {
    need(name, "name");
    need(out, "out");
    const auto v = cdfkan::parse_variant(name);
    if (!v)
      cdfkan::fail(cdfkan::ErrorKind::invalid_argument, std::string("unknown variant '") + name + "'");
    switch (*v) {
      case cdfkan::Variant::kal_net: *out = CDFKAN_KAL_NET; break;
      case cdfkan::Variant::cdfkal_net: *out = CDFKAN_CDFKAL_NET; break;
      case cdfkan::Variant::cdfkal_net_fixednorm: *out = CDFKAN_CDFKAL_NET_FIXEDNORM; break;
      case cdfkan::Variant::cdfkal_silu: *out = CDFKAN_CDFKAL_SILU; break;
    }
  });
}

cdfkan_status cdfkan_network_build(cdfkan_variant variant, const int* dims, size_t ndims, int degree, uint64_t seed,
                                   cdfkan_network** out)
{
  return guarded([&] {
    need(dims, "dims");
    need(out, "out");
    *out = new cdfkan_network{cdfkan::Network::build(to_variant(variant), std::span<const int>(dims, ndims),
                                                     degree, seed)};
  });
}

cdfkan_status cdfkan_network_trainable_params(const cdfkan_network* net, size_t* out)
{
  return guarded([&] {
    need(net, "net");
    need(out, "out");
    *out = net->net.trainable_parameter_count();
  });
}

size_t cdfkan_network_input_dim(const cdfkan_network* net)
{
  return net ? static_cast<size_t>(net->net.input_dim()) : 0;
}

size_t cdfkan_network_output_dim(const cdfkan_network* net)
{
  return net ? static_cast<size_t>(net->net.output_dim()) : 0;
}

size_t cdfkan_network_layer_count(const cdfkan_network* net)
{
  return net ? net->net.layer_count() : 0;
}

cdfkan_status cdfkan_network_forward(const cdfkan_network* net, const double* x, size_t batch, double* logits,
                                     size_t capacity)
{
  return guarded([&] {
    need(net, "net");
    need(x, "x");
    need(logits, "logits");
    const auto in = static_cast<Eigen::Index>(net->net.input_dim());
    const cdfkan::Matrix xm = Eigen::Map<const cdfkan::Matrix>(x, static_cast<Eigen::Index>(batch), in);
    const cdfkan::Matrix y = net->net.predict(xm);
    need_capacity(capacity, static_cast<std::size_t>(y.size()));
    std::memcpy(logits, y.data(), sizeof(double) * static_cast<std::size_t>(y.size()));
  });
}

cdfkan_status cdfkan_network_save(const cdfkan_network* net, const char* path)
{
  return guarded([&] {
    need(net, "net");
    need(path, "path");
    std::ofstream os(path);
    if (!os)
      cdfkan::fail(cdfkan::ErrorKind::io, std::string("cannot open ") + path + " for writing");
    cdfkan::save_network(net->net, os);
    if (!os)
      cdfkan::fail(cdfkan::ErrorKind::io, std::string("write failed: ") + path);
  });
}

cdfkan_status cdfkan_network_load(const char* path, cdfkan_network** out)
{
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    std::ifstream is(path);
    if (!is)
      cdfkan::fail(cdfkan::ErrorKind::io, std::string("cannot open ") + path);
    *out = new cdfkan_network{cdfkan::load_network(is)};
  });
}

void cdfkan_network_free(cdfkan_network* net)
{
  delete net;
}

// ---- training ---------------------------------------------------------------

void cdfkan_train_config_default(cdfkan_train_config* cfg)
{
  if (!cfg)
    return;
  const cdfkan::TrainConfig d;
  cfg->learning_rate = d.learning_rate;
  cfg->epochs = d.epochs;
  cfg->batch_size = d.batch_size;
  cfg->seed = d.seed;
}

cdfkan_status cdfkan_train(cdfkan_network* net, const cdfkan_dataset* train_set, const cdfkan_dataset* test_set,
                           const cdfkan_train_config* cfg, cdfkan_epoch_metrics* out, size_t capacity,
                           size_t* written, cdfkan_epoch_callback callback, void* user)
{
  if (written)
    *written = 0;
  return guarded([&] {
    need(net, "net");
    need(train_set, "train_set");
    need(test_set, "test_set");
    cdfkan::TrainConfig c;
    if (cfg) {
      c.learning_rate = cfg->learning_rate;
      c.epochs = cfg->epochs;
      c.batch_size = cfg->batch_size;
      c.seed = cfg->seed;
    }
    auto convert = [](const cdfkan::EpochMetrics& m) {
      return cdfkan_epoch_metrics{m.epoch, m.train_loss, m.test_loss, m.test_accuracy, m.wall_seconds};
    };
    cdfkan::EpochCallback cb;
    if (callback)
      cb = [&](const cdfkan::EpochMetrics& m) {
        const auto row = convert(m);
        callback(&row, user);
      };
    const auto metrics = cdfkan::train(net->net, train_set->data, test_set->data, c, cb);
    std::size_t n = 0;
    if (out)
      for (; n < metrics.size() && n < capacity; ++n)
        out[n] = convert(metrics[n]);
    if (written)
      *written = n;
  });
}

cdfkan_status cdfkan_evaluate(const cdfkan_network* net, const cdfkan_dataset* data, size_t batch_size,
                              double* loss, double* accuracy)
{
  return guarded([&] {
    need(net, "net");
    need(data, "data");
    const auto r = cdfkan::evaluate(net->net, data->data, batch_size);
    if (loss)
      *loss = r.loss;
    if (accuracy)
      *accuracy = r.accuracy;
  });
}

cdfkan_status cdfkan_grad_check(cdfkan_network* net, const cdfkan_dataset* batch, double tolerance,
                                cdfkan_gradcheck_entry* out, size_t capacity, size_t* written, int* all_passed)
{
  if (written)
    *written = 0;
  return guarded([&] {
    need(net, "net");
    need(batch, "batch");
    if (!batch->data.has_labels())
      cdfkan::fail(cdfkan::ErrorKind::invalid_argument, "grad check needs labels");
    const auto report = cdfkan::grad_check(net->net, batch->data.features, batch->data.labels, tolerance);
    std::size_t n = 0;
    if (out)
      for (; n < report.blocks.size() && n < capacity; ++n) {
        const auto& b = report.blocks[n];
        cdfkan_gradcheck_entry e{};
        std::strncpy(e.block, b.block.c_str(), sizeof(e.block) - 1);
        e.size = b.size;
        e.max_rel_error = b.max_rel_error;
        e.passed = b.passed ? 1 : 0;
        out[n] = e;
      }
    if (written)
      *written = n;
    if (all_passed)
      *all_passed = report.passed ? 1 : 0;
  });
}

cdfkan_status cdfkan_activation_histogram(const cdfkan_network* net, const cdfkan_dataset* data, size_t layer,
                                          int bins, size_t batch_size, double* mass_out)
{
  return guarded([&] {
    need(net, "net");
    need(data, "data");
    need(mass_out, "mass_out");
    const auto h = cdfkan::activation_histogram(net->net, data->data, layer, bins, batch_size);
    std::copy(h.mass.begin(), h.mass.end(), mass_out);
  });
}

// ---- HCR --------------------------------------------------------------------

cdfkan_status cdfkan_hcr_uniform(int dim, int degree, cdfkan_hcr_model** out)
{
  return guarded([&] {
    need(out, "out");
    *out = new cdfkan_hcr_model{cdfkan::HcrModel(dim, degree)};
  });
}

cdfkan_status cdfkan_hcr_fit(const cdfkan_dataset* data, int degree, cdfkan_basis_set basis, cdfkan_hcr_model** out)
{
  return guarded([&] {
    need(data, "data");
    need(out, "out");
    const int dim = static_cast<int>(data->data.cols());
    std::vector<cdfkan::MultiIndex> set;
    switch (basis) {
      case CDFKAN_BASIS_PAIRWISE: set = cdfkan::pairwise_basis_set(dim, degree); break;
      case CDFKAN_BASIS_FULL: set = cdfkan::full_basis_set(dim, degree); break;
      default: cdfkan::fail(cdfkan::ErrorKind::invalid_argument, "unknown basis set");
    }
    *out = new cdfkan_hcr_model{cdfkan::estimate_coefficients(data->data.features, set, degree)};
  });
}

int cdfkan_hcr_dim(const cdfkan_hcr_model* model)
{
  return model ? model->model.dim() : 0;
}

int cdfkan_hcr_degree(const cdfkan_hcr_model* model)
{
  return model ? model->model.degree() : 0;
}

cdfkan_status cdfkan_hcr_set_coeff(cdfkan_hcr_model* model, const int* index, size_t dim, double value)
{
  return guarded([&] {
    need(model, "model");
    model->model.set_coeff(to_index(model, index, dim), value);
  });
}

cdfkan_status cdfkan_hcr_get_coeff(const cdfkan_hcr_model* model, const int* index, size_t dim, double* value)
{
  return guarded([&] {
    need(model, "model");
    need(value, "value");
    *value = model->model.coeff(to_index(model, index, dim));
  });
}

cdfkan_status cdfkan_hcr_density(const cdfkan_hcr_model* model, const double* x, size_t dim, double* out)
{
  return guarded([&] {
    need(model, "model");
    need(x, "x");
    need(out, "out");
    *out = cdfkan::eval_density(model->model, std::span<const double>(x, dim));
  });
}

cdfkan_status cdfkan_hcr_conditional_expectation(const cdfkan_hcr_model* model, const double* fixed, size_t dim,
                                                 double* out)
{
  return guarded([&] {
    need(model, "model");
    need(fixed, "fixed");
    need(out, "out");
    cdfkan::PartialAssignment a(dim);
    for (std::size_t i = 0; i < dim; ++i)
      if (!std::isnan(fixed[i]))
        a[i] = fixed[i];
    *out = cdfkan::conditional_expectation(model->model, a);
  });
}

cdfkan_status cdfkan_hcr_entropy(const cdfkan_hcr_model* model, double* out)
{
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = cdfkan::entropy_approx(model->model);
  });
}

cdfkan_status cdfkan_hcr_mutual_information(const cdfkan_hcr_model* model, const int* block, size_t dim,
                                            double* out)
{
  return guarded([&] {
    need(model, "model");
    need(block, "block");
    need(out, "out");
    *out = cdfkan::mutual_information_approx(model->model, std::span<const int>(block, dim));
  });
}

cdfkan_status cdfkan_hcr_negative_fraction(const cdfkan_hcr_model* model, int grid, double* out)
{
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = cdfkan::negative_density_fraction(model->model, grid);
  });
}

cdfkan_status cdfkan_hcr_calibrate_2d(const cdfkan_hcr_model* model, double floor, int grid, double* values_out,
                                      double* normalizer)
{
  return guarded([&] {
    need(model, "model");
    const auto g = cdfkan::calibrate_density_2d(model->model, floor, grid);
    if (values_out)
      std::copy(g.values.begin(), g.values.end(), values_out);
    if (normalizer)
      *normalizer = g.normalizer;
  });
}

cdfkan_status cdfkan_hcr_save(const cdfkan_hcr_model* model, const char* path)
{
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    std::ofstream os(path);
    if (!os)
      cdfkan::fail(cdfkan::ErrorKind::io, std::string("cannot open ") + path + " for writing");
    cdfkan::save_hcr(model->model, os);
    if (!os)
      cdfkan::fail(cdfkan::ErrorKind::io, std::string("write failed: ") + path);
  });
}

cdfkan_status cdfkan_hcr_load(const char* path, cdfkan_hcr_model** out)
{
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    std::ifstream is(path);
    if (!is)
      cdfkan::fail(cdfkan::ErrorKind::io, std::string("cannot open ") + path);
    *out = new cdfkan_hcr_model{cdfkan::load_hcr(is)};
  });
}

void cdfkan_hcr_free(cdfkan_hcr_model* model)
{
  delete model;
}

} // extern "C"
