/*
 * C interface to the cdfkan library: CDF/EDF normalization, HCR density models and
 * CDF-normalized Legendre KAN networks.
 *
 * Objects are opaque handles created by the build, load and fit calls and released
 * with the matching *_free. Every fallible call returns a cdfkan_status; on failure
 * cdfkan_last_error() holds a message for the calling thread.
 */
#ifndef CDFKAN_H
#define CDFKAN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CDFKAN_BUILDING_LIBRARY)
#    define CDFKAN_API __declspec(dllexport)
#  else
#    define CDFKAN_API __declspec(dllimport)
#  endif
#else
#  define CDFKAN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cdfkan_status {
  CDFKAN_OK = 0,
  CDFKAN_ERR_INVALID_ARGUMENT = 1,
  CDFKAN_ERR_OUT_OF_DOMAIN = 2,
  CDFKAN_ERR_SHAPE_MISMATCH = 3,
  CDFKAN_ERR_SINGULAR = 4,
  CDFKAN_ERR_NOT_EXACT = 5,
  CDFKAN_ERR_MISSING_CACHE = 6,
  CDFKAN_ERR_IO = 7,
  CDFKAN_ERR_BAD_MAGIC = 8,
  CDFKAN_ERR_TRUNCATED = 9,
  CDFKAN_ERR_COUNT_MISMATCH = 10,
  CDFKAN_ERR_PARSE = 11,
  CDFKAN_ERR_BUFFER_TOO_SMALL = 12,
  CDFKAN_ERR_INTERNAL = 99
} cdfkan_status;

typedef enum cdfkan_variant {
  CDFKAN_KAL_NET = 0,
  CDFKAN_CDFKAL_NET = 1,
  CDFKAN_CDFKAL_NET_FIXEDNORM = 2,
  CDFKAN_CDFKAL_SILU = 3
} cdfkan_variant;

typedef enum cdfkan_column_norm {
  CDFKAN_NORM_MINMAX = 0,
  CDFKAN_NORM_EDF = 1,
  CDFKAN_NORM_GAUSSIAN_CDF = 2
} cdfkan_column_norm;

typedef enum cdfkan_basis_set {
  CDFKAN_BASIS_PAIRWISE = 0,
  CDFKAN_BASIS_FULL = 1
} cdfkan_basis_set;

typedef struct cdfkan_dataset cdfkan_dataset;
typedef struct cdfkan_network cdfkan_network;
typedef struct cdfkan_hcr_model cdfkan_hcr_model;

CDFKAN_API const char* cdfkan_version(void);
CDFKAN_API const char* cdfkan_last_error(void);
CDFKAN_API const char* cdfkan_status_string(cdfkan_status status);

/* ---- datasets ---------------------------------------------------------- */

CDFKAN_API cdfkan_status cdfkan_dataset_load_mnist(const char* images_path, const char* labels_path,
                                                   cdfkan_dataset** out);
/* split: 0 = train files, 1 = t10k files; plain or .gz names are accepted. */
CDFKAN_API cdfkan_status cdfkan_dataset_load_mnist_dir(const char* dir, int split, cdfkan_dataset** out);
/* labels may be NULL for unlabeled data. */
CDFKAN_API cdfkan_status cdfkan_dataset_from_arrays(const double* features, const int* labels, size_t rows,
                                                    size_t cols, cdfkan_dataset** out);
CDFKAN_API cdfkan_status cdfkan_dataset_subset(const cdfkan_dataset* data, size_t n, uint64_t seed,
                                               cdfkan_dataset** out);
/* cov is row-major 2x2. */
CDFKAN_API cdfkan_status cdfkan_dataset_sample_gaussian_2d(size_t n, const double cov[4], uint64_t seed,
                                                           cdfkan_dataset** out);
CDFKAN_API cdfkan_status cdfkan_dataset_sample_hcr(const cdfkan_hcr_model* model, size_t n, uint64_t seed,
                                                   cdfkan_dataset** out, double* acceptance_rate);
CDFKAN_API cdfkan_status cdfkan_dataset_normalize(const cdfkan_dataset* data, cdfkan_column_norm kind,
                                                  cdfkan_dataset** out);
CDFKAN_API size_t cdfkan_dataset_rows(const cdfkan_dataset* data);
CDFKAN_API size_t cdfkan_dataset_cols(const cdfkan_dataset* data);
CDFKAN_API int cdfkan_dataset_has_labels(const cdfkan_dataset* data);
/* Row-major copy; capacity counts doubles (ints for labels). */
CDFKAN_API cdfkan_status cdfkan_dataset_copy_features(const cdfkan_dataset* data, double* out, size_t capacity);
CDFKAN_API cdfkan_status cdfkan_dataset_copy_labels(const cdfkan_dataset* data, int* out, size_t capacity);
CDFKAN_API void cdfkan_dataset_free(cdfkan_dataset* data);

/* ---- networks ---------------------------------------------------------- */

CDFKAN_API const char* cdfkan_variant_name(cdfkan_variant variant);
CDFKAN_API cdfkan_status cdfkan_variant_from_name(const char* name, cdfkan_variant* out);

/* dims = {n_0, ..., n_L}; degree in [3, 11]. */
CDFKAN_API cdfkan_status cdfkan_network_build(cdfkan_variant variant, const int* dims, size_t ndims, int degree,
                                              uint64_t seed, cdfkan_network** out);
CDFKAN_API cdfkan_status cdfkan_network_trainable_params(const cdfkan_network* net, size_t* out);
CDFKAN_API size_t cdfkan_network_input_dim(const cdfkan_network* net);
CDFKAN_API size_t cdfkan_network_output_dim(const cdfkan_network* net);
CDFKAN_API size_t cdfkan_network_layer_count(const cdfkan_network* net);
/* x: batch x input_dim row-major; logits: batch x output_dim. */
CDFKAN_API cdfkan_status cdfkan_network_forward(const cdfkan_network* net, const double* x, size_t batch,
                                                double* logits, size_t capacity);
CDFKAN_API cdfkan_status cdfkan_network_save(const cdfkan_network* net, const char* path);
CDFKAN_API cdfkan_status cdfkan_network_load(const char* path, cdfkan_network** out);
CDFKAN_API void cdfkan_network_free(cdfkan_network* net);

/* ---- training ---------------------------------------------------------- */

typedef struct cdfkan_train_config {
  double learning_rate;
  int epochs;
  int batch_size;
  uint64_t seed;
} cdfkan_train_config;

typedef struct cdfkan_epoch_metrics {
  int epoch;
  double train_loss;
  double test_loss;
  double test_accuracy;
  double wall_seconds;
} cdfkan_epoch_metrics;

typedef void (*cdfkan_epoch_callback)(const cdfkan_epoch_metrics* metrics, void* user);

/* lr 1e-3, 5 epochs, batch 128, seed 0 */
CDFKAN_API void cdfkan_train_config_default(cdfkan_train_config* cfg);
/* Writes up to `capacity` epoch rows to `out` (may be NULL); `written` receives the count. */
CDFKAN_API cdfkan_status cdfkan_train(cdfkan_network* net, const cdfkan_dataset* train_set,
                                      const cdfkan_dataset* test_set, const cdfkan_train_config* cfg,
                                      cdfkan_epoch_metrics* out, size_t capacity, size_t* written,
                                      cdfkan_epoch_callback callback, void* user);
CDFKAN_API cdfkan_status cdfkan_evaluate(const cdfkan_network* net, const cdfkan_dataset* data, size_t batch_size,
                                         double* loss, double* accuracy);

typedef struct cdfkan_gradcheck_entry {
  char block[64];
  size_t size;
  double max_rel_error;
  int passed;
} cdfkan_gradcheck_entry;

/* Central differences on the cross-entropy of the whole labeled `batch`. */
CDFKAN_API cdfkan_status cdfkan_grad_check(cdfkan_network* net, const cdfkan_dataset* batch, double tolerance,
                                           cdfkan_gradcheck_entry* out, size_t capacity, size_t* written,
                                           int* all_passed);

/* Pooled histogram of post-normalization inputs of `layer`; mass_out receives `bins` fractions. */
CDFKAN_API cdfkan_status cdfkan_activation_histogram(const cdfkan_network* net, const cdfkan_dataset* data,
                                                     size_t layer, int bins, size_t batch_size, double* mass_out);

/* ---- HCR density models ------------------------------------------------ */

CDFKAN_API cdfkan_status cdfkan_hcr_uniform(int dim, int degree, cdfkan_hcr_model** out);
/* Data must already lie in [0,1]. */
CDFKAN_API cdfkan_status cdfkan_hcr_fit(const cdfkan_dataset* data, int degree, cdfkan_basis_set basis,
                                        cdfkan_hcr_model** out);
CDFKAN_API int cdfkan_hcr_dim(const cdfkan_hcr_model* model);
CDFKAN_API int cdfkan_hcr_degree(const cdfkan_hcr_model* model);
CDFKAN_API cdfkan_status cdfkan_hcr_set_coeff(cdfkan_hcr_model* model, const int* index, size_t dim, double value);
CDFKAN_API cdfkan_status cdfkan_hcr_get_coeff(const cdfkan_hcr_model* model, const int* index, size_t dim,
                                              double* value);
CDFKAN_API cdfkan_status cdfkan_hcr_density(const cdfkan_hcr_model* model, const double* x, size_t dim,
                                            double* out);
/* Exactly one entry of `fixed` must be NaN: that coordinate is the free one. */
CDFKAN_API cdfkan_status cdfkan_hcr_conditional_expectation(const cdfkan_hcr_model* model, const double* fixed,
                                                            size_t dim, double* out);
CDFKAN_API cdfkan_status cdfkan_hcr_entropy(const cdfkan_hcr_model* model, double* out);
/* block[i] in {0,1} assigns coordinate i to X or Y. */
CDFKAN_API cdfkan_status cdfkan_hcr_mutual_information(const cdfkan_hcr_model* model, const int* block,
                                                       size_t dim, double* out);
CDFKAN_API cdfkan_status cdfkan_hcr_negative_fraction(const cdfkan_hcr_model* model, int grid, double* out);
/* values_out receives grid*grid values, row-major in x. */
CDFKAN_API cdfkan_status cdfkan_hcr_calibrate_2d(const cdfkan_hcr_model* model, double floor, int grid,
                                                 double* values_out, double* normalizer);
CDFKAN_API cdfkan_status cdfkan_hcr_save(const cdfkan_hcr_model* model, const char* path);
CDFKAN_API cdfkan_status cdfkan_hcr_load(const char* path, cdfkan_hcr_model** out);
CDFKAN_API void cdfkan_hcr_free(cdfkan_hcr_model* model);

#ifdef __cplusplus
}
#endif

#endif /* CDFKAN_H */
