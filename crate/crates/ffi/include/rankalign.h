#ifndef RANKALIGN_H
#define RANKALIGN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RaStatus {
  RA_STATUS_OK = 0,
  RA_STATUS_NULL_ARGUMENT = 1,
  RA_STATUS_INVALID_UTF8 = 2,
  RA_STATUS_DOMAIN = 3,
  RA_STATUS_RESOURCE = 4,
  RA_STATUS_LOOKUP = 5,
  RA_STATUS_DATA = 6,
  RA_STATUS_PARSE = 7,
  RA_STATUS_CONFIG = 8,
  RA_STATUS_METRIC = 9,
  RA_STATUS_NON_FINITE = 10,
  RA_STATUS_IO = 11,
  RA_STATUS_PANIC = 12,
} RaStatus;

typedef enum RaMethod {
  RA_METHOD_KPO = 0,
  RA_METHOD_SDPO = 1,
} RaMethod;

typedef enum RaSplit {
  RA_SPLIT_TRAIN = 0,
  RA_SPLIT_VALID = 1,
  RA_SPLIT_TEST = 2,
} RaSplit;

/**
 * Opaque dataset handle.
 */
typedef struct RaDataset RaDataset;

/**
 * Opaque policy table handle.
 */
typedef struct RaPolicy RaPolicy;

typedef struct RaMetrics {
  double hr_at_1;
  double hr_at_5;
  double hr_at_10;
  double ndcg_at_5;
  double ndcg_at_10;
  uintptr_t n_instances;
  uintptr_t n_hr_eligible;
  uintptr_t n_idcg_zero;
} RaMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *ra_last_error(void);

/**
 * Library version as a static string.
 */
const char *ra_version(void);

/**
 * # Safety
 * `values` must point to `len` readable doubles and `out` to a writable double.
 */
enum RaStatus ra_logsumexp(const double *values, uintptr_t len, double *out);

double ra_log_sigmoid(double z);

/**
 * K-order Plackett-Luce probability of `rewards`, given in ranked order.
 *
 * # Safety
 * `rewards` must point to `len` readable doubles and `out` to a writable double.
 */
enum RaStatus ra_korder_prob(const double *rewards, uintptr_t len, uintptr_t k, double *out);

/**
 * Same probability by summing the full-order model over tail permutations.
 *
 * # Safety
 * As [`ra_korder_prob`].
 */
enum RaStatus ra_korder_prob_bruteforce(const double *rewards,
                                        uintptr_t len,
                                        uintptr_t k,
                                        double *out);

/**
 * KPO loss of rewards given head first, then tail. When `grad` is not null it
 * receives `len` partial derivatives with respect to the pre-softmax
 * parameters of a policy realizing these rewards against a uniform reference.
 *
 * # Safety
 * `rewards` must point to `len` readable doubles, `value` to a writable
 * double and `grad`, if not null, to `len` writable doubles.
 */
enum RaStatus ra_kpo_loss(const double *rewards,
                          uintptr_t len,
                          uintptr_t k,
                          double beta,
                          double *value,
                          double *grad);

/**
 * Optimal-policy weight ratio `w_l / w_k` for 0-based positions `l < k`.
 *
 * # Safety
 * `alphas` must point to `len` readable doubles and `out` to a writable double.
 */
enum RaStatus ra_w_ratio(const double *alphas,
                         uintptr_t len,
                         double beta,
                         uintptr_t l,
                         uintptr_t k,
                         enum RaMethod method,
                         double *out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable handle slot.
 */
enum RaStatus ra_dataset_read(const char *path_, struct RaDataset **out);

/**
 * Synthetic dataset with default settings apart from the given sizes and seed.
 *
 * # Safety
 * `out` must be a writable handle slot.
 */
enum RaStatus ra_dataset_generate(uintptr_t n_queries,
                                  uintptr_t m_candidates,
                                  uint64_t seed,
                                  struct RaDataset **out);

/**
 * # Safety
 * `dataset` must be a live handle and `path` a NUL-terminated string.
 */
enum RaStatus ra_dataset_write(const struct RaDataset *dataset, const char *path_);

/**
 * Number of instances; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
uintptr_t ra_dataset_len(const struct RaDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void ra_dataset_free(struct RaDataset *dataset);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable handle slot.
 */
enum RaStatus ra_policy_read(const char *path_, struct RaPolicy **out);

/**
 * # Safety
 * `policy` must be a live handle and `path` a NUL-terminated string.
 */
enum RaStatus ra_policy_write(const struct RaPolicy *policy, const char *path_);

/**
 * Policy whose parameters are the dataset's reference logits.
 *
 * # Safety
 * `dataset` must be a live handle and `out` a writable handle slot.
 */
enum RaStatus ra_policy_from_ref_logits(const struct RaDataset *dataset, struct RaPolicy **out);

/**
 * Supervised fine-tuning with default settings apart from `epochs` and `lr`.
 *
 * # Safety
 * `dataset` must be a live handle and `out` a writable handle slot.
 */
enum RaStatus ra_policy_sft(const struct RaDataset *dataset,
                            uintptr_t epochs,
                            double lr,
                            struct RaPolicy **out);

/**
 * # Safety
 * `policy` must be null or a handle not yet freed.
 */
void ra_policy_free(struct RaPolicy *policy);

/**
 * HR and NDCG of `policy` on one split.
 *
 * # Safety
 * Both handles must be live and `out` writable.
 */
enum RaStatus ra_evaluate(const struct RaPolicy *policy,
                          const struct RaDataset *dataset,
                          enum RaSplit split,
                          struct RaMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RANKALIGN_H */
