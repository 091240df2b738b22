#ifndef PARMIX_H
#define PARMIX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Initial clustering family for `parmix_config_set_init`.
typedef enum {
  PARMIX_INIT_KMEANS = 0,
  PARMIX_INIT_RANDOM = 1,
} ParmixInit;

// Acceptance rule for the cross-lane shuffle.
typedef enum {
  // Metropolis test on the cluster-size histogram ratio.
  PARMIX_RATIO_MODE_HISTOGRAM = 0,
  // Apply every proposed shuffle.
  PARMIX_RATIO_MODE_ALWAYS_ACCEPT = 1,
} ParmixRatioMode;

// Result of every call that can fail. Zero is success; anything else
// is an error with details behind `parmix_last_error`.
typedef enum {
  PARMIX_STATUS_OK = 0,
  // A required pointer argument was null.
  PARMIX_STATUS_NULL_ARGUMENT = 1,
  // Rejected configuration or argument value.
  PARMIX_STATUS_CONFIG = 2,
  PARMIX_STATUS_IO = 3,
  PARMIX_STATUS_PARSE = 4,
  // Input outside the model's domain.
  PARMIX_STATUS_DOMAIN = 5,
  // Internal invariant violation; indicates a bug in this library.
  PARMIX_STATUS_INVARIANT = 6,
  PARMIX_STATUS_CHECKPOINT = 7,
  // A panic was caught at the boundary.
  PARMIX_STATUS_PANIC = 8,
} ParmixStatus;

typedef struct ParmixConfig ParmixConfig;

typedef struct ParmixCorpus ParmixCorpus;

typedef struct ParmixDataset ParmixDataset;

typedef struct ParmixDpmmResult ParmixDpmmResult;

typedef struct ParmixHdpResult ParmixHdpResult;

// One trace row, flattened to plain fields. Optional quantities that a
// model does not produce are NaN (floats) or 0 (`t_total`).
typedef struct {
  uint64_t iter;
  double elapsed_ms;
  double local_ms;
  double global_ms;
  uint64_t num_clusters;
  double log_joint;
  double gamma;
  uint64_t t_total;
  bool accepted;
  double metric;
} ParmixTraceRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread. The pointer is
// valid until the next failing call on the same thread. Never null.
const char *parmix_last_error(void);

// Library version as a static C string.
const char *parmix_version(void);

// Wrap `len` points of `dims` doubles each (row-major, `len * dims`
// values). The values are copied.
ParmixStatus parmix_dataset_new(const double *values, size_t len, size_t dims, ParmixDataset **out);

size_t parmix_dataset_len(const ParmixDataset *data);

void parmix_dataset_free(ParmixDataset *data);

// Build a bag-of-words corpus. Document `i` owns the entries
// `offsets[i] .. offsets[i + 1]` of `words`/`counts`, so `offsets`
// holds `num_docs + 1` values ending at `num_entries`. Word ids must
// be below `vocab`, counts must be positive.
ParmixStatus parmix_corpus_new(const size_t *offsets,
                               size_t num_docs,
                               const uint32_t *words,
                               const uint32_t *counts,
                               size_t num_entries,
                               size_t vocab,
                               ParmixCorpus **out);

size_t parmix_corpus_num_docs(const ParmixCorpus *corpus);

void parmix_corpus_free(ParmixCorpus *corpus);

// Mixture-model configuration with a Gaussian likelihood of known
// variance `sigma2` and a `N(mu0, tau2)` prior on component means.
// Starts from a single cluster; see the setters for other options.
ParmixStatus parmix_config_dpmm_new(double alpha,
                                    size_t procs,
                                    uint64_t sweeps,
                                    uint64_t seed,
                                    double mu0,
                                    double tau2,
                                    double sigma2,
                                    ParmixConfig **out);

// Topic-model configuration with symmetric Dirichlet(`beta`) topics.
// `gamma_step` is the random-walk width of the concentration update.
ParmixStatus parmix_config_hdp_new(double alpha,
                                   double beta,
                                   double gamma_step,
                                   size_t procs,
                                   uint64_t sweeps,
                                   uint64_t seed,
                                   ParmixConfig **out);

// Replace the initial clustering (mixture models only).
ParmixStatus parmix_config_set_init(ParmixConfig *cfg, ParmixInit family, size_t clusters);

ParmixStatus parmix_config_set_ratio_mode(ParmixConfig *cfg, ParmixRatioMode mode);

// Run the cross-lane shuffle every `every` sweeps instead of every
// sweep.
ParmixStatus parmix_config_set_global_every(ParmixConfig *cfg, uint64_t every);

// Cap how many clusters each shuffle proposal relocates. Zero lifts
// the cap.
ParmixStatus parmix_config_set_max_move_clusters(ParmixConfig *cfg, size_t cap);

// Run lanes on the calling thread instead of a thread pool. The
// sampled chain is identical either way.
ParmixStatus parmix_config_set_serial(ParmixConfig *cfg, bool serial);

void parmix_config_free(ParmixConfig *cfg);

// Fit a mixture model. On success `*out` owns the result.
ParmixStatus parmix_dpmm_fit(const ParmixConfig *cfg,
                             const ParmixDataset *data,
                             ParmixDpmmResult **out);

// Fit a topic model. `test` may be null; when given, trace rows carry
// its per-token perplexity in `metric`.
ParmixStatus parmix_hdp_fit(const ParmixConfig *cfg,
                            const ParmixCorpus *corpus,
                            const ParmixCorpus *test,
                            ParmixHdpResult **out);

size_t parmix_dpmm_num_points(const ParmixDpmmResult *run);

size_t parmix_dpmm_num_clusters(const ParmixDpmmResult *run);

// Copy the final cluster label of every point into `out` (`len` must
// equal `parmix_dpmm_num_points`). Labels are dense ids from 0.
ParmixStatus parmix_dpmm_labels(const ParmixDpmmResult *run, uint64_t *out, size_t len);

size_t parmix_dpmm_trace_len(const ParmixDpmmResult *run);

ParmixStatus parmix_dpmm_trace_row(const ParmixDpmmResult *run, size_t index, ParmixTraceRow *out);

void parmix_dpmm_free(ParmixDpmmResult *run);

size_t parmix_hdp_num_topics(const ParmixHdpResult *run);

// Final concentration of the shared topic distribution.
double parmix_hdp_gamma(const ParmixHdpResult *run);

// Copy topic `topic`'s per-word counts into `out` (`len` must equal
// the corpus vocabulary size).
ParmixStatus parmix_hdp_topic_counts(const ParmixHdpResult *run,
                                     size_t topic,
                                     uint64_t *out,
                                     size_t len);

size_t parmix_hdp_trace_len(const ParmixHdpResult *run);

ParmixStatus parmix_hdp_trace_row(const ParmixHdpResult *run, size_t index, ParmixTraceRow *out);

void parmix_hdp_free(ParmixHdpResult *run);

// Pairwise F1 between two labelings of the same points. Label values
// are arbitrary; only co-membership matters.
ParmixStatus parmix_f1_score(const int64_t *pred, const int64_t *truth, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARMIX_H */
