#ifndef MEMENTUM_H
#define MEMENTUM_H

/* Generated from the Rust sources by cbindgen; edit src/lib.rs instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call. Zero is success; each failure class
// has its own negative code.
enum MementumStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  MEMENTUM_STATUS_OK = 0,
  // Malformed record in an input file.
  MEMENTUM_STATUS_ERR_PARSE = -1,
  // Input violates a domain rule (0 states, empty horizon, ...).
  MEMENTUM_STATUS_ERR_VALIDATION = -2,
  // Array or matrix dimensions do not fit together.
  MEMENTUM_STATUS_ERR_DIM = -3,
  // Numerical failure inside the sampler.
  MEMENTUM_STATUS_ERR_NUMERICAL = -4,
  // Invalid configuration value.
  MEMENTUM_STATUS_ERR_CONFIG = -5,
  // I/O or serialization failure.
  MEMENTUM_STATUS_ERR_IO = -6,
  // A required pointer argument was null.
  MEMENTUM_STATUS_ERR_NULL_POINTER = -7,
  // An internal invariant broke; the message holds the panic text.
  MEMENTUM_STATUS_ERR_PANIC = -8,
};
#ifndef __cplusplus
typedef int32_t MementumStatus;
#endif // __cplusplus

// Opaque detection result. Created by [`mementum_detect`]; read through the
// `mementum_report_*` accessors; released with [`mementum_report_free`].
typedef struct MementumReportHandle MementumReportHandle;

// Prior hyperparameters of the rank sampler. Obtain defaults from
// [`mementum_default_priors`] and override fields as needed.
typedef struct {
  // Variance of each static coefficient; exactly 0 pins them to zero.
  double v0;
  // Degrees of freedom of the inverse-Wishart prior on the noise
  // covariance (identity scale).
  double nu0;
  // Dirichlet weight on staying in the current rank state.
  double a_stay;
  // Dirichlet weight on each move to a different state.
  double a_move;
  // Inverse-gamma shape of the random-walk increment variances.
  double w_shape;
  // Inverse-gamma rate of the random-walk increment variances.
  double w_rate;
  // Variance of the factor paths' first point.
  double tau0_sq;
} MementumPriors;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on the calling thread, NUL-terminated
// UTF-8. Empty before the first failure; the pointer stays valid until the
// next failing call on the same thread.
const char *mementum_last_error(void);

// Library version as a static NUL-terminated string.
const char *mementum_version(void);

// Run the two-pair period detection pipeline.
//
// `pr_states` and `vol_states` hold the 1-based daily rank states of the
// price and volume pairs over the same `t_len`-day calendar, given in
// `epoch_days` as days since 1970-01-01 in strictly increasing order.
// `d_c`/`d_p`/`d_f`/`d_w` are the minimum span duration, the clean run
// required before a span, the maximum bridged fall, and the maximum start
// distance for matching spans across the pairs, all in trading days
// (defaults 2, 2, 1, 1). `filter_before_merge` flips the within-pair stage
// order; `false` is the default order (bridge falls, then filter spans).
//
// On success writes a heap-allocated report to `*out_report`; the caller
// owns it and must release it with [`mementum_report_free`].
MementumStatus mementum_detect(const uint8_t *pr_states,
                               const uint8_t *vol_states,
                               size_t t_len,
                               const int64_t *epoch_days,
                               size_t d_c,
                               size_t d_p,
                               size_t d_f,
                               size_t d_w,
                               bool filter_before_merge,
                               MementumReportHandle **out_report);

// Number of calendar days covered by the report; 0 when `report` is null.
size_t mementum_report_len(const MementumReportHandle *report);

// Number of accepted periods; 0 when `report` is null.
size_t mementum_report_n_periods(const MementumReportHandle *report);

// Inclusive day-index bounds of period `index`.
MementumStatus mementum_report_period(const MementumReportHandle *report,
                                      size_t index,
                                      size_t *out_start_day,
                                      size_t *out_end_day);

// Inclusive calendar bounds of period `index`, as days since 1970-01-01.
MementumStatus mementum_report_period_dates(const MementumReportHandle *report,
                                            size_t index,
                                            int64_t *out_start,
                                            int64_t *out_end);

// Copy the report calendar into `out_epoch_days` (`t_len` entries, days
// since 1970-01-01).
MementumStatus mementum_report_calendar(const MementumReportHandle *report,
                                        int64_t *out_epoch_days);

// Copy the per-day condition masks as 0/1 bytes. Each non-null output buffer
// must hold `t_len` bytes; null buffers are skipped.
//
// - `out_cond1`: both pairs cointegrated that day, after bridging;
// - `out_cond2`: day inside the union of a start-matched span pair;
// - `out_cond3`: both pairs inside spans surviving the duration and
//   persistence filters;
// - `out_period`: day inside an accepted period.
MementumStatus mementum_report_masks(const MementumReportHandle *report,
                                     uint8_t *out_cond1,
                                     uint8_t *out_cond2,
                                     uint8_t *out_cond3,
                                     uint8_t *out_period);

// Release a report. Null is tolerated; the handle must not be used after.
void mementum_report_free(MementumReportHandle *report);

// Default priors for an `n_series`-variable system.
MementumPriors mementum_default_priors(size_t n_series);

// Estimate the daily cointegration-rank posterior of one multivariate
// series by Gibbs sampling. The call blocks until the chain finishes.
//
// `y` is row-major `t_len x n_series`, one row per day, in log levels.
// `priors` may be null to use [`mementum_default_priors`]. The sampler runs
// `n_burnin + n_draws` sweeps seeded by `seed` and keeps every `thin`-th
// draw after burn-in.
//
// `out_map_states` (required, `t_len` bytes) receives the pointwise
// posterior-mode state per day, 1-based, ties resolved toward the lower
// state. `out_probs` (optional, row-major `t_len x (n_series + 1)`)
// receives the posterior probability of each state per day.
MementumStatus mementum_estimate_ranks(const double *y,
                                       size_t t_len,
                                       size_t n_series,
                                       const MementumPriors *priors,
                                       size_t n_draws,
                                       size_t n_burnin,
                                       size_t thin,
                                       uint64_t seed,
                                       uint8_t *out_map_states,
                                       double *out_probs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEMENTUM_H */
