#ifndef COVDETECT_H
#define COVDETECT_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CdStatus {
  CD_STATUS_OK = 0,
  CD_STATUS_NULL_POINTER = 1,
  CD_STATUS_INVALID_ARGUMENT = 2,
  CD_STATUS_NUMERICAL = 3,
  CD_STATUS_CONFIG = 4,
  CD_STATUS_CENSORED = 5,
  CD_STATUS_IO = 6,
  CD_STATUS_BUFFER_TOO_SMALL = 7,
  CD_STATUS_PANIC = 8,
} CdStatus;

/**
 * Parsed and validated experiment configuration.
 */
typedef struct CdConfig CdConfig;

/**
 * Known-covariance CUSUM fed one estimated channel at a time.
 */
typedef struct CdCusum CdCusum;

/**
 * Pre- and post-change channel laws for one angle shift.
 */
typedef struct CdExperiment CdExperiment;

/**
 * One-ring array geometry plus link budget.
 */
typedef struct CdScenarioParams {
  size_t tx_antennas;
  size_t rx_antennas;
  double aod_deg;
  double spread_deg;
  double wavelength_m;
  /**
   * 0 selects the default.
   */
  size_t quadrature_nodes;
  double delta_aod_deg;
  double tx_power_dbm;
  double distance_km;
  double bandwidth_hz;
  double noise_psd_dbm_hz;
  size_t pilot_len;
} CdScenarioParams;

typedef struct CdSweepParams {
  size_t trials_far;
  size_t trials_delay;
  size_t max_run_length;
  uint64_t seed;
  /**
   * 0 uses every core. Results do not depend on it.
   */
  size_t workers;
} CdSweepParams;

typedef struct CdTradeoffPoint {
  double theta;
  double far;
  double neg_log_far;
  double far_stderr;
  double cadd;
  double cadd_stderr;
  size_t censored;
} CdTradeoffPoint;

typedef struct CdCusumStep {
  double statistic;
  /**
   * 1-based interval where the maximizing window starts.
   */
  size_t candidate;
  size_t interval;
} CdCusumStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated) and returns its length without the terminator, or 0 when
 * there is no error. Pass a null `buf` to query the length.
 */
size_t cd_last_error_message(char *buf, size_t len);

/**
 * Static description of a status code.
 */
const char *cd_status_name(enum CdStatus status);

/**
 * Builds the channel laws described by `params`.
 */
enum CdStatus cd_experiment_new(const struct CdScenarioParams *params, struct CdExperiment **out);

void cd_experiment_free(struct CdExperiment *exp);

/**
 * Channel dimension `tx_antennas · rx_antennas`; 0 for a null handle.
 */
size_t cd_experiment_dim(const struct CdExperiment *exp);

/**
 * Log-determinant divergence of the post-change law from the pre-change law.
 */
enum CdStatus cd_experiment_divergence(const struct CdExperiment *exp, double *out);

/**
 * Known-covariance CUSUM threshold sweep. `points` must hold `n_thetas`
 * entries; `thetas` must be strictly increasing. Returns `Censored`, with
 * `points` still filled, when some threshold had every run censored.
 */
enum CdStatus cd_sweep_cusum(const struct CdExperiment *exp,
                             const struct CdSweepParams *params,
                             const double *thetas,
                             size_t n_thetas,
                             struct CdTradeoffPoint *points);

/**
 * Starts a CUSUM detector using the laws of `exp` (copied).
 */
enum CdStatus cd_cusum_new(const struct CdExperiment *exp, struct CdCusum **out);

void cd_cusum_free(struct CdCusum *det);

/**
 * Feeds one estimated channel given as `2·dim` interleaved real and
 * imaginary parts.
 */
enum CdStatus cd_cusum_push(struct CdCusum *det,
                            const double *channel,
                            size_t len,
                            struct CdCusumStep *out);

enum CdStatus cd_cusum_reset(struct CdCusum *det);

/**
 * Parses a configuration document.
 */
enum CdStatus cd_config_parse(const char *text, struct CdConfig **out);

void cd_config_free(struct CdConfig *cfg);

/**
 * Writes the normalized configuration into `buf`. `written` receives the
 * length without the NUL terminator; `BufferTooSmall` is returned when it
 * does not fit.
 */
enum CdStatus cd_config_to_toml(const struct CdConfig *cfg, char *buf, size_t len, size_t *written);

/**
 * Runs the configured task, writing artifacts to `output_dir`. `success`
 * is 0 when a sweep point had every run censored or a divergence check
 * failed.
 */
enum CdStatus cd_config_run(const struct CdConfig *cfg,
                            const char *output_dir,
                            size_t workers,
                            int32_t *success);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVDETECT_H */
