#ifndef VICTIMLOC_H
#define VICTIMLOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum VlTechnique {
  VL_TECHNIQUE_TOA_COOP = 0,
  VL_TECHNIQUE_TDOA_NONCOOP = 1,
  VL_TECHNIQUE_AOA_COOP = 2,
  VL_TECHNIQUE_RSSD_NONCOOP = 3,
  VL_TECHNIQUE_RSS_COOP_GD = 4,
  VL_TECHNIQUE_RSS_COOP_MM = 5,
  VL_TECHNIQUE_TOA_NONCOOP = 6,
} VlTechnique;

/**
 * Status code of every fallible call.
 */
typedef enum VlStatus {
  VL_STATUS_OK = 0,
  VL_STATUS_NULL_POINTER = 1,
  VL_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Configuration rejected; same class as CLI exit code 2.
   */
  VL_STATUS_CONFIG = 3,
  /**
   * Unmet precondition or degenerate geometry; CLI exit code 3.
   */
  VL_STATUS_PRECONDITION = 4,
  /**
   * I/O or serialization failure; CLI exit code 4.
   */
  VL_STATUS_RUNTIME = 5,
  VL_STATUS_PANIC = 6,
} VlStatus;

typedef enum VlSweepAxis {
  VL_SWEEP_AXIS_RESCUERS = 0,
  VL_SWEEP_AXIS_VICTIMS = 1,
} VlSweepAxis;

/**
 * Experiment configuration.
 */
typedef struct VlConfig VlConfig;

/**
 * Results of an experiment or a sweep.
 */
typedef struct VlResults VlResults;

/**
 * A drawn scenario with full connectivity.
 */
typedef struct VlScenario VlScenario;

/**
 * Channel model. Angles are in radians.
 */
typedef struct VlChannelParams {
  double ple;
  double sigma_shadow_db;
  double sigma_range_m;
  double sigma_angle_rad;
  double ref_loss_db;
  double ref_dist_m;
  double prop_speed_mps;
} VlChannelParams;

/**
 * One row of a results table. `sweep_value` is -1 outside sweeps.
 */
typedef struct VlResultRow {
  enum VlTechnique technique;
  int64_t sweep_value;
  double nrmse_m;
  double runtime_mean_s;
  double runtime_total_s;
  double convergence_rate;
  uint64_t trials;
  uint64_t excluded_trials;
  uint64_t seed;
} VlResultRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *vl_last_error(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *vl_version(void);

/**
 * CLI name of a technique, a static NUL-terminated string.
 */
const char *vl_technique_name(enum VlTechnique technique);

void vl_string_free(char *s);

struct VlChannelParams vl_channel_default(void);

struct VlChannelParams vl_channel_noiseless(void);

/**
 * Default configuration: 5 victims, 10 rescuers, 100 m square, 3000 trials.
 */
enum VlStatus vl_config_default(struct VlConfig **out);

/**
 * Parses a TOML document; unspecified keys take their defaults.
 */
enum VlStatus vl_config_from_toml(const char *toml, struct VlConfig **out);

enum VlStatus vl_config_to_toml(const struct VlConfig *cfg, char **out);

void vl_config_free(struct VlConfig *cfg);

enum VlStatus vl_config_set_trials(struct VlConfig *cfg, uint64_t trials);

enum VlStatus vl_config_set_seed(struct VlConfig *cfg, uint64_t seed);

/**
 * Worker threads; 0 uses every core.
 */
enum VlStatus vl_config_set_parallelism(struct VlConfig *cfg, uint64_t workers);

enum VlStatus vl_config_set_counts(struct VlConfig *cfg, uint64_t victims, uint64_t rescuers);

enum VlStatus vl_config_set_channel(struct VlConfig *cfg, const struct VlChannelParams *params);

/**
 * Replaces the technique list.
 */
enum VlStatus vl_config_set_techniques(struct VlConfig *cfg,
                                       const enum VlTechnique *techniques,
                                       size_t count);

/**
 * Sets the sweep axis and values (ascending). `count == 0` uses the
 * axis defaults.
 */
enum VlStatus vl_config_set_sweep(struct VlConfig *cfg,
                                  enum VlSweepAxis axis,
                                  const uint64_t *values,
                                  size_t count);

enum VlStatus vl_run_experiment(const struct VlConfig *cfg, struct VlResults **out);

enum VlStatus vl_run_sweep(const struct VlConfig *cfg, struct VlResults **out);

void vl_results_free(struct VlResults *results);

/**
 * Number of rows across every experiment; 0 for NULL.
 */
size_t vl_results_row_count(const struct VlResults *results);

enum VlStatus vl_results_row(const struct VlResults *results,
                             size_t index,
                             struct VlResultRow *out);

enum VlStatus vl_results_to_csv(const struct VlResults *results, char **out);

enum VlStatus vl_results_to_json(const struct VlResults *results, char **out);

/**
 * Draws a scenario in the `[0, area_m]` square.
 */
enum VlStatus vl_scenario_generate(uint64_t victims,
                                   uint64_t rescuers,
                                   double area_m,
                                   uint64_t seed,
                                   struct VlScenario **out);

void vl_scenario_free(struct VlScenario *scenario);

size_t vl_scenario_victim_count(const struct VlScenario *scenario);

size_t vl_scenario_rescuer_count(const struct VlScenario *scenario);

/**
 * Writes the true position of victim `index`.
 */
enum VlStatus vl_scenario_victim(const struct VlScenario *scenario,
                                 size_t index,
                                 double *x,
                                 double *y);

enum VlStatus vl_scenario_rescuer(const struct VlScenario *scenario,
                                  size_t index,
                                  double *x,
                                  double *y);

enum VlStatus vl_scenario_to_json(const struct VlScenario *scenario, char **out);

/**
 * Synthesizes one trial of `technique` on `scenario` and solves it.
 *
 * `xy` receives `2 * victim_count` coordinates (`x0, y0, x1, ...`); a
 * victim whose solve failed gets NaN. `converged` may be NULL.
 */
enum VlStatus vl_solve_trial(const struct VlScenario *scenario,
                             enum VlTechnique technique,
                             const struct VlChannelParams *params,
                             uint64_t trial_index,
                             uint64_t master_seed,
                             double *xy,
                             size_t xy_len,
                             bool *converged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VICTIMLOC_H */
