#ifndef RASIM_H
#define RASIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RasimPolicyKind {
  RASIM_POLICY_KIND_RANDOM = 0,
  RASIM_POLICY_KIND_UNIFORM = 1,
  RASIM_POLICY_KIND_PROPORTIONAL = 2,
  /**
   * Needs an agent handle.
   */
  RASIM_POLICY_KIND_AGENT = 3,
} RasimPolicyKind;

typedef enum RasimStatus {
  RASIM_STATUS_OK = 0,
  RASIM_STATUS_NULL_POINTER = 1,
  RASIM_STATUS_INVALID_STRING = 2,
  RASIM_STATUS_CONFIG = 3,
  RASIM_STATUS_ARGUMENT = 4,
  RASIM_STATUS_CONTRACT = 5,
  RASIM_STATUS_TOO_LARGE = 6,
  RASIM_STATUS_DIVERGED = 7,
  RASIM_STATUS_PARSE = 8,
  RASIM_STATUS_IO = 9,
  RASIM_STATUS_OUT_OF_RANGE = 10,
  RASIM_STATUS_PANIC = 11,
} RasimStatus;

typedef struct RasimAgent RasimAgent;

typedef struct RasimConfig RasimConfig;

typedef struct RasimReport RasimReport;

typedef struct RasimScenario RasimScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *rasim_last_error_message(void);

/**
 * Static, NUL-terminated version string.
 */
const char *rasim_version(void);

/**
 * The bundled reference configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RasimStatus rasim_config_reference(struct RasimConfig **out_config);

/**
 * Parses a TOML config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_config` a valid pointer.
 */
enum RasimStatus rasim_config_from_path(const char *path, struct RasimConfig **out_config);

/**
 * Overrides the number of training episodes per type.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum RasimStatus rasim_config_set_training_episodes(struct RasimConfig *config, uint32_t episodes);

/**
 * # Safety
 * `config` must be null or a handle from this library, freed once.
 */
void rasim_config_free(struct RasimConfig *config);

/**
 * Builds the topology and weights for a config.
 *
 * # Safety
 * `config` must be a live handle and `out_scenario` a valid pointer.
 */
enum RasimStatus rasim_scenario_new(const struct RasimConfig *config,
                                    struct RasimScenario **out_scenario);

/**
 * # Safety
 * `scenario` must be a live handle and the out pointers valid.
 */
enum RasimStatus rasim_scenario_shape(const struct RasimScenario *scenario,
                                      size_t *out_servers,
                                      size_t *out_reservations,
                                      size_t *out_types);

/**
 * # Safety
 * `scenario` must be null or a handle from this library, freed once.
 */
void rasim_scenario_free(struct RasimScenario *scenario);

/**
 * Trains agents with the config's learner settings.
 *
 * # Safety
 * Handles must be live and `out_agent` valid.
 */
enum RasimStatus rasim_train(const struct RasimConfig *config,
                             const struct RasimScenario *scenario,
                             uint64_t seed,
                             struct RasimAgent **out_agent);

/**
 * Loads a checkpoint and checks it against the scenario.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `scenario` live, `out_agent` valid.
 */
enum RasimStatus rasim_agent_load(const char *path,
                                  const struct RasimScenario *scenario,
                                  struct RasimAgent **out_agent);

/**
 * # Safety
 * Handles must be live and `path` a NUL-terminated string.
 */
enum RasimStatus rasim_agent_save(const struct RasimAgent *agent,
                                  const struct RasimScenario *scenario,
                                  const char *path);

/**
 * # Safety
 * `agent` must be null or a handle from this library, freed once.
 */
void rasim_agent_free(struct RasimAgent *agent);

/**
 * Runs `episodes` episodes with seeds `seed, seed + 1, ...`.
 *
 * # Safety
 * `scenario` must be live; `agent` may be null unless `policy` is agent.
 */
enum RasimStatus rasim_evaluate(const struct RasimScenario *scenario,
                                enum RasimPolicyKind policy,
                                const struct RasimAgent *agent,
                                uint32_t episodes,
                                uint64_t seed,
                                struct RasimReport **out_report);

/**
 * # Safety
 * `report` must be live and `out_count` valid.
 */
enum RasimStatus rasim_report_episode_count(const struct RasimReport *report, size_t *out_count);

/**
 * # Safety
 * `report` must be live and `out_median` valid.
 */
enum RasimStatus rasim_report_median_utility(const struct RasimReport *report, double *out_median);

/**
 * Total utility and constraint violations (g2 plus g3) of one episode.
 *
 * # Safety
 * `report` must be live and the out pointers valid.
 */
enum RasimStatus rasim_report_episode(const struct RasimReport *report,
                                      size_t index,
                                      double *out_utility,
                                      uint64_t *out_violations);

/**
 * # Safety
 * `report` must be null or a handle from this library, freed once.
 */
void rasim_report_free(struct RasimReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RASIM_H */
