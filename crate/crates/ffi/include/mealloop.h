#ifndef MEALLOOP_H
#define MEALLOOP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MealloopStatus {
  MEALLOOP_STATUS_OK = 0,
  MEALLOOP_STATUS_NULL_ARGUMENT = 1,
  MEALLOOP_STATUS_INVALID_UTF8 = 2,
  MEALLOOP_STATUS_BAD_REQUEST = 3,
  MEALLOOP_STATUS_NOT_FOUND = 4,
  MEALLOOP_STATUS_DUPLICATE = 5,
  MEALLOOP_STATUS_BACKEND_UNAVAILABLE = 6,
  MEALLOOP_STATUS_NEEDS_CLARIFICATION = 7,
  MEALLOOP_STATUS_NO_MEALS_REMAINING = 8,
  MEALLOOP_STATUS_INTEGRITY = 9,
  MEALLOOP_STATUS_CONFIG = 10,
  MEALLOOP_STATUS_INTERNAL = 11,
  MEALLOOP_STATUS_PANIC = 12,
} MealloopStatus;

/**
 * Opaque engine handle.
 */
typedef struct MealloopEngine MealloopEngine;

/**
 * Adjustment policy parameters, mirrored for C callers.
 */
typedef struct MealloopPolicy {
  /**
   * +1 raises targets after a shortfall, -1 lowers them.
   */
  int8_t direction;
  uint32_t window_days;
  double gain;
  double clamp_frac;
  double epsilon;
} MealloopPolicy;

/**
 * Library version as a static string.
 */
const char *mealloop_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call on the same thread.
 */
const char *mealloop_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void mealloop_string_free(char *s);

/**
 * Default adjustment policy.
 */
struct MealloopPolicy mealloop_policy_default(void);

/**
 * One day's target change for a residual (target minus achieved) and a
 * reference intake.
 *
 * # Safety
 * `policy` and `out` must be valid pointers.
 */
enum MealloopStatus mealloop_step_for_residual(const struct MealloopPolicy *policy,
                                               double residual,
                                               double rda,
                                               double *out);

/**
 * Opens an engine from a TOML config file.
 *
 * # Safety
 * `config_path` must be a nul-terminated string; `out` a valid pointer.
 */
enum MealloopStatus mealloop_engine_open(const char *config_path, struct MealloopEngine **out);

/**
 * Opens an engine over `store_root` with deterministic mock backends.
 *
 * # Safety
 * `store_root` must be a nul-terminated string; `out` a valid pointer.
 */
enum MealloopStatus mealloop_engine_open_mock(const char *store_root, struct MealloopEngine **out);

/**
 * Closes an engine and releases its store lock. Null is ignored.
 *
 * # Safety
 * `engine` must come from an open call and not be freed twice.
 */
void mealloop_engine_free(struct MealloopEngine *engine);

/**
 * Writes a user profile given as JSON.
 *
 * # Safety
 * Pointers must be valid; `out_seq` may be null.
 */
enum MealloopStatus mealloop_engine_put_profile(const struct MealloopEngine *engine,
                                                const char *profile_json,
                                                uint64_t *out_seq);

/**
 * Handles one chat-style message. `out_json` receives
 * `{"response": ..., "trace": ...}` whenever the message was processed,
 * including when the returned status reports a failure.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MealloopStatus mealloop_engine_handle(const struct MealloopEngine *engine,
                                           const char *message_json,
                                           char **out_json);

/**
 * Reads the plan for `date` (`YYYY-MM-DD`, or null for today), creating
 * today's plan on first use.
 *
 * # Safety
 * Pointers must be valid; `date` may be null.
 */
enum MealloopStatus mealloop_engine_plan(const struct MealloopEngine *engine,
                                         const char *user_id,
                                         const char *date,
                                         char **out_json);

#endif  /* MEALLOOP_H */
