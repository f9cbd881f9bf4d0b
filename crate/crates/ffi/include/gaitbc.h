#ifndef GAITBC_H
#define GAITBC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GbcStatus {
  GBC_STATUS_OK = 0,
  GBC_STATUS_NULL_POINTER = 1,
  GBC_STATUS_INVALID_ARGUMENT = 2,
  GBC_STATUS_IO = 3,
  GBC_STATUS_FORMAT = 4,
  GBC_STATUS_DIM_MISMATCH = 5,
  GBC_STATUS_NUMERICAL_FAILURE = 6,
  GBC_STATUS_PANIC = 7,
} GbcStatus;

typedef enum GbcConditioning {
  GBC_CONDITIONING_CC = 1,
  GBC_CONDITIONING_TCC = 2,
  GBC_CONDITIONING_VC = 3,
} GbcConditioning;

typedef enum GbcGait {
  GBC_GAIT_WALK = 0,
  GBC_GAIT_RUN = 1,
} GbcGait;

typedef enum GbcFailure {
  GBC_FAILURE_NONE = 0,
  GBC_FAILURE_VELOCITY = 1,
  GBC_FAILURE_HEIGHT = 2,
} GbcFailure;

typedef enum GbcMode {
  GBC_MODE_LEFT_STANCE = 0,
  GBC_MODE_RIGHT_STANCE = 1,
  GBC_MODE_FLIGHT = 2,
} GbcMode;

/**
 * A trained policy.
 */
typedef struct GbcModel GbcModel;

/**
 * Plant plus the expert planner, stepped at 1 kHz.
 */
typedef struct GbcSim GbcSim;

/**
 * Planner output for the current tick, world coordinates.
 */
typedef struct GbcPlan {
  double p_next[2];
  double t_rem;
  double p_next2[2];
  double t_next2;
  double step_duration;
  bool fallback;
} GbcPlan;

/**
 * Plant setpoints: swing-foot target (world frame), CoM height reference, thrust.
 */
typedef struct GbcAction {
  double swing_target[3];
  double h_ref;
  double a_thrust;
} GbcAction;

typedef struct GbcEvents {
  bool touchdown;
  double touchdown_pos[2];
  bool takeoff;
  enum GbcFailure failure;
} GbcEvents;

typedef struct GbcState {
  double com_pos[3];
  double com_vel[3];
  double left_foot[3];
  double right_foot[3];
  enum GbcMode mode;
  enum GbcGait gait;
  double t_in_phase;
  double phase;
  uint64_t step_index;
} GbcState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t gbc_last_error(char *buf, size_t len);

/**
 * Static description of a status code.
 */
const char *gbc_status_string(enum GbcStatus status);

/**
 * Closed-form DCM under a fixed stance foot: ξ(dt) = u + (ξ0 − u)·e^{ω·dt}.
 *
 * # Safety
 * `xi0`, `u` and `out` must each point to two doubles.
 */
enum GbcStatus gbc_dcm_propagate(const double *xi0,
                                 const double *u,
                                 double omega,
                                 double dt,
                                 double *out);

/**
 * Loads a model file written by `gaitbc train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writing.
 */
enum GbcStatus gbc_model_load(const char *path, struct GbcModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`gbc_model_load`] not yet freed.
 */
void gbc_model_free(struct GbcModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` valid for writing.
 */
enum GbcStatus gbc_model_conditioning(const struct GbcModel *model, enum GbcConditioning *out);

/**
 * Network input width, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t gbc_model_input_dim(const struct GbcModel *model);

/**
 * Raw network evaluation: `output` receives the five action features (swing target
 * relative to the support point, swing height, h_ref, thrust).
 *
 * # Safety
 * `input` must hold `n_in` doubles and `output` room for `n_out`.
 */
enum GbcStatus gbc_model_forward(const struct GbcModel *model,
                                 const double *input,
                                 size_t n_in,
                                 double *output,
                                 size_t n_out);

/**
 * Starts a simulation on the periodic orbit of the given command.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum GbcStatus gbc_sim_new(double vx, double vy, enum GbcGait gait, struct GbcSim **out);

/**
 * # Safety
 * `sim` must be null or a handle from [`gbc_sim_new`] not yet freed.
 */
void gbc_sim_free(struct GbcSim *sim);

/**
 * Changes the command from the next tick on.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum GbcStatus gbc_sim_set_command(struct GbcSim *sim, double vx, double vy, enum GbcGait gait);

/**
 * Planner output for the current state.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid for writing.
 */
enum GbcStatus gbc_sim_plan(struct GbcSim *sim, struct GbcPlan *out);

/**
 * The expert's action for the current state, without stepping.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid for writing.
 */
enum GbcStatus gbc_sim_expert_action(struct GbcSim *sim, struct GbcAction *out);

/**
 * Steps one tick with a caller-supplied action. `events` may be null.
 *
 * # Safety
 * `sim` must be a live handle, `action` valid for reading, `events` null or valid.
 */
enum GbcStatus gbc_sim_step(struct GbcSim *sim,
                            const struct GbcAction *action,
                            struct GbcEvents *events);

/**
 * Steps one tick under the expert.
 *
 * # Safety
 * `sim` must be a live handle and `events` null or valid.
 */
enum GbcStatus gbc_sim_step_expert(struct GbcSim *sim, struct GbcEvents *events);

/**
 * Steps one tick under a trained policy, with goals from the planner.
 *
 * # Safety
 * `sim` and `model` must be live handles and `events` null or valid.
 */
enum GbcStatus gbc_sim_step_model(struct GbcSim *sim,
                                  const struct GbcModel *model,
                                  struct GbcEvents *events);

/**
 * # Safety
 * `sim` must be a live handle and `out` valid for writing.
 */
enum GbcStatus gbc_sim_state(const struct GbcSim *sim, struct GbcState *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAITBC_H */
