#ifndef EXPANSION_H
#define EXPANSION_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ExpStatus {
  EXP_STATUS_OK = 0,
  EXP_STATUS_NULL_POINTER = 1,
  EXP_STATUS_INVALID_PARAMETER = 2,
  EXP_STATUS_INVALID_DATA = 3,
  EXP_STATUS_DOMAIN = 4,
  EXP_STATUS_UNBOUNDED = 5,
  EXP_STATUS_NOT_CONVERGED = 6,
  EXP_STATUS_DEGENERATE_DESIGN = 7,
  EXP_STATUS_PANIC = 8,
} ExpStatus;

/**
 * Trap, noise and initial-state parameters.
 */
typedef struct ExpModel ExpModel;

typedef struct ExpGaussianState {
  double var_z;
  double cov_zp;
  double var_p;
  double det;
  double purity;
  double xi;
} ExpGaussianState;

typedef struct ExpRequirements {
  /**
   * V²/Hz.
   */
  double s_v;
  /**
   * m²/Hz.
   */
  double s_zeta;
  /**
   * N²/Hz.
   */
  double s_sf;
} ExpRequirements;

/**
 * Two-parameter fit: `(σ_0, σ_disp)` for expansion curves, `(σ_sf, σ_ζ)` for budgets.
 */
typedef struct ExpFit {
  double values[2];
  double errors[2];
  double covariance[4];
  double chi2;
  uint32_t dof;
  bool converged;
} ExpFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays valid until
 * the next failing call on the same thread.
 */
const char *exp_last_error_message(void);

/**
 * Creates a model with a thermal initial state of position spread `sigma_0`.
 *
 * # Safety
 * `model` must be valid for writes.
 */
enum ExpStatus exp_model_new(double mass,
                             double omega_trap,
                             double omega_inv,
                             double heating_rate,
                             double sigma_0,
                             struct ExpModel **model);

/**
 * Sets the particle charge (C) and electrode distance (m) used by the voltage-noise
 * requirement.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum ExpStatus exp_model_set_electrodes(struct ExpModel *model, double charge, double distance);

/**
 * # Safety
 * `model` must be null or a live handle; it is invalid afterwards.
 */
void exp_model_free(struct ExpModel *model);

/**
 * Ensemble covariance, purity and coherence length after expanding for `tau`.
 *
 * # Safety
 * `model` must be a live handle and `state` valid for writes.
 */
enum ExpStatus exp_ensemble_state(const struct ExpModel *model,
                                  double sigma_disp,
                                  double tau,
                                  struct ExpGaussianState *state);

/**
 * Maximum coherence length over expansion times and the time where it occurs.
 *
 * # Safety
 * `model` must be a live handle; `tau_star` and `xi` valid for writes.
 */
enum ExpStatus exp_xi_max(const struct ExpModel *model,
                          double sigma_disp,
                          double *tau_star,
                          double *xi);

/**
 * Displacement spread produced by a stray-force spread (N) and a chip-position spread (m).
 *
 * # Safety
 * `model` must be a live handle and `sigma_disp` valid for writes.
 */
enum ExpStatus exp_sigma_disp_from_budget(const struct ExpModel *model,
                                          double sigma_sf,
                                          double sigma_zeta,
                                          double *sigma_disp);

/**
 * Noise spectral densities that allow heating rate `target_gamma` and keep the added
 * spread below `sigma_target` over an expansion of `tau_ex`.
 *
 * # Safety
 * `model` must be a live handle with electrodes set, `result` valid for writes.
 */
enum ExpStatus exp_requirements(const struct ExpModel *model,
                                double target_gamma,
                                double tau_ex,
                                double sigma_target,
                                struct ExpRequirements *result);

/**
 * Fits `(σ_0, σ_disp)` to `n` points of a measured σ_z(τ) curve. The model's own
 * `sigma_0` is not used.
 *
 * # Safety
 * `tau`, `sigma_z` and `err` must hold `n` values; `fit` must be valid for writes.
 */
enum ExpStatus exp_fit_expansion(const struct ExpModel *model,
                                 const double *tau,
                                 const double *sigma_z,
                                 const double *err,
                                 size_t n,
                                 struct ExpFit *fit);

/**
 * Fits `(σ_sf, σ_ζ)` to `n` displacement spreads measured at inverted frequencies
 * `omega_inv` (rad/s).
 *
 * # Safety
 * `omega_inv`, `sigma_disp` and `err` must hold `n` values; `fit` must be valid for writes.
 */
enum ExpStatus exp_fit_noise_budget(double mass,
                                    const double *omega_inv,
                                    const double *sigma_disp,
                                    const double *err,
                                    size_t n,
                                    struct ExpFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXPANSION_H */
