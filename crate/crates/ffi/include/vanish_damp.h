#ifndef VANISH_DAMP_H
#define VANISH_DAMP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every function.
typedef enum VdStatus {
  VD_OK = 0,
  VD_NULL_POINTER = 1,
  VD_INVALID_ARGUMENT = 2,
  VD_DOMAIN = 3,
  VD_SOLVER = 4,
  VD_PANIC = 5,
} VdStatus;

// Potential `G`.
typedef struct VdPotential VdPotential;

// Damping schedule `a(t)`.
typedef struct VdSchedule VdSchedule;

// Solved trajectory with dense output.
typedef struct VdTrajectory VdTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread; empty if none. The pointer
// stays valid until the next failing call on the same thread.
const char *vd_last_error(void);

// Library version as a static NUL-terminated string.
const char *vd_version(void);

// `a(t) = level`.
//
// # Safety
// `out` must be valid for writes.
enum VdStatus vd_schedule_constant(double level, struct VdSchedule **out);

// `a(t) = c / (t + offset)^gamma`.
//
// # Safety
// `out` must be valid for writes.
enum VdStatus vd_schedule_power_law(double c, double gamma, double offset, struct VdSchedule **out);

// Evaluates `a(t)`.
//
// # Safety
// `s` must come from a `vd_schedule_*` constructor; `out` must be writable.
enum VdStatus vd_schedule_rate(const struct VdSchedule *s, double t, double *out);

// `∫ a` over `[t0, t1]`; may be `+inf` for a singular start.
//
// # Safety
// As for `vd_schedule_rate`.
enum VdStatus vd_schedule_integral(const struct VdSchedule *s, double t0, double t1, double *out);

// # Safety
// `s` must be null or a live schedule handle, freed at most once.
void vd_schedule_free(struct VdSchedule *s);

// `|x|²/2` in `dim` dimensions.
//
// # Safety
// `out` must be valid for writes.
enum VdStatus vd_potential_quadratic(size_t dim, struct VdPotential **out);

// `|x|^p / p`.
//
// # Safety
// `out` must be valid for writes.
enum VdStatus vd_potential_p_power(size_t dim, double p, struct VdPotential **out);

// 1D potential with gradient `sign(x)|x|^(1+2/beta)`.
//
// # Safety
// `out` must be valid for writes.
enum VdStatus vd_potential_signed_power(double beta, struct VdPotential **out);

// `(x² − 1)²/4`.
//
// # Safety
// `out` must be valid for writes.
enum VdStatus vd_potential_double_well(struct VdPotential **out);

// `((|x| − 1)₊)²`, zero on the closed unit ball.
//
// # Safety
// `out` must be valid for writes.
enum VdStatus vd_potential_flat_bottom(size_t dim, struct VdPotential **out);

// 1D polynomial with `len` coefficients in ascending order.
//
// # Safety
// `coeffs` must point to `len` readable doubles; `out` must be writable.
enum VdStatus vd_potential_polynomial(const double *coeffs, size_t len, struct VdPotential **out);

// `G ≡ 0`.
//
// # Safety
// `out` must be valid for writes.
enum VdStatus vd_potential_zero(size_t dim, struct VdPotential **out);

// # Safety
// `p` must be a live potential handle; `out` must be writable.
enum VdStatus vd_potential_dim(const struct VdPotential *p, size_t *out);

// `G(x)` with `x` of length `n`.
//
// # Safety
// `x` must point to `n` readable doubles.
enum VdStatus vd_potential_eval(const struct VdPotential *p,
                                const double *x,
                                size_t n,
                                double *out);

// `∇G(x)` written to `grad`, both of length `n`.
//
// # Safety
// `x` and `grad` must point to `n` doubles.
enum VdStatus vd_potential_grad(const struct VdPotential *p,
                                const double *x,
                                size_t n,
                                double *grad);

// # Safety
// `p` must be null or a live potential handle, freed at most once.
void vd_potential_free(struct VdPotential *p);

// Solves `x'' + a(t) x' + ∇G(x) = 0` on `[t0, t_end]` from `(x0, v0)`.
// Non-positive tolerances select the defaults.
//
// # Safety
// `x0` and `v0` must point to `dim` doubles; handles must be live;
// `out` must be writable.
enum VdStatus vd_integrate(const struct VdSchedule *schedule,
                           const struct VdPotential *potential,
                           const double *x0,
                           const double *v0,
                           size_t dim,
                           double t0,
                           double t_end,
                           double rel_tol,
                           double abs_tol,
                           struct VdTrajectory **out);

// Number of stored samples.
//
// # Safety
// `tr` must be a live trajectory handle; `out` must be writable.
enum VdStatus vd_trajectory_len(const struct VdTrajectory *tr, size_t *out);

// # Safety
// As for `vd_trajectory_len`.
enum VdStatus vd_trajectory_dim(const struct VdTrajectory *tr, size_t *out);

// Sample `i`: time, position and velocity (`x` and `v` hold `dim` doubles).
//
// # Safety
// `t` must be writable; `x` and `v` must point to `dim` writable doubles.
enum VdStatus vd_trajectory_sample(const struct VdTrajectory *tr,
                                   size_t i,
                                   double *t,
                                   double *x,
                                   double *v);

// Dense-output state at time `t`.
//
// # Safety
// `x` and `v` must point to `dim` writable doubles.
enum VdStatus vd_trajectory_eval(const struct VdTrajectory *tr, double t, double *x, double *v);

// Number of velocity sign changes found.
//
// # Safety
// As for `vd_trajectory_len`.
enum VdStatus vd_trajectory_event_count(const struct VdTrajectory *tr, size_t *out);

// Time of event `i`.
//
// # Safety
// As for `vd_trajectory_len`.
enum VdStatus vd_trajectory_event_time(const struct VdTrajectory *tr, size_t i, double *out);

// # Safety
// `tr` must be null or a live trajectory handle, freed at most once.
void vd_trajectory_free(struct VdTrajectory *tr);

// Bessel function `J_nu(t)` for `0 <= nu <= 3`, `t >= 0`.
//
// # Safety
// `out` must be valid for writes.
enum VdStatus vd_bessel_j(double nu, double t, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VANISH_DAMP_H */
