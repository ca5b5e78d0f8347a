#ifndef CTDELAY_H
#define CTDELAY_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a call. Values 1 to 4 match the command-line exit codes.
typedef enum CtStatus {
  CT_STATUS_OK = 0,
  CT_STATUS_IO = 1,
  CT_STATUS_INVALID_ARGUMENT = 2,
  CT_STATUS_SOLVER_FAILURE = 3,
  CT_STATUS_INSUFFICIENT_SAMPLE = 4,
  CT_STATUS_NULL_POINTER = 5,
  CT_STATUS_PANIC = 6,
} CtStatus;

// Tracing direction codes accepted as `uint32_t`.
typedef enum CtDirection {
  CT_DIRECTION_BACKWARD = 0,
  CT_DIRECTION_FORWARD = 1,
  CT_DIRECTION_FULL = 2,
} CtDirection;

// Tracing mode codes accepted as `uint32_t`.
typedef enum CtMode {
  CT_MODE_ONE_STEP = 0,
  CT_MODE_RECURSIVE = 1,
} CtMode;

// Delay kernel codes accepted as `uint32_t`; the parameter is the delay or
// the mean delay.
typedef enum CtDelayKind {
  CT_DELAY_KIND_FIXED = 0,
  CT_DELAY_KIND_EXPONENTIAL = 1,
} CtDelayKind;

// A survival curve on a uniform age grid.
typedef struct CtCurve CtCurve;

// Rates, delay and optional latency of a scenario.
typedef struct CtModel CtModel;

// First-order reproduction number with tracing and its two terms.
typedef struct CtRct {
  double r0;
  double p;
  double backward_term;
  double forward_term;
  double rct;
} CtRct;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *ct_last_error(void);

// Library version as a static string.
const char *ct_version(void);

// Creates a model. `latency <= 0` means no latency period.
//
// # Safety
// `out` must be a valid pointer to writable storage for one pointer.
enum CtStatus ct_model_new(double beta,
                           double alpha,
                           double sigma,
                           double p,
                           uint32_t delay_kind,
                           double delay,
                           double latency,
                           struct CtModel **out);

// Releases a model; null is ignored.
//
// # Safety
// `model` must come from [`ct_model_new`] and not be used afterwards.
void ct_model_free(struct CtModel *model);

// Solves for the survival curve of `generation` (the index case for
// backward tracing) on the default grid.
//
// # Safety
// `model` must be a live model and `out` valid for one pointer write.
enum CtStatus ct_solve(const struct CtModel *model,
                       uint32_t direction_code,
                       uint32_t mode_code,
                       uint32_t generation,
                       struct CtCurve **out);

// Estimates the survival curve of `generation` from `replicas`
// simulated outbreaks on the default grid.
//
// # Safety
// `model` must be a live model, `out` valid for one pointer write.
enum CtStatus ct_simulate(const struct CtModel *model,
                          uint32_t direction_code,
                          uint32_t mode_code,
                          uint32_t generation,
                          uint64_t replicas,
                          uint64_t seed,
                          struct CtCurve **out);

// Releases a curve; null is ignored.
//
// # Safety
// `curve` must come from this library and not be used afterwards.
void ct_curve_free(struct CtCurve *curve);

// Number of grid nodes, or 0 for null.
//
// # Safety
// `curve` must be null or a live curve.
uintptr_t ct_curve_len(const struct CtCurve *curve);

// Age step of the grid, or NaN for null.
//
// # Safety
// `curve` must be null or a live curve.
double ct_curve_step(const struct CtCurve *curve);

// Copies the values into `buf`, which holds `len` doubles; `len` must be
// at least [`ct_curve_len`].
//
// # Safety
// `buf` must be valid for `len` writes.
enum CtStatus ct_curve_values(const struct CtCurve *curve, double *buf, uintptr_t len);

// Value at age `a`, interpolated linearly.
//
// # Safety
// `curve` must be a live curve and `out` valid for one write.
enum CtStatus ct_curve_at(const struct CtCurve *curve, double a, double *out);

// Integral of the contact rate against the curve.
//
// # Safety
// Both handles must be live and `out` valid for one write.
enum CtStatus ct_reproduction_number(const struct CtModel *model,
                                     const struct CtCurve *curve,
                                     double *out);

// First-order reproduction number under full tracing with a fixed
// (`delay_kind` 0) or exponential (1) delay of mean `t`.
//
// # Safety
// `out` must be valid for one write.
enum CtStatus ct_rct(double r0,
                     double p,
                     double p_obs,
                     double gamma,
                     uint32_t delay_kind,
                     double t,
                     struct CtRct *out);

// Effective removal rate of the endemic model at susceptible fraction `u`.
//
// # Safety
// `out` must be valid for one write.
enum CtStatus ct_gamma_eff(double u,
                           double beta,
                           double alpha,
                           double sigma,
                           double p,
                           double t,
                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CTDELAY_H */
