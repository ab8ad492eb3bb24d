/* C interface to the phonon-tls simulation and analysis toolkit. */

#ifndef PHONON_TLS_H
#define PHONON_TLS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum pt_status {
  PT_STATUS_OK = 0,
  PT_STATUS_NULL_POINTER = 1,
  PT_STATUS_INVALID_ARGUMENT = 2,
  PT_STATUS_NUMERICAL_FAILURE = 3,
  PT_STATUS_IO_FAILURE = 4,
  PT_STATUS_PANIC = 5,
} pt_status;

// Opaque ringdown result handle.
typedef struct pt_ringdown pt_ringdown;

// System parameters for the mechanics-TLS model; all rates angular (rad/s).
typedef struct pt_system_config {
  uint32_t n_tls;
  double g_tls;
  double delta_tls;
  double gamma1;
  double gamma2;
  double n_th;
  uint32_t n_max;
} pt_system_config;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message for this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes, excluding
// the terminator.
//
// # Safety
// `buf` must point to `len` writable bytes, or be null (query mode).
uintptr_t pt_last_error_message(char *buf, uintptr_t len);

// Library version as a static NUL-terminated string.
const char *pt_version(void);

// Dispersive qubit shift per phonon: chi = -(g^2/delta) * alpha_q/(delta - alpha_q).
//
// # Safety
// `out_chi` must be a valid pointer.
enum pt_status pt_dispersive_shift(double g, double delta, double alpha_q, double *out_chi);

// Butterworth-van Dyke admittance Y(omega) for a shunt capacitor c0 in
// parallel with the series branch (rm, lm, cm). `out_at_pole` is set to 1
// when a lossless branch sits exactly on its series resonance (the value
// then carries only the shunt term).
//
// # Safety
// All out-pointers must be valid.
enum pt_status pt_bvd_admittance(double omega,
                                 double c0,
                                 double cm,
                                 double lm,
                                 double rm,
                                 double *out_re,
                                 double *out_im,
                                 int32_t *out_at_pole);

// Fit nbar(tau) = a1 e^{-kappa1 tau} + a2 e^{-kappa2 tau}. Pass NaN as
// `fixed_kappa1` to fit all four parameters. `out_params` and
// `out_std_errors` receive [a1, kappa1, a2, kappa2].
//
// # Safety
// `taus` and `nbar` must point to `len` readable doubles; the out arrays to
// 4 writable doubles each.
enum pt_status pt_fit_double_exp(const double *taus,
                                 const double *nbar,
                                 uintptr_t len,
                                 double fixed_kappa1,
                                 double *out_params,
                                 double *out_std_errors);

// Fit nbar(phi) = C cos(phi + phi0) + nbar_off. Outputs are
// [amplitude, phi0, nbar_off].
//
// # Safety
// `phis` and `nbar` must point to `len` readable doubles; the out arrays to
// 3 writable doubles each.
enum pt_status pt_fit_interference(const double *phis,
                                   const double *nbar,
                                   uintptr_t len,
                                   double *out_params,
                                   double *out_std_errors);

// Simulate a phonon ringdown: displace the thermal state by
// alpha = alpha_re + i alpha_im, evolve, and sample at `taus` (strictly
// increasing, seconds). On success `*out` owns a handle that must be
// released with `pt_ringdown_free`.
//
// # Safety
// `cfg` must point to a valid config, `taus` to `n_taus` readable doubles,
// and `out` to a writable pointer slot.
enum pt_status pt_run_ringdown(const struct pt_system_config *cfg,
                               double alpha_re,
                               double alpha_im,
                               const double *taus,
                               uintptr_t n_taus,
                               double rtol,
                               double atol,
                               struct pt_ringdown **out);

// Number of sampled delays in a ringdown result; 0 for a null handle.
//
// # Safety
// `handle` must be null or a live handle from `pt_run_ringdown`.
uintptr_t pt_ringdown_len(const struct pt_ringdown *handle);

// Number of Fock levels (n_max + 1) in each sampled distribution.
//
// # Safety
// `handle` must be null or a live handle from `pt_run_ringdown`.
uintptr_t pt_ringdown_levels(const struct pt_ringdown *handle);

// Copy the mean phonon trace into `out_nbar` (length from
// `pt_ringdown_len`).
//
// # Safety
// `out_nbar` must point to `len` writable doubles.
enum pt_status pt_ringdown_nbar(const struct pt_ringdown *handle, double *out_nbar, uintptr_t len);

// Copy P(n) at delay index `tau_index` into `out_pn` (length from
// `pt_ringdown_levels`).
//
// # Safety
// `out_pn` must point to `len` writable doubles.
enum pt_status pt_ringdown_pn(const struct pt_ringdown *handle,
                              uintptr_t tau_index,
                              double *out_pn,
                              uintptr_t len);

// Release a ringdown handle. Null is a no-op; a handle must not be used
// after freeing.
//
// # Safety
// `handle` must be null or a live handle from `pt_run_ringdown`.
void pt_ringdown_free(struct pt_ringdown *handle);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* PHONON_TLS_H */
