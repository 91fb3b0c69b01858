#ifndef SMEARING_H
#define SMEARING_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SM_CALL 0

#define SM_PUT 1

typedef enum SmStatus {
  SM_STATUS_OK = 0,
  SM_STATUS_NULL_POINTER = 1,
  SM_STATUS_INVALID_ARGUMENT = 2,
  SM_STATUS_DOMAIN = 3,
  SM_STATUS_NO_CONVERGENCE = 4,
  SM_STATUS_NUMERICAL = 5,
  SM_STATUS_CONFIG = 6,
  SM_STATUS_OUT_OF_RANGE = 7,
  SM_STATUS_PANIC = 8,
} SmStatus;

typedef struct SmDensity SmDensity;

typedef struct SmEnsemble SmEnsemble;

typedef struct SmFamily SmFamily;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *sm_last_error(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SmStatus sm_family_gamma(double b, double c, struct SmFamily **out);

/**
 * Builds a family from its JSON description, e.g. `{"family":"custom","F":"log(1+x)"}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SmStatus sm_family_from_json(const char *json, struct SmFamily **out);

/**
 * # Safety
 * `family` must come from a `sm_family_*` constructor and not be used afterwards. NULL is ignored.
 */
void sm_family_free(struct SmFamily *family);

/**
 * Laplace image `ω̃(ξ, t)`.
 *
 * # Safety
 * `family` must be a live handle and `out` writable.
 */
enum SmStatus sm_family_image(const struct SmFamily *family, double xi, double t, double *out);

/**
 * Closed-form density `ω(v, t)`; fails for custom families.
 *
 * # Safety
 * `family` must be a live handle and `out` writable.
 */
enum SmStatus sm_family_density(const struct SmFamily *family, double v, double t, double *out);

/**
 * `ω̃(ξ,t) ω̃(αξ,αt) − ω̃(ξ+αξ, t+αt)`.
 *
 * # Safety
 * `family` must be a live handle and `out` writable.
 */
enum SmStatus sm_functional_equation_residual(const struct SmFamily *family,
                                              double xi,
                                              double t,
                                              double alpha,
                                              double *out);

/**
 * The `k`-th Post approximant of `ω(v, t)`.
 *
 * # Safety
 * `family` must be a live handle and `out` writable.
 */
enum SmStatus sm_post_invert(const struct SmFamily *family,
                             double v,
                             double t,
                             size_t k,
                             double *out);

/**
 * Effective Hamiltonian `F(x)/κ`.
 *
 * # Safety
 * `family` must be a live handle and `out` writable.
 */
enum SmStatus sm_effective_hamiltonian(const struct SmFamily *family, double x, double *out);

/**
 * Richardson-extrapolated Post inversion.
 *
 * # Safety
 * `family` must be a live handle; `value` and `error_estimate` writable.
 */
enum SmStatus sm_invert_extrapolated(const struct SmFamily *family,
                                     double v,
                                     double t,
                                     size_t k_max,
                                     double tol,
                                     size_t levels,
                                     double *value,
                                     double *error_estimate);

/**
 * Kramers-Moyal coefficient of order `n` of the Gamma variance process, with
 * the default window sequence `τ = {0.08, 0.04, 0.02, 0.01}·t`.
 *
 * # Safety
 * `estimate` and `extrapolation_error` must be writable.
 */
enum SmStatus sm_km_coefficient(double b,
                                double c,
                                uint32_t n,
                                double v,
                                double t,
                                double *estimate,
                                double *extrapolation_error);

/**
 * Smeared transition density of `x` after time `t` from `x_a`, on an automatically sized FFT grid.
 *
 * # Safety
 * `out` must be writable.
 */
enum SmStatus sm_density_fourier(double b,
                                 double c,
                                 double r,
                                 double x_a,
                                 double t,
                                 struct SmDensity **out);

/**
 * Number of grid points, 0 for NULL.
 *
 * # Safety
 * `density` must be NULL or a live handle.
 */
size_t sm_density_len(const struct SmDensity *density);

/**
 * Copies abscissae and density values into caller buffers of length `len`
 * (which must equal [`sm_density_len`]). Either buffer may be NULL.
 *
 * # Safety
 * Non-NULL buffers must hold `len` doubles.
 */
enum SmStatus sm_density_copy(const struct SmDensity *density,
                              double *xs,
                              double *values,
                              size_t len);

/**
 * # Safety
 * `density` must come from [`sm_density_fourier`] and not be used afterwards. NULL is ignored.
 */
void sm_density_free(struct SmDensity *density);

/**
 * Runs a Monte Carlo ensemble. `config_json` is a JSON object with any of the
 * simulation fields (`model`, `b`, `c`, `r`, `t0`, `t_end`, `dt`, `n_paths`,
 * `seed`, ...); missing fields take their defaults. NULL means all defaults.
 *
 * # Safety
 * `config_json` must be NULL or NUL-terminated; `out` must be writable.
 */
enum SmStatus sm_simulate(const char *config_json, struct SmEnsemble **out);

/**
 * # Safety
 * `ensemble` must be NULL or a live handle.
 */
size_t sm_ensemble_n_paths(const struct SmEnsemble *ensemble);

/**
 * # Safety
 * `ensemble` must be NULL or a live handle.
 */
size_t sm_ensemble_n_times(const struct SmEnsemble *ensemble);

/**
 * State of one path at recorded time index `ti`.
 *
 * # Safety
 * `ensemble` must be a live handle; `time`, `x` and `v` writable.
 */
enum SmStatus sm_ensemble_state(const struct SmEnsemble *ensemble,
                                size_t path,
                                size_t ti,
                                double *time,
                                double *x,
                                double *v);

/**
 * # Safety
 * `ensemble` must come from [`sm_simulate`] and not be used afterwards. NULL is ignored.
 */
void sm_ensemble_free(struct SmEnsemble *ensemble);

/**
 * European option price from the Fourier density of the Gamma family `(b, c)`.
 * `kind` is [`SM_CALL`] or [`SM_PUT`].
 *
 * # Safety
 * `price` must be writable.
 */
enum SmStatus sm_price_fourier(double strike,
                               double maturity,
                               double spot,
                               double rate,
                               int32_t kind,
                               double b,
                               double c,
                               double *price);

/**
 * Monte Carlo price; `config_json` as for [`sm_simulate`], with `r` and
 * `t_end` replaced by the option's rate and `t0 + maturity`.
 *
 * # Safety
 * `config_json` must be NULL or NUL-terminated; `price` and `std_err` writable.
 */
enum SmStatus sm_price_mc(double strike,
                          double maturity,
                          double spot,
                          double rate,
                          int32_t kind,
                          const char *config_json,
                          double *price,
                          double *std_err);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMEARING_H */
