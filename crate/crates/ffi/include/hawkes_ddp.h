#ifndef HAWKES_DDP_H
#define HAWKES_DDP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HdStatus {
  HD_STATUS_OK = 0,
  HD_STATUS_NULL_POINTER = 1,
  HD_STATUS_INVALID_ARGUMENT = 2,
  HD_STATUS_IO = 3,
  HD_STATUS_DOMAIN = 4,
  HD_STATUS_CONFIG = 5,
  HD_STATUS_MALFORMED = 6,
  HD_STATUS_PANIC = 7,
} HdStatus;

typedef struct HdMcmcResult HdMcmcResult;

typedef struct HdParams HdParams;

typedef struct HdSequence HdSequence;

typedef struct HdSviResult HdSviResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into this library from the same thread.
 */
const char *hd_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hd_version(void);

/**
 * Builds a sequence from `n` strictly increasing times and 0-based dims.
 */
enum HdStatus hd_sequence_new(const double *times,
                              const size_t *dims,
                              size_t n,
                              double horizon,
                              size_t num_dims,
                              struct HdSequence **out);

/**
 * Reads an event CSV (`t,d`, 1-based marks) and its JSON sidecar.
 */
enum HdStatus hd_sequence_read(const char *path, struct HdSequence **out);

enum HdStatus hd_sequence_write(const struct HdSequence *seq, const char *path);

enum HdStatus hd_sequence_len(const struct HdSequence *seq, size_t *out);

/**
 * Copies up to `cap` times and 0-based dims into caller buffers.
 */
enum HdStatus hd_sequence_events(const struct HdSequence *seq,
                                 double *times,
                                 size_t *dims,
                                 size_t cap,
                                 size_t *written);

void hd_sequence_free(struct HdSequence *seq);

/**
 * The two-dimensional Beta-mixture truth of the simulation study.
 */
enum HdStatus hd_params_paper_beta(double eps, struct HdParams **out);

/**
 * Reads parameters from JSON (`mu`, `alpha`, `excitation`).
 */
enum HdStatus hd_params_read_json(const char *path, struct HdParams **out);

enum HdStatus hd_params_write_json(const struct HdParams *params, const char *path);

/**
 * Excitation density φ_{parent,child}(t).
 */
enum HdStatus hd_params_excitation(const struct HdParams *params,
                                   size_t parent,
                                   size_t child,
                                   double t,
                                   double *out);

/**
 * Spectral radius of the α matrix.
 */
enum HdStatus hd_params_spectral_radius(const struct HdParams *params, double *out);

void hd_params_free(struct HdParams *params);

/**
 * Observed-data log-likelihood; `exact_compensator` selects the exact
 * compensator instead of the default approximation.
 */
enum HdStatus hd_log_likelihood(const struct HdParams *params,
                                const struct HdSequence *seq,
                                bool exact_compensator,
                                double *out);

/**
 * Simulates on `[0, horizon]` by the cluster representation.
 */
enum HdStatus hd_simulate(const struct HdParams *params,
                          double horizon,
                          uint64_t seed,
                          struct HdSequence **out);

/**
 * Runs one MCMC chain. `config_json` is an MCMC config object or null for
 * the defaults.
 */
enum HdStatus hd_mcmc_run(const struct HdSequence *seq,
                          const char *config_json,
                          double support,
                          struct HdMcmcResult **out);

enum HdStatus hd_mcmc_num_draws(const struct HdMcmcResult *res, size_t *out);

/**
 * Mean observed-data log-likelihood over retained draws.
 */
enum HdStatus hd_mcmc_mean_log_lik(const struct HdMcmcResult *res, double *out);

/**
 * Posterior draw `index` as parameters.
 */
enum HdStatus hd_mcmc_draw(const struct HdMcmcResult *res, size_t index, struct HdParams **out);

enum HdStatus hd_mcmc_write_csv(const struct HdMcmcResult *res, const char *path);

void hd_mcmc_free(struct HdMcmcResult *res);

/**
 * Runs stochastic variational inference. `config_json` is an SVI config
 * object or null for the defaults.
 */
enum HdStatus hd_svi_run(const struct HdSequence *seq,
                         const char *config_json,
                         double support,
                         struct HdSviResult **out);

enum HdStatus hd_svi_final_elbo(const struct HdSviResult *res, double *out);

/**
 * Parameters at the variational means.
 */
enum HdStatus hd_svi_mean_params(const struct HdSviResult *res, struct HdParams **out);

/**
 * Writes the variational state as JSON.
 */
enum HdStatus hd_svi_write_state(const struct HdSviResult *res, const char *path);

void hd_svi_free(struct HdSviResult *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAWKES_DDP_H */
