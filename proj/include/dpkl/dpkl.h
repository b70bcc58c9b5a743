/* Copyright 2026 The dpkl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the dpkl library: differentially private empirical risk
 * minimization under Kurdyka-Lojasiewicz conditions, with zCDP budget
 * accounting, synthetic loss instances, condition certifiers and an
 * experiment harness.
 *
 * Conventions: every function returns a dpkl_status; outputs are written
 * through pointers on DPKL_OK only. Handles are opaque and freed with their
 * dpkl_*_free function. Strings returned through char** are heap-allocated
 * and released with dpkl_string_free. dpkl_last_error() describes the most
 * recent failure on the calling thread.
 */

#ifndef DPKL_DPKL_H_
#define DPKL_DPKL_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DPKL_API __declspec(dllexport)
#else
#define DPKL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dpkl_status {
  DPKL_OK = 0,
  DPKL_ERROR_DOMAIN = 1,   /* bad argument / precondition violation */
  DPKL_ERROR_CONFIG = 2,   /* invalid or vacuous configuration */
  DPKL_ERROR_IO = 3,       /* filesystem or serialization failure */
  DPKL_ERROR_INTERNAL = 4, /* invariant breakage inside the library */
} dpkl_status;

DPKL_API const char* dpkl_version(void);
DPKL_API const char* dpkl_last_error(void);
DPKL_API void dpkl_string_free(char* s);

/* --- zCDP primitives ----------------------------------------------------- */

DPKL_API dpkl_status dpkl_gaussian_rho(double sensitivity, double sigma,
                                       double* rho_out);
DPKL_API dpkl_status dpkl_sigma_for_rho(double sensitivity, double rho,
                                        double* sigma_out);
DPKL_API dpkl_status dpkl_zcdp_to_approx_dp(double rho, double delta,
                                            double* epsilon_out);
DPKL_API dpkl_status dpkl_pure_dp_to_zcdp(double epsilon, double* rho_out);

/* Samples an index with probability proportional to
 * exp(epsilon * scores[i] / (2 * score_sensitivity)). Deterministic for a
 * fixed seed. */
DPKL_API dpkl_status dpkl_exponential_mechanism(const double* scores,
                                                size_t count,
                                                double score_sensitivity,
                                                double epsilon, uint64_t seed,
                                                size_t* index_out);

/* --- Budget ledger -------------------------------------------------------- */

typedef struct dpkl_ledger dpkl_ledger;

DPKL_API dpkl_status dpkl_ledger_create(double cap, dpkl_ledger** out);
DPKL_API void dpkl_ledger_free(dpkl_ledger* ledger);
/* accepted_out receives 1 when the charge fit under the cap, 0 when it was
 * refused (the ledger is then unchanged). Negative charges are a domain
 * error. */
DPKL_API dpkl_status dpkl_ledger_charge(dpkl_ledger* ledger,
                                        const char* label, double rho,
                                        int* accepted_out);
DPKL_API dpkl_status dpkl_ledger_spent(const dpkl_ledger* ledger,
                                       double* out);
DPKL_API dpkl_status dpkl_ledger_cap(const dpkl_ledger* ledger, double* out);
DPKL_API dpkl_status dpkl_ledger_entry_count(const dpkl_ledger* ledger,
                                             size_t* out);

/* --- Loss instances -------------------------------------------------------- */

typedef struct dpkl_instance dpkl_instance;

/* f(w;x) = (mu/2)||w - x||^2 over the given centers (row-major n x d). */
DPKL_API dpkl_status dpkl_instance_quadratic_pl(size_t d, double mu,
                                                const double* centers,
                                                size_t n,
                                                dpkl_instance** out);
/* One-dimensional piecewise growth instance over n sign tokens. */
DPKL_API dpkl_status dpkl_instance_growth(double a, double tau,
                                          double rho_frac, size_t n,
                                          dpkl_instance** out);
/* Linear loss plus Huber regularization; rows drawn from the seed. */
DPKL_API dpkl_status dpkl_instance_linear_huber(size_t d, size_t n, double L0,
                                                double D, size_t N,
                                                uint64_t seed,
                                                dpkl_instance** out);
DPKL_API void dpkl_instance_free(dpkl_instance* instance);

DPKL_API dpkl_status dpkl_instance_save(const dpkl_instance* instance,
                                        const char* base_path);
DPKL_API dpkl_status dpkl_instance_load(const char* base_path,
                                        dpkl_instance** out);

DPKL_API dpkl_status dpkl_instance_dim(const dpkl_instance* instance,
                                       size_t* out);
DPKL_API dpkl_status dpkl_instance_value(const dpkl_instance* instance,
                                         const double* w, size_t d,
                                         double* out);
DPKL_API dpkl_status dpkl_instance_gradient(const dpkl_instance* instance,
                                            const double* w, size_t d,
                                            double* grad_out);

/* --- Certification ---------------------------------------------------------- */

/* Certifies the instance at `instance_base` (.csv/.json pair) against the
 * spec file (JSON; see the repository documentation for the schema).
 * pass_out receives 1/0; summary_json_out a machine-readable report. */
DPKL_API dpkl_status dpkl_certify(const char* instance_base,
                                  const char* spec_path, int* pass_out,
                                  char** summary_json_out);

/* --- Optimizer runs ---------------------------------------------------------- */

/* Runs one optimizer from a flat JSON record:
 *   {"algo": "kl_spider"|"adaptive_gd"|"sc_noisy_gd"|"prox_point",
 *    "n":..., "d":..., "rho":..., "beta":..., "kappa":..., "gamma":...,
 *    "L0":..., "L1":..., "Ltilde1":..., "F0":..., "w0":[...]|null,
 *    "seed":..., "noiseless":..., "instance": {"type":..., ...}}
 * and returns a run report as JSON (final point, excess risk, budget
 * ledger totals, stop reason, frozen schedule). */
DPKL_API dpkl_status dpkl_run_optimizer_json(const char* config_json,
                                             char** report_json_out);

/* --- Experiment harness ------------------------------------------------------ */

/* Executes the experiment described by a TOML or JSON config file and
 * writes the results CSV atomically. out_override / seed_override /
 * noiseless_override (use -1 to keep the config value) adjust the config.
 * require_single_cell enforces the `run` semantics (one sweep cell);
 * sweeps pass 0. summary_json_out reports rows, cells and the output path.
 */
DPKL_API dpkl_status dpkl_experiment_run(const char* config_path,
                                         const char* out_override,
                                         const uint64_t* seed_override,
                                         int noiseless_override,
                                         int require_single_cell,
                                         char** summary_json_out);

/* Ordinary least squares of ln(statistic(excess_risk)) on ln(axis) over a
 * results CSV; axis is "n", "d" or "rho", statistic "median" or "mean". */
DPKL_API dpkl_status dpkl_fit(const char* results_path, const char* axis,
                              const char* statistic, double* slope_out,
                              char** summary_json_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DPKL_DPKL_H_ */
