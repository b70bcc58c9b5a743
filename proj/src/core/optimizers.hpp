// Copyright 2026 The dpkl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// The four private optimizers: variance-reduced Spider for KL losses
// (kappa in [1,2]), the proximal point method for weakly convex KL losses
// (kappa >= 2), averaged projected noisy gradient descent for strongly
// convex subproblems, and adaptive noisy gradient descent with fully
// adaptive budget accounting, plus the exponential-mechanism selector for
// stationary points. A single run is sequential and deterministic given its
// rng stream; concurrent runs share no mutable state.

#ifndef DPKL_CORE_OPTIMIZERS_HPP_
#define DPKL_CORE_OPTIMIZERS_HPP_

#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/losses.hpp"
#include "core/privacy.hpp"
#include "core/rng.hpp"

namespace dpkl {

enum class StopReason {
  schedule_complete,
  budget_exhausted,
  gradient_floor,
  timeout,
};

std::string to_string(StopReason r);

// Wall-clock guard checked inside optimizer loops; disarmed by default.
class Deadline {
 public:
  Deadline() = default;
  static Deadline after(std::chrono::milliseconds budget) {
    Deadline d;
    d.at_ = std::chrono::steady_clock::now() + budget;
    return d;
  }
  bool expired() const {
    return at_ && std::chrono::steady_clock::now() > *at_;
  }

 private:
  std::optional<std::chrono::steady_clock::time_point> at_;
};

struct RunOptions {
  bool record_trajectory = false;
  // Record true gradient norms and estimator errors (test mode; touches the
  // exact gradient, so never part of a private release).
  bool record_oracle_stats = false;
  Deadline deadline;
};

struct RunReport {
  std::vector<double> final_w;
  std::optional<double> final_excess;  // set when f_star is known
  double final_value = 0.0;
  StopReason stop = StopReason::schedule_complete;
  std::size_t steps = 0;   // total inner iterations
  std::size_t rounds = 0;  // outer rounds / phases
  double rho_spent = 0.0;
  double rho_cap = 0.0;
  std::vector<ChargeEntry> ledger_entries;
  double wall_ms = 0.0;
  // Test-mode traces (empty unless requested).
  std::vector<std::vector<double>> trajectory;
  std::vector<double> true_grad_norms;
  std::vector<double> estimator_errors;  // ||grad_est - grad F|| per step
  std::vector<double> noisy_norms;       // estimator norms at stop checks
  std::vector<std::size_t> round_steps;  // inner steps per outer round
  // Up-front schedule quantities frozen into the report for audits
  // (round counts, noise scales, floors, step sizes).
  std::map<std::string, double> schedule_summary;
};

// --- KL Spider -------------------------------------------------------------

struct SpiderRound {
  double phi;          // target excess-risk threshold for the round
  std::size_t steps;   // T_k, ceil'd and floored at 1
  double sigma;        // per-coordinate noise std for difference estimates
  double charge_fresh; // ledger charge for the fresh full gradient
  double charge_diff;  // ledger charge per difference estimate
};

// Frozen up-front schedule for the Spider run. Noise levels carry a sqrt(2)
// factor relative to the bare Gaussian calibration so that the fresh and
// difference mechanism families each consume rho/2, making the whole run
// rho-zCDP; the per-mechanism ledger charges are rho/(2K) and
// rho/(2 K T_k). noise_scale = 0 yields the exact zero-noise limit
// (phi_floor collapses to 0) with unchanged charges and control flow.
struct SpiderSchedule {
  std::size_t n = 0;
  std::size_t d = 0;
  double rho = 0.0;
  double beta = 0.0;
  double F0 = 0.0;
  double gamma = 0.0;
  double kappa = 0.0;
  double L0 = 0.0;
  double L1 = 0.0;
  double noise_scale = 1.0;
  double floor_scale = 1.0;

  double c = 0.0;           // contraction factor, > 1
  std::size_t K = 0;        // outer rounds
  double beta_prime = 0.0;  // inner failure probability
  double sigma_hat = 0.0;   // fresh-gradient noise std (per coordinate)
  double phi_floor = 0.0;
  std::vector<SpiderRound> rounds;

  double total_scheduled_charge() const;
  // Movement bound that holds with probability 1 given the frozen schedule:
  // each executed step travels exactly phi_k^{1/kappa} / (4 gamma L1).
  double trajectory_bound_explicit() const;
  // K F0^{1/kappa} / (4 gamma L1): the closed-form envelope of the sum
  // above; can undershoot it for kappa < 2 once phase lengths are ceil'd,
  // so it is reported rather than asserted there.
  double trajectory_bound_closed_form() const;
};

// Computes the full schedule. Throws ConfigError when the bracketed log
// term of the round-count formula is non-positive (vacuous regime) or when
// the total step count exceeds max_total_steps.
//
// floor_scale multiplies the worst-case constant 32 inside the excess-risk
// floor. At 1 (the default) the floor is the analysis value; the constant
// stack is loose enough that at small n it can exceed F0 and freeze the
// threshold recursion, so scaled-down rate experiments may shrink it. The
// budget split and per-mechanism charges do not depend on it.
SpiderSchedule spider_schedule(std::size_t n, std::size_t d, double rho,
                               double beta, double F0, double gamma,
                               double kappa, double L0, double L1,
                               double noise_scale = 1.0,
                               double floor_scale = 1.0,
                               std::size_t max_total_steps = 10'000'000);

// Runs KL Spider under the frozen schedule from w0. The objective must
// declare Lipschitz/smoothness constants valid on a ball containing the
// schedule's trajectory bound.
RunReport kl_spider(const EmpiricalObjective& obj,
                    const SpiderSchedule& schedule,
                    std::span<const double> w0, Rng& rng,
                    const RunOptions& opts = {});

// --- Adaptive noisy gradient descent ----------------------------------------

struct AdaptiveGdOptions {
  double rho = 0.0;
  double beta = 0.0;   // failure probability; only log(n sqrt(rho)/beta) > 0
                       // is required, so beta > 1 is tolerated
  double noise_scale = 1.0;
  std::size_t max_steps = 10'000'000;
};

// Per-step schedule quantities (pure helpers, unit-testable against the
// algorithm's displayed formulas).
double adaptive_gd_sigma(double noisy_norm, double L0, std::size_t n,
                         std::size_t d, double rho, double log_factor);
double adaptive_gd_charge(double noisy_norm, double L0, std::size_t n,
                          std::size_t d, double rho, double log_factor);

// Noisy GD with noise scaled to the privately estimated gradient norm and
// fully adaptive composition against a rho/2 running cap; the final step's
// release is charged at most rho/2, so every run spends at most rho.
RunReport adaptive_noisy_gd(const EmpiricalObjective& obj,
                            const AdaptiveGdOptions& options,
                            std::span<const double> w0, Rng& rng,
                            const RunOptions& opts = {});

// Samples an iterate index with probability proportional to
// exp(-(n sqrt(rho) / (2 L0)) * grad_norms[t]). The selection costs
// sqrt(rho) in pure DP, i.e. rho/2 in zCDP, charged to `ledger` (when
// given) under the label "select_stationary".
std::size_t select_stationary(std::span<const double> grad_norms,
                              std::size_t n, double rho, double L0, Rng& rng,
                              BudgetLedger* ledger = nullptr);

// --- Strongly convex subsolver (averaged projected noisy GD) ---------------

struct ScNoisyGdOptions {
  double rho = 0.0;
  double beta = 0.0;
  double L0 = 0.0;       // Lipschitz constant of the unregularized loss
  double Ltilde1 = 0.0;  // strong-convexity modulus of the objective
  double noise_scale = 1.0;
  std::size_t max_steps = 10'000'000;  // hard guard on T, explicit error
};

// Schedule pieces of the subsolver, unit-testable in isolation.
std::size_t sc_ngd_steps(std::size_t n, std::size_t d, double rho,
                         double beta, std::size_t max_steps = 10'000'000);
double sc_ngd_sigma(double L0, std::size_t steps, std::size_t n, double rho);

// T = ceil(n^2 rho ln^2(2/beta) / d) steps of eta_t = 1/(Ltilde1 t) noisy
// gradient descent projected onto Ball(w0, L0/(2 Ltilde1)), returning the
// t-weighted average. Gradient sensitivity 2 L0 / n; per-step charge
// rho/(2T).
RunReport sc_noisy_gd(const EmpiricalObjective& obj,
                      const ScNoisyGdOptions& options,
                      std::span<const double> w0, Rng& rng,
                      const RunOptions& opts = {});

// --- Proximal point method ---------------------------------------------------

struct ProxPointOptions {
  double rho = 0.0;
  double beta = 0.0;
  double F0 = 0.0;
  double gamma = 0.0;
  double kappa = 2.0;    // >= 2
  double L0 = 0.0;
  double Ltilde1 = 0.0;  // weak-convexity modulus
  double noise_scale = 1.0;
  std::size_t max_steps = 10'000'000;
};

// Number of outer prox rounds; shares the vacuous-regime error with
// spider_schedule.
std::size_t prox_point_rounds(std::size_t n, std::size_t d,
                              const ProxPointOptions& options);

// Each round regularizes around the previous iterate (weight Ltilde1) and
// solves the strongly convex subproblem with budget rho/T and failure
// probability beta/T, starting from the prox center.
RunReport prox_point(const EmpiricalObjective& obj,
                     const ProxPointOptions& options,
                     std::span<const double> w0, Rng& rng,
                     const RunOptions& opts = {});

}  // namespace dpkl

#endif  // DPKL_CORE_OPTIMIZERS_HPP_
