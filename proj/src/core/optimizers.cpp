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

#include "core/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "core/errors.hpp"

namespace dpkl {

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::schedule_complete: return "schedule_complete";
    case StopReason::budget_exhausted: return "budget_exhausted";
    case StopReason::gradient_floor: return "gradient_floor";
    case StopReason::timeout: return "timeout";
  }
  return "unknown";
}

namespace {

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t j = 0; j < x.size(); ++j) y[j] += a * x[j];
}

void must_charge(BudgetLedger& ledger, std::string_view label, double rho) {
  if (!ledger.try_charge(label, rho))
    throw std::logic_error(
        "internal error: scheduled charge refused by the budget ledger");
}

// Scheduled charges sum to the cap exactly in real arithmetic; accumulated
// rounding can push the last few beyond it by ulps. Shave at most a 1e-9
// relative sliver off a refused scheduled charge; anything larger is a real
// schedule bug.
void charge_scheduled(BudgetLedger& ledger, std::string_view label,
                      double rho) {
  if (ledger.try_charge(label, rho)) return;
  const double rem = ledger.remaining();
  if (rem >= 0.0 && rho - rem <= 1e-9 * std::max(ledger.cap(), rho)) {
    must_charge(ledger, label, rem);
    return;
  }
  throw std::logic_error(
      "internal error: scheduled charge exceeds the remaining budget by "
      "more than rounding slack");
}

void finish_report(RunReport& report, const EmpiricalObjective& obj,
                   std::span<const double> w, const BudgetLedger& ledger,
                   std::chrono::steady_clock::time_point started) {
  report.final_w.assign(w.begin(), w.end());
  report.final_value = obj.value(w);
  if (obj.meta().f_star)
    report.final_excess = report.final_value - *obj.meta().f_star;
  report.rho_spent = ledger.spent();
  report.rho_cap = ledger.cap();
  report.ledger_entries = ledger.entries();
  report.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - started)
                       .count();
}

}  // namespace

// --- KL Spider ---------------------------------------------------------------

double SpiderSchedule::total_scheduled_charge() const {
  double total = 0.0;
  for (const auto& r : rounds)
    total += r.charge_fresh + static_cast<double>(r.steps) * r.charge_diff;
  return total;
}

double SpiderSchedule::trajectory_bound_explicit() const {
  double total = 0.0;
  for (const auto& r : rounds)
    total += static_cast<double>(r.steps) * std::pow(r.phi, 1.0 / kappa);
  return total / (4.0 * gamma * L1);
}

double SpiderSchedule::trajectory_bound_closed_form() const {
  return static_cast<double>(K) * std::pow(F0, 1.0 / kappa) /
         (4.0 * gamma * L1);
}

SpiderSchedule spider_schedule(std::size_t n, std::size_t d, double rho,
                               double beta, double F0, double gamma,
                               double kappa, double L0, double L1,
                               double noise_scale, double floor_scale,
                               std::size_t max_total_steps) {
  if (n < 1 || d < 1) throw ConfigError("spider_schedule: need n, d >= 1");
  PrivacyParams{rho, beta}.validate();
  if (!(kappa >= 1.0 && kappa <= 2.0))
    throw ConfigError("spider_schedule: kappa must lie in [1,2]");
  if (!(F0 > 0.0 && gamma > 0.0 && L0 > 0.0 && L1 > 0.0))
    throw ConfigError("spider_schedule: scale parameters must be positive");
  if (F0 > std::pow(L0 * gamma, kappa) * (1.0 + 1e-12))
    throw ConfigError("spider_schedule: F0 must not exceed (L0 gamma)^kappa");
  if (!(noise_scale >= 0.0))
    throw ConfigError("spider_schedule: noise_scale must be >= 0");
  if (!(floor_scale > 0.0))
    throw ConfigError("spider_schedule: floor_scale must be positive");

  SpiderSchedule s;
  s.n = n;
  s.d = d;
  s.rho = rho;
  s.beta = beta;
  s.F0 = F0;
  s.gamma = gamma;
  s.kappa = kappa;
  s.L0 = L0;
  s.L1 = L1;
  s.noise_scale = noise_scale;
  s.floor_scale = floor_scale;

  const double nsr = static_cast<double>(n) * std::sqrt(rho);
  const double expo = (2.0 - kappa) / kappa;
  const double bracket =
      std::log(F0) +
      kappa * std::log(nsr / (gamma * L0 * std::sqrt(static_cast<double>(d))));
  if (!(bracket > 0.0))
    throw ConfigError(
        "spider_schedule: vacuous regime, log(F0) + kappa log(n sqrt(rho) / "
        "(gamma L0 sqrt(d))) = " +
        std::to_string(bracket) + " is not positive");

  const double curvature = 64.0 * std::pow(1.0 / F0, expo) * gamma * gamma * L1;
  s.c = 1.0 + std::pow(F0, expo) / (64.0 * gamma * gamma * L1);
  const double k_real = (1.0 + curvature) * bracket;
  s.K = static_cast<std::size_t>(std::max(1.0, std::ceil(k_real)));

  const double Kd = static_cast<double>(s.K) * static_cast<double>(d);
  const double ratio = gamma * L0 *
                       std::sqrt(static_cast<double>(s.K) *
                                 static_cast<double>(d)) /
                       (nsr * std::pow(F0, 1.0 / kappa));
  s.beta_prime = (beta / static_cast<double>(s.K)) *
                 std::pow(ratio, 2.0 - kappa);
  if (!(s.beta_prime > 0.0 && s.beta_prime < 1.0))
    throw ConfigError("spider_schedule: derived inner failure probability " +
                      std::to_string(s.beta_prime) + " escapes (0,1)");

  // sqrt(2) budget split: rho/2 to fresh gradients, rho/2 to differences.
  const double root2 = std::sqrt(2.0);
  s.sigma_hat = noise_scale * root2 * L0 *
                std::sqrt(static_cast<double>(s.K)) / nsr;
  const double floor_root = noise_scale * floor_scale * 32.0 * gamma * L0 *
                            std::sqrt(Kd * std::log(1.0 / s.beta_prime)) /
                            nsr;
  s.phi_floor = std::min(std::pow(floor_root, kappa), F0);

  s.rounds.reserve(s.K);
  double phi_prev = F0;
  std::size_t total_steps = 0;
  for (std::size_t k = 0; k < s.K; ++k) {
    SpiderRound r;
    r.phi = std::max(phi_prev / s.c, s.phi_floor);
    const double t_real = std::pow(F0 / r.phi, expo);
    r.steps = static_cast<std::size_t>(std::max(1.0, std::ceil(t_real)));
    r.sigma = noise_scale * root2 * std::pow(r.phi, 1.0 / kappa) *
              std::sqrt(static_cast<double>(r.steps) *
                        static_cast<double>(s.K)) /
              (gamma * nsr);
    r.charge_fresh = rho / (2.0 * static_cast<double>(s.K));
    r.charge_diff = rho / (2.0 * static_cast<double>(s.K) *
                           static_cast<double>(r.steps));
    total_steps += r.steps;
    if (total_steps > max_total_steps)
      throw ConfigError("spider_schedule: total inner steps exceed the guard "
                        "of " + std::to_string(max_total_steps));
    phi_prev = r.phi;
    s.rounds.push_back(r);
  }
  return s;
}

RunReport kl_spider(const EmpiricalObjective& obj,
                    const SpiderSchedule& schedule,
                    std::span<const double> w0, Rng& rng,
                    const RunOptions& opts) {
  if (w0.size() != obj.dim())
    throw DomainError("kl_spider: w0 dimension mismatch");
  if (schedule.rounds.size() != schedule.K)
    throw ConfigError("kl_spider: schedule is incomplete");

  const auto started = std::chrono::steady_clock::now();
  const std::size_t d = obj.dim();
  BudgetLedger ledger(schedule.rho);
  RunReport report;
  std::vector<double> w(w0.begin(), w0.end());
  std::vector<double> w_next(d), grad_est(d), delta(d), noise(d), true_grad(d);

  auto record_point = [&](std::span<const double> at) {
    if (opts.record_trajectory)
      report.trajectory.emplace_back(at.begin(), at.end());
  };
  auto record_oracle = [&](std::span<const double> at,
                           std::span<const double> est) {
    if (!opts.record_oracle_stats) return;
    obj.gradient(at, true_grad);
    report.true_grad_norms.push_back(norm2(true_grad));
    double err2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = est[j] - true_grad[j];
      err2 += diff * diff;
    }
    report.estimator_errors.push_back(std::sqrt(err2));
  };

  report.schedule_summary = {
      {"K", static_cast<double>(schedule.K)},
      {"c", schedule.c},
      {"beta_prime", schedule.beta_prime},
      {"sigma_hat", schedule.sigma_hat},
      {"phi_floor", schedule.phi_floor},
      {"noise_scale", schedule.noise_scale},
      {"floor_scale", schedule.floor_scale},
      {"total_scheduled_charge", schedule.total_scheduled_charge()},
      {"trajectory_bound", schedule.trajectory_bound_explicit()},
  };

  record_point(w);
  for (std::size_t k = 0; k < schedule.K; ++k) {
    const SpiderRound& round = schedule.rounds[k];
    const double phi_root = std::pow(round.phi, 1.0 / schedule.kappa);
    const double stop_threshold =
        (7.0 / (8.0 * schedule.gamma)) * phi_root;

    std::size_t steps_this_round = 0;

    // Fresh noisy full gradient.
    obj.gradient(w, grad_est);
    rng.fill_gaussian(noise, schedule.sigma_hat);
    for (std::size_t j = 0; j < d; ++j) grad_est[j] += noise[j];
    charge_scheduled(ledger, "spider/fresh", round.charge_fresh);
    record_oracle(w, grad_est);

    for (std::size_t t = 0; t < round.steps; ++t) {
      const double est_norm = norm2(grad_est);
      report.noisy_norms.push_back(est_norm);
      if (est_norm < stop_threshold) break;  // round-level adaptive stop

      // Normalized step: each update travels phi^{1/kappa} / (4 gamma L1).
      const double eta =
          phi_root / (4.0 * schedule.gamma * schedule.L1 * est_norm);
      for (std::size_t j = 0; j < d; ++j)
        w_next[j] = w[j] - eta * grad_est[j];

      obj.gradient_difference(w_next, w, delta);
      rng.fill_gaussian(noise, round.sigma);
      for (std::size_t j = 0; j < d; ++j) grad_est[j] += delta[j] + noise[j];
      charge_scheduled(ledger, "spider/diff", round.charge_diff);

      w.swap(w_next);
      ++report.steps;
      ++steps_this_round;
      record_point(w);
      record_oracle(w, grad_est);
      if (opts.deadline.expired()) {
        report.stop = StopReason::timeout;
        report.rounds = k + 1;
        report.round_steps.push_back(steps_this_round);
        finish_report(report, obj, w, ledger, started);
        return report;
      }
    }
    ++report.rounds;
    report.round_steps.push_back(steps_this_round);
    if (opts.deadline.expired()) {
      report.stop = StopReason::timeout;
      finish_report(report, obj, w, ledger, started);
      return report;
    }
  }

  report.stop = StopReason::schedule_complete;
  finish_report(report, obj, w, ledger, started);
  return report;
}

// --- Adaptive noisy gradient descent ----------------------------------------

double adaptive_gd_sigma(double noisy_norm, double L0, std::size_t n,
                         std::size_t d, double rho, double log_factor) {
  const double nsr = static_cast<double>(n) * std::sqrt(rho);
  const double floor = 2.0 * L0 / nsr;
  const double scaled =
      noisy_norm / std::sqrt(static_cast<double>(d) * log_factor);
  return std::max(scaled, floor);
}

double adaptive_gd_charge(double noisy_norm, double L0, std::size_t n,
                          std::size_t d, double rho, double log_factor) {
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  const double norm_sq = noisy_norm * noisy_norm;
  const double vec_cost =
      norm_sq == 0.0
          ? std::numeric_limits<double>::infinity()
          : L0 * L0 * static_cast<double>(d) * log_factor / (n2 * norm_sq);
  return std::min(vec_cost, rho / 2.0) + std::sqrt(rho) / static_cast<double>(n);
}

RunReport adaptive_noisy_gd(const EmpiricalObjective& obj,
                            const AdaptiveGdOptions& options,
                            std::span<const double> w0, Rng& rng,
                            const RunOptions& opts) {
  if (w0.size() != obj.dim())
    throw DomainError("adaptive_noisy_gd: w0 dimension mismatch");
  if (!(options.rho > 0.0))
    throw ConfigError("adaptive_noisy_gd: rho must be positive");
  if (!obj.meta().smoothness || !(*obj.meta().smoothness > 0.0))
    throw ConfigError("adaptive_noisy_gd: objective must declare smoothness");
  const double L0 = obj.meta().lipschitz;
  if (!(L0 > 0.0))
    throw ConfigError("adaptive_noisy_gd: objective must declare a Lipschitz "
                      "constant");

  const std::size_t n = obj.n();
  const std::size_t d = obj.dim();
  const double rho = options.rho;
  const double nsr = static_cast<double>(n) * std::sqrt(rho);
  const double log_factor = std::log(nsr / options.beta);
  if (!(log_factor > 0.0))
    throw ConfigError("adaptive_noisy_gd: log(n sqrt(rho)/beta) must be "
                      "positive (n sqrt(rho) <= beta)");

  const double eta = 1.0 / (2.0 * *obj.meta().smoothness);
  const double sigma_hat =
      L0 / (std::sqrt(static_cast<double>(n)) * std::pow(rho, 0.25));
  const double sigma_floor = 2.0 * L0 / nsr;

  const auto started = std::chrono::steady_clock::now();
  BudgetLedger ledger(rho);
  RunReport report;
  report.schedule_summary = {
      {"eta", eta},
      {"sigma_hat", sigma_hat},
      {"sigma_floor", sigma_floor},
      {"log_factor", log_factor},
  };
  std::vector<double> w(w0.begin(), w0.end());
  std::vector<double> grad(d), noise(d);

  if (opts.record_trajectory)
    report.trajectory.emplace_back(w.begin(), w.end());

  for (;;) {
    if (report.steps >= options.max_steps)
      throw ConfigError("adaptive_noisy_gd: step guard exceeded");

    obj.gradient(w, grad);
    const double true_norm = norm2(grad);
    if (opts.record_oracle_stats) report.true_grad_norms.push_back(true_norm);

    const double n_t =
        true_norm + options.noise_scale * rng.next_gaussian(sigma_hat);
    report.noisy_norms.push_back(n_t);
    const double sigma_t = adaptive_gd_sigma(n_t, L0, n, d, rho, log_factor);

    rng.fill_gaussian(noise, sigma_t);
    for (std::size_t j = 0; j < d; ++j)
      w[j] -= eta * (grad[j] + options.noise_scale * noise[j]);
    ++report.steps;
    if (opts.record_trajectory)
      report.trajectory.emplace_back(w.begin(), w.end());

    const double rho_t = adaptive_gd_charge(n_t, L0, n, d, rho, log_factor);
    const bool crosses = ledger.spent() + rho_t > rho / 2.0;
    if (crosses) {
      // The run ends here. The final release is covered by the sigma floor
      // argument, so it is charged at most rho/2 regardless of the per-step
      // formula; the total therefore never exceeds rho.
      must_charge(ledger, "adaptive/final", std::min(rho_t, rho / 2.0));
      report.stop = sigma_t <= sigma_floor * (1.0 + 1e-12)
                        ? StopReason::gradient_floor
                        : StopReason::budget_exhausted;
      break;
    }
    must_charge(ledger, "adaptive/step", rho_t);

    if (opts.deadline.expired()) {
      report.stop = StopReason::timeout;
      break;
    }
  }

  report.rounds = report.steps;
  finish_report(report, obj, w, ledger, started);
  return report;
}

std::size_t select_stationary(std::span<const double> grad_norms,
                              std::size_t n, double rho, double L0, Rng& rng,
                              BudgetLedger* ledger) {
  if (grad_norms.empty())
    throw DomainError("select_stationary: empty gradient-norm list");
  if (!(rho > 0.0) || !(L0 > 0.0) || n < 1)
    throw DomainError("select_stationary: need rho > 0, L0 > 0, n >= 1");

  // Weights exp(-(n sqrt(rho) / (2 L0)) * norm_t): exponential mechanism
  // with scores -norm_t, sensitivity L0/n and epsilon = sqrt(rho).
  std::vector<double> scores(grad_norms.size());
  for (std::size_t i = 0; i < grad_norms.size(); ++i)
    scores[i] = -grad_norms[i];
  const double epsilon = std::sqrt(rho);
  const std::size_t pick = exponential_mechanism(
      scores, L0 / static_cast<double>(n), epsilon, rng);
  if (ledger != nullptr)
    must_charge(*ledger, "select_stationary", pure_dp_to_zcdp(epsilon));
  return pick;
}

// --- Strongly convex subsolver ------------------------------------------------

std::size_t sc_ngd_steps(std::size_t n, std::size_t d, double rho,
                         double beta, std::size_t max_steps) {
  if (!(rho > 0.0 && beta > 0.0 && beta < 1.0))
    throw ConfigError("sc_ngd_steps: need rho > 0 and beta in (0,1)");
  const double log_term = std::log(2.0 / beta);
  const double t_real = static_cast<double>(n) * static_cast<double>(n) *
                        rho * log_term * log_term / static_cast<double>(d);
  if (t_real > static_cast<double>(max_steps))
    throw ConfigError("sc_noisy_gd: T = " + std::to_string(t_real) +
                      " exceeds the step guard of " +
                      std::to_string(max_steps));
  return static_cast<std::size_t>(std::max(1.0, std::ceil(t_real)));
}

double sc_ngd_sigma(double L0, std::size_t steps, std::size_t n, double rho) {
  return 2.0 * L0 * std::sqrt(static_cast<double>(steps)) /
         (static_cast<double>(n) * std::sqrt(rho));
}

RunReport sc_noisy_gd(const EmpiricalObjective& obj,
                      const ScNoisyGdOptions& options,
                      std::span<const double> w0, Rng& rng,
                      const RunOptions& opts) {
  if (w0.size() != obj.dim())
    throw DomainError("sc_noisy_gd: w0 dimension mismatch");
  if (!(options.rho > 0.0 && options.beta > 0.0 && options.beta < 1.0))
    throw ConfigError("sc_noisy_gd: need rho > 0 and beta in (0,1)");
  if (!(options.L0 > 0.0 && options.Ltilde1 > 0.0))
    throw ConfigError("sc_noisy_gd: need L0 > 0 and Ltilde1 > 0");

  const std::size_t n = obj.n();
  const std::size_t d = obj.dim();
  const std::size_t T =
      sc_ngd_steps(n, d, options.rho, options.beta, options.max_steps);
  const double sigma = sc_ngd_sigma(options.L0, T, n, options.rho);
  const double step_charge = gaussian_rho(2.0 * options.L0 /
                                          static_cast<double>(n), sigma);
  const double radius = options.L0 / (2.0 * options.Ltilde1);

  const auto started = std::chrono::steady_clock::now();
  BudgetLedger ledger(options.rho);
  RunReport report;
  report.schedule_summary = {
      {"T", static_cast<double>(T)},
      {"sigma", sigma},
      {"radius", radius},
      {"step_charge", step_charge},
  };
  std::vector<double> w(w0.begin(), w0.end());
  std::vector<double> grad(d), noise(d), weighted(d, 0.0);

  // Running t-weighted average; w_1 = w0 carries weight 1.
  axpy(1.0, w, weighted);
  double weight_sum = 1.0;

  for (std::size_t t = 1; t < T; ++t) {
    obj.gradient(w, grad);
    rng.fill_gaussian(noise, options.noise_scale * sigma);
    const double eta = 1.0 / (options.Ltilde1 * static_cast<double>(t));
    for (std::size_t j = 0; j < d; ++j) w[j] -= eta * (grad[j] + noise[j]);

    // Euclidean projection onto Ball(w0, L0 / (2 Ltilde1)), re-checked so
    // the radius bound holds bitwise after rounding.
    double dist2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = w[j] - w0[j];
      dist2 += diff * diff;
    }
    double dist = std::sqrt(dist2);
    while (dist > radius) {
      const double scale = radius / dist;
      dist2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        w[j] = w0[j] + scale * (w[j] - w0[j]);
        const double diff = w[j] - w0[j];
        dist2 += diff * diff;
      }
      const double new_dist = std::sqrt(dist2);
      if (new_dist >= dist) {
        // Rounding refuses to shrink further; nudge inward.
        for (std::size_t j = 0; j < d; ++j)
          w[j] = w0[j] + (1.0 - 1e-15) * (w[j] - w0[j]);
        dist2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = w[j] - w0[j];
          dist2 += diff * diff;
        }
      }
      dist = std::sqrt(dist2);
    }

    charge_scheduled(ledger, "sc_ngd/grad", step_charge);
    ++report.steps;
    const double weight = static_cast<double>(t + 1);
    axpy(weight, w, weighted);
    weight_sum += weight;
    if (opts.record_trajectory)
      report.trajectory.emplace_back(w.begin(), w.end());

    if (opts.deadline.expired()) {
      report.stop = StopReason::timeout;
      break;
    }
  }

  std::vector<double> averaged(d);
  for (std::size_t j = 0; j < d; ++j) averaged[j] = weighted[j] / weight_sum;
  if (report.stop != StopReason::timeout)
    report.stop = StopReason::schedule_complete;
  report.rounds = 1;
  finish_report(report, obj, averaged, ledger, started);
  return report;
}

// --- Proximal point method -----------------------------------------------------

std::size_t prox_point_rounds(std::size_t n, std::size_t d,
                              const ProxPointOptions& options) {
  if (!(options.kappa >= 2.0))
    throw ConfigError("prox_point: kappa must be >= 2");
  if (!(options.F0 > 0.0 && options.gamma > 0.0 && options.L0 > 0.0 &&
        options.Ltilde1 > 0.0))
    throw ConfigError("prox_point: scale parameters must be positive");
  const double nsr = static_cast<double>(n) * std::sqrt(options.rho);
  const double bracket =
      std::log(options.F0) +
      options.kappa * std::log(nsr / (options.gamma * options.L0 *
                                      std::sqrt(static_cast<double>(d))));
  if (!(bracket > 0.0))
    throw ConfigError(
        "prox_point: vacuous regime, log(F0) + kappa log(n sqrt(rho) / "
        "(gamma L0 sqrt(d))) = " + std::to_string(bracket) +
        " is not positive");
  const double t_real =
      (1.0 + 32.0 * std::pow(options.F0, (options.kappa - 2.0) / options.kappa) *
                 options.gamma * options.gamma * options.Ltilde1) *
      bracket;
  return static_cast<std::size_t>(std::max(1.0, std::ceil(t_real)));
}

RunReport prox_point(const EmpiricalObjective& obj,
                     const ProxPointOptions& options,
                     std::span<const double> w0, Rng& rng,
                     const RunOptions& opts) {
  if (w0.size() != obj.dim())
    throw DomainError("prox_point: w0 dimension mismatch");
  PrivacyParams{options.rho, options.beta}.validate();

  const std::size_t T = prox_point_rounds(obj.n(), obj.dim(), options);
  const double round_rho = options.rho / static_cast<double>(T);
  const double beta_prime = options.beta / static_cast<double>(T);

  const auto started = std::chrono::steady_clock::now();
  BudgetLedger ledger(options.rho);
  RunReport report;
  report.schedule_summary = {
      {"T", static_cast<double>(T)},
      {"round_rho", round_rho},
      {"beta_prime", beta_prime},
  };
  std::vector<double> w(w0.begin(), w0.end());
  if (opts.record_trajectory)
    report.trajectory.emplace_back(w.begin(), w.end());

  for (std::size_t t = 0; t < T; ++t) {
    EmpiricalObjective regularized = prox_regularize(obj, w, options.Ltilde1);
    ScNoisyGdOptions sub;
    sub.rho = round_rho;
    sub.beta = beta_prime;
    sub.L0 = options.L0;
    sub.Ltilde1 = options.Ltilde1;
    sub.noise_scale = options.noise_scale;
    sub.max_steps = options.max_steps;
    RunOptions sub_opts;
    sub_opts.deadline = opts.deadline;
    RunReport sub_report = sc_noisy_gd(regularized, sub, w, rng, sub_opts);
    w = sub_report.final_w;
    report.steps += sub_report.steps;
    report.round_steps.push_back(sub_report.steps);
    ++report.rounds;
    charge_scheduled(ledger, "prox/round", round_rho);
    if (opts.record_trajectory)
      report.trajectory.emplace_back(w.begin(), w.end());
    if (opts.record_oracle_stats)
      report.true_grad_norms.push_back(obj.gradient_norm(w));

    if (sub_report.stop == StopReason::timeout || opts.deadline.expired()) {
      report.stop = StopReason::timeout;
      finish_report(report, obj, w, ledger, started);
      return report;
    }
  }

  report.stop = StopReason::schedule_complete;
  finish_report(report, obj, w, ledger, started);
  return report;
}

}  // namespace dpkl
