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
// Randomized privacy primitives and zCDP budget accounting shared by all
// optimizers. All operations are pure given an explicit Rng; a BudgetLedger
// is a single-owner mutable value.

#ifndef DPKL_CORE_PRIVACY_HPP_
#define DPKL_CORE_PRIVACY_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/rng.hpp"

namespace dpkl {

// zCDP budget plus failure probability, validated on construction.
struct PrivacyParams {
  double rho = 0.0;   // > 0
  double beta = 0.0;  // in (0,1)

  void validate() const;  // throws DomainError
};

// Gaussian-noise shape: per-coordinate std dev and dimensionality.
// sigma == 0 is allowed (noiseless test mode).
struct GaussianNoiseSpec {
  double sigma = 0.0;
  std::size_t dim = 1;

  void validate() const;
};

// zCDP cost of the Gaussian mechanism: sensitivity^2 / (2 sigma^2).
// sigma == 0 with positive sensitivity throws (infinite cost).
double gaussian_rho(double sensitivity, double sigma);

// Inverse of gaussian_rho: sigma = sensitivity / sqrt(2 rho).
double sigma_for_rho(double sensitivity, double rho);

// rho-zCDP implies (eps, delta)-DP with eps = rho + 2 sqrt(rho ln(1/delta)).
double zcdp_to_approx_dp(double rho, double delta);

// (eps, 0)-DP implies (eps^2 / 2)-zCDP.
double pure_dp_to_zcdp(double epsilon);

struct ChargeEntry {
  std::string label;
  double rho;
};

// Running zCDP expenditure against a hard cap. Charges compose by plain
// summation in insertion order; a refused charge leaves the ledger
// bitwise unchanged. Per-step charges may be chosen adaptively.
class BudgetLedger {
 public:
  explicit BudgetLedger(double cap);

  // Appends the charge if spent + rho_i <= cap; returns false (and leaves
  // the ledger untouched) otherwise. Negative rho_i throws DomainError.
  bool try_charge(std::string_view label, double rho_i);

  double cap() const { return cap_; }
  double spent() const { return spent_; }
  double remaining() const { return cap_ - spent_; }
  const std::vector<ChargeEntry>& entries() const { return entries_; }

  // Sum of charges carrying the given label (per-mechanism audit).
  double spent_for(std::string_view label) const;

 private:
  double cap_;
  double spent_ = 0.0;
  std::vector<ChargeEntry> entries_;
};

// Normalized selection probabilities of the exponential mechanism:
// p_i proportional to exp(epsilon * scores[i] / (2 * score_sensitivity)),
// computed in log space with max subtraction so large-magnitude scores
// (e.g. n*sqrt(rho)-scaled) cannot overflow.
std::vector<double> exponential_mechanism_probs(std::span<const double> scores,
                                                double score_sensitivity,
                                                double epsilon);

// Samples an index from the exponential mechanism distribution.
std::size_t exponential_mechanism(std::span<const double> scores,
                                  double score_sensitivity, double epsilon,
                                  Rng& rng);

// I.i.d. zero-mean Gaussian coordinates, deterministic given rng state.
std::vector<double> gaussian_vector(std::size_t dim, double sigma, Rng& rng);
double gaussian_scalar(double sigma, Rng& rng);

}  // namespace dpkl

#endif  // DPKL_CORE_PRIVACY_HPP_
