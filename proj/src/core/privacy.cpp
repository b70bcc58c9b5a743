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

#include "core/privacy.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace dpkl {

void PrivacyParams::validate() const {
  if (!(rho > 0.0) || !std::isfinite(rho))
    throw DomainError("PrivacyParams: rho must be positive and finite");
  if (!(beta > 0.0 && beta < 1.0))
    throw DomainError("PrivacyParams: beta must lie in (0,1)");
}

void GaussianNoiseSpec::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw DomainError("GaussianNoiseSpec: sigma must be >= 0 and finite");
  if (dim < 1) throw DomainError("GaussianNoiseSpec: dim must be >= 1");
}

double gaussian_rho(double sensitivity, double sigma) {
  if (!(sensitivity >= 0.0))
    throw DomainError("gaussian_rho: sensitivity must be >= 0");
  if (sensitivity == 0.0) return 0.0;
  if (sigma <= 0.0)
    throw DomainError(
        "gaussian_rho: sigma == 0 with positive sensitivity has infinite "
        "zCDP cost");
  return sensitivity * sensitivity / (2.0 * sigma * sigma);
}

double sigma_for_rho(double sensitivity, double rho) {
  if (!(sensitivity >= 0.0))
    throw DomainError("sigma_for_rho: sensitivity must be >= 0");
  if (!(rho > 0.0)) throw DomainError("sigma_for_rho: rho must be positive");
  return sensitivity / std::sqrt(2.0 * rho);
}

double zcdp_to_approx_dp(double rho, double delta) {
  if (!(rho >= 0.0)) throw DomainError("zcdp_to_approx_dp: rho must be >= 0");
  if (!(delta > 0.0 && delta < 1.0))
    throw DomainError("zcdp_to_approx_dp: delta must lie in (0,1)");
  return rho + 2.0 * std::sqrt(rho * std::log(1.0 / delta));
}

double pure_dp_to_zcdp(double epsilon) {
  if (!(epsilon >= 0.0))
    throw DomainError("pure_dp_to_zcdp: epsilon must be >= 0");
  return 0.5 * epsilon * epsilon;
}

BudgetLedger::BudgetLedger(double cap) : cap_(cap) {
  if (!(cap >= 0.0) || !std::isfinite(cap))
    throw DomainError("BudgetLedger: cap must be >= 0 and finite");
}

bool BudgetLedger::try_charge(std::string_view label, double rho_i) {
  if (!(rho_i >= 0.0))
    throw DomainError("BudgetLedger: negative charge refused as a domain "
                      "error, not a budget refusal");
  if (spent_ + rho_i > cap_) return false;
  entries_.push_back(ChargeEntry{std::string(label), rho_i});
  spent_ += rho_i;
  return true;
}

double BudgetLedger::spent_for(std::string_view label) const {
  double total = 0.0;
  for (const auto& e : entries_)
    if (e.label == label) total += e.rho;
  return total;
}

std::vector<double> exponential_mechanism_probs(std::span<const double> scores,
                                                double score_sensitivity,
                                                double epsilon) {
  if (scores.empty())
    throw DomainError("exponential_mechanism: empty score list");
  if (!(epsilon > 0.0))
    throw DomainError("exponential_mechanism: epsilon must be positive");
  if (!(score_sensitivity > 0.0))
    throw DomainError("exponential_mechanism: score_sensitivity must be "
                      "positive");

  const double scale = epsilon / (2.0 * score_sensitivity);
  std::vector<double> logw(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) logw[i] = scale * scores[i];
  const double m = *std::max_element(logw.begin(), logw.end());
  double z = 0.0;
  for (auto& w : logw) {
    w = std::exp(w - m);
    z += w;
  }
  for (auto& w : logw) w /= z;
  return logw;
}

std::size_t exponential_mechanism(std::span<const double> scores,
                                  double score_sensitivity, double epsilon,
                                  Rng& rng) {
  const auto probs =
      exponential_mechanism_probs(scores, score_sensitivity, epsilon);
  const double u = rng.next_unit();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;  // guard against accumulated rounding
}

std::vector<double> gaussian_vector(std::size_t dim, double sigma, Rng& rng) {
  GaussianNoiseSpec{sigma, dim}.validate();
  std::vector<double> v(dim, 0.0);
  rng.fill_gaussian(v, sigma);
  return v;
}

double gaussian_scalar(double sigma, Rng& rng) {
  GaussianNoiseSpec{sigma, 1}.validate();
  return rng.next_gaussian(sigma);
}

}  // namespace dpkl
