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
// Loss-function abstraction, synthetic instances with known structure
// (quadratic PL, one-dimensional piecewise growth, linear-plus-Huber), and
// numerical certifiers for the KL and growth conditions. Objectives are
// immutable after construction and safe to share across concurrent runs.

#ifndef DPKL_CORE_LOSSES_HPP_
#define DPKL_CORE_LOSSES_HPP_

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "core/rng.hpp"

namespace dpkl {

// Ordered collection of n examples, each a d-vector (row-major storage).
// Sign-token datasets are stored as a single +/-1 column.
struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> flat;  // n * d values
  bool sign_tokens = false;

  std::span<const double> row(std::size_t i) const {
    return {flat.data() + i * d, d};
  }
  static Dataset from_rows(const std::vector<std::vector<double>>& rows);
  void validate() const;
};

struct Ball {
  std::vector<double> center;
  double radius = 0.0;  // > 0 (may be +inf for conditions that hold globally)

  bool contains(std::span<const double> w, double slack = 1e-12) const;
};

// Path-connected component of the sublevel set {F <= alpha} containing the
// anchor. Membership is not numerically checkable; callers are trusted.
struct LevelSetComponent {
  double alpha = 0.0;
  std::vector<double> anchor;
};

using KlRegion = std::variant<Ball, LevelSetComponent>;

// (gamma, kappa) pair with the region on which the starred KL inequality
// F(w) - f_ref <= gamma^kappa ||grad F(w)||^kappa is asserted.
struct KlSpec {
  double gamma = 0.0;  // > 0
  double kappa = 0.0;  // >= 1
  KlRegion region;

  void validate() const;
};

// F(w) - F(w*) >= lambda^tau ||w - w*||^tau.
struct GrowthSpec {
  double lambda = 0.0;  // > 0
  double tau = 0.0;     // > 1

  void validate() const;
};

// Growth -> KL conversion for convex losses: (1/gamma, kappa/(kappa-1))-growth
// implies (gamma, kappa)-KL. Input is the growth pair, output the KL pair.
struct KlPair {
  double gamma;
  double kappa;
};
KlPair growth_to_kl(double lambda, double tau);

// KL -> growth conversion: (gamma, kappa)-KL implies growth with
// tau = kappa/(kappa-1) and lambda = (kappa-1)/(gamma*kappa). kappa > 1.
struct GrowthPair {
  double lambda;
  double tau;
};
GrowthPair kl_to_growth(double gamma, double kappa);

// Declared constants and known structure of an empirical objective. The
// Lipschitz constant is region-scoped (quadratics are not globally
// Lipschitz); the declaring experiment picks the region.
struct ObjectiveMeta {
  std::string type;
  double lipschitz = 0.0;                 // L0, declared
  std::optional<double> smoothness;       // L1
  std::optional<double> weak_convexity;   // Ltilde1
  std::optional<double> f_star;
  std::optional<std::vector<double>> w_star;
  std::optional<KlSpec> kl;
  std::optional<GrowthSpec> growth;
  std::map<std::string, double> params;   // instance-specific scalars
};

// Per-example loss/gradient oracle plus its average F(.;S). The average
// gradient equals the mean of per-example gradients by construction;
// instances may install algebraically equivalent O(d) aggregate paths,
// which tests cross-check against direct summation.
class EmpiricalObjective {
 public:
  using PerExampleValue =
      std::function<double(std::span<const double>, std::span<const double>)>;
  using PerExampleGrad = std::function<void(
      std::span<const double>, std::span<const double>, std::span<double>)>;
  using AggregateValue = std::function<double(std::span<const double>)>;
  using AggregateGrad =
      std::function<void(std::span<const double>, std::span<double>)>;
  using AggregateGradDiff = std::function<void(
      std::span<const double>, std::span<const double>, std::span<double>)>;

  EmpiricalObjective(Dataset data, std::size_t dim, PerExampleValue f,
                     PerExampleGrad g, ObjectiveMeta meta);

  void set_aggregate_value(AggregateValue v) { agg_value_ = std::move(v); }
  void set_aggregate_gradient(AggregateGrad g) { agg_grad_ = std::move(g); }
  void set_aggregate_gradient_difference(AggregateGradDiff g) {
    agg_grad_diff_ = std::move(g);
  }

  std::size_t n() const { return data_.n; }
  std::size_t dim() const { return dim_; }
  const Dataset& data() const { return data_; }
  const ObjectiveMeta& meta() const { return meta_; }
  ObjectiveMeta& meta() { return meta_; }

  double value(std::span<const double> w) const;
  void gradient(std::span<const double> w, std::span<double> out) const;
  std::vector<double> gradient(std::span<const double> w) const;
  double gradient_norm(std::span<const double> w) const;

  // Mean over examples of grad f(w_new;x) - grad f(w_old;x).
  void gradient_difference(std::span<const double> w_new,
                           std::span<const double> w_old,
                           std::span<double> out) const;

  double per_example_value(std::size_t i, std::span<const double> w) const;
  void per_example_gradient(std::size_t i, std::span<const double> w,
                            std::span<double> out) const;

  // Per-example oracle on an arbitrary example row (not necessarily a
  // dataset member); used by wrappers and the sensitivity probes.
  double per_example_value_raw(std::span<const double> w,
                               std::span<const double> x) const;
  void per_example_gradient_raw(std::span<const double> w,
                                std::span<const double> x,
                                std::span<double> out) const;

  // Mean gradient with row `index` replaced by `x_new` (replace-one
  // neighboring dataset), used by the sensitivity probes.
  void gradient_with_replacement(std::span<const double> w, std::size_t index,
                                 std::span<const double> x_new,
                                 std::span<double> out) const;

  // Direct per-example summation, bypassing any aggregate fast path.
  double value_by_summation(std::span<const double> w) const;
  void gradient_by_summation(std::span<const double> w,
                             std::span<double> out) const;

 private:
  void check_dim(std::span<const double> w) const;

  Dataset data_;
  std::size_t dim_;
  PerExampleValue f_;
  PerExampleGrad g_;
  AggregateValue agg_value_;
  AggregateGrad agg_grad_;
  AggregateGradDiff agg_grad_diff_;
  ObjectiveMeta meta_;
};

// f(w;x) = (mu/2) ||w - x||^2, so F is mu-strongly convex and satisfies the
// PL identity F - F* = ||grad F||^2 / (2 mu) exactly; KL spec
// (gamma = 1/sqrt(2 mu), kappa = 2) holds everywhere.
EmpiricalObjective make_quadratic_pl(std::size_t d, double mu,
                                     Dataset centers);

// One-dimensional piecewise instance over sign tokens {-1,+1} with
// (1, tau)-growth near its minimizer w* = a, where F(w*) = (1 - rho) a.
// Counts are rounded (ceil(n (1+rho)/2) positive tokens) and the effective
// rho recomputed from the realized counts; both appear in meta().params
// along with the numerically determined interval [growth_lo, growth_hi] on
// which the (1,tau)-growth inequality holds.
EmpiricalObjective make_growth_instance(double a, double tau, double rho_frac,
                                        std::size_t n);

// F(w;S) = (1/n) sum <w, x_i> + lambda H(w) with Huber regularization
// (quadratic inside ||w|| <= 4D, linear outside); N rows are random sign
// vectors scaled to +/- L0/sqrt(d), the rest zero; lambda = N L0 / (2 n D),
// which places the minimizer w* = -sum(x_i)/(2 n lambda) inside ||w*|| <= D.
EmpiricalObjective make_linear_huber(std::size_t d, std::size_t n, double L0,
                                     double D, std::size_t N, Rng& rng);

// Same construction over a caller-supplied dataset (rows beyond the first N
// are expected to be zero); used when reloading persisted instances.
EmpiricalObjective make_linear_huber_from_dataset(Dataset ds, double L0,
                                                  double D, std::size_t N);

// Adds weight * ||w - center||^2 to every per-example loss. A weight-weakly
// convex objective becomes weight-strongly convex. The declared Lipschitz
// constant is inherited from the base objective: the regularizer is
// data-independent, so gradient sensitivity is unchanged.
EmpiricalObjective prox_regularize(const EmpiricalObjective& obj,
                                   std::vector<double> center, double weight);

struct CertReport {
  double max_violation = 0.0;
  double tol = 0.0;
  bool pass = false;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Checks (F(w) - f_ref) - gamma^kappa ||grad F(w)||^kappa <= tol over the
// sample, with tol = 1e-9 * max(1, |f_ref|). Ball-region membership is
// verified; level-set membership is the caller's responsibility.
CertReport certify_kl(const EmpiricalObjective& obj, const KlSpec& spec,
                      const std::vector<std::vector<double>>& sample,
                      double f_ref);

// Checks lambda^tau ||w - w*||^tau - (F(w) - F(w*)) <= tol over the sample.
// Requires obj.meta().w_star.
CertReport certify_growth(const EmpiricalObjective& obj,
                          const GrowthSpec& spec,
                          const std::vector<std::vector<double>>& sample);

// Low-discrepancy sample of `count` points in the ball (Kronecker sequence,
// rejection-filtered), plus the center and, when known, w*. Deterministic.
std::vector<std::vector<double>> certifier_grid(
    const Ball& region, std::size_t count,
    const std::optional<std::vector<double>>& w_star = std::nullopt);

// Empirical replace-one gradient sensitivity at w: max over `trials` of
// ||grad F(w;S) - grad F(w;S')|| with S' differing from S in one row drawn
// by `sampler` (defaults to resampling an existing dataset row).
using ReplacementSampler = std::function<std::vector<double>(Rng&)>;
double gradient_sensitivity_probe(const EmpiricalObjective& obj,
                                  std::span<const double> w,
                                  std::size_t trials, Rng& rng,
                                  const ReplacementSampler& sampler = nullptr);

// Same probe for gradient-difference estimates between consecutive iterates
// (the quantity privatized by the inner Spider loop).
double gradient_difference_sensitivity_probe(
    const EmpiricalObjective& obj, std::span<const double> w_new,
    std::span<const double> w_old, std::size_t trials, Rng& rng,
    const ReplacementSampler& sampler = nullptr);

// Instance persistence: <base>.csv holds the dataset (one row per example,
// sign tokens as a single +/-1 column) and <base>.json the metadata
// (n, d, L0, L1, Ltilde1, f_star, w_star, kl_spec, growth_spec, params).
void save_instance(const EmpiricalObjective& obj, const std::string& base);
EmpiricalObjective load_instance(const std::string& base);

// Vector helpers shared across modules.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace dpkl

#endif  // DPKL_CORE_LOSSES_HPP_
