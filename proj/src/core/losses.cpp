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

#include "core/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "core/errors.hpp"
#include "json.hpp"

namespace dpkl {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Dataset Dataset::from_rows(const std::vector<std::vector<double>>& rows) {
  Dataset ds;
  ds.n = rows.size();
  ds.d = rows.empty() ? 0 : rows.front().size();
  ds.flat.reserve(ds.n * ds.d);
  for (const auto& r : rows) {
    if (r.size() != ds.d)
      throw DomainError("Dataset: rows must share one dimension");
    ds.flat.insert(ds.flat.end(), r.begin(), r.end());
  }
  ds.validate();
  return ds;
}

void Dataset::validate() const {
  if (n < 1) throw DomainError("Dataset: need at least one example");
  if (d < 1) throw DomainError("Dataset: dimension must be >= 1");
  if (flat.size() != n * d) throw DomainError("Dataset: storage size mismatch");
  if (sign_tokens) {
    if (d != 1) throw DomainError("Dataset: sign tokens are one-dimensional");
    for (double v : flat)
      if (v != 1.0 && v != -1.0)
        throw DomainError("Dataset: sign tokens must be +/-1");
  }
}

bool Ball::contains(std::span<const double> w, double slack) const {
  if (std::isinf(radius)) return true;
  if (w.size() != center.size()) return false;
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double diff = w[i] - center[i];
    s += diff * diff;
  }
  return std::sqrt(s) <= radius * (1.0 + slack);
}

void KlSpec::validate() const {
  if (!(gamma > 0.0)) throw DomainError("KlSpec: gamma must be positive");
  if (!(kappa >= 1.0)) throw DomainError("KlSpec: kappa must be >= 1");
  if (const auto* ball = std::get_if<Ball>(&region)) {
    if (!(ball->radius > 0.0))
      throw DomainError("KlSpec: ball radius must be positive");
  }
}

void GrowthSpec::validate() const {
  if (!(lambda > 0.0)) throw DomainError("GrowthSpec: lambda must be positive");
  if (!(tau > 1.0)) throw DomainError("GrowthSpec: tau must exceed 1");
}

KlPair growth_to_kl(double lambda, double tau) {
  GrowthSpec{lambda, tau}.validate();
  return KlPair{1.0 / lambda, tau / (tau - 1.0)};
}

GrowthPair kl_to_growth(double gamma, double kappa) {
  if (!(gamma > 0.0)) throw DomainError("kl_to_growth: gamma must be positive");
  if (!(kappa > 1.0))
    throw DomainError("kl_to_growth: kappa must exceed 1 (tau degenerates)");
  return GrowthPair{(kappa - 1.0) / (gamma * kappa), kappa / (kappa - 1.0)};
}

EmpiricalObjective::EmpiricalObjective(Dataset data, std::size_t dim,
                                       PerExampleValue f, PerExampleGrad g,
                                       ObjectiveMeta meta)
    : data_(std::move(data)),
      dim_(dim),
      f_(std::move(f)),
      g_(std::move(g)),
      meta_(std::move(meta)) {
  data_.validate();
  if (dim_ < 1) throw DomainError("EmpiricalObjective: dim must be >= 1");
  if (!f_ || !g_)
    throw DomainError("EmpiricalObjective: per-example oracles required");
}

void EmpiricalObjective::check_dim(std::span<const double> w) const {
  if (w.size() != dim_)
    throw DomainError("EmpiricalObjective: parameter dimension mismatch");
}

double EmpiricalObjective::value(std::span<const double> w) const {
  check_dim(w);
  if (agg_value_) return agg_value_(w);
  return value_by_summation(w);
}

double EmpiricalObjective::value_by_summation(std::span<const double> w) const {
  check_dim(w);
  double s = 0.0;
  for (std::size_t i = 0; i < data_.n; ++i) s += f_(w, data_.row(i));
  return s / static_cast<double>(data_.n);
}

void EmpiricalObjective::gradient(std::span<const double> w,
                                  std::span<double> out) const {
  check_dim(w);
  if (out.size() != dim_)
    throw DomainError("EmpiricalObjective: gradient output size mismatch");
  if (agg_grad_) {
    agg_grad_(w, out);
    return;
  }
  gradient_by_summation(w, out);
}

std::vector<double> EmpiricalObjective::gradient(
    std::span<const double> w) const {
  std::vector<double> out(dim_);
  gradient(w, out);
  return out;
}

double EmpiricalObjective::gradient_norm(std::span<const double> w) const {
  return norm2(gradient(w));
}

void EmpiricalObjective::gradient_by_summation(std::span<const double> w,
                                               std::span<double> out) const {
  check_dim(w);
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> g(dim_);
  for (std::size_t i = 0; i < data_.n; ++i) {
    g_(w, data_.row(i), g);
    for (std::size_t j = 0; j < dim_; ++j) out[j] += g[j];
  }
  const double inv = 1.0 / static_cast<double>(data_.n);
  for (auto& v : out) v *= inv;
}

void EmpiricalObjective::gradient_difference(std::span<const double> w_new,
                                             std::span<const double> w_old,
                                             std::span<double> out) const {
  check_dim(w_new);
  check_dim(w_old);
  if (agg_grad_diff_) {
    agg_grad_diff_(w_new, w_old, out);
    return;
  }
  std::vector<double> gn(dim_), go(dim_);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < data_.n; ++i) {
    g_(w_new, data_.row(i), gn);
    g_(w_old, data_.row(i), go);
    for (std::size_t j = 0; j < dim_; ++j) out[j] += gn[j] - go[j];
  }
  const double inv = 1.0 / static_cast<double>(data_.n);
  for (auto& v : out) v *= inv;
}

double EmpiricalObjective::per_example_value(std::size_t i,
                                             std::span<const double> w) const {
  check_dim(w);
  return f_(w, data_.row(i));
}

void EmpiricalObjective::per_example_gradient(std::size_t i,
                                              std::span<const double> w,
                                              std::span<double> out) const {
  check_dim(w);
  g_(w, data_.row(i), out);
}

double EmpiricalObjective::per_example_value_raw(
    std::span<const double> w, std::span<const double> x) const {
  check_dim(w);
  return f_(w, x);
}

void EmpiricalObjective::per_example_gradient_raw(std::span<const double> w,
                                                  std::span<const double> x,
                                                  std::span<double> out) const {
  check_dim(w);
  g_(w, x, out);
}

void EmpiricalObjective::gradient_with_replacement(
    std::span<const double> w, std::size_t index, std::span<const double> x_new,
    std::span<double> out) const {
  if (index >= data_.n)
    throw DomainError("gradient_with_replacement: index out of range");
  if (x_new.size() != data_.d)
    throw DomainError("gradient_with_replacement: replacement dimension "
                      "mismatch");
  gradient(w, out);
  std::vector<double> g_old(dim_), g_new(dim_);
  g_(w, data_.row(index), g_old);
  g_(w, x_new, g_new);
  const double inv = 1.0 / static_cast<double>(data_.n);
  for (std::size_t j = 0; j < dim_; ++j) out[j] += (g_new[j] - g_old[j]) * inv;
}

namespace {

// Residual check for constructors that know their minimizer analytically.
void check_minimizer_residual(const EmpiricalObjective& obj) {
  const auto& meta = obj.meta();
  if (!meta.w_star) return;
  const double tol = 1e-8 * std::max(1.0, meta.lipschitz);
  const double res = obj.gradient_norm(*meta.w_star);
  if (!(res <= tol))
    throw DomainError("instance construction: minimizer residual " +
                      std::to_string(res) + " exceeds tolerance");
}

}  // namespace

EmpiricalObjective make_quadratic_pl(std::size_t d, double mu,
                                     Dataset centers) {
  if (!(mu > 0.0)) throw DomainError("make_quadratic_pl: mu must be positive");
  centers.validate();
  if (centers.d != d)
    throw DomainError("make_quadratic_pl: centers dimension mismatch");

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < centers.n; ++i) {
    const auto row = centers.row(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
  }
  for (auto& v : mean) v /= static_cast<double>(centers.n);
  double var = 0.0;  // mean squared distance of centers to their mean
  for (std::size_t i = 0; i < centers.n; ++i) {
    const auto row = centers.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = row[j] - mean[j];
      s += diff * diff;
    }
    var += s;
  }
  var /= static_cast<double>(centers.n);

  ObjectiveMeta meta;
  meta.type = "quadratic_pl";
  meta.smoothness = mu;
  meta.weak_convexity = 0.0;
  meta.w_star = mean;
  meta.f_star = 0.5 * mu * var;
  meta.kl = KlSpec{1.0 / std::sqrt(2.0 * mu), 2.0,
                   Ball{mean, std::numeric_limits<double>::infinity()}};
  meta.params["mu"] = mu;

  auto f = [mu](std::span<const double> w, std::span<const double> x) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double diff = w[j] - x[j];
      s += diff * diff;
    }
    return 0.5 * mu * s;
  };
  auto g = [mu](std::span<const double> w, std::span<const double> x,
                std::span<double> out) {
    for (std::size_t j = 0; j < w.size(); ++j) out[j] = mu * (w[j] - x[j]);
  };

  EmpiricalObjective obj(std::move(centers), d, f, g, std::move(meta));
  // F(w) = (mu/2)(||w-m||^2 + var); grad F(w) = mu (w - m); the gradient
  // difference mu (w' - w) is data-independent.
  auto m = obj.meta().w_star.value();
  const double fstar = obj.meta().f_star.value();
  obj.set_aggregate_value([mu, m, fstar](std::span<const double> w) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double diff = w[j] - m[j];
      s += diff * diff;
    }
    return 0.5 * mu * s + fstar;
  });
  obj.set_aggregate_gradient([mu, m](std::span<const double> w,
                                     std::span<double> out) {
    for (std::size_t j = 0; j < w.size(); ++j) out[j] = mu * (w[j] - m[j]);
  });
  obj.set_aggregate_gradient_difference(
      [mu](std::span<const double> wn, std::span<const double> wo,
           std::span<double> out) {
        for (std::size_t j = 0; j < wn.size(); ++j)
          out[j] = mu * (wn[j] - wo[j]);
      });
  check_minimizer_residual(obj);
  return obj;
}

namespace {

// One-sided derivative conventions follow the branch conditions verbatim:
// the first branch applies on its closed half-line.
double growth_value_pos(double w, double a, double tau) {
  return w <= a ? (a - w) : std::pow(w - a, tau);
}
double growth_grad_pos(double w, double a, double tau) {
  return w <= a ? -1.0 : tau * std::pow(w - a, tau - 1.0);
}
double growth_value_neg(double w, double a, double tau) {
  return w <= -a ? std::pow(-w - a, tau) : (w + a);
}
double growth_grad_neg(double w, double a, double tau) {
  return w <= -a ? -tau * std::pow(-w - a, tau - 1.0) : 1.0;
}

// Largest u >= 0 such that the (1,tau)-growth inequality still holds at
// distance 2a+u left of the minimizer; scanned then bisected.
double growth_left_margin(double a, double tau, double rho) {
  auto slack = [&](double u) {
    return 2.0 * rho * a + 0.5 * (1.0 + rho) * u +
           0.5 * (1.0 - rho) * std::pow(u, tau) - std::pow(2.0 * a + u, tau);
  };
  const double u_cap = 2.0 * a + 2.0;
  if (slack(1e-9) < 0.0) return 0.0;
  double lo = 0.0, hi = u_cap;
  const int steps = 2048;
  bool found = false;
  for (int i = 1; i <= steps; ++i) {
    const double u = u_cap * i / steps;
    if (slack(u) < 0.0) {
      hi = u;
      lo = u_cap * (i - 1) / steps;
      found = true;
      break;
    }
  }
  if (!found) return u_cap;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (slack(mid) >= 0.0 ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace

EmpiricalObjective make_growth_instance(double a, double tau, double rho_frac,
                                        std::size_t n) {
  if (!(a > 0.0)) throw DomainError("make_growth_instance: a must be > 0");
  if (!(tau > 1.0 && tau <= 2.0))
    throw DomainError("make_growth_instance: tau must lie in (1,2]");
  if (!(rho_frac > 0.0 && rho_frac < 1.0))
    throw DomainError("make_growth_instance: rho_frac must lie in (0,1)");
  if (n < 1) throw DomainError("make_growth_instance: n must be >= 1");

  const auto n_plus = static_cast<std::size_t>(
      std::ceil(static_cast<double>(n) * (1.0 + rho_frac) / 2.0));
  const std::size_t n_minus = n - n_plus;
  const double rho_eff =
      (static_cast<double>(n_plus) - static_cast<double>(n_minus)) /
      static_cast<double>(n);

  Dataset ds;
  ds.n = n;
  ds.d = 1;
  ds.sign_tokens = true;
  ds.flat.assign(n, -1.0);
  std::fill(ds.flat.begin(), ds.flat.begin() + static_cast<long>(n_plus), 1.0);

  ObjectiveMeta meta;
  meta.type = "growth";
  meta.lipschitz = 1.0;  // on |w| <= a + (1/tau)^{1/(tau-1)}
  meta.w_star = std::vector<double>{a};
  meta.f_star = (1.0 - rho_eff) * a;
  meta.growth = GrowthSpec{1.0, tau};
  meta.params["a"] = a;
  meta.params["tau"] = tau;
  meta.params["rho_nominal"] = rho_frac;
  meta.params["rho_effective"] = rho_eff;
  const double inner = std::min(2.0 * a, std::pow(rho_eff, 1.0 / (tau - 1.0)));
  double lo;
  if (inner < 2.0 * a) {
    lo = a - inner;
  } else {
    lo = -a - growth_left_margin(a, tau, rho_eff);
  }
  meta.params["growth_lo"] = lo;
  meta.params["growth_hi"] = a + 1.0;

  auto f = [a, tau](std::span<const double> w, std::span<const double> x) {
    return x[0] > 0.0 ? growth_value_pos(w[0], a, tau)
                      : growth_value_neg(w[0], a, tau);
  };
  auto g = [a, tau](std::span<const double> w, std::span<const double> x,
                    std::span<double> out) {
    out[0] = x[0] > 0.0 ? growth_grad_pos(w[0], a, tau)
                        : growth_grad_neg(w[0], a, tau);
  };

  EmpiricalObjective obj(std::move(ds), 1, f, g, std::move(meta));
  const double p = static_cast<double>(n_plus) / static_cast<double>(n);
  obj.set_aggregate_value([a, tau, p](std::span<const double> w) {
    return p * growth_value_pos(w[0], a, tau) +
           (1.0 - p) * growth_value_neg(w[0], a, tau);
  });
  obj.set_aggregate_gradient(
      [a, tau, p](std::span<const double> w, std::span<double> out) {
        out[0] = p * growth_grad_pos(w[0], a, tau) +
                 (1.0 - p) * growth_grad_neg(w[0], a, tau);
      });
  return obj;
}

namespace {

void huber_gradient(std::span<const double> w, double D,
                    std::span<double> out) {
  const double nw = norm2(w);
  if (nw <= 4.0 * D) {
    for (std::size_t j = 0; j < w.size(); ++j) out[j] = 2.0 * w[j];
  } else {
    const double s = 4.0 * D / nw;
    for (std::size_t j = 0; j < w.size(); ++j) out[j] = s * w[j];
  }
}

double huber_value(std::span<const double> w, double D) {
  const double nw = norm2(w);
  return nw <= 4.0 * D ? nw * nw : 4.0 * D * nw;
}

}  // namespace

EmpiricalObjective make_linear_huber_from_dataset(Dataset ds, double L0,
                                                  double D, std::size_t N) {
  const std::size_t d = ds.d;
  const std::size_t n = ds.n;
  const double lambda = static_cast<double>(N) * L0 /
                        (2.0 * static_cast<double>(n) * D);
  std::vector<double> mean_x(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = ds.row(i);
    for (std::size_t j = 0; j < d; ++j) mean_x[j] += row[j];
  }
  for (auto& v : mean_x) v /= static_cast<double>(n);
  std::vector<double> w_star(d);
  for (std::size_t j = 0; j < d; ++j) w_star[j] = -mean_x[j] / (2.0 * lambda);

  ObjectiveMeta meta;
  meta.type = "linear_huber";
  meta.lipschitz = 5.0 * L0;  // L0 from the linear term + 4 lambda D <= 4 L0
  meta.weak_convexity = 0.0;  // convex
  meta.w_star = w_star;
  meta.params["L0_param"] = L0;
  meta.params["D"] = D;
  meta.params["N"] = static_cast<double>(N);
  meta.params["lambda_reg"] = lambda;

  auto f = [lambda, D](std::span<const double> w, std::span<const double> x) {
    return dot(w, x) + lambda * huber_value(w, D);
  };
  auto g = [lambda, D](std::span<const double> w, std::span<const double> x,
                       std::span<double> out) {
    huber_gradient(w, D, out);
    for (std::size_t j = 0; j < w.size(); ++j)
      out[j] = x[j] + lambda * out[j];
  };

  EmpiricalObjective obj(std::move(ds), d, f, g, std::move(meta));
  obj.set_aggregate_value([mean_x, lambda, D](std::span<const double> w) {
    return dot(w, mean_x) + lambda * huber_value(w, D);
  });
  obj.set_aggregate_gradient([mean_x, lambda, D](std::span<const double> w,
                                                 std::span<double> out) {
    huber_gradient(w, D, out);
    for (std::size_t j = 0; j < w.size(); ++j)
      out[j] = mean_x[j] + lambda * out[j];
  });
  obj.set_aggregate_gradient_difference(
      [lambda, D](std::span<const double> wn, std::span<const double> wo,
                  std::span<double> out) {
        std::vector<double> hn(wn.size()), ho(wo.size());
        huber_gradient(wn, D, hn);
        huber_gradient(wo, D, ho);
        for (std::size_t j = 0; j < wn.size(); ++j)
          out[j] = lambda * (hn[j] - ho[j]);
      });
  obj.meta().f_star = obj.value(w_star);
  check_minimizer_residual(obj);
  return obj;
}

EmpiricalObjective make_linear_huber(std::size_t d, std::size_t n, double L0,
                                     double D, std::size_t N, Rng& rng) {
  if (!(L0 > 0.0)) throw DomainError("make_linear_huber: L0 must be > 0");
  if (!(D > 0.0)) throw DomainError("make_linear_huber: D must be > 0");
  if (N < 1 || N > n)
    throw DomainError("make_linear_huber: need 1 <= N <= n");

  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.flat.assign(n * d, 0.0);
  const double scale = L0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < d; ++j)
      ds.flat[i * d + j] = (rng.next_u64() & 1u) ? scale : -scale;
  return make_linear_huber_from_dataset(std::move(ds), L0, D, N);
}

EmpiricalObjective prox_regularize(const EmpiricalObjective& obj,
                                   std::vector<double> center, double weight) {
  if (!(weight > 0.0))
    throw DomainError("prox_regularize: weight must be positive");
  if (center.size() != obj.dim())
    throw DomainError("prox_regularize: center dimension mismatch");

  ObjectiveMeta meta = obj.meta();
  meta.type = obj.meta().type + "+prox";
  meta.smoothness = obj.meta().smoothness
                        ? std::optional<double>(*obj.meta().smoothness +
                                                2.0 * weight)
                        : std::nullopt;
  meta.params["prox_weight"] = weight;
  meta.params["strong_convexity"] = weight;
  meta.f_star.reset();
  meta.w_star.reset();
  meta.kl.reset();
  meta.growth.reset();

  // Closed-form minimizer survives for the isotropic quadratic base:
  // (mu/2)||w-m||^2 + c + weight ||w-center||^2 minimizes at
  // (mu m + 2 weight center) / (mu + 2 weight).
  std::optional<std::vector<double>> wstar;
  if (obj.meta().type == "quadratic_pl" && obj.meta().w_star) {
    const double mu = obj.meta().params.at("mu");
    const auto& m = *obj.meta().w_star;
    std::vector<double> w(obj.dim());
    for (std::size_t j = 0; j < w.size(); ++j)
      w[j] = (mu * m[j] + 2.0 * weight * center[j]) / (mu + 2.0 * weight);
    wstar = std::move(w);
  }

  // The lambdas share the base objective via a copy; objectives are
  // immutable so this is safe and keeps the result self-contained.
  auto base = std::make_shared<EmpiricalObjective>(obj);
  auto cen = std::make_shared<std::vector<double>>(std::move(center));

  auto f = [base, cen, weight](std::span<const double> w,
                               std::span<const double> x) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double diff = w[j] - (*cen)[j];
      s += diff * diff;
    }
    // Index of x within the base dataset is unknown here; evaluate the
    // per-example oracle directly.
    return base->per_example_value_raw(w, x) + weight * s;
  };
  auto g = [base, cen, weight](std::span<const double> w,
                               std::span<const double> x,
                               std::span<double> out) {
    base->per_example_gradient_raw(w, x, out);
    for (std::size_t j = 0; j < w.size(); ++j)
      out[j] += 2.0 * weight * (w[j] - (*cen)[j]);
  };

  EmpiricalObjective result(obj.data(), obj.dim(), f, g, std::move(meta));
  result.set_aggregate_value([base, cen, weight](std::span<const double> w) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double diff = w[j] - (*cen)[j];
      s += diff * diff;
    }
    return base->value(w) + weight * s;
  });
  result.set_aggregate_gradient([base, cen, weight](std::span<const double> w,
                                                    std::span<double> out) {
    base->gradient(w, out);
    for (std::size_t j = 0; j < w.size(); ++j)
      out[j] += 2.0 * weight * (w[j] - (*cen)[j]);
  });
  result.set_aggregate_gradient_difference(
      [base, weight](std::span<const double> wn, std::span<const double> wo,
                     std::span<double> out) {
        base->gradient_difference(wn, wo, out);
        for (std::size_t j = 0; j < wn.size(); ++j)
          out[j] += 2.0 * weight * (wn[j] - wo[j]);
      });
  if (wstar) {
    result.meta().w_star = wstar;
    result.meta().f_star = result.value(*wstar);
    check_minimizer_residual(result);
  }
  return result;
}

CertReport certify_kl(const EmpiricalObjective& obj, const KlSpec& spec,
                      const std::vector<std::vector<double>>& sample,
                      double f_ref) {
  spec.validate();
  if (sample.empty()) throw DomainError("certify_kl: empty sample");
  if (const auto* ball = std::get_if<Ball>(&spec.region)) {
    for (const auto& w : sample)
      if (!ball->contains(w))
        throw DomainError("certify_kl: sample point outside the ball region");
  }

  CertReport report;
  report.tol = 1e-9 * std::max(1.0, std::abs(f_ref));
  report.checked = sample.size();
  report.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto& w = sample[i];
    const double excess = obj.value(w) - f_ref;
    const double lhs = std::pow(spec.gamma, spec.kappa) *
                       std::pow(obj.gradient_norm(w), spec.kappa);
    const double violation = excess - lhs;
    if (violation > report.max_violation) {
      report.max_violation = violation;
      report.worst_index = i;
    }
  }
  report.pass = report.max_violation <= report.tol;
  return report;
}

CertReport certify_growth(const EmpiricalObjective& obj,
                          const GrowthSpec& spec,
                          const std::vector<std::vector<double>>& sample) {
  spec.validate();
  if (sample.empty()) throw DomainError("certify_growth: empty sample");
  if (!obj.meta().w_star)
    throw DomainError("certify_growth: objective lacks a known minimizer");
  const auto& w_star = *obj.meta().w_star;
  const double f_star =
      obj.meta().f_star ? *obj.meta().f_star : obj.value(w_star);

  CertReport report;
  report.tol = 1e-9 * std::max(1.0, std::abs(f_star));
  report.checked = sample.size();
  report.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto& w = sample[i];
    if (w.size() != w_star.size())
      throw DomainError("certify_growth: sample dimension mismatch");
    double dist2 = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double diff = w[j] - w_star[j];
      dist2 += diff * diff;
    }
    const double lhs = std::pow(spec.lambda, spec.tau) *
                       std::pow(std::sqrt(dist2), spec.tau);
    const double violation = lhs - (obj.value(w) - f_star);
    if (violation > report.max_violation) {
      report.max_violation = violation;
      report.worst_index = i;
    }
  }
  report.pass = report.max_violation <= report.tol;
  return report;
}

namespace {

// Generalized golden ratio: unique positive root of x^{d+1} = x + 1.
double kronecker_phi(std::size_t d) {
  double x = 1.5;
  for (int i = 0; i < 64; ++i)
    x = std::pow(1.0 + x, 1.0 / (static_cast<double>(d) + 1.0));
  return x;
}

}  // namespace

std::vector<std::vector<double>> certifier_grid(
    const Ball& region, std::size_t count,
    const std::optional<std::vector<double>>& w_star) {
  if (!(region.radius > 0.0) || std::isinf(region.radius))
    throw DomainError("certifier_grid: region needs a finite positive radius");
  const std::size_t d = region.center.size();
  if (d == 0) throw DomainError("certifier_grid: empty region center");

  std::vector<std::vector<double>> pts;
  pts.reserve(count + 2);
  pts.push_back(region.center);
  if (w_star && region.contains(*w_star)) pts.push_back(*w_star);

  if (d <= 8) {
    // Kronecker low-discrepancy sequence in the bounding cube, rejected to
    // the ball. Acceptance is fine up to d = 8.
    const double phi = kronecker_phi(d);
    std::vector<double> alpha(d);
    for (std::size_t j = 0; j < d; ++j)
      alpha[j] = std::pow(1.0 / phi, static_cast<double>(j + 1));
    std::vector<double> u(d, 0.5);
    std::size_t produced = 0;
    std::size_t guard = 0;
    const std::size_t guard_max = 100000 * (count + 1);
    while (produced < count && guard++ < guard_max) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        u[j] += alpha[j];
        u[j] -= std::floor(u[j]);
        const double y = 2.0 * u[j] - 1.0;
        s += y * y;
      }
      if (s <= 1.0) {
        std::vector<double> w(d);
        for (std::size_t j = 0; j < d; ++j)
          w[j] = region.center[j] + region.radius * (2.0 * u[j] - 1.0);
        pts.push_back(std::move(w));
        ++produced;
      }
    }
  } else {
    // Rejection collapses in high dimension; use a fixed-seed radial sample.
    Rng rng(0x9d5ab1c2e38fULL ^ (static_cast<std::uint64_t>(d) << 32) ^
            count);
    for (std::size_t k = 0; k < count; ++k) {
      std::vector<double> w(d);
      rng.fill_gaussian(w, 1.0);
      const double nw = norm2(w);
      const double r = region.radius *
                       std::pow(rng.next_unit(), 1.0 / static_cast<double>(d));
      for (std::size_t j = 0; j < d; ++j)
        w[j] = region.center[j] + (nw > 0 ? r * w[j] / nw : 0.0);
      pts.push_back(std::move(w));
    }
  }
  return pts;
}

namespace {

ReplacementSampler default_sampler(const EmpiricalObjective& obj) {
  const Dataset& ds = obj.data();
  return [&ds](Rng& rng) {
    const std::size_t j = rng.next_u64() % ds.n;
    const auto row = ds.row(j);
    return std::vector<double>(row.begin(), row.end());
  };
}

}  // namespace

double gradient_sensitivity_probe(const EmpiricalObjective& obj,
                                  std::span<const double> w,
                                  std::size_t trials, Rng& rng,
                                  const ReplacementSampler& sampler) {
  if (trials < 1) throw DomainError("gradient_sensitivity_probe: trials >= 1");
  const auto sample = sampler ? sampler : default_sampler(obj);
  std::vector<double> base(obj.dim()), swapped(obj.dim());
  obj.gradient(w, base);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t i = rng.next_u64() % obj.n();
    const auto x_new = sample(rng);
    obj.gradient_with_replacement(w, i, x_new, swapped);
    double s = 0.0;
    for (std::size_t j = 0; j < obj.dim(); ++j) {
      const double diff = swapped[j] - base[j];
      s += diff * diff;
    }
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

double gradient_difference_sensitivity_probe(
    const EmpiricalObjective& obj, std::span<const double> w_new,
    std::span<const double> w_old, std::size_t trials, Rng& rng,
    const ReplacementSampler& sampler) {
  if (trials < 1)
    throw DomainError("gradient_difference_sensitivity_probe: trials >= 1");
  const auto sample = sampler ? sampler : default_sampler(obj);
  const std::size_t d = obj.dim();
  std::vector<double> gn(d), go(d), g1(d), g2(d), delta(d);
  const double inv = 1.0 / static_cast<double>(obj.n());
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t i = rng.next_u64() % obj.n();
    const auto x_new = sample(rng);
    // Replacing row i changes the mean difference estimate by
    // [(grad f(w_new;x') - grad f(w_old;x')) - (grad f(w_new;x_i) -
    //  grad f(w_old;x_i))] / n.
    obj.per_example_gradient(i, w_new, gn);
    obj.per_example_gradient(i, w_old, go);
    obj.per_example_gradient_raw(w_new, x_new, g1);
    obj.per_example_gradient_raw(w_old, x_new, g2);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = ((g1[j] - g2[j]) - (gn[j] - go[j])) * inv;
      s += diff * diff;
    }
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json kl_spec_to_json(const KlSpec& spec) {
  nlohmann::json j;
  j["gamma"] = spec.gamma;
  j["kappa"] = spec.kappa;
  if (const auto* ball = std::get_if<Ball>(&spec.region)) {
    j["region"] = {{"kind", "ball"}, {"center", ball->center}};
    // json has no literal for infinity; spell it out.
    if (std::isinf(ball->radius))
      j["region"]["radius"] = "inf";
    else
      j["region"]["radius"] = ball->radius;
  } else {
    const auto& ls = std::get<LevelSetComponent>(spec.region);
    j["region"] = {{"kind", "level_set"},
                   {"alpha", ls.alpha},
                   {"anchor", ls.anchor}};
  }
  return j;
}

KlSpec kl_spec_from_json(const nlohmann::json& j) {
  KlSpec spec;
  spec.gamma = j.at("gamma").get<double>();
  spec.kappa = j.at("kappa").get<double>();
  const auto& r = j.at("region");
  const std::string kind = r.at("kind").get<std::string>();
  if (kind == "ball") {
    Ball b;
    b.center = r.at("center").get<std::vector<double>>();
    const auto& rad = r.at("radius");
    b.radius = rad.is_string() ? std::numeric_limits<double>::infinity()
                               : rad.get<double>();
    spec.region = std::move(b);
  } else if (kind == "level_set") {
    LevelSetComponent ls;
    ls.alpha = r.at("alpha").get<double>();
    ls.anchor = r.at("anchor").get<std::vector<double>>();
    spec.region = std::move(ls);
  } else {
    throw ConfigError("kl spec: unknown region kind '" + kind + "'");
  }
  spec.validate();
  return spec;
}

}  // namespace

void save_instance(const EmpiricalObjective& obj, const std::string& base) {
  const Dataset& ds = obj.data();
  {
    std::ofstream csv(base + ".csv");
    if (!csv) throw IoError("save_instance: cannot open " + base + ".csv");
    for (std::size_t i = 0; i < ds.n; ++i) {
      const auto row = ds.row(i);
      for (std::size_t j = 0; j < ds.d; ++j) {
        if (j) csv << ',';
        csv << format_double(row[j]);
      }
      csv << '\n';
    }
    if (!csv) throw IoError("save_instance: write failed for " + base +
                            ".csv");
  }

  const auto& meta = obj.meta();
  nlohmann::json j;
  j["type"] = meta.type;
  j["n"] = ds.n;
  j["d"] = ds.d;
  j["sign_tokens"] = ds.sign_tokens;
  j["L0"] = meta.lipschitz;
  if (meta.smoothness) j["L1"] = *meta.smoothness;
  if (meta.weak_convexity) j["Ltilde1"] = *meta.weak_convexity;
  if (meta.f_star) j["f_star"] = *meta.f_star;
  if (meta.w_star) j["w_star"] = *meta.w_star;
  if (meta.kl) j["kl_spec"] = kl_spec_to_json(*meta.kl);
  if (meta.growth)
    j["growth_spec"] = {{"lambda", meta.growth->lambda},
                        {"tau", meta.growth->tau}};
  j["params"] = meta.params;

  std::ofstream js(base + ".json");
  if (!js) throw IoError("save_instance: cannot open " + base + ".json");
  js << j.dump(2) << '\n';
  if (!js) throw IoError("save_instance: write failed for " + base + ".json");
}

EmpiricalObjective load_instance(const std::string& base) {
  std::ifstream js(base + ".json");
  if (!js) throw IoError("load_instance: cannot open " + base + ".json");
  nlohmann::json j;
  try {
    js >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_instance: bad metadata json: " +
                  std::string(e.what()));
  }

  std::ifstream csv(base + ".csv");
  if (!csv) throw IoError("load_instance: cannot open " + base + ".csv");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  Dataset ds = Dataset::from_rows(rows);
  ds.sign_tokens = j.value("sign_tokens", false);
  ds.validate();
  if (ds.n != j.at("n").get<std::size_t>() ||
      ds.d != j.at("d").get<std::size_t>())
    throw ConfigError("load_instance: CSV shape disagrees with metadata");

  const std::string type = j.at("type").get<std::string>();
  const auto params =
      j.value("params", std::map<std::string, double>{});
  EmpiricalObjective obj = [&]() -> EmpiricalObjective {
    if (type == "quadratic_pl") {
      return make_quadratic_pl(ds.d, params.at("mu"), ds);
    }
    if (type == "growth") {
      auto rebuilt = make_growth_instance(params.at("a"), params.at("tau"),
                                          params.at("rho_nominal"), ds.n);
      std::size_t plus_loaded = 0, plus_built = 0;
      for (double v : ds.flat) plus_loaded += v > 0.0;
      for (double v : rebuilt.data().flat) plus_built += v > 0.0;
      if (plus_loaded != plus_built)
        throw ConfigError("load_instance: growth token counts disagree with "
                          "metadata parameters");
      return rebuilt;
    }
    if (type == "linear_huber") {
      return make_linear_huber_from_dataset(
          ds, params.at("L0_param"), params.at("D"),
          static_cast<std::size_t>(params.at("N")));
    }
    throw ConfigError("load_instance: unsupported instance type '" + type +
                      "'");
  }();

  // Declared constants may have been customized after construction.
  obj.meta().lipschitz = j.value("L0", obj.meta().lipschitz);
  if (j.contains("L1")) obj.meta().smoothness = j["L1"].get<double>();
  if (j.contains("Ltilde1"))
    obj.meta().weak_convexity = j["Ltilde1"].get<double>();
  if (j.contains("kl_spec")) obj.meta().kl = kl_spec_from_json(j["kl_spec"]);
  return obj;
}

}  // namespace dpkl
