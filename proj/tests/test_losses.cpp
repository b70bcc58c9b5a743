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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <vector>

#include "core/errors.hpp"
#include "core/losses.hpp"
#include "core/rng.hpp"
#include "doctest.h"

using namespace dpkl;

namespace {

Dataset centers_1d(std::initializer_list<double> values) {
  std::vector<std::vector<double>> rows;
  for (double v : values) rows.push_back({v});
  return Dataset::from_rows(rows);
}

Dataset random_centers(std::size_t n, std::size_t d, double radius,
                       Rng& rng) {
  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.flat.resize(n * d);
  for (auto& v : ds.flat) v = radius * (2.0 * rng.next_unit() - 1.0);
  return ds;
}

// Central finite differences of value(); the independent oracle for
// gradient consistency.
std::vector<double> fd_gradient(const EmpiricalObjective& obj,
                                std::span<const double> w, double h) {
  std::vector<double> g(w.size());
  std::vector<double> wp(w.begin(), w.end()), wm(w.begin(), w.end());
  for (std::size_t j = 0; j < w.size(); ++j) {
    wp[j] = w[j] + h;
    wm[j] = w[j] - h;
    g[j] = (obj.value(wp) - obj.value(wm)) / (2.0 * h);
    wp[j] = w[j];
    wm[j] = w[j];
  }
  return g;
}

}  // namespace

TEST_CASE("quadratic instance closed forms") {
  auto obj = make_quadratic_pl(1, 1.0, centers_1d({-1.0, 1.0}));
  REQUIRE(obj.meta().w_star.has_value());
  CHECK((*obj.meta().w_star)[0] == doctest::Approx(0.0));
  CHECK(*obj.meta().f_star == doctest::Approx(0.5).epsilon(1e-14));
  const std::vector<double> w{0.0};
  CHECK(obj.value(w) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(obj.gradient_norm(w) <= 1e-14);

  auto same = make_quadratic_pl(1, 2.0, centers_1d({0.7, 0.7, 0.7}));
  CHECK(*same.meta().f_star == doctest::Approx(0.0));
  CHECK((*same.meta().w_star)[0] == doctest::Approx(0.7));
}

TEST_CASE("single example objective equals per-example oracle") {
  auto obj = make_quadratic_pl(2, 3.0, Dataset::from_rows({{1.0, -2.0}}));
  const std::vector<double> w{0.5, 0.5};
  CHECK(obj.value(w) == doctest::Approx(obj.per_example_value(0, w)));
}

TEST_CASE("aggregate path matches direct summation") {
  Rng rng(31);
  auto obj = make_quadratic_pl(4, 0.9, random_centers(57, 4, 2.0, rng));
  for (int i = 0; i < 20; ++i) {
    std::vector<double> w(4);
    for (auto& v : w) v = 4.0 * (2.0 * rng.next_unit() - 1.0);
    CHECK(obj.value(w) ==
          doctest::Approx(obj.value_by_summation(w)).epsilon(1e-10));
    std::vector<double> fast(4), slow(4);
    obj.gradient(w, fast);
    obj.gradient_by_summation(w, slow);
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(fast[j] == doctest::Approx(slow[j]).epsilon(1e-10));
  }
}

TEST_CASE("dimension mismatch is rejected") {
  auto obj = make_quadratic_pl(2, 1.0, Dataset::from_rows({{0.0, 0.0}}));
  const std::vector<double> bad{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(obj.value(bad), DomainError);
  std::vector<double> out(3);
  CHECK_THROWS_AS(obj.gradient(bad, out), DomainError);
}

TEST_CASE("quadratic PL identity is exact") {
  Rng rng(7);
  const double mu = 1.7;
  auto obj = make_quadratic_pl(3, mu, random_centers(21, 3, 1.0, rng));
  for (int i = 0; i < 100; ++i) {
    std::vector<double> w(3);
    for (auto& v : w) v = 6.0 * (2.0 * rng.next_unit() - 1.0);
    const double excess = obj.value(w) - *obj.meta().f_star;
    const double lhs = obj.gradient_norm(w);
    CHECK(excess ==
          doctest::Approx(lhs * lhs / (2.0 * mu)).epsilon(1e-10));
  }
}

TEST_CASE("growth instance values from the piecewise definitions") {
  // n = 8, rho = 0.5 -> 6 positive tokens, effective rho exactly 0.5.
  auto obj = make_growth_instance(0.25, 2.0, 0.5, 8);
  CHECK(obj.meta().params.at("rho_effective") == doctest::Approx(0.5));
  CHECK(*obj.meta().f_star == doctest::Approx(0.125).epsilon(1e-14));
  const std::vector<double> at_min{0.25};
  CHECK(obj.value(at_min) == doctest::Approx(0.125).epsilon(1e-14));

  // At w = 0 both per-example losses sit on their linear branches:
  // f(0;+1) = a and f(0;-1) = a, so F(0) = a.
  const std::vector<double> origin{0.0};
  const std::vector<double> plus{1.0}, minus{-1.0};
  CHECK(obj.per_example_value_raw(origin, plus) == doctest::Approx(0.25));
  CHECK(obj.per_example_value_raw(origin, minus) == doctest::Approx(0.25));
  CHECK(obj.value(origin) == doctest::Approx(0.25).epsilon(1e-14));

  // Mirrored proportions: F_{S'}(w) = F_S(-w), so the minimizer moves to -a
  // with the same value (1 - rho) a.
  const double p_mirror = 0.25;  // fraction of +1 tokens after the swap
  auto mirrored_value = [&](double w) {
    const std::vector<double> at{w};
    return p_mirror * obj.per_example_value_raw(at, plus) +
           (1.0 - p_mirror) * obj.per_example_value_raw(at, minus);
  };
  CHECK(mirrored_value(-0.25) == doctest::Approx(0.125).epsilon(1e-14));
  for (double w : {-1.0, -0.5, 0.0, 0.3, 0.9}) {
    const std::vector<double> neg{-w};
    CHECK(mirrored_value(w) == doctest::Approx(obj.value(neg)).epsilon(1e-12));
  }
  CHECK(mirrored_value(-0.25) <= mirrored_value(-0.3));
  CHECK(mirrored_value(-0.25) <= mirrored_value(-0.2));
}

TEST_CASE("growth instance parameter validation") {
  CHECK_THROWS_AS(make_growth_instance(0.25, 1.0, 0.5, 8), DomainError);
  CHECK_THROWS_AS(make_growth_instance(0.25, 2.5, 0.5, 8), DomainError);
  CHECK_THROWS_AS(make_growth_instance(-0.1, 2.0, 0.5, 8), DomainError);
  CHECK_THROWS_AS(make_growth_instance(0.25, 2.0, 1.5, 8), DomainError);
}

TEST_CASE("rounded token counts recompute the effective rho") {
  // n = 10, rho = 0.33: ceil(10 * 1.33 / 2) = 7 positives -> rho_eff = 0.4.
  auto obj = make_growth_instance(0.1, 1.5, 0.33, 10);
  CHECK(obj.meta().params.at("rho_effective") == doctest::Approx(0.4));
  std::size_t plus = 0;
  for (std::size_t i = 0; i < obj.n(); ++i)
    plus += obj.data().row(i)[0] > 0.0;
  CHECK(plus == 7);
}

TEST_CASE("huber instance geometry") {
  SUBCASE("minimizer stays inside D") {
    Rng rng(11);
    auto obj = make_linear_huber(6, 40, 1.0, 0.8, 25, rng);
    CHECK(norm2(*obj.meta().w_star) <= 0.8 * (1.0 + 1e-12));
  }
  SUBCASE("identical nonzero rows reach D exactly") {
    Dataset ds;
    ds.n = 10;
    ds.d = 2;
    const double scale = 1.0 / std::sqrt(2.0);
    ds.flat.assign(ds.n * ds.d, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
      ds.flat[i * 2] = scale;
      ds.flat[i * 2 + 1] = -scale;
    }
    auto obj = make_linear_huber_from_dataset(std::move(ds), 1.0, 0.7, 4);
    CHECK(norm2(*obj.meta().w_star) == doctest::Approx(0.7).epsilon(1e-12));
  }
  SUBCASE("N = n, d = 1, L0 = 1, D = 1") {
    Rng rng(3);
    auto obj = make_linear_huber(1, 8, 1.0, 1.0, 8, rng);
    CHECK(obj.meta().params.at("lambda_reg") == doctest::Approx(0.5));
    double mean = 0.0;
    for (std::size_t i = 0; i < 8; ++i) mean += obj.data().row(i)[0];
    mean /= 8.0;
    CHECK((*obj.meta().w_star)[0] == doctest::Approx(-mean).epsilon(1e-12));
  }
  SUBCASE("N = 0 is rejected") {
    Rng rng(3);
    CHECK_THROWS_AS(make_linear_huber(1, 8, 1.0, 1.0, 0, rng), DomainError);
    CHECK_THROWS_AS(make_linear_huber(1, 8, 1.0, 1.0, 9, rng), DomainError);
  }
}

TEST_CASE("huber quadratic-region identity and outside penalty") {
  Rng rng(19);
  const double D = 0.6;
  auto obj = make_linear_huber(3, 30, 1.0, D, 12, rng);
  const auto& w_star = *obj.meta().w_star;
  const double f_star = *obj.meta().f_star;
  const double lambda = obj.meta().params.at("lambda_reg");

  // Inside ||w|| <= 4D the excess equals lambda ||w - w*||^2 exactly.
  for (int i = 0; i < 200; ++i) {
    std::vector<double> w(3);
    for (auto& v : w) v = 2.0 * D * (2.0 * rng.next_unit() - 1.0);
    if (norm2(w) > 4.0 * D) continue;
    double dist2 = 0.0;
    for (std::size_t j = 0; j < 3; ++j)
      dist2 += (w[j] - w_star[j]) * (w[j] - w_star[j]);
    CHECK(obj.value(w) - f_star ==
          doctest::Approx(lambda * dist2).epsilon(1e-10));
  }

  // Outside the quadratic region the excess stays positive.
  for (int i = 0; i < 100; ++i) {
    std::vector<double> w(3);
    rng.fill_gaussian(w, 1.0);
    const double nw = norm2(w);
    const double target = 4.0 * D * (1.0 + rng.next_unit());
    for (auto& v : w) v *= target / nw;
    CHECK(obj.value(w) - f_star > 0.0);
  }
}

TEST_CASE("prox regularization") {
  SUBCASE("zero objective minimizes at the center") {
    Dataset ds = Dataset::from_rows({{0.0, 0.0}});
    ObjectiveMeta meta;
    meta.type = "zero";
    EmpiricalObjective zero(
        ds, 2, [](auto, auto) { return 0.0; },
        [](auto, auto, std::span<double> g) {
          for (auto& v : g) v = 0.0;
        },
        meta);
    const std::vector<double> center{1.5, -2.0};
    auto reg = prox_regularize(zero, center, 0.75);
    CHECK(reg.gradient_norm(center) <= 1e-14);
    const std::vector<double> off{1.5, -1.0};
    CHECK(reg.value(off) == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("linear objective shifts the minimizer by -g/(2 lambda)") {
    Dataset ds = Dataset::from_rows({{0.0}});
    ObjectiveMeta meta;
    meta.type = "linear";
    const double slope = 0.8;
    EmpiricalObjective lin(
        ds, 1,
        [slope](std::span<const double> w, auto) { return slope * w[0]; },
        [slope](auto, auto, std::span<double> g) { g[0] = slope; }, meta);
    const double lambda = 1.25;
    auto reg = prox_regularize(lin, {2.0}, lambda);
    const std::vector<double> expected{2.0 - slope / (2.0 * lambda)};
    CHECK(reg.gradient_norm(expected) <= 1e-12);
  }
  SUBCASE("gradient at the center equals the base gradient") {
    Rng rng(5);
    auto obj = make_quadratic_pl(2, 1.3, random_centers(9, 2, 1.0, rng));
    const std::vector<double> center{0.4, -0.9};
    auto reg = prox_regularize(obj, center, 2.0);
    std::vector<double> g_base(2), g_reg(2);
    obj.gradient(center, g_base);
    reg.gradient(center, g_reg);
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(g_reg[j] == doctest::Approx(g_base[j]).epsilon(1e-14));
  }
  SUBCASE("quadratic base keeps a closed-form minimizer") {
    Rng rng(5);
    const double mu = 1.1, weight = 0.6;
    auto obj = make_quadratic_pl(3, mu, random_centers(15, 3, 1.0, rng));
    const std::vector<double> center{1.0, 1.0, -1.0};
    auto reg = prox_regularize(obj, center, weight);
    REQUIRE(reg.meta().w_star.has_value());
    CHECK(reg.gradient_norm(*reg.meta().w_star) <= 1e-10);
    CHECK(reg.meta().params.at("strong_convexity") == weight);
    // Strong convexity: excess dominates weight * dist^2.
    for (int i = 0; i < 50; ++i) {
      std::vector<double> w(3);
      for (auto& v : w) v = 3.0 * (2.0 * rng.next_unit() - 1.0);
      double dist2 = 0.0;
      for (std::size_t j = 0; j < 3; ++j)
        dist2 += (w[j] - (*reg.meta().w_star)[j]) *
                 (w[j] - (*reg.meta().w_star)[j]);
      CHECK(reg.value(w) - *reg.meta().f_star >=
            weight * dist2 * (1.0 - 1e-9));
    }
  }
}

TEST_CASE("finite differences agree with analytic gradients") {
  Rng rng(41);
  const double h = 1e-6;

  SUBCASE("quadratic") {
    auto obj = make_quadratic_pl(3, 2.2, random_centers(11, 3, 1.0, rng));
    for (int i = 0; i < 100; ++i) {
      std::vector<double> w(3);
      for (auto& v : w) v = 2.0 * (2.0 * rng.next_unit() - 1.0);
      const auto fd = fd_gradient(obj, w, h);
      const auto an = obj.gradient(w);
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(fd[j] == doctest::Approx(an[j]).epsilon(1e-5));
    }
  }
  SUBCASE("growth away from the kinks") {
    auto obj = make_growth_instance(0.25, 1.7, 0.4, 10);
    for (int i = 0; i < 100; ++i) {
      const double w0 = 2.0 * (2.0 * rng.next_unit() - 1.0);
      if (std::abs(w0 - 0.25) < 1e-3 || std::abs(w0 + 0.25) < 1e-3) continue;
      const std::vector<double> w{w0};
      const auto fd = fd_gradient(obj, w, h);
      const auto an = obj.gradient(w);
      CHECK(fd[0] == doctest::Approx(an[0]).epsilon(1e-5));
    }
  }
  SUBCASE("huber inside the quadratic region") {
    auto obj = make_linear_huber(3, 20, 1.0, 1.0, 9, rng);
    for (int i = 0; i < 100; ++i) {
      std::vector<double> w(3);
      for (auto& v : w) v = 0.8 * (2.0 * rng.next_unit() - 1.0);
      const auto fd = fd_gradient(obj, w, h);
      const auto an = obj.gradient(w);
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(fd[j] == doctest::Approx(an[j]).epsilon(1e-5));
    }
  }
}

TEST_CASE("per-example Lipschitz bound holds on the declared region") {
  auto obj = make_growth_instance(0.25, 2.0, 0.5, 8);
  // 1-Lipschitz on |w| <= a + (1/tau)^{1/(tau-1)} = 0.75.
  Rng rng(13);
  std::vector<double> g(1);
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> w{0.75 * (2.0 * rng.next_unit() - 1.0)};
    for (std::size_t ex = 0; ex < obj.n(); ++ex) {
      obj.per_example_gradient(ex, w, g);
      CHECK(std::abs(g[0]) <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("kl certifier") {
  Rng rng(3);
  const double mu = 0.8;
  auto obj = make_quadratic_pl(2, mu, random_centers(7, 2, 0.5, rng));
  const double gamma = 1.0 / std::sqrt(2.0 * mu);
  const auto& w_star = *obj.meta().w_star;
  const Ball region{w_star, 5.0};
  const auto grid = certifier_grid(region, 512, w_star);
  REQUIRE(grid.size() >= 512);

  SUBCASE("exact PL constant passes") {
    const auto report = certify_kl(obj, KlSpec{gamma, 2.0, region}, grid,
                                   *obj.meta().f_star);
    CHECK(report.pass);
    CHECK(report.max_violation <= report.tol);
  }
  SUBCASE("halved gamma fails away from the minimizer") {
    const auto report = certify_kl(obj, KlSpec{gamma / 2.0, 2.0, region},
                                   grid, *obj.meta().f_star);
    CHECK_FALSE(report.pass);
    CHECK(report.max_violation > 0.0);
  }
  SUBCASE("minimizer alone passes any valid spec") {
    const std::vector<std::vector<double>> only{w_star};
    const auto report = certify_kl(obj, KlSpec{0.01, 1.5, region}, only,
                                   *obj.meta().f_star);
    CHECK(report.pass);
  }
  SUBCASE("points outside a ball region are rejected") {
    const std::vector<std::vector<double>> outside{{100.0, 100.0}};
    CHECK_THROWS_AS(certify_kl(obj, KlSpec{gamma, 2.0, region}, outside,
                               *obj.meta().f_star),
                    DomainError);
  }
  SUBCASE("empty sample is rejected") {
    CHECK_THROWS_AS(
        certify_kl(obj, KlSpec{gamma, 2.0, region}, {}, *obj.meta().f_star),
        DomainError);
  }
  SUBCASE("level-set regions trust the caller's membership") {
    // Sublevel sets of the quadratic are balls around w*; any grid inside
    // one is legitimate, and no membership check applies.
    const double alpha = *obj.meta().f_star + 0.5;
    KlSpec spec{gamma, 2.0, LevelSetComponent{alpha, w_star}};
    const auto report = certify_kl(obj, spec, grid, *obj.meta().f_star);
    CHECK(report.pass);
  }
}

TEST_CASE("growth certifier and the convex conversion") {
  auto obj = make_growth_instance(0.25, 2.0, 0.5, 8);
  const double lo = obj.meta().params.at("growth_lo");
  const double hi = obj.meta().params.at("growth_hi");
  std::vector<std::vector<double>> grid;
  for (int i = 0; i <= 512; ++i)
    grid.push_back({lo + (hi - lo) * i / 512.0});

  SUBCASE("unit-lambda growth holds on the certified interval") {
    const auto report = certify_growth(obj, GrowthSpec{1.0, 2.0}, grid);
    CHECK(report.pass);
  }
  SUBCASE("growth plus convexity implies the converted KL spec") {
    const auto kl = growth_to_kl(1.0, 2.0);
    CHECK(kl.gamma == doctest::Approx(1.0));
    CHECK(kl.kappa == doctest::Approx(2.0));
    const Ball region{{0.25}, std::max(hi - 0.25, 0.25 - lo) + 0.1};
    const auto report = certify_kl(
        obj, KlSpec{kl.gamma, kl.kappa, region}, grid, *obj.meta().f_star);
    CHECK(report.pass);
  }
  SUBCASE("minimizer alone passes") {
    const std::vector<std::vector<double>> only{{0.25}};
    CHECK(certify_growth(obj, GrowthSpec{1.0, 2.0}, only).pass);
  }
  SUBCASE("missing minimizer is an error") {
    Dataset ds = Dataset::from_rows({{0.0}});
    ObjectiveMeta meta;
    meta.type = "anon";
    EmpiricalObjective anon(
        ds, 1, [](auto, auto) { return 0.0; },
        [](auto, auto, std::span<double> g) { g[0] = 0.0; }, meta);
    CHECK_THROWS_AS(certify_growth(anon, GrowthSpec{1.0, 2.0}, grid),
                    DomainError);
  }
}

TEST_CASE("kl to growth conversion is tight on the quadratic") {
  Rng rng(90);
  const double mu = 1.9;
  auto obj = make_quadratic_pl(2, mu, random_centers(6, 2, 0.4, rng));
  const double gamma = 1.0 / std::sqrt(2.0 * mu);
  const auto pair = kl_to_growth(gamma, 2.0);
  CHECK(pair.tau == doctest::Approx(2.0));
  // lambda^2 = (1/(2 gamma))^2 = mu / 2: the quadratic's exact growth.
  CHECK(pair.lambda * pair.lambda ==
        doctest::Approx(mu / 2.0).epsilon(1e-12));
  const auto grid = certifier_grid(Ball{*obj.meta().w_star, 3.0}, 256,
                                   *obj.meta().w_star);
  CHECK(certify_growth(obj, GrowthSpec{pair.lambda, pair.tau}, grid).pass);
}

TEST_CASE("certifier grid properties") {
  const Ball region{{1.0, -1.0, 0.5}, 2.0};
  const auto grid = certifier_grid(region, 128);
  CHECK(grid.size() >= 128);
  for (const auto& w : grid) CHECK(region.contains(w));
  CHECK(grid.front() == region.center);
  const auto again = certifier_grid(region, 128);
  CHECK(grid == again);  // deterministic
}

TEST_CASE("replace-one gradient sensitivity probes") {
  Rng rng(55);
  SUBCASE("identical replacements move nothing") {
    auto obj = make_quadratic_pl(
        2, 1.0,
        Dataset::from_rows({{0.3, 0.3}, {0.3, 0.3}, {0.3, 0.3}}));
    const std::vector<double> w{0.0, 0.0};
    CHECK(gradient_sensitivity_probe(obj, w, 50, rng) == 0.0);
  }
  SUBCASE("quadratic respects the replace-one bound") {
    auto obj = make_quadratic_pl(2, 1.0, random_centers(100, 2, 0.5, rng));
    const std::vector<double> w{0.0, 0.0};
    // Per-example gradients at the origin are bounded by L0 = 1 when
    // centers live in the 0.5-box.
    const double probe = gradient_sensitivity_probe(obj, w, 1000, rng);
    CHECK(probe <= 2.0 * 1.0 / 100.0 * (1.0 + 1e-6));
  }
  SUBCASE("difference probe obeys the smoothness bound") {
    // log-cosh regression rows (u, b): smooth with per-example curvature
    // bounded by ||u||^2; its gradient differences are data-dependent,
    // unlike the quadratic whose differences are identical across rows.
    const std::size_t n = 40, d = 3;
    std::vector<std::vector<double>> rows;
    Rng data_rng(77);
    double l1_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(d + 1);
      for (std::size_t j = 0; j < d; ++j)
        row[j] = 2.0 * data_rng.next_unit() - 1.0;
      row[d] = data_rng.next_unit();
      double u2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) u2 += row[j] * row[j];
      l1_max = std::max(l1_max, u2);
      rows.push_back(std::move(row));
    }
    ObjectiveMeta meta;
    meta.type = "logcosh";
    EmpiricalObjective obj(
        Dataset::from_rows(rows), d,
        [d](std::span<const double> w, std::span<const double> x) {
          double z = -x[d];
          for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
          return std::log(std::cosh(z));
        },
        [d](std::span<const double> w, std::span<const double> x,
            std::span<double> g) {
          double z = -x[d];
          for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
          const double t = std::tanh(z);
          for (std::size_t j = 0; j < d; ++j) g[j] = t * x[j];
        },
        meta);

    const std::vector<double> w_old{0.2, -0.1, 0.4};
    const std::vector<double> step = obj.gradient(w_old);
    const double eta = 0.05;
    std::vector<double> w_new(d);
    for (std::size_t j = 0; j < d; ++j) w_new[j] = w_old[j] - eta * step[j];
    double move2 = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      move2 += (w_new[j] - w_old[j]) * (w_new[j] - w_old[j]);
    const double probe =
        gradient_difference_sensitivity_probe(obj, w_new, w_old, 500, rng);
    CHECK(probe > 0.0);  // genuinely data-dependent
    CHECK(probe <= 2.0 * l1_max * std::sqrt(move2) /
                       static_cast<double>(n) * (1.0 + 1e-6));
  }
}

TEST_CASE("instance round trip through csv + json") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "dpkl_losses_io";
  fs::create_directories(dir);
  Rng rng(8);

  SUBCASE("quadratic") {
    auto obj = make_quadratic_pl(3, 1.4, random_centers(12, 3, 1.0, rng));
    obj.meta().lipschitz = 3.5;
    const std::string base = (dir / "quad").string();
    save_instance(obj, base);
    auto loaded = load_instance(base);
    CHECK(loaded.meta().lipschitz == 3.5);
    CHECK(loaded.n() == obj.n());
    for (int i = 0; i < 10; ++i) {
      std::vector<double> w(3);
      for (auto& v : w) v = 2.0 * rng.next_unit() - 1.0;
      CHECK(loaded.value(w) == doctest::Approx(obj.value(w)).epsilon(1e-12));
    }
  }
  SUBCASE("growth tokens survive") {
    auto obj = make_growth_instance(0.2, 1.8, 0.3, 11);
    const std::string base = (dir / "growth").string();
    save_instance(obj, base);
    auto loaded = load_instance(base);
    CHECK(loaded.data().sign_tokens);
    CHECK(loaded.meta().params.at("rho_effective") ==
          obj.meta().params.at("rho_effective"));
  }
  SUBCASE("huber dataset is preserved bit for bit") {
    auto obj = make_linear_huber(2, 9, 1.0, 0.5, 4, rng);
    const std::string base = (dir / "huber").string();
    save_instance(obj, base);
    auto loaded = load_instance(base);
    CHECK(loaded.data().flat == obj.data().flat);
    CHECK((*loaded.meta().w_star)[0] ==
          doctest::Approx((*obj.meta().w_star)[0]).epsilon(1e-15));
  }
  SUBCASE("missing file is an io error") {
    CHECK_THROWS_AS(load_instance((dir / "absent").string()), IoError);
  }
}
