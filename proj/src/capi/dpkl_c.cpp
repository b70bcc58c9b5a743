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

#include "dpkl/dpkl.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include "core/errors.hpp"
#include "core/harness.hpp"
#include "core/losses.hpp"
#include "core/optimizers.hpp"
#include "core/privacy.hpp"
#include "core/rng.hpp"
#include "json.hpp"

namespace {

thread_local std::string g_last_error;

dpkl_status fail(dpkl_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

// Translates C++ exceptions into status codes at the ABI boundary.
template <typename Fn>
dpkl_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const dpkl::DomainError& e) {
    return fail(DPKL_ERROR_DOMAIN, e.what());
  } catch (const dpkl::ConfigError& e) {
    return fail(DPKL_ERROR_CONFIG, e.what());
  } catch (const dpkl::IoError& e) {
    return fail(DPKL_ERROR_IO, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(DPKL_ERROR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(DPKL_ERROR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DPKL_ERROR_INTERNAL, e.what());
  } catch (...) {
    return fail(DPKL_ERROR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

dpkl_status require(bool condition, const char* message) {
  return condition ? DPKL_OK : fail(DPKL_ERROR_DOMAIN, message);
}

}  // namespace

struct dpkl_ledger {
  dpkl::BudgetLedger rep;
};

struct dpkl_instance {
  dpkl::EmpiricalObjective rep;
};

extern "C" {

const char* dpkl_version(void) { return "0.1.0"; }

const char* dpkl_last_error(void) { return g_last_error.c_str(); }

void dpkl_string_free(char* s) { std::free(s); }

/* --- zCDP primitives ------------------------------------------------------- */

dpkl_status dpkl_gaussian_rho(double sensitivity, double sigma,
                              double* rho_out) {
  if (auto s = require(rho_out != nullptr, "rho_out is null")) return s;
  return guarded([&] {
    *rho_out = dpkl::gaussian_rho(sensitivity, sigma);
    return DPKL_OK;
  });
}

dpkl_status dpkl_sigma_for_rho(double sensitivity, double rho,
                               double* sigma_out) {
  if (auto s = require(sigma_out != nullptr, "sigma_out is null")) return s;
  return guarded([&] {
    *sigma_out = dpkl::sigma_for_rho(sensitivity, rho);
    return DPKL_OK;
  });
}

dpkl_status dpkl_zcdp_to_approx_dp(double rho, double delta,
                                   double* epsilon_out) {
  if (auto s = require(epsilon_out != nullptr, "epsilon_out is null"))
    return s;
  return guarded([&] {
    *epsilon_out = dpkl::zcdp_to_approx_dp(rho, delta);
    return DPKL_OK;
  });
}

dpkl_status dpkl_pure_dp_to_zcdp(double epsilon, double* rho_out) {
  if (auto s = require(rho_out != nullptr, "rho_out is null")) return s;
  return guarded([&] {
    *rho_out = dpkl::pure_dp_to_zcdp(epsilon);
    return DPKL_OK;
  });
}

dpkl_status dpkl_exponential_mechanism(const double* scores, size_t count,
                                       double score_sensitivity,
                                       double epsilon, uint64_t seed,
                                       size_t* index_out) {
  if (auto s = require(index_out != nullptr && scores != nullptr,
                       "scores/index_out is null"))
    return s;
  return guarded([&] {
    dpkl::Rng rng(seed);
    *index_out = dpkl::exponential_mechanism({scores, count},
                                             score_sensitivity, epsilon, rng);
    return DPKL_OK;
  });
}

/* --- Budget ledger ----------------------------------------------------------- */

dpkl_status dpkl_ledger_create(double cap, dpkl_ledger** out) {
  if (auto s = require(out != nullptr, "out is null")) return s;
  return guarded([&] {
    *out = new dpkl_ledger{dpkl::BudgetLedger(cap)};
    return DPKL_OK;
  });
}

void dpkl_ledger_free(dpkl_ledger* ledger) { delete ledger; }

dpkl_status dpkl_ledger_charge(dpkl_ledger* ledger, const char* label,
                               double rho, int* accepted_out) {
  if (auto s = require(ledger != nullptr && label != nullptr &&
                           accepted_out != nullptr,
                       "ledger/label/accepted_out is null"))
    return s;
  return guarded([&] {
    *accepted_out = ledger->rep.try_charge(label, rho) ? 1 : 0;
    return DPKL_OK;
  });
}

dpkl_status dpkl_ledger_spent(const dpkl_ledger* ledger, double* out) {
  if (auto s = require(ledger != nullptr && out != nullptr,
                       "ledger/out is null"))
    return s;
  *out = ledger->rep.spent();
  return DPKL_OK;
}

dpkl_status dpkl_ledger_cap(const dpkl_ledger* ledger, double* out) {
  if (auto s = require(ledger != nullptr && out != nullptr,
                       "ledger/out is null"))
    return s;
  *out = ledger->rep.cap();
  return DPKL_OK;
}

dpkl_status dpkl_ledger_entry_count(const dpkl_ledger* ledger, size_t* out) {
  if (auto s = require(ledger != nullptr && out != nullptr,
                       "ledger/out is null"))
    return s;
  *out = ledger->rep.entries().size();
  return DPKL_OK;
}

/* --- Loss instances ------------------------------------------------------------ */

dpkl_status dpkl_instance_quadratic_pl(size_t d, double mu,
                                       const double* centers, size_t n,
                                       dpkl_instance** out) {
  if (auto s = require(out != nullptr && centers != nullptr,
                       "centers/out is null"))
    return s;
  return guarded([&] {
    dpkl::Dataset ds;
    ds.n = n;
    ds.d = d;
    ds.flat.assign(centers, centers + n * d);
    *out = new dpkl_instance{dpkl::make_quadratic_pl(d, mu, std::move(ds))};
    return DPKL_OK;
  });
}

dpkl_status dpkl_instance_growth(double a, double tau, double rho_frac,
                                 size_t n, dpkl_instance** out) {
  if (auto s = require(out != nullptr, "out is null")) return s;
  return guarded([&] {
    *out = new dpkl_instance{dpkl::make_growth_instance(a, tau, rho_frac, n)};
    return DPKL_OK;
  });
}

dpkl_status dpkl_instance_linear_huber(size_t d, size_t n, double L0,
                                       double D, size_t N, uint64_t seed,
                                       dpkl_instance** out) {
  if (auto s = require(out != nullptr, "out is null")) return s;
  return guarded([&] {
    dpkl::Rng rng(seed);
    *out = new dpkl_instance{dpkl::make_linear_huber(d, n, L0, D, N, rng)};
    return DPKL_OK;
  });
}

void dpkl_instance_free(dpkl_instance* instance) { delete instance; }

dpkl_status dpkl_instance_save(const dpkl_instance* instance,
                               const char* base_path) {
  if (auto s = require(instance != nullptr && base_path != nullptr,
                       "instance/base_path is null"))
    return s;
  return guarded([&] {
    dpkl::save_instance(instance->rep, base_path);
    return DPKL_OK;
  });
}

dpkl_status dpkl_instance_load(const char* base_path, dpkl_instance** out) {
  if (auto s = require(out != nullptr && base_path != nullptr,
                       "base_path/out is null"))
    return s;
  return guarded([&] {
    *out = new dpkl_instance{dpkl::load_instance(base_path)};
    return DPKL_OK;
  });
}

dpkl_status dpkl_instance_dim(const dpkl_instance* instance, size_t* out) {
  if (auto s = require(instance != nullptr && out != nullptr,
                       "instance/out is null"))
    return s;
  *out = instance->rep.dim();
  return DPKL_OK;
}

dpkl_status dpkl_instance_value(const dpkl_instance* instance,
                                const double* w, size_t d, double* out) {
  if (auto s = require(instance != nullptr && w != nullptr && out != nullptr,
                       "instance/w/out is null"))
    return s;
  return guarded([&] {
    *out = instance->rep.value({w, d});
    return DPKL_OK;
  });
}

dpkl_status dpkl_instance_gradient(const dpkl_instance* instance,
                                   const double* w, size_t d,
                                   double* grad_out) {
  if (auto s = require(instance != nullptr && w != nullptr &&
                           grad_out != nullptr,
                       "instance/w/grad_out is null"))
    return s;
  return guarded([&] {
    instance->rep.gradient({w, d}, {grad_out, d});
    return DPKL_OK;
  });
}

/* --- Certification ---------------------------------------------------------------- */

dpkl_status dpkl_certify(const char* instance_base, const char* spec_path,
                         int* pass_out, char** summary_json_out) {
  if (auto s = require(instance_base != nullptr && spec_path != nullptr &&
                           pass_out != nullptr,
                       "instance_base/spec_path/pass_out is null"))
    return s;
  return guarded([&] {
    const dpkl::EmpiricalObjective obj = dpkl::load_instance(instance_base);

    std::ifstream in(spec_path);
    if (!in) throw dpkl::IoError(std::string("cannot open spec file ") +
                                 spec_path);
    nlohmann::json spec;
    try {
      in >> spec;
    } catch (const nlohmann::json::exception& e) {
      throw dpkl::ConfigError(std::string("bad spec json: ") + e.what());
    }
    if (!spec.contains("kl") && !spec.contains("growth"))
      throw dpkl::ConfigError("spec must contain a 'kl' or 'growth' block");

    const auto grid_size = spec.value("grid_size", std::size_t{512});
    std::vector<std::vector<double>> points;
    if (spec.contains("points")) {
      points = spec["points"].get<std::vector<std::vector<double>>>();
    } else if (spec.contains("interval")) {
      const double lo = spec["interval"].at(0).get<double>();
      const double hi = spec["interval"].at(1).get<double>();
      if (obj.dim() != 1)
        throw dpkl::ConfigError("interval grids need a 1-d instance");
      for (std::size_t i = 0; i <= grid_size; ++i)
        points.push_back(
            {lo + (hi - lo) * static_cast<double>(i) /
                      static_cast<double>(grid_size)});
    }

    nlohmann::json summary;
    bool all_pass = true;

    if (spec.contains("kl")) {
      const auto& klj = spec["kl"];
      dpkl::KlSpec kl;
      kl.gamma = klj.at("gamma").get<double>();
      kl.kappa = klj.at("kappa").get<double>();
      dpkl::Ball ball;
      if (klj.contains("region")) {
        ball.center = klj["region"].at("center").get<std::vector<double>>();
        ball.radius = klj["region"].at("radius").get<double>();
      } else if (obj.meta().w_star) {
        ball.center = *obj.meta().w_star;
        ball.radius = spec.value("radius", 1.0);
      } else {
        throw dpkl::ConfigError("kl spec needs a region or a known w*");
      }
      kl.region = ball;
      auto grid = points.empty()
                      ? dpkl::certifier_grid(ball, grid_size, obj.meta().w_star)
                      : points;
      double f_ref;
      if (klj.contains("f_ref")) {
        f_ref = klj["f_ref"].get<double>();
      } else if (obj.meta().f_star) {
        f_ref = *obj.meta().f_star;
      } else {
        throw dpkl::ConfigError("kl spec needs f_ref or a known f*");
      }
      const auto report = dpkl::certify_kl(obj, kl, grid, f_ref);
      summary["kl"] = {{"pass", report.pass},
                       {"max_violation", report.max_violation},
                       {"tol", report.tol},
                       {"checked", report.checked}};
      all_pass = all_pass && report.pass;
    }

    if (spec.contains("growth")) {
      const auto& gj = spec["growth"];
      dpkl::GrowthSpec growth{gj.at("lambda").get<double>(),
                              gj.at("tau").get<double>()};
      std::vector<std::vector<double>> grid = points;
      if (grid.empty()) {
        const auto& params = obj.meta().params;
        if (obj.dim() == 1 && params.count("growth_lo") &&
            params.count("growth_hi")) {
          const double lo = params.at("growth_lo");
          const double hi = params.at("growth_hi");
          for (std::size_t i = 0; i <= grid_size; ++i)
            grid.push_back(
                {lo + (hi - lo) * static_cast<double>(i) /
                          static_cast<double>(grid_size)});
        } else if (obj.meta().w_star) {
          grid = dpkl::certifier_grid(
              dpkl::Ball{*obj.meta().w_star, spec.value("radius", 1.0)},
              grid_size, obj.meta().w_star);
        } else {
          throw dpkl::ConfigError("growth spec needs points or a known w*");
        }
      }
      const auto report = dpkl::certify_growth(obj, growth, grid);
      summary["growth"] = {{"pass", report.pass},
                           {"max_violation", report.max_violation},
                           {"tol", report.tol},
                           {"checked", report.checked}};
      all_pass = all_pass && report.pass;
    }

    summary["pass"] = all_pass;
    *pass_out = all_pass ? 1 : 0;
    if (summary_json_out != nullptr)
      *summary_json_out = dup_string(summary.dump(2));
    return DPKL_OK;
  });
}

/* --- Optimizer runs ------------------------------------------------------------------ */

dpkl_status dpkl_run_optimizer_json(const char* config_json,
                                    char** report_json_out) {
  if (auto s = require(config_json != nullptr && report_json_out != nullptr,
                       "config_json/report_json_out is null"))
    return s;
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::exception& e) {
      throw dpkl::ConfigError(std::string("bad config json: ") + e.what());
    }

    dpkl::ExperimentConfig config;
    const auto& inst = j.at("instance");
    config.instance.type = inst.at("type").get<std::string>();
    for (const auto& [key, value] : inst.items()) {
      if (key == "type") continue;
      config.instance.params[key] = value.get<double>();
    }
    config.optimizer.algo = j.at("algo").get<std::string>();
    config.optimizer.beta = j.value("beta", 0.05);
    config.optimizer.noiseless = j.value("noiseless", false);
    if (j.contains("gamma")) config.optimizer.gamma = j["gamma"].get<double>();
    if (j.contains("L0")) config.optimizer.L0 = j["L0"].get<double>();
    if (j.contains("L1")) config.optimizer.L1 = j["L1"].get<double>();
    if (j.contains("Ltilde1"))
      config.optimizer.Ltilde1 = j["Ltilde1"].get<double>();
    if (j.contains("F0")) config.optimizer.F0 = j["F0"].get<double>();

    const auto n = j.at("n").get<std::size_t>();
    const auto d = j.at("d").get<std::size_t>();
    const double rho = j.at("rho").get<double>();
    const double kappa = j.value("kappa", 2.0);
    config.n_values = {n};
    config.d_values = {d};
    config.rho_values = {rho};
    config.kappa_values = {kappa};
    config.master_seed = j.value("seed", std::uint64_t{0});
    config.repro_timing = true;
    config.validate();

    std::optional<std::vector<double>> w0_override;
    if (j.contains("w0") && !j["w0"].is_null())
      w0_override = j["w0"].get<std::vector<double>>();
    dpkl::RunReport full;
    const auto row = dpkl::run_single(config, 0, n, d, rho, kappa, 0,
                                      w0_override, &full);
    nlohmann::json report;
    report["config"] = j;
    report["excess_risk"] = row.excess_risk;
    report["final_grad_norm"] = row.final_grad_norm;
    report["iters"] = row.iters;
    report["rho_spent"] = row.rho_spent;
    report["stop_reason"] = row.stop_reason;
    report["gamma"] = row.gamma;
    report["seed"] = row.seed;
    report["schedule"] = full.schedule_summary;
    report["final_w"] = full.final_w;
    *report_json_out = dup_string(report.dump(2));
    return DPKL_OK;
  });
}

/* --- Experiment harness -------------------------------------------------------------- */

dpkl_status dpkl_experiment_run(const char* config_path,
                                const char* out_override,
                                const uint64_t* seed_override,
                                int noiseless_override,
                                int require_single_cell,
                                char** summary_json_out) {
  if (auto s = require(config_path != nullptr, "config_path is null"))
    return s;
  return guarded([&] {
    dpkl::ExperimentConfig config = dpkl::load_config(config_path);
    if (out_override != nullptr) config.out_path = out_override;
    if (seed_override != nullptr) config.master_seed = *seed_override;
    if (noiseless_override == 0) config.optimizer.noiseless = false;
    if (noiseless_override == 1) config.optimizer.noiseless = true;
    if (require_single_cell && config.cell_count() != 1)
      throw dpkl::ConfigError(
          "run expects a single-cell config (every sweep axis of length "
          "1); use sweep for " +
          std::to_string(config.cell_count()) + " cells");

    const auto rows = dpkl::run_experiment(config);
    dpkl::write_results_csv(rows, config.out_path);

    nlohmann::json summary;
    summary["rows"] = rows.size();
    summary["cells"] = config.cell_count();
    summary["trials"] = config.trials;
    summary["out"] = config.out_path;
    summary["master_seed"] = config.master_seed;
    summary["noiseless"] = config.optimizer.noiseless;
    if (summary_json_out != nullptr)
      *summary_json_out = dup_string(summary.dump(2));
    return DPKL_OK;
  });
}

dpkl_status dpkl_fit(const char* results_path, const char* axis,
                     const char* statistic, double* slope_out,
                     char** summary_json_out) {
  if (auto s = require(results_path != nullptr && axis != nullptr &&
                           statistic != nullptr && slope_out != nullptr,
                       "results_path/axis/statistic/slope_out is null"))
    return s;
  return guarded([&] {
    const auto rows = dpkl::read_results_csv(results_path);
    const auto fit = dpkl::rate_fit(rows, axis, statistic);
    *slope_out = fit.slope;
    nlohmann::json summary;
    summary["axis"] = axis;
    summary["statistic"] = statistic;
    summary["slope"] = fit.slope;
    summary["intercept"] = fit.intercept;
    summary["r2"] = fit.r2;
    summary["dropped_rows"] = fit.dropped_rows;
    auto& points = summary["points"] = nlohmann::json::array();
    for (const auto& [x, y] : fit.points)
      points.push_back({{"x", x}, {"statistic", y}});
    if (summary_json_out != nullptr)
      *summary_json_out = dup_string(summary.dump(2));
    return DPKL_OK;
  });
}

} /* extern "C" */
