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
// Experiment runner: configs (TOML or JSON), seeded sweeps over
// (n, d, rho, kappa) cells, atomic CSV persistence, and log-log rate-slope
// fits against predicted exponents.

#ifndef DPKL_CORE_HARNESS_HPP_
#define DPKL_CORE_HARNESS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/losses.hpp"
#include "core/optimizers.hpp"
#include "json.hpp"

namespace dpkl {

struct InstanceSpec {
  std::string type;  // quadratic_pl | growth | linear_huber | prox_quadratic
  std::map<std::string, double> params;
};

struct OptimizerSpec {
  std::string algo;  // kl_spider | adaptive_gd | sc_noisy_gd | prox_point
  double beta = 0.05;
  bool noiseless = false;
  std::optional<double> gamma;  // defaults to the instance's KL gamma
  std::optional<double> L0;     // declared Lipschitz constant
  std::optional<double> L1;     // declared smoothness
  std::optional<double> Ltilde1;
  std::optional<double> F0;
  double floor_scale = 1.0;  // scales the Spider excess-risk floor constant
  std::size_t max_steps = 10'000'000;
};

struct ExperimentConfig {
  InstanceSpec instance;
  OptimizerSpec optimizer;
  std::vector<std::size_t> n_values{};
  std::vector<std::size_t> d_values{};
  std::vector<double> rho_values{};
  std::vector<double> kappa_values{2.0};
  std::size_t trials = 1;
  std::uint64_t master_seed = 0;
  std::string out_path = "results.csv";
  double cell_timeout_s = 120.0;
  // Write wall_ms as 0 so (config, master_seed) determines every output
  // byte; real timings otherwise.
  bool repro_timing = false;

  std::size_t cell_count() const {
    return n_values.size() * d_values.size() * rho_values.size() *
           kappa_values.size();
  }
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
// Dispatches on extension: .toml via the TOML-lite reader, otherwise JSON.
ExperimentConfig load_config(const std::string& path);

struct ResultRow {
  std::size_t trial = 0;
  std::string algo;
  std::size_t n = 0;
  std::size_t d = 0;
  double rho = 0.0;
  double kappa = 0.0;
  double gamma = 0.0;
  double excess_risk = 0.0;
  double final_grad_norm = 0.0;
  std::size_t iters = 0;
  double rho_spent = 0.0;
  std::string stop_reason;
  double wall_ms = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kResultHeader =
    "trial,algo,n,d,rho,kappa,gamma,excess_risk,final_grad_norm,iters,"
    "rho_spent,stop_reason,wall_ms,seed";

// One deterministic (cell x trial) grid of runs; per-trial seeds are
// derive(master_seed, cell_index, trial). Jobs may execute on a worker pool
// (DPKL_THREADS overrides the width); rows come back sorted by
// (cell, trial) so output is independent of scheduling.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config);

// Atomic write: temp file in the target directory, then rename.
void write_results_csv(const std::vector<ResultRow>& rows,
                       const std::string& path);
std::vector<ResultRow> read_results_csv(const std::string& path);

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t dropped_rows = 0;  // nonpositive excess, excluded from the fit
  std::vector<std::pair<double, double>> points;  // (x, statistic) per cell
};

// OLS on (ln x, ln statistic(excess_risk)) across the cells of `axis`
// (n, d or rho); the slope estimates the empirical rate exponent. Requires
// at least 3 distinct axis values, each with surviving rows.
FitResult rate_fit(const std::vector<ResultRow>& rows,
                   const std::string& axis,
                   const std::string& statistic = "median");

// Builds the instance and the starting point for one sweep cell. Exposed
// for tests and the acceptance suite.
struct BuiltInstance {
  EmpiricalObjective objective;
  std::vector<double> w0;
  double gamma = 0.0;  // KL gamma used for schedules
};
BuiltInstance build_instance(const InstanceSpec& instance,
                             const OptimizerSpec& optimizer, std::size_t n,
                             std::size_t d, double kappa,
                             std::uint64_t data_seed);

// Runs a single configured cell trial (used by run_experiment and the CLI
// single-run path). w0_override replaces the instance's derived starting
// point when given.
ResultRow run_single(const ExperimentConfig& config, std::size_t cell_index,
                     std::size_t n, std::size_t d, double rho, double kappa,
                     std::size_t trial,
                     const std::optional<std::vector<double>>& w0_override =
                         std::nullopt,
                     RunReport* report_out = nullptr);

}  // namespace dpkl

#endif  // DPKL_CORE_HARNESS_HPP_
