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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/errors.hpp"
#include "core/harness.hpp"
#include "core/toml_lite.hpp"
#include "doctest.h"

using namespace dpkl;

namespace {

ExperimentConfig small_quadratic_config() {
  ExperimentConfig config;
  config.instance.type = "quadratic_pl";
  config.instance.params = {{"mu", 1.0},
                            {"center_radius", 0.3},
                            {"w0_distance", 1.0}};
  config.optimizer.algo = "kl_spider";
  config.optimizer.beta = 0.05;
  config.optimizer.L0 = 6.0;
  config.optimizer.L1 = 1.0;
  config.optimizer.F0 = 1.0;
  config.n_values = {400};
  config.d_values = {2};
  config.rho_values = {1.0};
  config.kappa_values = {2.0};
  config.trials = 3;
  config.master_seed = 99;
  config.repro_timing = true;
  return config;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_CASE("toml lite parses the config subset") {
  const std::string text = R"(
# experiment
[instance]
type = "quadratic_pl"   # instance family
mu = 1.5
center_radius = 0.25

[optimizer]
algo = "kl_spider"
noiseless = true
L0 = 4.0

[sweep]
n = [500, 1000]
d = 2
rho = [1.0]
trials = 5
master_seed = 42
out = "out/results.csv"
)";
  const auto j = parse_toml_lite(text);
  CHECK(j["instance"]["type"] == "quadratic_pl");
  CHECK(j["instance"]["mu"].get<double>() == doctest::Approx(1.5));
  CHECK(j["optimizer"]["noiseless"].get<bool>());
  CHECK(j["sweep"]["n"].size() == 2);
  CHECK(j["sweep"]["n"][1].get<int>() == 1000);
  CHECK(j["sweep"]["d"].get<int>() == 2);
  CHECK(j["sweep"]["out"] == "out/results.csv");

  const auto config = config_from_json(j);
  CHECK(config.n_values == std::vector<std::size_t>{500, 1000});
  CHECK(config.d_values == std::vector<std::size_t>{2});
  CHECK(config.trials == 5);
  CHECK(config.optimizer.noiseless);
}

TEST_CASE("toml lite rejects malformed input with line numbers") {
  CHECK_THROWS_AS(parse_toml_lite("[unterminated\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml_lite("key value\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml_lite("key = \n"), ConfigError);
  CHECK_THROWS_AS(parse_toml_lite("bad key! = 1\n"), ConfigError);
  try {
    parse_toml_lite("ok = 1\nbroken = [1, 2\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("config validation catches empty axes and unknown fields") {
  auto j = config_to_json(small_quadratic_config());
  SUBCASE("empty n axis") {
    j["sweep"]["n"] = nlohmann::json::array();
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
  }
  SUBCASE("zero trials") {
    j["sweep"]["trials"] = 0;
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
  }
  SUBCASE("unknown optimizer field") {
    j["optimizer"]["learning_rate"] = 0.1;
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
  }
  SUBCASE("unknown top-level field") {
    j["extra"] = 1;
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
  }
  SUBCASE("round trip") {
    const auto config = config_from_json(j);
    CHECK(config_to_json(config) == j);
  }
}

TEST_CASE("run_experiment yields one row per cell and trial") {
  auto config = small_quadratic_config();
  const auto rows = run_experiment(config);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].trial == 0);
  CHECK(rows[1].trial == 1);
  CHECK(rows[2].trial == 2);
  // Distinct per-trial seeds.
  CHECK(rows[0].seed != rows[1].seed);
  CHECK(rows[1].seed != rows[2].seed);
  for (const auto& r : rows) {
    CHECK(r.algo == "kl_spider");
    CHECK(r.n == 400);
    CHECK(r.rho_spent <= r.rho * (1.0 + 1e-15));
    CHECK(r.excess_risk >= -1e-9);
    CHECK(r.stop_reason == "schedule_complete");
  }
}

TEST_CASE("sweeps enumerate the full cross product") {
  auto config = small_quadratic_config();
  config.n_values = {200, 400};
  config.trials = 2;
  const auto rows = run_experiment(config);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].n == 200);
  CHECK(rows[1].n == 200);
  CHECK(rows[2].n == 400);
  CHECK(rows[3].n == 400);
}

TEST_CASE("experiments are deterministic byte for byte") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "dpkl_harness";
  fs::create_directories(dir);
  auto config = small_quadratic_config();
  config.trials = 2;

  const auto a = (dir / "a.csv").string();
  const auto b = (dir / "b.csv").string();
  write_results_csv(run_experiment(config), a);
  write_results_csv(run_experiment(config), b);
  CHECK(slurp(a) == slurp(b));

  // Worker-pool width must not change the output.
  setenv("DPKL_THREADS", "1", 1);
  const auto c = (dir / "c.csv").string();
  write_results_csv(run_experiment(config), c);
  unsetenv("DPKL_THREADS");
  CHECK(slurp(a) == slurp(c));
}

TEST_CASE("csv schema and round trip") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "dpkl_harness";
  fs::create_directories(dir);
  auto config = small_quadratic_config();
  const auto rows = run_experiment(config);
  const auto path = (dir / "schema.csv").string();
  write_results_csv(rows, path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "trial,algo,n,d,rho,kappa,gamma,excess_risk,final_grad_norm,iters,"
        "rho_spent,stop_reason,wall_ms,seed");

  const auto back = read_results_csv(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].seed == rows[i].seed);
    CHECK(back[i].excess_risk == rows[i].excess_risk);
    CHECK(back[i].stop_reason == rows[i].stop_reason);
  }
  // No stray temp file once the write has landed.
  CHECK_FALSE(fs::exists(path + ".tmp"));
}

TEST_CASE("interrupted writes never leave a partial target") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "dpkl_harness_atomic";
  fs::create_directories(dir);
  const auto target = dir / "into" / "missing_dir_ok.csv";
  // Unwritable target directory (a file stands in its place).
  const auto blocked_parent = dir / "blocked";
  std::ofstream(blocked_parent.string()) << "file, not a directory";
  const auto blocked = blocked_parent / "results.csv";
  CHECK_THROWS_AS(write_results_csv({}, blocked.string()), IoError);
  CHECK_FALSE(fs::exists(blocked));
  // Normal path creates parents.
  write_results_csv({}, target.string());
  CHECK(fs::exists(target));
}

TEST_CASE("rate fit recovers exact power laws") {
  std::vector<ResultRow> rows;
  auto push = [&rows](double x, double excess, const char* axis) {
    ResultRow r;
    r.n = axis == std::string("n") ? static_cast<std::size_t>(x) : 100;
    r.d = axis == std::string("d") ? static_cast<std::size_t>(x) : 4;
    r.rho = 1.0;
    r.excess_risk = excess;
    rows.push_back(r);
  };
  SUBCASE("slope -2 in n") {
    for (double n : {500.0, 1000.0, 2000.0, 4000.0})
      for (int t = 0; t < 5; ++t) push(n, 7.3 / (n * n), "n");
    const auto fit = rate_fit(rows, "n");
    CHECK(fit.slope == doctest::Approx(-2.0).epsilon(1e-9));
    CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fit.dropped_rows == 0);
    CHECK(fit.points.size() == 4);
  }
  SUBCASE("slope +1 in d") {
    for (double d : {4.0, 16.0, 64.0}) push(d, 0.11 * d, "d");
    const auto fit = rate_fit(rows, "d");
    CHECK(fit.slope == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("median resists outliers, mean does not") {
    for (double n : {100.0, 200.0, 400.0}) {
      for (int t = 0; t < 9; ++t) push(n, 1.0 / (n * n), "n");
      push(n, n, "n");  // one wild outlier per cell
    }
    const auto med = rate_fit(rows, "n", "median");
    CHECK(med.slope == doctest::Approx(-2.0).epsilon(1e-9));
    const auto mean = rate_fit(rows, "n", "mean");
    CHECK(mean.slope > -1.0);
  }
  SUBCASE("nonpositive rows are dropped and counted") {
    for (double n : {100.0, 200.0, 400.0}) {
      push(n, 1.0 / n, "n");
      push(n, -1e-12, "n");
    }
    const auto fit = rate_fit(rows, "n");
    CHECK(fit.dropped_rows == 3);
    CHECK(fit.slope == doctest::Approx(-1.0).epsilon(1e-9));
  }
  SUBCASE("too few axis values is a config error") {
    push(100.0, 1.0, "n");
    push(200.0, 0.5, "n");
    CHECK_THROWS_AS(rate_fit(rows, "n"), ConfigError);
  }
  SUBCASE("unknown axis and statistic are rejected") {
    for (double n : {100.0, 200.0, 400.0}) push(n, 1.0 / n, "n");
    CHECK_THROWS_AS(rate_fit(rows, "kappa"), ConfigError);
    CHECK_THROWS_AS(rate_fit(rows, "n", "max"), ConfigError);
  }
}

TEST_CASE("rows never spend beyond their configured budget") {
  auto config = small_quadratic_config();
  config.optimizer.algo = "adaptive_gd";
  config.optimizer.L1 = 1.0;
  config.trials = 5;
  config.n_values = {200};
  const auto rows = run_experiment(config);
  for (const auto& r : rows) {
    CHECK(r.rho_spent <= r.rho);
    CHECK((r.stop_reason == "budget_exhausted" ||
           r.stop_reason == "gradient_floor"));
  }
}

TEST_CASE("prox_quadratic cells run the subsolver end to end") {
  ExperimentConfig config;
  config.instance.type = "prox_quadratic";
  config.instance.params = {{"mu", 1.0},
                            {"center_radius", 0.3},
                            {"w0_distance", 0.5},
                            {"prox_weight", 1.0}};
  config.optimizer.algo = "sc_noisy_gd";
  config.optimizer.beta = 0.5;
  config.optimizer.L0 = 4.0;
  config.optimizer.Ltilde1 = 1.0;
  config.n_values = {250};
  config.d_values = {5};
  config.rho_values = {1.0};
  config.trials = 2;
  config.master_seed = 5;
  config.repro_timing = true;
  const auto rows = run_experiment(config);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.excess_risk >= -1e-9);
    CHECK(r.excess_risk < 0.25);  // solved to noise level, not exactly
    CHECK(r.rho_spent <= 1.0);
  }
}

TEST_CASE("expired cell deadlines abort with a timeout row") {
  auto config = small_quadratic_config();
  config.optimizer.noiseless = false;
  config.trials = 1;
  config.cell_timeout_s = 1e-9;
  const auto rows = run_experiment(config);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].stop_reason == "timeout");
  CHECK(rows[0].rho_spent <= rows[0].rho);
}

TEST_CASE("unknown instance or algo fails with a config error") {
  auto config = small_quadratic_config();
  SUBCASE("instance") {
    config.instance.type = "mystery";
    CHECK_THROWS_AS(run_experiment(config), ConfigError);
  }
  SUBCASE("algo") {
    config.optimizer.algo = "sgd";
    CHECK_THROWS_AS(run_experiment(config), ConfigError);
  }
}
