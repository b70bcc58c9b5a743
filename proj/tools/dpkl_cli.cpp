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
// Experiment runner CLI over the dpkl C API.
//
//   dpkl run     --config <path> [--seed N] [--out <path>] [--noiseless]
//   dpkl sweep   --config <path> [--seed N] [--out <path>] [--noiseless]
//   dpkl fit     --results <path> --axis <n|d|rho> [--statistic median|mean]
//   dpkl certify --instance <base> --spec <path>
//
// Exit codes: 0 success, 1 certification failure, 2 configuration error,
// 3 I/O error. --json switches summaries to machine-readable output.

#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "dpkl/dpkl.h"

namespace {

int exit_code_for(dpkl_status status) {
  switch (status) {
    case DPKL_OK: return 0;
    case DPKL_ERROR_DOMAIN: return 2;
    case DPKL_ERROR_CONFIG: return 2;
    case DPKL_ERROR_IO: return 3;
    case DPKL_ERROR_INTERNAL: return 4;
  }
  return 4;
}

int report_failure(dpkl_status status) {
  std::fprintf(stderr, "error: %s\n", dpkl_last_error());
  return exit_code_for(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentially private KL-ERM experiment runner"};
  app.require_subcommand(1);
  bool as_json = false;

  std::string config_path, out_path, results_path, axis, statistic = "median";
  std::string instance_base, spec_path;
  std::uint64_t seed = 0;
  bool have_seed = false, noiseless = false;

  auto add_json_flag = [&](CLI::App* cmd) {
    cmd->add_flag("--json", as_json, "emit machine-readable summaries");
  };
  auto add_run_options = [&](CLI::App* cmd) {
    add_json_flag(cmd);
    cmd->add_option("--config", config_path, "experiment config (.toml/.json)")
        ->required();
    cmd->add_option("--seed", seed, "override the master seed")
        ->each([&](const std::string&) { have_seed = true; });
    cmd->add_option("--out", out_path, "override the results path");
    cmd->add_flag("--noiseless", noiseless,
                  "zero all noise draws (oracle mode; charges unchanged)");
  };
  CLI::App* run = app.add_subcommand("run", "run a single-cell experiment");
  add_run_options(run);
  CLI::App* sweep = app.add_subcommand("sweep", "run a full sweep");
  add_run_options(sweep);

  CLI::App* fit = app.add_subcommand("fit", "fit a log-log rate slope");
  add_json_flag(fit);
  fit->add_option("--results", results_path, "results CSV")->required();
  fit->add_option("--axis", axis, "sweep axis: n, d or rho")->required();
  fit->add_option("--statistic", statistic, "median (default) or mean");

  CLI::App* certify =
      app.add_subcommand("certify", "check KL/growth specs numerically");
  add_json_flag(certify);
  certify->add_option("--instance", instance_base,
                      "instance base path (expects .csv and .json)")
      ->required();
  certify->add_option("--spec", spec_path, "certification spec (JSON)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the diagnostic
    return 2;     // configuration error, including unknown flags
  }

  if (run->parsed() || sweep->parsed()) {
    char* summary = nullptr;
    const dpkl_status status = dpkl_experiment_run(
        config_path.c_str(), out_path.empty() ? nullptr : out_path.c_str(),
        have_seed ? &seed : nullptr, noiseless ? 1 : -1,
        run->parsed() ? 1 : 0, &summary);
    if (status != DPKL_OK) return report_failure(status);
    if (summary != nullptr) std::printf("%s\n", summary);
    dpkl_string_free(summary);
    return 0;
  }

  if (fit->parsed()) {
    double slope = 0.0;
    char* summary = nullptr;
    const dpkl_status status = dpkl_fit(results_path.c_str(), axis.c_str(),
                                        statistic.c_str(), &slope, &summary);
    if (status != DPKL_OK) return report_failure(status);
    if (as_json) {
      std::printf("%s\n", summary);
    } else {
      std::printf("slope(%s) = %.6f\n", axis.c_str(), slope);
      std::printf("%s\n", summary);
    }
    dpkl_string_free(summary);
    return 0;
  }

  if (certify->parsed()) {
    int pass = 0;
    char* summary = nullptr;
    const dpkl_status status = dpkl_certify(instance_base.c_str(),
                                            spec_path.c_str(), &pass,
                                            &summary);
    if (status != DPKL_OK) return report_failure(status);
    if (as_json) {
      std::printf("%s\n", summary);
    } else {
      std::printf("%s\n%s\n", pass ? "PASS" : "FAIL", summary);
    }
    dpkl_string_free(summary);
    return pass ? 0 : 1;
  }

  return 2;
}
