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

#include "core/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "core/errors.hpp"
#include "core/toml_lite.hpp"

namespace dpkl {
namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double get_param(const std::map<std::string, double>& params,
                 const std::string& key, std::optional<double> fallback = {}) {
  const auto it = params.find(key);
  if (it != params.end()) return it->second;
  if (fallback) return *fallback;
  throw ConfigError("config: missing instance parameter '" + key + "'");
}

std::vector<double> ball_point(std::size_t d, double radius, Rng& rng) {
  std::vector<double> x(d);
  rng.fill_gaussian(x, 1.0);
  const double nx = norm2(x);
  const double r =
      radius * std::pow(rng.next_unit(), 1.0 / static_cast<double>(d));
  for (auto& v : x) v = nx > 0.0 ? r * v / nx : 0.0;
  return x;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (trials < 1) throw ConfigError("config: trials must be >= 1");
  if (n_values.empty() || d_values.empty() || rho_values.empty() ||
      kappa_values.empty())
    throw ConfigError("config: sweep axes must be non-empty");
  for (auto n : n_values)
    if (n < 1) throw ConfigError("config: n values must be >= 1");
  for (auto d : d_values)
    if (d < 1) throw ConfigError("config: d values must be >= 1");
  for (auto r : rho_values)
    if (!(r > 0.0)) throw ConfigError("config: rho values must be positive");
  if (instance.type.empty()) throw ConfigError("config: instance.type missing");
  if (optimizer.algo.empty()) throw ConfigError("config: optimizer.algo "
                                                "missing");
  if (!(cell_timeout_s > 0.0))
    throw ConfigError("config: timeout_s must be positive");
}

namespace {

template <typename T>
std::vector<T> axis_values(const nlohmann::json& sweep, const char* key,
                           std::vector<T> fallback) {
  if (!sweep.contains(key)) return fallback;
  const auto& v = sweep.at(key);
  std::vector<T> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(e.get<T>());
  } else {
    out.push_back(v.get<T>());
  }
  return out;
}

void reject_unknown_keys(const nlohmann::json& obj, const char* where,
                         std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok)
      throw ConfigError(std::string("config: unknown field '") + key +
                        "' in " + where);
  }
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig config;
  if (!j.is_object()) throw ConfigError("config: top level must be a table");
  reject_unknown_keys(j, "config", {"instance", "optimizer", "sweep"});

  const auto& inst = j.at("instance");
  config.instance.type = inst.at("type").get<std::string>();
  for (const auto& [key, value] : inst.items()) {
    if (key == "type") continue;
    if (!value.is_number())
      throw ConfigError("config: instance parameter '" + key +
                        "' must be numeric");
    config.instance.params[key] = value.get<double>();
  }

  const auto& opt = j.at("optimizer");
  reject_unknown_keys(opt, "optimizer",
                      {"algo", "beta", "noiseless", "gamma", "L0", "L1",
                       "Ltilde1", "F0", "floor_scale", "max_steps"});
  config.optimizer.algo = opt.at("algo").get<std::string>();
  config.optimizer.beta = opt.value("beta", 0.05);
  config.optimizer.noiseless = opt.value("noiseless", false);
  if (opt.contains("gamma")) config.optimizer.gamma = opt["gamma"].get<double>();
  if (opt.contains("L0")) config.optimizer.L0 = opt["L0"].get<double>();
  if (opt.contains("L1")) config.optimizer.L1 = opt["L1"].get<double>();
  if (opt.contains("Ltilde1"))
    config.optimizer.Ltilde1 = opt["Ltilde1"].get<double>();
  if (opt.contains("F0")) config.optimizer.F0 = opt["F0"].get<double>();
  config.optimizer.floor_scale = opt.value("floor_scale", 1.0);
  if (opt.contains("max_steps"))
    config.optimizer.max_steps = opt["max_steps"].get<std::size_t>();

  const auto sweep = j.value("sweep", nlohmann::json::object());
  reject_unknown_keys(sweep, "sweep",
                      {"n", "d", "rho", "kappa", "trials", "master_seed",
                       "out", "timeout_s", "repro_timing"});
  config.n_values = axis_values<std::size_t>(sweep, "n", {});
  config.d_values = axis_values<std::size_t>(sweep, "d", {});
  config.rho_values = axis_values<double>(sweep, "rho", {});
  config.kappa_values = axis_values<double>(sweep, "kappa", {2.0});
  config.trials = sweep.value("trials", std::size_t{1});
  config.master_seed = sweep.value("master_seed", std::uint64_t{0});
  config.out_path = sweep.value("out", std::string("results.csv"));
  config.cell_timeout_s = sweep.value("timeout_s", 120.0);
  config.repro_timing = sweep.value("repro_timing", false);
  config.validate();
  return config;
}

nlohmann::json config_to_json(const ExperimentConfig& config) {
  nlohmann::json j;
  j["instance"]["type"] = config.instance.type;
  for (const auto& [key, value] : config.instance.params)
    j["instance"][key] = value;
  auto& opt = j["optimizer"];
  opt["algo"] = config.optimizer.algo;
  opt["beta"] = config.optimizer.beta;
  opt["noiseless"] = config.optimizer.noiseless;
  if (config.optimizer.gamma) opt["gamma"] = *config.optimizer.gamma;
  if (config.optimizer.L0) opt["L0"] = *config.optimizer.L0;
  if (config.optimizer.L1) opt["L1"] = *config.optimizer.L1;
  if (config.optimizer.Ltilde1) opt["Ltilde1"] = *config.optimizer.Ltilde1;
  if (config.optimizer.F0) opt["F0"] = *config.optimizer.F0;
  opt["floor_scale"] = config.optimizer.floor_scale;
  opt["max_steps"] = config.optimizer.max_steps;
  auto& sweep = j["sweep"];
  sweep["n"] = config.n_values;
  sweep["d"] = config.d_values;
  sweep["rho"] = config.rho_values;
  sweep["kappa"] = config.kappa_values;
  sweep["trials"] = config.trials;
  sweep["master_seed"] = config.master_seed;
  sweep["out"] = config.out_path;
  sweep["timeout_s"] = config.cell_timeout_s;
  sweep["repro_timing"] = config.repro_timing;
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  if (std::filesystem::path(path).extension() == ".toml")
    return config_from_json(parse_toml_lite(text));
  try {
    return config_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: bad json in " + path + ": " + e.what());
  }
}

BuiltInstance build_instance(const InstanceSpec& instance,
                             const OptimizerSpec& optimizer, std::size_t n,
                             std::size_t d, double kappa,
                             std::uint64_t data_seed) {
  Rng rng(data_seed);
  if (instance.type == "quadratic_pl" || instance.type == "prox_quadratic") {
    const double mu = get_param(instance.params, "mu", 1.0);
    const double center_radius =
        get_param(instance.params, "center_radius", 0.5);
    const double w0_distance = get_param(instance.params, "w0_distance", 1.0);
    Dataset centers;
    centers.n = n;
    centers.d = d;
    centers.flat.reserve(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = ball_point(d, center_radius, rng);
      centers.flat.insert(centers.flat.end(), p.begin(), p.end());
    }
    EmpiricalObjective quad = make_quadratic_pl(d, mu, std::move(centers));
    std::vector<double> w0 = *quad.meta().w_star;
    w0[0] += w0_distance;

    const double gamma =
        optimizer.gamma.value_or(1.0 / std::sqrt(2.0 * mu));
    // Default declared Lipschitz bound: gradient norm on the swept region
    // (trajectory scale + center spread), with margin.
    const double default_l0 = 4.0 * mu * (w0_distance + center_radius);
    quad.meta().lipschitz = optimizer.L0.value_or(default_l0);
    if (optimizer.L1) quad.meta().smoothness = *optimizer.L1;

    if (instance.type == "prox_quadratic") {
      const double weight = get_param(instance.params, "prox_weight", 1.0);
      EmpiricalObjective reg = prox_regularize(quad, w0, weight);
      return BuiltInstance{std::move(reg), std::move(w0), gamma};
    }
    (void)kappa;
    return BuiltInstance{std::move(quad), std::move(w0), gamma};
  }

  if (instance.type == "growth") {
    if (d != 1)
      throw ConfigError("config: growth instances are one-dimensional");
    const double a = get_param(instance.params, "a");
    const double tau = get_param(instance.params, "tau", kappa / (kappa - 1.0));
    const double rho_frac = get_param(instance.params, "rho_frac");
    EmpiricalObjective obj = make_growth_instance(a, tau, rho_frac, n);
    if (optimizer.L0) obj.meta().lipschitz = *optimizer.L0;
    if (optimizer.L1) obj.meta().smoothness = *optimizer.L1;
    const double w0_distance = get_param(instance.params, "w0_distance", 0.5);
    std::vector<double> w0{a + w0_distance};
    const double gamma = optimizer.gamma.value_or(1.0);
    return BuiltInstance{std::move(obj), std::move(w0), gamma};
  }

  if (instance.type == "linear_huber") {
    const double L0 = get_param(instance.params, "L0", 1.0);
    const double D = get_param(instance.params, "D", 1.0);
    const double n_frac = get_param(instance.params, "N_frac", 1.0);
    const auto N = static_cast<std::size_t>(std::max(
        1.0, std::ceil(n_frac * static_cast<double>(n))));
    EmpiricalObjective obj =
        make_linear_huber(d, n, L0, D, std::min(N, n), rng);
    const double w0_distance = get_param(instance.params, "w0_distance", 0.5);
    std::vector<double> w0 = *obj.meta().w_star;
    w0[0] += w0_distance;
    const double gamma = optimizer.gamma.value_or(1.0);
    return BuiltInstance{std::move(obj), std::move(w0), gamma};
  }

  throw ConfigError("config: unknown instance type '" + instance.type + "'");
}

ResultRow run_single(const ExperimentConfig& config, std::size_t cell_index,
                     std::size_t n, std::size_t d, double rho, double kappa,
                     std::size_t trial,
                     const std::optional<std::vector<double>>& w0_override,
                     RunReport* report_out) {
  const std::uint64_t seed =
      Rng::derive(config.master_seed, cell_index, trial);
  const std::uint64_t data_seed = Rng::derive(seed, 0, 1);
  const std::uint64_t run_seed = Rng::derive(seed, 0, 2);

  BuiltInstance built = build_instance(config.instance, config.optimizer, n,
                                       d, kappa, data_seed);
  if (w0_override) {
    if (w0_override->size() != built.objective.dim())
      throw ConfigError("config: w0 has the wrong dimension");
    built.w0 = *w0_override;
  }
  EmpiricalObjective& obj = built.objective;
  const OptimizerSpec& spec = config.optimizer;
  const double noise_scale = spec.noiseless ? 0.0 : 1.0;
  const double L0 = spec.L0.value_or(obj.meta().lipschitz);
  const double L1 = spec.L1.value_or(obj.meta().smoothness.value_or(0.0));

  double F0 = 0.0;
  if (spec.F0) {
    F0 = *spec.F0;
  } else if (obj.meta().f_star) {
    // Twice the realized initial excess; a valid loss bound for every trial
    // of these concentrated synthetic instances.
    F0 = 2.0 * (obj.value(built.w0) - *obj.meta().f_star);
  }

  Rng rng(run_seed);
  RunOptions run_opts;
  run_opts.deadline = Deadline::after(std::chrono::milliseconds(
      static_cast<long long>(config.cell_timeout_s * 1000.0)));

  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  if (spec.algo == "kl_spider") {
    SpiderSchedule schedule =
        spider_schedule(n, d, rho, spec.beta, F0, built.gamma, kappa, L0, L1,
                        noise_scale, spec.floor_scale, spec.max_steps);
    report = kl_spider(obj, schedule, built.w0, rng, run_opts);
  } else if (spec.algo == "adaptive_gd") {
    AdaptiveGdOptions options;
    options.rho = rho;
    options.beta = spec.beta;
    options.noise_scale = noise_scale;
    options.max_steps = spec.max_steps;
    obj.meta().lipschitz = L0;
    if (L1 > 0.0) obj.meta().smoothness = L1;
    report = adaptive_noisy_gd(obj, options, built.w0, rng, run_opts);
  } else if (spec.algo == "sc_noisy_gd") {
    ScNoisyGdOptions options;
    options.rho = rho;
    options.beta = spec.beta;
    options.L0 = L0;
    options.Ltilde1 = spec.Ltilde1.value_or(
        obj.meta().params.count("strong_convexity")
            ? obj.meta().params.at("strong_convexity")
            : 0.0);
    options.noise_scale = noise_scale;
    options.max_steps = spec.max_steps;
    report = sc_noisy_gd(obj, options, built.w0, rng, run_opts);
  } else if (spec.algo == "prox_point") {
    ProxPointOptions options;
    options.rho = rho;
    options.beta = spec.beta;
    options.F0 = F0;
    options.gamma = built.gamma;
    options.kappa = kappa;
    options.L0 = L0;
    options.Ltilde1 = spec.Ltilde1.value_or(
        obj.meta().weak_convexity.value_or(0.0));
    options.noise_scale = noise_scale;
    options.max_steps = spec.max_steps;
    report = prox_point(obj, options, built.w0, rng, run_opts);
  } else {
    throw ConfigError("config: unknown optimizer algo '" + spec.algo + "'");
  }
  const auto elapsed = std::chrono::steady_clock::now() - start;

  ResultRow row;
  row.trial = trial;
  row.algo = spec.algo;
  row.n = n;
  row.d = d;
  row.rho = rho;
  row.kappa = kappa;
  row.gamma = built.gamma;
  row.excess_risk = report.final_excess.value_or(
      std::numeric_limits<double>::quiet_NaN());
  row.final_grad_norm = obj.gradient_norm(report.final_w);
  row.iters = report.steps;
  row.rho_spent = report.rho_spent;
  row.stop_reason = to_string(report.stop);
  row.wall_ms =
      config.repro_timing
          ? 0.0
          : std::chrono::duration<double, std::milli>(elapsed).count();
  row.seed = seed;
  if (report_out != nullptr) *report_out = std::move(report);
  return row;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
  config.validate();

  struct Job {
    std::size_t cell_index, n, d, trial;
    double rho, kappa;
  };
  std::vector<Job> jobs;
  std::size_t cell_index = 0;
  for (std::size_t n : config.n_values)
    for (std::size_t d : config.d_values)
      for (double rho : config.rho_values)
        for (double kappa : config.kappa_values) {
          for (std::size_t trial = 0; trial < config.trials; ++trial)
            jobs.push_back(Job{cell_index, n, d, trial, rho, kappa});
          ++cell_index;
        }

  std::size_t workers = std::thread::hardware_concurrency();
  if (const char* env = std::getenv("DPKL_THREADS")) {
    char* end = nullptr;
    const long parsed = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || parsed < 1)
      throw ConfigError("DPKL_THREADS must be a positive integer");
    workers = static_cast<std::size_t>(parsed);
  }
  workers = std::max<std::size_t>(1, std::min(workers, jobs.size()));

  std::vector<ResultRow> rows(jobs.size());
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      try {
        rows[i] = run_single(config, job.cell_index, job.n, job.d, job.rho,
                             job.kappa, job.trial);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return rows;  // jobs were enumerated in (cell, trial) order already
}

void write_results_csv(const std::vector<ResultRow>& rows,
                       const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  fs::path temp = target;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::trunc);
    if (!out) throw IoError("cannot open " + temp.string() + " for writing");
    out << kResultHeader << '\n';
    for (const auto& r : rows) {
      out << r.trial << ',' << r.algo << ',' << r.n << ',' << r.d << ','
          << format_double(r.rho) << ',' << format_double(r.kappa) << ','
          << format_double(r.gamma) << ',' << format_double(r.excess_risk)
          << ',' << format_double(r.final_grad_norm) << ',' << r.iters << ','
          << format_double(r.rho_spent) << ',' << r.stop_reason << ','
          << format_double(r.wall_ms) << ',' << r.seed << '\n';
    }
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(temp, ec);
      throw IoError("write failed for " + temp.string());
    }
  }
  std::error_code ec;
  fs::rename(temp, target, ec);
  if (ec) {
    fs::remove(temp, ec);
    throw IoError("cannot move results into place at " + path);
  }
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open results file " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty results file " + path);
  if (line != kResultHeader)
    throw ConfigError("results file " + path + " has an unexpected header");
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 14)
      throw ConfigError("results file " + path + " line " +
                        std::to_string(line_no) + ": expected 14 columns");
    ResultRow r;
    try {
      r.trial = std::stoull(cells[0]);
      r.algo = cells[1];
      r.n = std::stoull(cells[2]);
      r.d = std::stoull(cells[3]);
      r.rho = std::stod(cells[4]);
      r.kappa = std::stod(cells[5]);
      r.gamma = std::stod(cells[6]);
      r.excess_risk = std::stod(cells[7]);
      r.final_grad_norm = std::stod(cells[8]);
      r.iters = std::stoull(cells[9]);
      r.rho_spent = std::stod(cells[10]);
      r.stop_reason = cells[11];
      r.wall_ms = std::stod(cells[12]);
      r.seed = std::stoull(cells[13]);
    } catch (const std::exception&) {
      throw ConfigError("results file " + path + " line " +
                        std::to_string(line_no) + ": cannot parse row");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

FitResult rate_fit(const std::vector<ResultRow>& rows, const std::string& axis,
                   const std::string& statistic) {
  if (statistic != "median" && statistic != "mean")
    throw ConfigError("rate_fit: statistic must be 'median' or 'mean'");
  auto axis_of = [&axis](const ResultRow& r) -> double {
    if (axis == "n") return static_cast<double>(r.n);
    if (axis == "d") return static_cast<double>(r.d);
    if (axis == "rho") return r.rho;
    throw ConfigError("rate_fit: axis must be one of n, d, rho");
  };

  std::map<double, std::vector<double>> cells;
  std::size_t dropped = 0;
  for (const auto& r : rows) {
    if (!(r.excess_risk > 0.0) || !std::isfinite(r.excess_risk)) {
      ++dropped;
      continue;
    }
    cells[axis_of(r)].push_back(r.excess_risk);
  }
  if (cells.size() < 3)
    throw ConfigError("rate_fit: need at least 3 distinct axis values with "
                      "positive excess risk");

  FitResult fit;
  fit.dropped_rows = dropped;
  std::vector<double> xs, ys;
  for (auto& [x, values] : cells) {
    double stat;
    if (statistic == "median") {
      std::sort(values.begin(), values.end());
      const std::size_t m = values.size();
      stat = m % 2 ? values[m / 2]
                   : 0.5 * (values[m / 2 - 1] + values[m / 2]);
    } else {
      stat = 0.0;
      for (double v : values) stat += v;
      stat /= static_cast<double>(values.size());
    }
    fit.points.emplace_back(x, stat);
    xs.push_back(std::log(x));
    ys.push_back(std::log(stat));
  }

  const auto count = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    syy += ys[i] * ys[i];
  }
  const double denom = count * sxx - sx * sx;
  if (denom == 0.0)
    throw ConfigError("rate_fit: degenerate axis (all values equal)");
  fit.slope = (count * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / count;
  double ss_res = 0.0, ss_tot = 0.0;
  const double mean_y = sy / count;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double pred = fit.intercept + fit.slope * xs[i];
    ss_res += (ys[i] - pred) * (ys[i] - pred);
    ss_tot += (ys[i] - mean_y) * (ys[i] - mean_y);
  }
  fit.r2 = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

}  // namespace dpkl
