#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "linucblab/agents.hpp"
#include "linucblab/linmdp.hpp"

namespace linucblab::bench {

using linucblab::agents::Agent;
using linucblab::agents::Trajectory;
using linucblab::linmdp::LinearMdp;
using nlohmann::json;

inline const char* version_string() { return "linucb-lab 0.1.0"; }

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EnvSpec {
  std::string type = "hard";  // hard | random | tabular
  int d = 5;                  // hard: sign dimension + 1 (features live in d+1)
  int horizon = 6;
  int num_states = 6;   // random only
  int num_actions = 5;  // random only
  std::string mu_mode = "random";  // hard: random | allplus
  std::string path;                // tabular model file
};

struct AgentSpec {
  std::string name = "plus";  // plus | ucb | random | oracle
  double bonus_scale = 1.0;
  double delta = 0.01;
  double lambda = 0.0;  // <= 0 picks the default
  bool scale_weight_radii = false;
};

struct ExperimentConfig {
  int version = 1;
  EnvSpec env;
  AgentSpec agent;
  long long episodes = 100;
  std::vector<std::uint64_t> seeds = {1};
  int parallelism = 1;
};

inline json to_json(const ExperimentConfig& c) {
  json env{{"type", c.env.type}, {"H", c.env.horizon}};
  if (c.env.type == "hard") {
    env["d"] = c.env.d;
    env["mu_mode"] = c.env.mu_mode;
  } else if (c.env.type == "random") {
    env["d"] = c.env.d;
    env["S"] = c.env.num_states;
    env["A"] = c.env.num_actions;
  } else {
    env["path"] = c.env.path;
  }
  json agent{{"name", c.agent.name},
             {"bonus_scale", c.agent.bonus_scale},
             {"delta", c.agent.delta},
             {"scale_weight_radii", c.agent.scale_weight_radii}};
  if (c.agent.lambda > 0.0) agent["lambda"] = c.agent.lambda;
  return json{{"version", c.version}, {"env", env},           {"agent", agent},
              {"K", c.episodes},      {"seeds", c.seeds},     {"parallelism", c.parallelism}};
}

inline ExperimentConfig config_from_json(const json& j) {
  for (const char* key : {"version", "env", "agent", "K", "seeds"})
    if (!j.contains(key)) throw ConfigError(std::string("config: missing field ") + key);
  if (j["version"].get<int>() != 1) throw ConfigError("config: unsupported version");
  ExperimentConfig c;
  const auto& env = j["env"];
  if (!env.contains("type")) throw ConfigError("config: missing field env.type");
  c.env.type = env["type"].get<std::string>();
  if (c.env.type == "tabular") {
    if (!env.contains("path")) throw ConfigError("config: missing field env.path");
    c.env.path = env["path"].get<std::string>();
    if (!std::filesystem::exists(c.env.path))
      throw ConfigError("config: env.path does not exist: " + c.env.path);
  } else {
    if (!env.contains("d")) throw ConfigError("config: missing field env.d");
    if (!env.contains("H")) throw ConfigError("config: missing field env.H");
    c.env.d = env["d"].get<int>();
    c.env.horizon = env["H"].get<int>();
    if (c.env.type == "random") {
      if (!env.contains("S")) throw ConfigError("config: missing field env.S");
      if (!env.contains("A")) throw ConfigError("config: missing field env.A");
      c.env.num_states = env["S"].get<int>();
      c.env.num_actions = env["A"].get<int>();
    } else if (c.env.type == "hard") {
      if (env.contains("mu_mode")) c.env.mu_mode = env["mu_mode"].get<std::string>();
    } else {
      throw ConfigError("config: unknown env.type " + c.env.type);
    }
  }
  const auto& agent = j["agent"];
  if (!agent.contains("name")) throw ConfigError("config: missing field agent.name");
  c.agent.name = agent["name"].get<std::string>();
  if (agent.contains("bonus_scale")) c.agent.bonus_scale = agent["bonus_scale"].get<double>();
  if (agent.contains("delta")) c.agent.delta = agent["delta"].get<double>();
  if (agent.contains("lambda")) c.agent.lambda = agent["lambda"].get<double>();
  if (agent.contains("scale_weight_radii"))
    c.agent.scale_weight_radii = agent["scale_weight_radii"].get<bool>();
  c.episodes = j["K"].get<long long>();
  if (c.episodes < 1) throw ConfigError("config: K must be >= 1");
  c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (c.seeds.empty()) throw ConfigError("config: seeds must be nonempty");
  if (j.contains("parallelism")) c.parallelism = j["parallelism"].get<int>();
  return c;
}

inline ExperimentConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: invalid json: ") + e.what());
  }
  return config_from_json(j);
}

inline LinearMdp build_env(const EnvSpec& env, long long episodes, std::uint64_t seed) {
  Rng rng(seed, /*stream=*/1);
  if (env.type == "hard")
    return linmdp::make_hard_instance(env.d - 1, env.horizon, episodes, rng,
                                      env.mu_mode == "allplus");
  if (env.type == "random")
    return linmdp::make_random_linear_mdp(env.d, env.horizon, env.num_states,
                                          env.num_actions, rng);
  if (env.type == "tabular") return linmdp::load_model(env.path);
  throw ConfigError("unknown env type: " + env.type);
}

inline std::unique_ptr<Agent> build_agent(const AgentSpec& spec, const LinearMdp& mdp,
                                          long long episodes, std::uint64_t seed) {
  if (spec.name == "random") return std::make_unique<agents::RandomAgent>(mdp, seed);
  if (spec.name == "oracle") return std::make_unique<agents::OracleAgent>(mdp);
  if (spec.name == "ucb") {
    agents::UcbConfig c{spec.bonus_scale, spec.delta, spec.lambda};
    return std::make_unique<agents::LsviUcbAgent>(mdp, episodes, c);
  }
  if (spec.name == "plus") {
    agents::PlusConfig c{spec.bonus_scale, spec.delta, spec.lambda, spec.scale_weight_radii};
    return std::make_unique<agents::LsviPlusAgent>(mdp, episodes, c);
  }
  throw ConfigError("unknown agent name: " + spec.name);
}

struct EpisodeRecord {
  long long k = 0;
  double ret = 0.0;
  double v_star = 0.0;
  double v_pi = 0.0;
  double regret_inc = 0.0;
  double cum_regret = 0.0;
  bool switched = false;
  double mean_sigma_hat = 0.0;
  long long wall_us = 0;
};

struct RunResult {
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<EpisodeRecord> episodes;
  json metadata;
  long long total_wall_us = 0;
};

inline std::string make_run_id(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::ostringstream id;
  id << cfg.env.type << "-" << cfg.agent.name << "-s" << seed;
  return id.str();
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// One seeded run. Regret increments are exact: the harness knows the model, so
// V^{pi_k} comes from DP on the extracted policy, not from sampled returns.
inline RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  const LinearMdp mdp = build_env(cfg.env, cfg.episodes, seed);
  {
    const auto report = linmdp::validate(mdp);
    if (!report.empty())
      throw linmdp::ModelInvalidError("run_experiment: model failed validation: " +
                                      report.front().assumption);
  }
  auto agent = build_agent(cfg.agent, mdp, cfg.episodes, seed);
  const auto opt = linmdp::optimal_values(mdp);

  RunResult out;
  out.run_id = make_run_id(cfg, seed);
  out.seed = seed;
  out.episodes.reserve(static_cast<std::size_t>(cfg.episodes));

  Rng env_rng(seed, /*stream=*/0);
  double cum_regret = 0.0;
  std::vector<std::vector<int>> cached_policy;
  linmdp::ValueTables cached_values;
  bool have_cached = false;
  const bool stochastic_policy = !agent->has_greedy_policy();
  if (stochastic_policy) {
    cached_values = linmdp::evaluate_uniform_policy(mdp);
    have_cached = true;
  }

  const auto run_start = std::chrono::steady_clock::now();
  for (long long k = 1; k <= cfg.episodes; ++k) {
    const auto ep_start = std::chrono::steady_clock::now();
    EpisodeRecord rec;
    rec.k = k;
    try {
      rec.switched = agent->begin_episode();
      if (!stochastic_policy) {
        auto policy = agent->greedy_policy();
        if (!have_cached || policy != cached_policy) {
          cached_values = linmdp::evaluate_policy(mdp, policy);
          cached_policy = std::move(policy);
          have_cached = true;
        }
      }
      const int s1 = linmdp::draw_initial_state(mdp, env_rng);
      rec.v_star = opt.v[0][s1];
      rec.v_pi = cached_values.v[0][s1];
      rec.regret_inc = rec.v_star - rec.v_pi;
      cum_regret += rec.regret_inc;
      rec.cum_regret = cum_regret;

      Trajectory traj;
      traj.reserve(mdp.horizon);
      int s = s1;
      for (int h = 0; h < mdp.horizon; ++h) {
        const int a = agent->act(h, s);
        const auto [r, s_next] = linmdp::sample_step(mdp, h, s, a, env_rng);
        traj.push_back({s, a, r, s_next});
        rec.ret += r;
        s = s_next;
      }
      agent->end_episode(traj);
      rec.mean_sigma_hat = agent->mean_sigma_hat();
    } catch (const linalg::NumericError& e) {
      out.metadata["aborted"] = e.what();
      break;
    }
    rec.wall_us = std::chrono::duration_cast<std::chrono::microseconds>(
                      std::chrono::steady_clock::now() - ep_start)
                      .count();
    out.episodes.push_back(rec);
  }
  out.total_wall_us = std::chrono::duration_cast<std::chrono::microseconds>(
                          std::chrono::steady_clock::now() - run_start)
                          .count();

  json meta = out.metadata.is_null() ? json::object() : out.metadata;
  meta["version"] = version_string();
  meta["config"] = to_json(cfg);
  meta["seed"] = seed;
  meta["run_id"] = out.run_id;
  meta["agent"] = agent->metadata();
  {
    std::ostringstream hex;
    hex << std::hex << fnv1a(linmdp::to_json(mdp).dump());
    meta["model_hash"] = hex.str();
  }
  out.metadata = meta;
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace detail

inline const char* episode_csv_header() {
  return "run_id,seed,k,ret,v_star,v_pi,regret_inc,cum_regret,switched,mean_sigma_hat,wall_us";
}

inline std::string episode_csv(const RunResult& r) {
  std::string out(episode_csv_header());
  out.push_back('\n');
  for (const auto& e : r.episodes) {
    out += r.run_id;
    out.push_back(',');
    out += std::to_string(r.seed);
    out.push_back(',');
    out += std::to_string(e.k);
    out.push_back(',');
    detail::append_double(out, e.ret);
    out.push_back(',');
    detail::append_double(out, e.v_star);
    out.push_back(',');
    detail::append_double(out, e.v_pi);
    out.push_back(',');
    detail::append_double(out, e.regret_inc);
    out.push_back(',');
    detail::append_double(out, e.cum_regret);
    out.push_back(',');
    out += e.switched ? '1' : '0';
    out.push_back(',');
    detail::append_double(out, e.mean_sigma_hat);
    out.push_back(',');
    out += std::to_string(e.wall_us);
    out.push_back('\n');
  }
  return out;
}

inline void write_episode_csv(const std::string& path, const RunResult& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << episode_csv(r);
}

inline void write_jsonl(const std::string& path, const RunResult& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& e : r.episodes) {
    json j{{"run_id", r.run_id}, {"seed", r.seed},
           {"k", e.k},           {"ret", e.ret},
           {"v_star", e.v_star}, {"v_pi", e.v_pi},
           {"regret_inc", e.regret_inc}, {"cum_regret", e.cum_regret},
           {"switched", e.switched},     {"mean_sigma_hat", e.mean_sigma_hat},
           {"wall_us", e.wall_us}};
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Sweeps and aggregation

struct AggregateRow {
  long long k = 0;
  double mean = 0.0, median = 0.0, q25 = 0.0, q75 = 0.0;
  int n_seeds = 0;
};

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

inline std::vector<AggregateRow> aggregate_cum_regret(const std::vector<RunResult>& runs) {
  std::vector<AggregateRow> rows;
  if (runs.empty()) return rows;
  std::size_t max_len = 0;
  for (const auto& r : runs) max_len = std::max(max_len, r.episodes.size());
  rows.reserve(max_len);
  for (std::size_t i = 0; i < max_len; ++i) {
    std::vector<double> vals;
    for (const auto& r : runs)
      if (i < r.episodes.size()) vals.push_back(r.episodes[i].cum_regret);
    std::sort(vals.begin(), vals.end());
    AggregateRow row;
    row.k = static_cast<long long>(i + 1);
    row.n_seeds = static_cast<int>(vals.size());
    double sum = 0.0;
    for (double v : vals) sum += v;
    row.mean = sum / static_cast<double>(vals.size());
    row.median = quantile_sorted(vals, 0.5);
    row.q25 = quantile_sorted(vals, 0.25);
    row.q75 = quantile_sorted(vals, 0.75);
    rows.push_back(row);
  }
  return rows;
}

inline void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "k,mean_cum_regret,median,q25,q75,n_seeds\n";
  for (const auto& r : rows) {
    std::string line = std::to_string(r.k);
    line.push_back(',');
    detail::append_double(line, r.mean);
    line.push_back(',');
    detail::append_double(line, r.median);
    line.push_back(',');
    detail::append_double(line, r.q25);
    line.push_back(',');
    detail::append_double(line, r.q75);
    line.push_back(',');
    line += std::to_string(r.n_seeds);
    out << line << "\n";
  }
}

struct SweepResult {
  std::vector<RunResult> runs;        // in seed order, failed seeds absent
  std::vector<std::string> failures;  // "seed: message"
  std::vector<AggregateRow> aggregate;
};

// One job per seed, at most `parallelism` in flight; aggregation runs in seed
// order afterwards, so thread count never changes the output.
inline SweepResult sweep(const ExperimentConfig& cfg) {
  SweepResult out;
  const int workers = std::max(1, cfg.parallelism);
  std::vector<std::unique_ptr<RunResult>> slots(cfg.seeds.size());
  std::vector<std::string> errors(cfg.seeds.size());
  auto job = [&](std::size_t i) {
    try {
      slots[i] = std::make_unique<RunResult>(run_experiment(cfg, cfg.seeds[i]));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  if (workers == 1) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) job(i);
  } else {
    std::size_t next = 0;
    while (next < cfg.seeds.size()) {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers && next < cfg.seeds.size(); ++w, ++next)
        pool.emplace_back(job, next);
      for (auto& t : pool) t.join();
    }
  }
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (slots[i])
      out.runs.push_back(std::move(*slots[i]));
    else
      out.failures.push_back(std::to_string(cfg.seeds[i]) + ": " + errors[i]);
  }
  out.aggregate = aggregate_cum_regret(out.runs);
  return out;
}

struct FitResult {
  double coefficient = 0.0;  // a in cum_regret ~ a * k^b
  double exponent = 0.0;     // b
  bool ok = false;
};

// Log-log least squares over the second half of the series; the first half is
// bonus-saturated and would pollute the fit.
inline FitResult fit_regret_exponent(const std::vector<double>& cum_regret) {
  FitResult fit;
  const std::size_t n = cum_regret.size();
  if (n < 20) return fit;
  const std::size_t begin = n / 2;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double m = static_cast<double>(n - begin);
  for (std::size_t i = begin; i < n; ++i) {
    if (!(cum_regret[i] > 0.0)) return fit;  // skipped, flagged not-ok
    const double x = std::log(static_cast<double>(i + 1));
    const double y = std::log(cum_regret[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = m * sxx - sx * sx;
  if (denom == 0.0) return fit;
  fit.exponent = (m * sxy - sx * sy) / denom;
  fit.coefficient = std::exp((sy - fit.exponent * sx) / m);
  fit.ok = true;
  return fit;
}

}  // namespace linucblab::bench
