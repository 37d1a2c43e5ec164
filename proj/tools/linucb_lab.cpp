// Command-line harness: seeded experiment runs and sweeps, the martingale
// concentration lab, model generation/validation, and plot-data reshaping.
// Exit codes: 0 ok, 1 usage, 2 validation failure, 3 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "linucblab/bench.hpp"
#include "linucblab/conclab.hpp"

namespace fs = std::filesystem;
using namespace linucblab;
using nlohmann::json;

namespace {

int thread_count_from_env(int fallback) {
  if (const char* env = std::getenv("LINUCB_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return fallback;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out << text;
}

struct RunOptions {
  std::string config_path, env, agent, model_path, mu_mode = "random", out;
  int d = 0, horizon = 0, num_states = 6, num_actions = 5;
  long long episodes = 0;
  double bonus_scale = 1.0, delta = 0.01, lambda = 0.0;
  bool scale_weight_radii = false;
  std::uint64_t seed = 1;
};

bench::ExperimentConfig config_from_run_options(const RunOptions& opt, bool inline_given) {
  if (!opt.config_path.empty()) {
    if (inline_given)
      throw bench::ConfigError("--config and inline environment/agent flags are mutually exclusive");
    return bench::read_config(opt.config_path);
  }
  if (opt.env.empty()) throw bench::ConfigError("missing --env (or provide --config)");
  if (opt.episodes <= 0) throw bench::ConfigError("missing --K (or provide --config)");
  if (opt.agent.empty()) throw bench::ConfigError("missing --agent (or provide --config)");
  bench::ExperimentConfig cfg;
  cfg.env.type = opt.env;
  cfg.env.d = opt.d;
  cfg.env.horizon = opt.horizon;
  cfg.env.num_states = opt.num_states;
  cfg.env.num_actions = opt.num_actions;
  cfg.env.mu_mode = opt.mu_mode;
  cfg.env.path = opt.model_path;
  if (opt.env == "tabular" && opt.model_path.empty())
    throw bench::ConfigError("missing --model for --env tabular");
  if (opt.env != "tabular" && (opt.d <= 0 || opt.horizon <= 0))
    throw bench::ConfigError("missing --d or --H");
  cfg.agent.name = opt.agent;
  cfg.agent.bonus_scale = opt.bonus_scale;
  cfg.agent.delta = opt.delta;
  cfg.agent.lambda = opt.lambda;
  cfg.agent.scale_weight_radii = opt.scale_weight_radii;
  cfg.episodes = opt.episodes;
  cfg.seeds = {opt.seed};
  return cfg;
}

int cmd_run(const RunOptions& opt, bool inline_given) {
  auto cfg = config_from_run_options(opt, inline_given);
  const fs::path out_dir = opt.out.empty() ? fs::path(".") : fs::path(opt.out);
  fs::create_directories(out_dir);
  auto result = bench::run_experiment(cfg, opt.seed);
  bench::write_episode_csv((out_dir / "episodes.csv").string(), result);
  write_text(out_dir / "metadata.json", result.metadata.dump(2) + "\n");
  std::cout << result.run_id << ": " << result.episodes.size() << " episodes, final regret "
            << (result.episodes.empty() ? 0.0 : result.episodes.back().cum_regret) << "\n";
  if (result.metadata.contains("aborted")) {
    std::cerr << "run aborted: " << result.metadata["aborted"] << "\n";
    return 3;
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out,
              std::optional<std::uint64_t> seed_override) {
  auto cfg = bench::read_config(config_path);
  if (seed_override) cfg.seeds = {*seed_override};
  cfg.parallelism = thread_count_from_env(cfg.parallelism);
  const fs::path out_dir = out.empty() ? fs::path(".") : fs::path(out);
  fs::create_directories(out_dir);
  auto result = bench::sweep(cfg);
  for (const auto& run : result.runs) {
    bench::write_episode_csv(
        (out_dir / ("episodes_s" + std::to_string(run.seed) + ".csv")).string(), run);
  }
  bench::write_aggregate_csv((out_dir / "aggregate.csv").string(), result.aggregate);
  json meta{{"version", bench::version_string()},
            {"config", bench::to_json(cfg)},
            {"failures", result.failures}};
  write_text(out_dir / "metadata.json", meta.dump(2) + "\n");
  std::cout << "sweep: " << result.runs.size() << " runs, " << result.failures.size()
            << " failures\n";
  return result.failures.empty() ? 0 : 3;
}

struct ConclabOptions {
  std::string check, noise = "uniform", features = "sphere", out;
  int d = 2;
  long long t_max = 200, trials = 1000, steps = 1000;
  double delta = 0.05, sigma = 1.0, r_cap = 1.0, lambda = 1.0, l2_cap = 1.0;
  double c = 1.0, p = 0.02;
  std::uint64_t seed = 1;
};

conclab::NoiseModel parse_noise(const std::string& s) {
  if (s == "uniform") return conclab::NoiseModel::UniformBounded;
  if (s == "gauss") return conclab::NoiseModel::TruncatedGaussian;
  if (s == "rademacher") return conclab::NoiseModel::RademacherScaled;
  throw bench::ConfigError("unknown noise model: " + s);
}

conclab::FeatureModel parse_features(const std::string& s) {
  if (s == "sphere") return conclab::FeatureModel::IidSphere;
  if (s == "repeat") return conclab::FeatureModel::AdversarialRepeat;
  if (s == "decay") return conclab::FeatureModel::Decaying;
  throw bench::ConfigError("unknown feature model: " + s);
}

std::string trials_csv(const std::vector<conclab::TrialOutcome>& outcomes) {
  std::string out = "trial_id,violated,tightness,argmax_t\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    out += std::to_string(i);
    out.push_back(',');
    out += outcomes[i].violated ? '1' : '0';
    out.push_back(',');
    bench::detail::append_double(out, outcomes[i].tightness);
    out.push_back(',');
    out += std::to_string(outcomes[i].argmax_t);
    out.push_back('\n');
  }
  return out;
}

int cmd_conclab(const ConclabOptions& opt) {
  const fs::path out_dir = opt.out.empty() ? fs::path() : fs::path(opt.out);
  if (!out_dir.empty()) fs::create_directories(out_dir);
  const int threads = thread_count_from_env(1);
  if (!out_dir.empty()) {
    const json meta{{"version", bench::version_string()},
                    {"check", opt.check},
                    {"d", opt.d},
                    {"T", opt.t_max},
                    {"n", opt.steps},
                    {"trials", opt.trials},
                    {"delta", opt.delta},
                    {"sigma", opt.sigma},
                    {"r_cap", opt.r_cap},
                    {"lambda", opt.lambda},
                    {"l2_cap", opt.l2_cap},
                    {"noise", opt.noise},
                    {"features", opt.features},
                    {"c", opt.c},
                    {"p", opt.p},
                    {"seed", opt.seed}};
    write_text(out_dir / "metadata.json", meta.dump(2) + "\n");
  }
  std::ostringstream summary;

  if (opt.check == "bernstein" || opt.check == "hoeffding") {
    conclab::MartingaleSpec spec;
    spec.d = opt.d;
    spec.t_max = opt.t_max;
    spec.lambda = opt.lambda;
    spec.l2_cap = opt.l2_cap;
    spec.sigma = opt.sigma;
    spec.r_cap = opt.r_cap;
    spec.noise = parse_noise(opt.noise);
    spec.features = parse_features(opt.features);
    std::vector<conclab::TrialOutcome> outcomes;
    const auto kind = opt.check == "bernstein" ? conclab::BoundKind::Bernstein
                                               : conclab::BoundKind::Hoeffding;
    auto s = conclab::violation_rate(spec, opt.delta, opt.trials, opt.seed, kind, threads,
                                     &outcomes);
    summary << "check=" << opt.check << " trials=" << s.trials << " rate=" << s.rate
            << " delta=" << opt.delta << " mean_tightness=" << s.mean_tightness
            << " max_tightness=" << s.max_tightness;
    if (opt.check == "bernstein" && spec.features == conclab::FeatureModel::Decaying)
      summary << " sharpness_ratio=" << conclab::sharpness_ratio(spec, opt.delta);
    if (!out_dir.empty()) write_text(out_dir / "trials.csv", trials_csv(outcomes));
  } else if (opt.check == "elliptical") {
    long long worst_count = 0;
    double bound = 0.0;
    std::string rows = "trial_id,count,bound\n";
    for (long long i = 0; i < opt.trials; ++i) {
      Rng rng(Rng::derive(opt.seed, static_cast<std::uint64_t>(i)));
      auto [count, b] = conclab::elliptical_count_experiment(
          opt.d, opt.t_max, opt.l2_cap, opt.lambda, opt.c, parse_features(opt.features), rng);
      worst_count = std::max(worst_count, count);
      bound = b;
      rows += std::to_string(i) + "," + std::to_string(count) + ",";
      bench::detail::append_double(rows, b);
      rows.push_back('\n');
    }
    summary << "check=elliptical trials=" << opt.trials << " violations=0 max_count="
            << worst_count << " bound=" << bound;
    if (!out_dir.empty()) write_text(out_dir / "trials.csv", rows);
  } else if (opt.check == "azuma") {
    auto s = conclab::azuma_check(opt.steps, 1.0, opt.delta, opt.trials, opt.seed);
    summary << "check=azuma trials=" << s.trials << " rate=" << s.rate << " delta=" << opt.delta
            << " mean_tightness=" << s.mean_tightness;
  } else if (opt.check == "freedman") {
    auto s = conclab::freedman_check(opt.steps, opt.p, 1.0, opt.delta, opt.trials, opt.seed);
    summary << "check=freedman trials=" << s.freedman.trials << " rate=" << s.freedman.rate
            << " delta=" << opt.delta << " mean_tightness=" << s.freedman.mean_tightness
            << " mean_tightness_azuma=" << s.mean_tightness_azuma;
  } else {
    throw bench::ConfigError("unknown --check: " + opt.check);
  }

  std::cout << summary.str() << "\n";
  if (!out_dir.empty()) write_text(out_dir / "summary.csv", summary.str() + "\n");
  return 0;
}

int cmd_validate(const std::string& model_path, const std::string& out) {
  auto mdp = linmdp::load_model(model_path);
  auto report = linmdp::validate(mdp);
  json j = json::array();
  for (const auto& issue : report) {
    std::cout << "violated " << issue.assumption << " by " << issue.magnitude << "\n";
    j.push_back({{"assumption", issue.assumption}, {"magnitude", issue.magnitude}});
  }
  if (!out.empty()) write_text(out, j.dump(2) + "\n");
  if (report.empty()) {
    std::cout << "model ok\n";
    return 0;
  }
  return 2;
}

struct GenOptions {
  std::string env = "hard", mu_mode = "random", out;
  int d = 5, horizon = 6, num_states = 6, num_actions = 5;
  long long episodes = 1000;
  std::uint64_t seed = 1;
};

int cmd_gen(const GenOptions& opt) {
  Rng rng(opt.seed, /*stream=*/1);
  linmdp::LinearMdp mdp;
  if (opt.env == "hard") {
    mdp = linmdp::make_hard_instance(opt.d - 1, opt.horizon, opt.episodes, rng,
                                     opt.mu_mode == "allplus");
  } else if (opt.env == "random") {
    mdp = linmdp::make_random_linear_mdp(opt.d, opt.horizon, opt.num_states, opt.num_actions,
                                         rng);
  } else {
    throw bench::ConfigError("gen: unknown --env " + opt.env);
  }
  const auto report = linmdp::validate(mdp);
  if (!report.empty()) {
    for (const auto& issue : report)
      std::cerr << "generated model violates " << issue.assumption << "\n";
    return 2;
  }
  if (opt.out.empty()) throw bench::ConfigError("gen: missing --out");
  linmdp::save_model(mdp, opt.out);
  std::cout << "wrote " << opt.out << "\n";
  return 0;
}

// Reshape aggregate CSVs into one long table (agent,k,stat,value); computes
// nothing new. The agent label is the input file stem.
int cmd_plotdata(const std::vector<std::string>& inputs, const std::string& out) {
  std::string table = "agent,k,stat,value\n";
  for (const auto& input : inputs) {
    std::ifstream in(input);
    if (!in) throw std::runtime_error("cannot open for read: " + input);
    const std::string label = fs::path(input).stem().string();
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("empty csv: " + input);
    std::vector<std::string> cols;
    {
      std::stringstream ss(header);
      std::string col;
      while (std::getline(ss, col, ',')) cols.push_back(col);
    }
    if (cols.empty() || cols[0] != "k")
      throw std::runtime_error("expected aggregate csv with leading k column: " + input);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() != cols.size())
        throw std::runtime_error("ragged csv row in " + input);
      for (std::size_t c = 1; c < cols.size(); ++c)
        table += label + "," + cells[0] + "," + cols[c] + "," + cells[c] + "\n";
    }
  }
  if (out.empty()) throw bench::ConfigError("plotdata: missing --out");
  write_text(out, table);
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"episodic linear-MDP experiment lab"};
  app.require_subcommand(1);

  RunOptions run_opt;
  auto* run = app.add_subcommand("run", "run one seeded experiment");
  run->add_option("--config", run_opt.config_path, "experiment config json");
  auto* f_env = run->add_option("--env", run_opt.env, "hard|random|tabular");
  auto* f_d = run->add_option("--d", run_opt.d, "dimension parameter");
  auto* f_h = run->add_option("--H", run_opt.horizon, "horizon");
  auto* f_s = run->add_option("--S", run_opt.num_states, "states (random env)");
  auto* f_a = run->add_option("--A", run_opt.num_actions, "actions (random env)");
  auto* f_k = run->add_option("--K", run_opt.episodes, "episodes");
  auto* f_agent = run->add_option("--agent", run_opt.agent, "plus|ucb|random|oracle");
  auto* f_bs = run->add_option("--bonus-scale", run_opt.bonus_scale, "bonus multiplier");
  auto* f_delta = run->add_option("--delta", run_opt.delta, "confidence level");
  auto* f_lambda = run->add_option("--lambda", run_opt.lambda, "ridge regularizer");
  auto* f_swr = run->add_flag("--scale-weight-radii", run_opt.scale_weight_radii,
                              "also scale the radii inside the variance offsets");
  auto* f_mu = run->add_option("--mu-mode", run_opt.mu_mode, "hard env: random|allplus");
  auto* f_model = run->add_option("--model", run_opt.model_path, "tabular model json");
  run->add_option("--seed", run_opt.seed, "rng seed");
  run->add_option("--out", run_opt.out, "output directory");

  std::string sweep_config, sweep_out;
  std::uint64_t sweep_seed = 0;
  auto* sweep = app.add_subcommand("sweep", "run all configured seeds");
  sweep->add_option("--config", sweep_config, "experiment config json")->required();
  auto* sweep_seed_opt = sweep->add_option("--seed", sweep_seed, "run only this seed");
  sweep->add_option("--out", sweep_out, "output directory");

  ConclabOptions cl_opt;
  auto* cl = app.add_subcommand("conclab", "martingale concentration lab");
  cl->add_option("--check", cl_opt.check, "bernstein|hoeffding|elliptical|azuma|freedman")
      ->required();
  cl->add_option("--d", cl_opt.d, "dimension");
  cl->add_option("--T", cl_opt.t_max, "steps per trial");
  cl->add_option("--n", cl_opt.steps, "steps (azuma/freedman)");
  cl->add_option("--trials", cl_opt.trials, "number of trials");
  cl->add_option("--delta", cl_opt.delta, "confidence level");
  cl->add_option("--sigma", cl_opt.sigma, "noise second-moment cap");
  cl->add_option("--r-cap", cl_opt.r_cap, "scaled noise cap");
  cl->add_option("--lambda", cl_opt.lambda, "regularizer");
  cl->add_option("--l2-cap", cl_opt.l2_cap, "feature norm cap");
  cl->add_option("--noise", cl_opt.noise, "uniform|gauss|rademacher");
  cl->add_option("--features", cl_opt.features, "sphere|repeat|decay");
  cl->add_option("--c", cl_opt.c, "elliptical threshold");
  cl->add_option("--p", cl_opt.p, "freedman bernoulli rate");
  cl->add_option("--seed", cl_opt.seed, "rng seed");
  cl->add_option("--out", cl_opt.out, "output directory");

  std::string validate_model, validate_out;
  std::uint64_t validate_seed = 0;
  auto* val = app.add_subcommand("validate", "check a model file against the assumptions");
  val->add_option("--model", validate_model, "model json")->required();
  val->add_option("--seed", validate_seed, "unused, accepted for uniformity");
  val->add_option("--out", validate_out, "write the report json here");

  GenOptions gen_opt;
  auto* gen = app.add_subcommand("gen", "generate a model file");
  gen->add_option("--env", gen_opt.env, "hard|random");
  gen->add_option("--d", gen_opt.d, "dimension parameter");
  gen->add_option("--H", gen_opt.horizon, "horizon");
  gen->add_option("--S", gen_opt.num_states, "states (random env)");
  gen->add_option("--A", gen_opt.num_actions, "actions (random env)");
  gen->add_option("--K", gen_opt.episodes, "episode budget the instance is sized for");
  gen->add_option("--mu-mode", gen_opt.mu_mode, "hard env: random|allplus");
  gen->add_option("--seed", gen_opt.seed, "rng seed");
  gen->add_option("--out", gen_opt.out, "output model path")->required();

  std::vector<std::string> plot_inputs;
  std::string plot_out;
  std::uint64_t plot_seed = 0;
  auto* plot = app.add_subcommand("plotdata", "reshape aggregate CSVs to long format");
  plot->add_option("--in", plot_inputs, "aggregate csv inputs")->required();
  plot->add_option("--seed", plot_seed, "unused, accepted for uniformity");
  plot->add_option("--out", plot_out, "output csv path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(run)) {
      const bool inline_given = f_env->count() || f_d->count() || f_h->count() ||
                                f_s->count() || f_a->count() || f_k->count() ||
                                f_agent->count() || f_bs->count() || f_delta->count() ||
                                f_lambda->count() || f_swr->count() || f_mu->count() ||
                                f_model->count();
      return cmd_run(run_opt, inline_given);
    }
    if (app.got_subcommand(sweep))
      return cmd_sweep(sweep_config, sweep_out,
                       sweep_seed_opt->count() ? std::optional<std::uint64_t>(sweep_seed)
                                               : std::nullopt);
    if (app.got_subcommand(cl)) return cmd_conclab(cl_opt);
    if (app.got_subcommand(val)) return cmd_validate(validate_model, validate_out);
    if (app.got_subcommand(gen)) return cmd_gen(gen_opt);
    if (app.got_subcommand(plot)) return cmd_plotdata(plot_inputs, plot_out);
  } catch (const bench::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const linmdp::ModelInvalidError& e) {
    std::cerr << "validation failure: " << e.what() << "\n";
    return 2;
  } catch (const conclab::BoundViolation& e) {
    std::cerr << "pathwise bound violated: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
