#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "linucblab/linalg.hpp"
#include "linucblab/linmdp.hpp"
#include "linucblab/radii.hpp"
#include "linucblab/rng.hpp"

namespace linucblab::agents {

using linucblab::linalg::GramState;
using linucblab::linalg::Vector;
using linucblab::linalg::dot;
using linucblab::linmdp::LinearMdp;
using nlohmann::json;

struct Step {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
};
using Trajectory = std::vector<Step>;

// Episodic learning contract. begin_episode() refreshes the agent's tables for
// the coming episode (returns whether the optimistic tables were rebuilt),
// act() is deterministic given internal state for every agent but the random
// one, end_episode() absorbs the rolled trajectory.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual bool begin_episode() = 0;
  virtual int act(int h, int s) = 0;
  virtual void end_episode(const Trajectory& traj) = 0;
  virtual bool has_greedy_policy() const { return true; }
  virtual std::vector<std::vector<int>> greedy_policy() const = 0;
  virtual double mean_sigma_hat() const { return 0.0; }
  virtual json metadata() const = 0;
};

// Ridge regression state for one stage: regularized weighted Gram matrix plus
// next-state-grouped accumulators c(s') = sum_{i: s'_i = s'} w_i phi_i, so a
// weight vector against any value table costs O(|S| d) instead of O(k d).
// The raw sample history is kept so the grouping can be replay-checked.
class WeightedRegressor {
 public:
  struct Sample {
    Vector phi;
    int next_state;
    double weight;  // sigma^{-2}
  };

  WeightedRegressor(int dim, double lambda, int num_states)
      : gram_(dim, lambda), acc_(num_states, Vector(dim, 0.0)) {}

  void add(const Vector& phi, int next_state, double weight) {
    gram_.rank1_update(phi, weight);
    Vector& c = acc_[next_state];
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += weight * phi[j];
    history_.push_back({phi, next_state, weight});
  }

  // Gram^{-1} * sum_{s'} c(s') values[s']
  Vector solve_targets(const std::vector<double>& values) const {
    Vector b(gram_.dim(), 0.0);
    for (std::size_t sp = 0; sp < acc_.size(); ++sp) {
      const double v = values[sp];
      if (v == 0.0) continue;
      const Vector& c = acc_[sp];
      for (int j = 0; j < gram_.dim(); ++j) b[j] += c[j] * v;
    }
    return gram_.solve(b);
  }

  const GramState& gram() const { return gram_; }
  const std::vector<Sample>& history() const { return history_; }
  const std::vector<Vector>& accumulators() const { return acc_; }

 private:
  GramState gram_;
  std::vector<Vector> acc_;
  std::vector<Sample> history_;
};

class RandomAgent : public Agent {
 public:
  RandomAgent(const LinearMdp& mdp, std::uint64_t seed)
      : num_actions_(mdp.num_actions), rng_(seed, /*stream=*/2) {}
  bool begin_episode() override { return false; }
  int act(int, int) override { return rng_.uniform_int(num_actions_); }
  void end_episode(const Trajectory&) override {}
  bool has_greedy_policy() const override { return false; }
  std::vector<std::vector<int>> greedy_policy() const override {
    throw std::logic_error("RandomAgent has no greedy policy");
  }
  json metadata() const override { return {{"name", "random"}}; }

 private:
  int num_actions_;
  Rng rng_;
};

class OracleAgent : public Agent {
 public:
  explicit OracleAgent(const LinearMdp& mdp)
      : policy_(linmdp::greedy_policy_from(linmdp::optimal_values(mdp))) {}
  bool begin_episode() override { return false; }
  int act(int h, int s) override { return policy_[h][s]; }
  void end_episode(const Trajectory&) override {}
  std::vector<std::vector<int>> greedy_policy() const override { return policy_; }
  json metadata() const override { return {{"name", "oracle"}}; }

 private:
  std::vector<std::vector<int>> policy_;
};

struct UcbConfig {
  double bonus_scale = 1.0;
  double delta = 0.01;
  double lambda = 0.0;  // <= 0 picks 1/(H^2 sqrt(d))
};

// Optimistic value iteration with an unweighted ridge regression per stage and
// a Hoeffding-style bonus; tables rebuilt every episode.
class LsviUcbAgent : public Agent {
 public:
  LsviUcbAgent(const LinearMdp& mdp, long long episodes, const UcbConfig& cfg)
      : mdp_(mdp),
        horizon_(mdp.horizon),
        lambda_(cfg.lambda > 0.0 ? cfg.lambda : radii::default_lambda(mdp.horizon, mdp.dim)),
        cfg_(cfg) {
    beta_ = cfg.bonus_scale *
            radii::hoeffding_radius(static_cast<double>(horizon_), mdp.dim, 1.0, lambda_,
                                    std::max<long long>(episodes, 1), cfg.delta);
    for (int h = 0; h < horizon_; ++h)
      regs_.emplace_back(mdp.dim, lambda_, mdp.num_states);
    q_.assign(horizon_, std::vector<std::vector<double>>(
                            mdp.num_states, std::vector<double>(mdp.num_actions, 0.0)));
    v_.assign(horizon_ + 1, std::vector<double>(mdp.num_states, 0.0));
    policy_.assign(horizon_, std::vector<int>(mdp.num_states, 0));
  }

  bool begin_episode() override {
    const double hcap = static_cast<double>(horizon_);
    for (int h = horizon_ - 1; h >= 0; --h) {
      const Vector w = regs_[h].solve_targets(v_[h + 1]);
      for (int s = 0; s < mdp_.num_states; ++s) {
        double best = 0.0;
        int best_a = 0;
        for (int a = 0; a < mdp_.num_actions; ++a) {
          const Vector& f = mdp_.features(s, a);
          const double val = std::clamp(
              mdp_.reward(h, s, a) + dot(w, f) + beta_ * regs_[h].gram().elliptical_potential(f),
              0.0, hcap);
          q_[h][s][a] = val;
          if (val > best) {
            best = val;
            best_a = a;
          }
        }
        v_[h][s] = best;
        policy_[h][s] = best_a;
      }
    }
    return false;
  }

  int act(int h, int s) override { return policy_[h][s]; }

  void end_episode(const Trajectory& traj) override {
    for (int h = 0; h < horizon_; ++h)
      regs_[h].add(mdp_.features(traj[h].state, traj[h].action), traj[h].next_state, 1.0);
  }

  std::vector<std::vector<int>> greedy_policy() const override { return policy_; }

  json metadata() const override {
    return {{"name", "lsvi_ucb"},
            {"bonus_scale", cfg_.bonus_scale},
            {"delta", cfg_.delta},
            {"lambda", lambda_},
            {"beta", beta_}};
  }

  // fitted weight vector for a stage, exposed for regression-fidelity checks
  Vector weight_vector(int h) const { return regs_[h].solve_targets(v_[h + 1]); }
  const WeightedRegressor& regressor(int h) const { return regs_[h]; }
  const std::vector<std::vector<double>>& values() const { return v_; }

 private:
  const LinearMdp& mdp_;
  int horizon_;
  double lambda_;
  UcbConfig cfg_;
  double beta_ = 0.0;
  std::vector<WeightedRegressor> regs_;
  std::vector<std::vector<std::vector<double>>> q_;
  std::vector<std::vector<double>> v_;
  std::vector<std::vector<int>> policy_;
};

struct PlusConfig {
  double bonus_scale = 1.0;
  double delta = 0.01;
  double lambda = 0.0;             // <= 0 picks 1/(H^2 sqrt(d))
  bool scale_weight_radii = false; // also scale the radii inside the variance offsets
};

// Weighted-ridge optimistic value iteration. The optimistic Q tables are
// rebuilt only when some stage's Gram determinant has doubled since the last
// rebuild; the pessimistic tables, the variance estimate and the per-step
// regression weights follow the visited trajectory every episode.
class LsviPlusAgent : public Agent {
 public:
  LsviPlusAgent(const LinearMdp& mdp, long long episodes, const PlusConfig& cfg)
      : mdp_(mdp),
        horizon_(mdp.horizon),
        dim_(mdp.dim),
        lambda_(cfg.lambda > 0.0 ? cfg.lambda : radii::default_lambda(mdp.horizon, mdp.dim)),
        cfg_(cfg) {
    radii::RadiusConfig rc;
    rc.dim = mdp.dim;
    rc.horizon = mdp.horizon;
    rc.episodes = std::max<long long>(episodes, 1);
    rc.w_bound = mdp.w_bound;
    rc.lambda = lambda_;
    rc.delta = cfg.delta;
    rc.bonus_scale = cfg.bonus_scale;
    radii_ = radii::compute_radius_set(rc);
    episodes_ = rc.episodes;

    const double wscale = cfg.scale_weight_radii ? cfg.bonus_scale : 1.0;
    wr_bar_ = wscale * radii_.beta_bar;
    wr_tilde_ = wscale * radii_.beta_tilde;
    wr_check_ = wscale * radii_.beta_check;
    q_bonus_hat_ = cfg.bonus_scale * radii_.beta_hat;
    q_bonus_check_ = cfg.bonus_scale * radii_.beta_check;

    const double hcap = static_cast<double>(horizon_);
    for (int h = 0; h < horizon_; ++h) {
      regs_.emplace_back(dim_, lambda_, mdp.num_states);
      gram_tilde_.emplace_back(dim_, lambda_);
    }
    sigma_tilde_history_.assign(horizon_, {});
    q_hat_.assign(horizon_, std::vector<std::vector<double>>(
                                mdp.num_states, std::vector<double>(mdp.num_actions, hcap)));
    v_hat_.assign(horizon_ + 1, std::vector<double>(mdp.num_states, hcap));
    v_hat_.back().assign(mdp.num_states, 0.0);
    v_hat_sq_ = v_hat_;
    for (auto& row : v_hat_sq_)
      for (double& x : row) x *= x;
    v_check_.assign(horizon_ + 1, std::vector<double>(mdp.num_states, 0.0));
    w_hat_.assign(horizon_, Vector(dim_, 0.0));
    w_hat_sq_.assign(horizon_, Vector(dim_, 0.0));
    w_check_.assign(horizon_, Vector(dim_, 0.0));
    policy_.assign(horizon_, std::vector<int>(mdp.num_states, 0));
    log_det_at_update_.assign(horizon_, -std::numeric_limits<double>::infinity());
  }

  bool begin_episode() override {
    ++episode_;
    const bool rebuild = det_doubled_since_last_update();
    const double hcap = static_cast<double>(horizon_);
    for (int h = horizon_ - 1; h >= 0; --h) {
      w_hat_[h] = regs_[h].solve_targets(v_hat_[h + 1]);
      w_hat_sq_[h] = regs_[h].solve_targets(v_hat_sq_[h + 1]);
      w_check_[h] = regs_[h].solve_targets(v_check_[h + 1]);
      const GramState& g = regs_[h].gram();
      for (int s = 0; s < mdp_.num_states; ++s) {
        double best_hat = 0.0, best_check = 0.0;
        int best_a = 0;
        bool first = true;
        for (int a = 0; a < mdp_.num_actions; ++a) {
          const Vector& f = mdp_.features(s, a);
          const double pot = g.elliptical_potential(f);
          const double r = mdp_.reward(h, s, a);
          if (rebuild) {
            const double cand = r + dot(w_hat_[h], f) + q_bonus_hat_ * pot;
            q_hat_[h][s][a] =
                std::max(0.0, std::min({cand, q_hat_[h][s][a], hcap}));
          }
          const double qh = q_hat_[h][s][a];
          if (first) {
            best_hat = qh;
            best_a = a;
            first = false;
          } else if (qh > best_hat) {
            best_hat = qh;
            best_a = a;
          }
          const double qc = r + dot(w_check_[h], f) - q_bonus_check_ * pot;
          best_check = (a == 0) ? qc : std::max(best_check, qc);
        }
        v_hat_[h][s] = best_hat;
        v_hat_sq_[h][s] = best_hat * best_hat;
        v_check_[h][s] = std::clamp(best_check, 0.0, hcap);
        policy_[h][s] = best_a;
      }
    }
    if (rebuild) {
      last_update_episode_ = episode_;
      for (int h = 0; h < horizon_; ++h)
        log_det_at_update_[h] = regs_[h].gram().log_det();
      ++update_count_;
    }
    return rebuild;
  }

  int act(int h, int s) override { return policy_[h][s]; }

  void end_episode(const Trajectory& traj) override {
    double sigma_sum = 0.0;
    for (int h = 0; h < horizon_; ++h) {
      const Step& st = traj[h];
      const Vector& f = mdp_.features(st.state, st.action);
      const auto [sigma_tilde, varsigma, sigma_hat] = compute_weights(h, st.state, st.action);
      (void)varsigma;
      gram_tilde_[h].rank1_update(f, 1.0 / (sigma_tilde * sigma_tilde));
      sigma_tilde_history_[h].push_back(sigma_tilde);
      regs_[h].add(f, st.next_state, 1.0 / (sigma_hat * sigma_hat));
      sigma_sum += sigma_hat;
    }
    last_mean_sigma_hat_ = sigma_sum / static_cast<double>(horizon_);
  }

  // clamp(second moment, 0, H^2) - clamp(first moment, 0, H)^2, floored at 0
  double estimate_variance(int h, int s, int a) const {
    const Vector& f = mdp_.features(s, a);
    const double hcap = static_cast<double>(horizon_);
    const double first = std::clamp(dot(w_hat_[h], f), 0.0, hcap);
    const double second = std::clamp(dot(w_hat_sq_[h], f), 0.0, hcap * hcap);
    return std::clamp(second - first * first, 0.0, hcap * hcap);
  }

  // offset guaranteeing the estimated variance tracks the target one:
  // min{ beta_tilde*pot + 4H*(|<w_hat - w_check, phi>| + (beta_bar+beta_check)*pot), 2H^2 }
  double offset_u(int h, int s, int a) const {
    const Vector& f = mdp_.features(s, a);
    const double hcap = static_cast<double>(horizon_);
    const double pot = regs_[h].gram().elliptical_potential(f);
    const double gap = std::fabs(dot(w_hat_[h], f) - dot(w_check_[h], f));
    const double raw = wr_tilde_ * pot + 4.0 * hcap * (gap + wr_bar_ * pot + wr_check_ * pot);
    return std::min(raw, 2.0 * hcap * hcap);
  }

  // optimism-pessimism gap surrogate:
  // min{ H*[<w_hat - w_check, phi> + (beta_bar+beta_check)*pot + H*sqrt(lambda)/K]_+ , H^2 }
  double gap_bound_e(int h, int s, int a) const {
    const Vector& f = mdp_.features(s, a);
    const double hcap = static_cast<double>(horizon_);
    const double pot = regs_[h].gram().elliptical_potential(f);
    const double bracket = dot(w_hat_[h], f) - dot(w_check_[h], f) +
                           (wr_bar_ + wr_check_) * pot +
                           hcap * std::sqrt(lambda_) / static_cast<double>(episodes_);
    return std::min(hcap * std::max(0.0, bracket), hcap * hcap);
  }

  static std::tuple<double, double, double> weights_from_components(
      int horizon, int dim, double variance, double offset_u, double gap_e,
      double tilde_potential_raw) {
    const double h = static_cast<double>(horizon);
    const double d = static_cast<double>(dim);
    const double d3 = d * d * d;
    const double sigma_tilde =
        std::sqrt(std::max({h, h * d3 * gap_e, variance + offset_u}));
    const double gate = tilde_potential_raw / sigma_tilde;
    const double threshold = 1.0 / (h * h * h * d3 * d * d);
    const double varsigma =
        gate <= threshold ? std::sqrt(h) : h * h * std::sqrt(d3 * d * d);
    const double sigma_hat =
        std::sqrt(std::max({varsigma * varsigma, d3 * h * gap_e, variance + offset_u}));
    return {sigma_tilde, varsigma, sigma_hat};
  }

  std::tuple<double, double, double> compute_weights(int h, int s, int a) const {
    const Vector& f = mdp_.features(s, a);
    return weights_from_components(horizon_, dim_, estimate_variance(h, s, a),
                                   offset_u(h, s, a), gap_bound_e(h, s, a),
                                   gram_tilde_[h].elliptical_potential(f));
  }

  std::vector<std::vector<int>> greedy_policy() const override { return policy_; }
  double mean_sigma_hat() const override { return last_mean_sigma_hat_; }

  json metadata() const override {
    return {{"name", "lsvi_ucb_plus"},
            {"bonus_scale", cfg_.bonus_scale},
            {"delta", cfg_.delta},
            {"lambda", lambda_},
            {"scale_weight_radii", cfg_.scale_weight_radii},
            {"radii",
             {{"beta_hat1", radii_.beta_hat1},
              {"beta_hat2", radii_.beta_hat2},
              {"beta_hat", radii_.beta_hat},
              {"beta_bar", radii_.beta_bar},
              {"beta_tilde", radii_.beta_tilde},
              {"beta_check", radii_.beta_check},
              {"b_hat", radii_.b_hat},
              {"b_check", radii_.b_check},
              {"j_cap", radii_.j_cap},
              {"l_cap", radii_.l_cap},
              {"correction_term_dominant", radii_.correction_term_dominant}}}};
  }

  // introspection for tests and telemetry
  const radii::RadiusSet& radius_set() const { return radii_; }
  const WeightedRegressor& regressor(int h) const { return regs_[h]; }
  const GramState& gram_hat(int h) const { return regs_[h].gram(); }
  const GramState& gram_tilde(int h) const { return gram_tilde_[h]; }
  const Vector& weight_vector_optimistic(int h) const { return w_hat_[h]; }
  const Vector& weight_vector_squared(int h) const { return w_hat_sq_[h]; }
  const Vector& weight_vector_pessimistic(int h) const { return w_check_[h]; }
  const std::vector<std::vector<double>>& optimistic_values() const { return v_hat_; }
  const std::vector<std::vector<double>>& pessimistic_values() const { return v_check_; }
  const std::vector<std::vector<std::vector<double>>>& optimistic_q() const { return q_hat_; }
  long long update_count() const { return update_count_; }
  long long last_update_episode() const { return last_update_episode_; }
  double lambda() const { return lambda_; }
  const std::vector<double>& sigma_tilde_history(int h) const {
    return sigma_tilde_history_[h];
  }

 private:
  bool det_doubled_since_last_update() const {
    if (episode_ == 1) return true;
    static const double kLog2 = std::log(2.0);
    for (int h = 0; h < horizon_; ++h)
      if (regs_[h].gram().log_det() >= kLog2 + log_det_at_update_[h]) return true;
    return false;
  }

  const LinearMdp& mdp_;
  int horizon_, dim_;
  double lambda_;
  PlusConfig cfg_;
  radii::RadiusSet radii_;
  long long episodes_ = 1;
  double wr_bar_ = 0.0, wr_tilde_ = 0.0, wr_check_ = 0.0;
  double q_bonus_hat_ = 0.0, q_bonus_check_ = 0.0;

  std::vector<WeightedRegressor> regs_;
  std::vector<GramState> gram_tilde_;
  std::vector<std::vector<double>> sigma_tilde_history_;
  std::vector<std::vector<std::vector<double>>> q_hat_;
  std::vector<std::vector<double>> v_hat_, v_hat_sq_, v_check_;
  std::vector<Vector> w_hat_, w_hat_sq_, w_check_;
  std::vector<std::vector<int>> policy_;
  std::vector<double> log_det_at_update_;
  long long episode_ = 0;
  long long last_update_episode_ = 0;
  long long update_count_ = 0;
  double last_mean_sigma_hat_ = 0.0;
};

}  // namespace linucblab::agents
