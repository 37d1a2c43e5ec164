#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "linucblab/linalg.hpp"
#include "linucblab/rng.hpp"

namespace linucblab::linmdp {

using linucblab::linalg::Vector;
using linucblab::linalg::dot;
using nlohmann::json;

struct ModelInvalidError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class InitialStateRule { Fixed, Uniform };

// Finite episodic linear MDP: transitions <phi(s,a), mu_h(.)> and rewards
// <phi(s,a), theta_h>, with the usual norm caps on phi, mu and theta.
struct LinearMdp {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  int dim = 0;
  std::vector<Vector> phi;                  // (s*A + a) -> d-vector
  std::vector<std::vector<double>> mu;      // per h: d x S row-major
  std::vector<Vector> theta;                // per h: d-vector
  double w_bound = 1.0;
  InitialStateRule initial_rule = InitialStateRule::Fixed;
  int initial_state = 0;

  const Vector& features(int s, int a) const {
    return phi[static_cast<std::size_t>(s) * num_actions + a];
  }
  double mu_entry(int h, int j, int s_next) const {
    return mu[h][static_cast<std::size_t>(j) * num_states + s_next];
  }
  double reward(int h, int s, int a) const { return dot(features(s, a), theta[h]); }

  void check_indices(int h, int s, int a) const {
    if (h < 0 || h >= horizon || s < 0 || s >= num_states || a < 0 || a >= num_actions)
      throw std::invalid_argument("LinearMdp: index out of range");
  }
};

struct ValidationIssue {
  std::string assumption;  // "(i) feature norm", ...
  double magnitude = 0.0;  // worst violation
};
using ValidationReport = std::vector<ValidationIssue>;

namespace detail {

constexpr double kProbSlack = 1e-12;
constexpr double kSumSlack = 1e-9;
constexpr double kNormSlack = 1e-9;

inline Vector mu_times(const LinearMdp& m, int h, const Vector& v) {
  Vector out(m.dim, 0.0);
  for (int j = 0; j < m.dim; ++j) {
    double s = 0.0;
    const double* row = m.mu[h].data() + static_cast<std::size_t>(j) * m.num_states;
    for (int sp = 0; sp < m.num_states; ++sp) s += row[sp] * v[sp];
    out[j] = s;
  }
  return out;
}

inline double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

// max over sign vectors of ||mu v||_2; exact when S <= 16, otherwise random
// probing plus the columnwise-L1 certificate (a sufficient upper bound).
inline double mu_operator_norm_violation(const LinearMdp& m, int h, double cap) {
  const int S = m.num_states;
  double worst = 0.0;
  if (S <= 16) {
    Vector v(S);
    for (std::uint64_t mask = 0; mask < (1ULL << S); ++mask) {
      for (int s = 0; s < S; ++s) v[s] = (mask >> s) & 1ULL ? 1.0 : -1.0;
      worst = std::max(worst, norm2(mu_times(m, h, v)));
    }
    return worst > cap ? worst - cap : 0.0;
  }
  Vector l1(m.dim, 0.0);
  for (int j = 0; j < m.dim; ++j) {
    double s = 0.0;
    for (int sp = 0; sp < S; ++sp) s += std::fabs(m.mu_entry(h, j, sp));
    l1[j] = s;
  }
  if (norm2(l1) <= cap) return 0.0;  // certified
  Rng rng(0x51ca7e5ULL, static_cast<std::uint64_t>(h));
  Vector v(S);
  for (int probe = 0; probe < 1000; ++probe) {
    for (int s = 0; s < S; ++s) v[s] = rng.sign();
    worst = std::max(worst, norm2(mu_times(m, h, v)));
  }
  return worst > cap ? worst - cap : 0.0;
}

}  // namespace detail

// Probability row <phi(s,a), mu_h(.)>: tiny negatives clamped, the row
// renormalized when its sum is within 1e-9 of one, otherwise model-invalid.
inline Vector transition_probs(const LinearMdp& m, int h, int s, int a) {
  m.check_indices(h, s, a);
  const Vector& f = m.features(s, a);
  Vector p(m.num_states, 0.0);
  double sum = 0.0;
  for (int sp = 0; sp < m.num_states; ++sp) {
    double v = 0.0;
    for (int j = 0; j < m.dim; ++j) v += f[j] * m.mu_entry(h, j, sp);
    if (v < -detail::kProbSlack)
      throw ModelInvalidError("transition_probs: negative probability entry");
    v = std::clamp(v, 0.0, 1.0);
    p[sp] = v;
    sum += v;
  }
  if (std::fabs(sum - 1.0) > detail::kSumSlack)
    throw ModelInvalidError("transition_probs: row does not sum to one");
  for (double& v : p) v /= sum;
  return p;
}

inline ValidationReport validate(const LinearMdp& m) {
  ValidationReport report;
  const double cap_norm = 1.0 + detail::kNormSlack;
  double worst = 0.0;
  for (const auto& f : m.phi) worst = std::max(worst, detail::norm2(f));
  if (worst > cap_norm)
    report.push_back({"(i) feature norm <= 1", worst - 1.0});

  const double mu_cap = std::sqrt(static_cast<double>(m.dim)) + detail::kNormSlack;
  worst = 0.0;
  for (int h = 0; h < m.horizon; ++h)
    worst = std::max(worst, detail::mu_operator_norm_violation(m, h, mu_cap));
  if (worst > 0.0)
    report.push_back({"(ii) measure norm <= sqrt(d)", worst});

  worst = 0.0;
  for (int h = 0; h < m.horizon; ++h)
    worst = std::max(worst, detail::norm2(m.theta[h]) - m.w_bound);
  if (worst > detail::kNormSlack)
    report.push_back({"(iii) reward parameter norm <= W", worst});

  worst = 0.0;
  for (int h = 0; h < m.horizon; ++h)
    for (int s = 0; s < m.num_states; ++s)
      for (int a = 0; a < m.num_actions; ++a) {
        const double r = m.reward(h, s, a);
        worst = std::max({worst, -r, r - 1.0});
      }
  if (worst > detail::kNormSlack)
    report.push_back({"(iv) rewards in [0,1]", worst});

  worst = 0.0;
  for (int h = 0; h < m.horizon; ++h)
    for (int s = 0; s < m.num_states; ++s)
      for (int a = 0; a < m.num_actions; ++a) {
        const Vector& f = m.features(s, a);
        double sum = 0.0, neg = 0.0;
        for (int sp = 0; sp < m.num_states; ++sp) {
          double v = 0.0;
          for (int j = 0; j < m.dim; ++j) v += f[j] * m.mu_entry(h, j, sp);
          if (v < 0.0) neg = std::max(neg, -v);
          sum += std::clamp(v, 0.0, 1.0);
        }
        double bad = 0.0;
        if (neg > detail::kProbSlack) bad = neg;
        const double drift = std::fabs(sum - 1.0);
        if (drift > detail::kSumSlack) bad = std::max(bad, drift);
        worst = std::max(worst, bad);
      }
  if (worst > 0.0)
    report.push_back({"(v) transition rows are distributions", worst});
  return report;
}

inline int draw_initial_state(const LinearMdp& m, Rng& rng) {
  if (m.initial_rule == InitialStateRule::Fixed) return m.initial_state;
  return rng.uniform_int(m.num_states);
}

// reward = <phi,theta>, next state by inverse CDF over the transition row.
inline std::pair<double, int> sample_step(const LinearMdp& m, int h, int s, int a, Rng& rng) {
  const Vector p = transition_probs(m, h, s, a);
  const double r = m.reward(h, s, a);
  const double u = rng.next_double();
  double acc = 0.0;
  for (int sp = 0; sp < m.num_states; ++sp) {
    acc += p[sp];
    if (u < acc) return {r, sp};
  }
  return {r, m.num_states - 1};
}

struct ValueTables {
  // v[h][s] for h in 0..H (v[H] terminal zeros), q[h][s][a] for h in 0..H-1
  std::vector<std::vector<double>> v;
  std::vector<std::vector<std::vector<double>>> q;
};

namespace detail {

template <typename PickValue>
inline ValueTables dp_backward(const LinearMdp& m, PickValue pick) {
  ValueTables t;
  t.v.assign(m.horizon + 1, std::vector<double>(m.num_states, 0.0));
  t.q.assign(m.horizon, std::vector<std::vector<double>>(
                            m.num_states, std::vector<double>(m.num_actions, 0.0)));
  for (int h = m.horizon - 1; h >= 0; --h) {
    for (int s = 0; s < m.num_states; ++s) {
      for (int a = 0; a < m.num_actions; ++a) {
        const Vector p = transition_probs(m, h, s, a);
        double ev = 0.0;
        for (int sp = 0; sp < m.num_states; ++sp) ev += p[sp] * t.v[h + 1][sp];
        t.q[h][s][a] = m.reward(h, s, a) + ev;
      }
      t.v[h][s] = pick(t.q[h][s], h, s);
    }
  }
  return t;
}

}  // namespace detail

inline ValueTables optimal_values(const LinearMdp& m) {
  return detail::dp_backward(m, [](const std::vector<double>& q, int, int) {
    return *std::max_element(q.begin(), q.end());
  });
}

inline ValueTables evaluate_policy(const LinearMdp& m,
                                   const std::vector<std::vector<int>>& policy) {
  if (static_cast<int>(policy.size()) != m.horizon)
    throw std::invalid_argument("evaluate_policy: policy must cover every stage");
  return detail::dp_backward(
      m, [&](const std::vector<double>& q, int h, int s) { return q[policy[h][s]]; });
}

// action-averaged DP for the uniform stochastic policy
inline ValueTables evaluate_uniform_policy(const LinearMdp& m) {
  return detail::dp_backward(m, [&](const std::vector<double>& q, int, int) {
    double s = 0.0;
    for (double x : q) s += x;
    return s / static_cast<double>(m.num_actions);
  });
}

inline std::vector<std::vector<int>> greedy_policy_from(const ValueTables& t) {
  std::vector<std::vector<int>> policy(t.q.size());
  for (std::size_t h = 0; h < t.q.size(); ++h) {
    policy[h].resize(t.q[h].size());
    for (std::size_t s = 0; s < t.q[h].size(); ++s) {
      int best = 0;
      for (std::size_t a = 1; a < t.q[h][s].size(); ++a)
        if (t.q[h][s][a] > t.q[h][s][best]) best = static_cast<int>(a);
      policy[h][s] = best;
    }
  }
  return policy;
}

// ---------------------------------------------------------------------------
// Generators

// Needle-in-a-haystack chain: states s_1..s_{H+2}; every non-terminal state
// shares the feature (alpha, beta*a, 0) over sign-vector actions, terminal
// reward state s_{H+2} has feature (0,..,0,1) and absorbs. Per stage the jump
// probability into the reward state is iota + <mu_bar_h, a> with
// mu_bar_h in {-Delta,+Delta}^sign_dims.
inline LinearMdp make_hard_instance(int sign_dims, int horizon, long long episodes,
                                    Rng& rng, bool all_plus = false) {
  if (sign_dims < 1 || horizon < 1 || episodes < 1)
    throw std::invalid_argument("make_hard_instance: sign_dims, horizon, episodes must be >= 1");
  const int dfeat = sign_dims + 2;
  const double dd = static_cast<double>(dfeat);
  const double hh = static_cast<double>(horizon);
  const double k_min = std::max((dd - 1.0) * (dd - 1.0) * hh / 2.0,
                                (dd - 1.0) / (32.0 * hh * (std::sqrt(dd) - 1.0)));
  if (static_cast<double>(episodes) < k_min) {
    std::ostringstream msg;
    msg << "make_hard_instance: episodes=" << episodes
        << " below required minimum K >= " << std::ceil(k_min);
    throw std::invalid_argument(msg.str());
  }
  const double iota = 1.0 / hh;
  const double delta_gap = std::sqrt(iota / static_cast<double>(episodes)) / (4.0 * std::sqrt(2.0));
  const double alpha = std::sqrt(1.0 / (1.0 + delta_gap * sign_dims));
  const double beta = std::sqrt(delta_gap / (1.0 + delta_gap * sign_dims));

  LinearMdp m;
  m.horizon = horizon;
  m.num_states = horizon + 2;
  m.num_actions = 1 << sign_dims;
  m.dim = dfeat;
  m.w_bound = 1.0;
  m.initial_rule = InitialStateRule::Fixed;
  m.initial_state = 0;

  const int dead = horizon;         // index of s_{H+1}
  const int goal = horizon + 1;     // index of s_{H+2}
  m.phi.assign(static_cast<std::size_t>(m.num_states) * m.num_actions, Vector(dfeat, 0.0));
  for (int s = 0; s < m.num_states; ++s) {
    for (int a = 0; a < m.num_actions; ++a) {
      Vector& f = m.phi[static_cast<std::size_t>(s) * m.num_actions + a];
      if (s == goal) {
        f[dfeat - 1] = 1.0;
      } else {
        f[0] = alpha;
        // bit j of the action index set -> +1 in sign coordinate j
        for (int j = 0; j < sign_dims; ++j)
          f[1 + j] = ((a >> j) & 1) ? beta : -beta;
      }
    }
  }

  m.mu.assign(horizon, std::vector<double>(static_cast<std::size_t>(dfeat) * m.num_states, 0.0));
  m.theta.assign(horizon, Vector(dfeat, 0.0));
  for (int h = 0; h < horizon; ++h) {
    m.theta[h][dfeat - 1] = 1.0;
    auto& muh = m.mu[h];
    auto at = [&](int j, int sp) -> double& {
      return muh[static_cast<std::size_t>(j) * m.num_states + sp];
    };
    at(0, dead) = (1.0 - iota) / alpha;
    at(0, goal) = iota / alpha;
    at(dfeat - 1, goal) = 1.0;
    for (int j = 0; j < sign_dims; ++j) {
      const double mj = all_plus ? delta_gap : (rng.sign() > 0 ? delta_gap : -delta_gap);
      at(1 + j, dead) = -mj / beta;
      at(1 + j, goal) = mj / beta;
    }
  }
  return m;
}

// Anchor construction: d anchor distributions per stage; each (s,a) feature is
// a point on the probability simplex, so every transition row is a convex
// mixture of the anchors.
inline LinearMdp make_random_linear_mdp(int dim, int horizon, int num_states,
                                        int num_actions, Rng& rng) {
  if (dim < 1 || horizon < 1 || num_states < 1 || num_actions < 1)
    throw std::invalid_argument("make_random_linear_mdp: sizes must be >= 1");
  if (dim > num_states * num_actions)
    throw std::invalid_argument("make_random_linear_mdp: need dim <= |S|*|A|");
  LinearMdp m;
  m.horizon = horizon;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.dim = dim;
  m.w_bound = std::sqrt(static_cast<double>(dim));
  m.initial_rule = InitialStateRule::Fixed;
  m.initial_state = 0;

  auto simplex_point = [&](int n) {
    Vector v(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      double u = rng.next_double();
      while (u <= 0.0) u = rng.next_double();
      v[i] = -std::log(u);
      sum += v[i];
    }
    for (double& x : v) x /= sum;
    return v;
  };

  m.phi.reserve(static_cast<std::size_t>(num_states) * num_actions);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) m.phi.push_back(simplex_point(dim));

  m.mu.assign(horizon, std::vector<double>(static_cast<std::size_t>(dim) * num_states, 0.0));
  m.theta.assign(horizon, Vector(dim, 0.0));
  for (int h = 0; h < horizon; ++h) {
    for (int j = 0; j < dim; ++j) {
      const Vector anchor = simplex_point(num_states);
      for (int sp = 0; sp < num_states; ++sp)
        m.mu[h][static_cast<std::size_t>(j) * num_states + sp] = anchor[sp];
    }
    for (int j = 0; j < dim; ++j) m.theta[h][j] = rng.next_double();
  }
  return m;
}

// Every tabular MDP embeds with one-hot features over (s,a).
inline LinearMdp make_tabular_embedding(
    const std::vector<std::vector<std::vector<std::vector<double>>>>& p,
    const std::vector<std::vector<std::vector<double>>>& r) {
  const int horizon = static_cast<int>(p.size());
  if (horizon < 1 || r.size() != p.size())
    throw std::invalid_argument("make_tabular_embedding: empty or mismatched tables");
  const int S = static_cast<int>(p[0].size());
  const int A = static_cast<int>(p[0][0].size());
  LinearMdp m;
  m.horizon = horizon;
  m.num_states = S;
  m.num_actions = A;
  m.dim = S * A;
  m.w_bound = std::sqrt(static_cast<double>(S * A));
  m.initial_rule = InitialStateRule::Fixed;
  m.initial_state = 0;
  m.phi.assign(static_cast<std::size_t>(S) * A, Vector(m.dim, 0.0));
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      m.phi[static_cast<std::size_t>(s) * A + a][static_cast<std::size_t>(s) * A + a] = 1.0;
  m.mu.assign(horizon, std::vector<double>(static_cast<std::size_t>(m.dim) * S, 0.0));
  m.theta.assign(horizon, Vector(m.dim, 0.0));
  for (int h = 0; h < horizon; ++h) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const auto& row = p[h][s][a];
        double sum = 0.0;
        for (double v : row) {
          if (v < 0.0) throw std::invalid_argument("make_tabular_embedding: negative probability");
          sum += v;
        }
        if (std::fabs(sum - 1.0) > detail::kSumSlack)
          throw std::invalid_argument("make_tabular_embedding: row does not sum to one");
        const double rv = r[h][s][a];
        if (rv < 0.0 || rv > 1.0)
          throw std::invalid_argument("make_tabular_embedding: reward outside [0,1]");
        const int j = s * A + a;
        for (int sp = 0; sp < S; ++sp)
          m.mu[h][static_cast<std::size_t>(j) * S + sp] = row[sp];
        m.theta[h][j] = rv;
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Serialization (versioned JSON; doubles round-trip exactly)

inline json to_json(const LinearMdp& m) {
  json j;
  j["version"] = 1;
  j["H"] = m.horizon;
  j["S"] = m.num_states;
  j["A"] = m.num_actions;
  j["d"] = m.dim;
  j["phi"] = m.phi;
  j["mu"] = m.mu;
  j["theta"] = m.theta;
  j["W"] = m.w_bound;
  j["initial_state_rule"] =
      m.initial_rule == InitialStateRule::Fixed
          ? json{{"rule", "fixed"}, {"state", m.initial_state}}
          : json{{"rule", "uniform"}};
  return j;
}

inline LinearMdp from_json(const json& j) {
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw std::invalid_argument("model json: unsupported or missing version");
  for (const char* key : {"H", "S", "A", "d", "phi", "mu", "theta", "W", "initial_state_rule"})
    if (!j.contains(key))
      throw std::invalid_argument(std::string("model json: missing field ") + key);
  LinearMdp m;
  m.horizon = j["H"].get<int>();
  m.num_states = j["S"].get<int>();
  m.num_actions = j["A"].get<int>();
  m.dim = j["d"].get<int>();
  m.phi = j["phi"].get<std::vector<Vector>>();
  m.mu = j["mu"].get<std::vector<std::vector<double>>>();
  m.theta = j["theta"].get<std::vector<Vector>>();
  m.w_bound = j["W"].get<double>();
  const auto& rule = j["initial_state_rule"];
  if (rule["rule"] == "fixed") {
    m.initial_rule = InitialStateRule::Fixed;
    m.initial_state = rule["state"].get<int>();
  } else {
    m.initial_rule = InitialStateRule::Uniform;
  }
  if (static_cast<int>(m.phi.size()) != m.num_states * m.num_actions ||
      static_cast<int>(m.mu.size()) != m.horizon ||
      static_cast<int>(m.theta.size()) != m.horizon)
    throw std::invalid_argument("model json: table sizes do not match header");
  for (const auto& f : m.phi)
    if (static_cast<int>(f.size()) != m.dim)
      throw std::invalid_argument("model json: feature row length does not match d");
  for (const auto& muh : m.mu)
    if (muh.size() != static_cast<std::size_t>(m.dim) * m.num_states)
      throw std::invalid_argument("model json: measure table size does not match d*S");
  for (const auto& th : m.theta)
    if (static_cast<int>(th.size()) != m.dim)
      throw std::invalid_argument("model json: reward parameter length does not match d");
  return m;
}

inline void save_model(const LinearMdp& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << to_json(m).dump(2) << "\n";
}

inline LinearMdp load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  json j;
  in >> j;
  return from_json(j);
}

}  // namespace linucblab::linmdp
