#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "linucblab/linmdp.hpp"
#include "oracles.hpp"

using namespace linucblab;
using linmdp::LinearMdp;
using linalg::Vector;

namespace {

using Probs = std::vector<std::vector<std::vector<std::vector<double>>>>;
using Rewards = std::vector<std::vector<std::vector<double>>>;

// two-state two-action chain: action 0 stays, action 1 flips; flipping pays
std::pair<Probs, Rewards> chain_tables(int horizon) {
  Probs p(horizon, std::vector<std::vector<std::vector<double>>>(
                       2, std::vector<std::vector<double>>(2, std::vector<double>(2, 0.0))));
  Rewards r(horizon,
            std::vector<std::vector<double>>(2, std::vector<double>(2, 0.0)));
  for (int h = 0; h < horizon; ++h)
    for (int s = 0; s < 2; ++s) {
      p[h][s][0][s] = 1.0;
      p[h][s][1][1 - s] = 1.0;
      r[h][s][0] = 0.1;
      r[h][s][1] = s == 0 ? 0.9 : 0.2;
    }
  return {p, r};
}

std::pair<Probs, Rewards> stochastic_tables(int horizon, int num_states, int num_actions,
                                            Rng& rng) {
  Probs p(horizon,
          std::vector<std::vector<std::vector<double>>>(
              num_states, std::vector<std::vector<double>>(
                              num_actions, std::vector<double>(num_states, 0.0))));
  Rewards r(horizon, std::vector<std::vector<double>>(
                         num_states, std::vector<double>(num_actions, 0.0)));
  for (int h = 0; h < horizon; ++h)
    for (int s = 0; s < num_states; ++s)
      for (int a = 0; a < num_actions; ++a) {
        double sum = 0.0;
        for (int sp = 0; sp < num_states; ++sp) {
          p[h][s][a][sp] = -std::log(std::max(1e-12, rng.next_double()));
          sum += p[h][s][a][sp];
        }
        for (int sp = 0; sp < num_states; ++sp) p[h][s][a][sp] /= sum;
        r[h][s][a] = rng.next_double();
      }
  return {p, r};
}

}  // namespace

TEST_CASE("tabular embedding reproduces its tables") {
  const auto [p, r] = chain_tables(3);
  const LinearMdp m = linmdp::make_tabular_embedding(p, r);
  CHECK(m.dim == 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(m.phi[i][j] == (i == j ? 1.0 : 0.0));
  CHECK(linmdp::validate(m).empty());
  for (int h = 0; h < 3; ++h)
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a) {
        const Vector probs = linmdp::transition_probs(m, h, s, a);
        for (int sp = 0; sp < 2; ++sp) CHECK(probs[sp] == doctest::Approx(p[h][s][a][sp]));
        CHECK(m.reward(h, s, a) == doctest::Approx(r[h][s][a]));
      }
}

TEST_CASE("tabular embedding rejects bad tables") {
  auto [p, r] = chain_tables(2);
  p[0][0][0][0] = 0.5;  // row no longer sums to one
  CHECK_THROWS_AS(linmdp::make_tabular_embedding(p, r), std::invalid_argument);
  auto [p2, r2] = chain_tables(2);
  r2[1][1][1] = 1.5;
  CHECK_THROWS_AS(linmdp::make_tabular_embedding(p2, r2), std::invalid_argument);
}

TEST_CASE("optimal values match independent tabular value iteration") {
  Rng rng(123);
  const auto [p, r] = stochastic_tables(4, 5, 3, rng);
  const LinearMdp m = linmdp::make_tabular_embedding(p, r);
  const auto vt = linmdp::optimal_values(m);
  const auto ref = oracles::tabular_vi(p, r);
  for (int h = 0; h <= 4; ++h)
    for (int s = 0; s < 5; ++s) CHECK(vt.v[h][s] == doctest::Approx(ref[h][s]).epsilon(1e-10));
}

TEST_CASE("optimal values trivial cases") {
  auto [p, r] = chain_tables(3);
  for (auto& hs : r)
    for (auto& sa : hs)
      for (double& x : sa) x = 0.0;
  const LinearMdp zero = linmdp::make_tabular_embedding(p, r);
  const auto vt = linmdp::optimal_values(zero);
  for (const auto& row : vt.v)
    for (double v : row) CHECK(v == doctest::Approx(0.0));

  const auto [p1, r1] = chain_tables(1);
  const LinearMdp one = linmdp::make_tabular_embedding(p1, r1);
  const auto v1 = linmdp::optimal_values(one);
  CHECK(v1.v[0][0] == doctest::Approx(0.9));
  CHECK(v1.v[0][1] == doctest::Approx(0.2));
}

TEST_CASE("policy evaluation: greedy matches optimal, others never beat it") {
  Rng rng(55);
  const auto [p, r] = stochastic_tables(4, 4, 3, rng);
  const LinearMdp m = linmdp::make_tabular_embedding(p, r);
  const auto opt = linmdp::optimal_values(m);
  const auto greedy = linmdp::greedy_policy_from(opt);
  const auto eval = linmdp::evaluate_policy(m, greedy);
  for (int h = 0; h <= 4; ++h)
    for (int s = 0; s < 4; ++s) CHECK(std::fabs(eval.v[h][s] - opt.v[h][s]) <= 1e-10);

  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<int>> pol(4, std::vector<int>(4));
    for (auto& row : pol)
      for (int& a : row) a = rng.uniform_int(3);
    const auto ev = linmdp::evaluate_policy(m, pol);
    for (int h = 0; h <= 4; ++h)
      for (int s = 0; s < 4; ++s) CHECK(ev.v[h][s] <= opt.v[h][s] + 1e-10);
  }
}

TEST_CASE("value tables stay inside the horizon envelope") {
  Rng rng(77);
  const LinearMdp m = linmdp::make_random_linear_mdp(3, 5, 6, 4, rng);
  const auto opt = linmdp::optimal_values(m);
  const auto uni = linmdp::evaluate_uniform_policy(m);
  for (int h = 0; h <= 5; ++h)
    for (int s = 0; s < 6; ++s) {
      CHECK(opt.v[h][s] >= -1e-9);
      CHECK(opt.v[h][s] <= 5.0 - h + 1e-9);
      CHECK(uni.v[h][s] >= -1e-9);
      CHECK(uni.v[h][s] <= opt.v[h][s] + 1e-10);
    }
}

TEST_CASE("hard instance construction") {
  Rng rng(9);
  const LinearMdp m = linmdp::make_hard_instance(4, 6, 1000, rng);
  CHECK(m.num_states == 8);
  CHECK(m.num_actions == 16);
  CHECK(m.dim == 6);
  CHECK(linmdp::validate(m).empty());

  // iota and Delta against independent arithmetic
  const double iota = 1.0 / 6.0;
  const double delta_gap = std::sqrt(1.0 / (32.0 * 6.0 * 1000.0));
  // feature norms are exactly one on chain states
  for (int s = 0; s < m.num_states - 1; ++s)
    for (int a = 0; a < m.num_actions; ++a) {
      const Vector& f = m.features(s, a);
      CHECK(std::fabs(linalg::dot(f, f) - 1.0) <= 1e-12);
    }
  // transitions from a chain state: jump mass iota + <mu_bar, sign(a)>
  const int goal = m.num_states - 1;
  const double beta = std::sqrt(delta_gap / (1.0 + delta_gap * 4.0));
  for (int a : {0, 5, 15}) {
    const Vector probs = linmdp::transition_probs(m, 2, 1, a);
    double bias = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double sign = ((a >> j) & 1) ? 1.0 : -1.0;
      const double mu_bar_j = m.mu_entry(2, 1 + j, goal) * beta;
      bias += sign * mu_bar_j;
    }
    CHECK(probs[goal] == doctest::Approx(iota + bias).epsilon(1e-9));
    CHECK(probs[goal] + probs[m.num_states - 2] == doctest::Approx(1.0));
  }
  // goal state absorbs exactly
  const Vector absorb = linmdp::transition_probs(m, 3, goal, 7);
  CHECK(absorb[goal] == doctest::Approx(1.0));
  for (int sp = 0; sp < goal; ++sp) CHECK(absorb[sp] == doctest::Approx(0.0));
  // reward only at the goal state
  for (int h = 0; h < 6; ++h) {
    CHECK(m.reward(h, goal, 3) == doctest::Approx(1.0));
    CHECK(m.reward(h, 0, 3) == doctest::Approx(0.0));
  }
  // sitting at the goal from the start is worth the whole horizon
  const auto opt = linmdp::optimal_values(m);
  CHECK(opt.v[0][goal] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("hard instance parameters, preconditions, probes") {
  Rng rng(2);
  const LinearMdp m = linmdp::make_hard_instance(3, 10, 1000, rng, /*all_plus=*/true);
  // Delta for H=10, K=1000 via a separate algebraic route
  const double delta_gap = std::sqrt(1.0 / (32.0 * 10.0 * 1000.0));
  CHECK(std::fabs(delta_gap - 0.01 / (4.0 * std::sqrt(2.0))) <= 1e-12);
  const int goal = m.num_states - 1;
  // all-plus mode: mu_bar entries are +Delta, recoverable from mu / beta
  const double beta = std::sqrt(delta_gap / (1.0 + delta_gap * 3.0));
  for (int j = 0; j < 3; ++j)
    CHECK(m.mu_entry(0, 1 + j, goal) * beta == doctest::Approx(delta_gap).epsilon(1e-12));

  // norm probes: ||mu v||_2 <= sqrt(d+1) with d the sign dimension plus one
  Rng probe_rng(31);
  const double cap = std::sqrt(5.0);
  for (int probe = 0; probe < 1000; ++probe) {
    Vector v(m.num_states);
    for (double& x : v) x = probe_rng.uniform(-1.0, 1.0);
    for (int h = 0; h < m.horizon; ++h) {
      double norm_sq = 0.0;
      for (int j = 0; j < m.dim; ++j) {
        double s = 0.0;
        for (int sp = 0; sp < m.num_states; ++sp) s += m.mu_entry(h, j, sp) * v[sp];
        norm_sq += s * s;
      }
      CHECK(std::sqrt(norm_sq) <= cap);
    }
  }

  CHECK_THROWS_WITH_AS(linmdp::make_hard_instance(4, 6, 10, rng),
                       doctest::Contains("minimum K"), std::invalid_argument);
}

TEST_CASE("validation flags a scaled reward parameter") {
  Rng rng(9);
  LinearMdp m = linmdp::make_hard_instance(4, 6, 1000, rng);
  for (auto& th : m.theta)
    for (double& x : th) x *= 10.0;
  const auto report = linmdp::validate(m);
  bool saw_theta = false, saw_reward = false;
  for (const auto& issue : report) {
    if (issue.assumption.find("(iii)") != std::string::npos) saw_theta = true;
    if (issue.assumption.find("(iv)") != std::string::npos) saw_reward = true;
  }
  CHECK(saw_theta);
  CHECK(saw_reward);
}

TEST_CASE("random linear mdp generator") {
  Rng rng(404);
  const LinearMdp m = linmdp::make_random_linear_mdp(4, 5, 7, 3, rng);
  CHECK(linmdp::validate(m).empty());

  Rng r1(11), r2(11);
  const LinearMdp a = linmdp::make_random_linear_mdp(3, 4, 5, 2, r1);
  const LinearMdp b = linmdp::make_random_linear_mdp(3, 4, 5, 2, r2);
  CHECK(linmdp::to_json(a).dump() == linmdp::to_json(b).dump());

  Rng r3(8);
  const LinearMdp single = linmdp::make_random_linear_mdp(1, 2, 4, 2, r3);
  const Vector row0 = linmdp::transition_probs(single, 0, 0, 0);
  for (int s = 0; s < 4; ++s)
    for (int a2 = 0; a2 < 2; ++a2) {
      const Vector row = linmdp::transition_probs(single, 0, s, a2);
      for (int sp = 0; sp < 4; ++sp) CHECK(row[sp] == doctest::Approx(row0[sp]));
    }

  CHECK_THROWS_AS(linmdp::make_random_linear_mdp(9, 2, 2, 2, r3), std::invalid_argument);
}

TEST_CASE("sampling is deterministic and matches the row distribution") {
  const auto [p, r] = chain_tables(3);
  const LinearMdp chain = linmdp::make_tabular_embedding(p, r);
  Rng ra(5), rb(5);
  for (int i = 0; i < 50; ++i) {
    const auto [rr1, s1] = linmdp::sample_step(chain, 1, 0, 1, ra);
    const auto [rr2, s2] = linmdp::sample_step(chain, 1, 0, 1, rb);
    CHECK(s1 == s2);
    CHECK(s1 == 1);  // flip action is deterministic
    CHECK(rr1 == rr2);
  }

  Probs p3(1, std::vector<std::vector<std::vector<double>>>(
                  3, std::vector<std::vector<double>>(1, std::vector<double>(3, 0.0))));
  p3[0][0][0] = {0.2, 0.5, 0.3};
  p3[0][1][0] = {0.0, 1.0, 0.0};
  p3[0][2][0] = {0.0, 0.0, 1.0};
  Rewards r3(1, std::vector<std::vector<double>>(3, std::vector<double>(1, 0.0)));
  const LinearMdp m3 = linmdp::make_tabular_embedding(p3, r3);
  Rng rng(1234);
  const int n = 100000;
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) counts[linmdp::sample_step(m3, 0, 0, 0, rng).second]++;
  const double probs[3] = {0.2, 0.5, 0.3};
  for (int sp = 0; sp < 3; ++sp) {
    const double sd = std::sqrt(probs[sp] * (1.0 - probs[sp]) * n);
    CHECK(std::fabs(counts[sp] - probs[sp] * n) <= 3.0 * sd);
  }
}

TEST_CASE("transition_probs rejects invalid indices and broken rows") {
  const auto [p, r] = chain_tables(2);
  LinearMdp m = linmdp::make_tabular_embedding(p, r);
  CHECK_THROWS_AS(linmdp::transition_probs(m, 2, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(linmdp::transition_probs(m, 0, 2, 0), std::invalid_argument);
  m.mu[0][0] = 0.4;  // break the first row's mass
  CHECK_THROWS_AS(linmdp::transition_probs(m, 0, 0, 0), linmdp::ModelInvalidError);
}

TEST_CASE("model json round trip is exact") {
  Rng rng(21);
  const LinearMdp m = linmdp::make_hard_instance(3, 5, 500, rng);
  const auto j = linmdp::to_json(m);
  const LinearMdp back = linmdp::from_json(j);
  CHECK(linmdp::to_json(back).dump() == j.dump());
  CHECK(back.dim == m.dim);
  CHECK(back.w_bound == m.w_bound);

  auto missing = j;
  missing.erase("theta");
  CHECK_THROWS_WITH_AS(linmdp::from_json(missing), doctest::Contains("theta"),
                       std::invalid_argument);

  auto ragged = j;
  ragged["phi"][0].push_back(0.0);
  CHECK_THROWS_AS(linmdp::from_json(ragged), std::invalid_argument);
  auto short_mu = j;
  short_mu["mu"][0].erase(0);
  CHECK_THROWS_AS(linmdp::from_json(short_mu), std::invalid_argument);
}

TEST_CASE("initial state rules") {
  const auto [p, r] = chain_tables(2);
  LinearMdp m = linmdp::make_tabular_embedding(p, r);
  Rng rng(3);
  CHECK(linmdp::draw_initial_state(m, rng) == 0);
  m.initial_rule = linmdp::InitialStateRule::Uniform;
  int seen[2] = {0, 0};
  for (int i = 0; i < 200; ++i) seen[linmdp::draw_initial_state(m, rng)]++;
  CHECK(seen[0] > 0);
  CHECK(seen[1] > 0);
}
