#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "linucblab/radii.hpp"

using namespace linucblab::radii;

TEST_CASE("bernstein radius closed form") {
  // 8*sqrt(log 2 * log 40) + 4*log 40, evaluated independently
  CHECK(bernstein_radius(1.0, 1.0, 1, 1.0, 1.0, 1, 0.1) ==
        doctest::Approx(27.54785650626745).epsilon(1e-12));
  CHECK(bernstein_radius(0.0, 0.0, 3, 1.0, 1.0, 10, 0.1) == 0.0);
  for (long long t : {1LL, 4LL, 32LL, 1000LL})
    CHECK(bernstein_radius(1.0, 1.0, 2, 1.0, 1.0, 2 * t, 0.1) >
          bernstein_radius(1.0, 1.0, 2, 1.0, 1.0, t, 0.1));
  CHECK_THROWS_AS(bernstein_radius(1.0, 1.0, 0, 1.0, 1.0, 1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(bernstein_radius(1.0, 1.0, 1, 1.0, 0.0, 1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(bernstein_radius(1.0, 1.0, 1, 1.0, 1.0, 1, 1.5), std::invalid_argument);
}

TEST_CASE("hoeffding radius closed form") {
  CHECK(hoeffding_radius(1.0, 1, 1.0, 1.0, 1, std::exp(-1.0)) ==
        doctest::Approx(1.3012098910475378).epsilon(1e-12));
  CHECK(hoeffding_radius(0.0, 4, 1.0, 1.0, 100, 0.05) == 0.0);
  CHECK(hoeffding_radius(1.0, 2, 1.0, 1.0, 10, 0.01) >
        hoeffding_radius(1.0, 2, 1.0, 1.0, 10, 0.1));
}

TEST_CASE("elliptical count bound closed form") {
  CHECK(elliptical_count_bound(1, 1.0, 1.0, 1.0) ==
        doctest::Approx(3.8654212832514183).epsilon(1e-12));
  CHECK(elliptical_count_bound(1, 1.0, 1.0, 10.0) ==
        doctest::Approx(0.12748859028409854).epsilon(1e-12));
  CHECK(elliptical_count_bound(1, 1.0, 1.0, 10.0) < 1.0);
  CHECK(elliptical_count_bound(6, 1.0, 0.5, 1.0) ==
        doctest::Approx(2.0 * elliptical_count_bound(3, 1.0, 0.5, 1.0)));
  CHECK_THROWS_AS(elliptical_count_bound(1, 1.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("switch count bound closed form") {
  CHECK(switch_count_bound(4, 5, 100) == doctest::Approx(92.30241033682519).epsilon(1e-12));
  CHECK(switch_count_bound(3, 7, 0) == 0.0);
  CHECK(switch_count_bound(8, 5, 100) == doctest::Approx(2.0 * switch_count_bound(4, 5, 100)));
}

namespace {

RadiusConfig desk_config() {
  RadiusConfig cfg;
  cfg.dim = 4;
  cfg.horizon = 5;
  cfg.episodes = 200;
  cfg.w_bound = 2.0;
  cfg.delta = 0.01;
  cfg.lambda = default_lambda(cfg.horizon, cfg.dim);
  return cfg;
}

}  // namespace

TEST_CASE("radius set basic structure") {
  const auto rs = compute_radius_set(desk_config());
  CHECK(rs.beta_hat == rs.beta_hat1 + rs.beta_hat2);
  for (double v : {rs.beta_hat1, rs.beta_hat2, rs.beta_hat, rs.beta_bar, rs.beta_tilde,
                   rs.beta_check, rs.b_hat, rs.b_check, rs.j_cap, rs.l_cap}) {
    CHECK(v > 0.0);
    CHECK(std::isfinite(v));
  }
  CHECK(rs.beta_tilde > rs.beta_bar);
  CHECK(rs.beta_hat <= rs.b_hat);
  CHECK(rs.beta_check <= rs.b_check);
  CHECK(rs.correction_term_dominant == (rs.beta_hat2 >= rs.beta_hat1));
}

TEST_CASE("radius set caps j at dH log 2 for a single episode") {
  RadiusConfig cfg = desk_config();
  cfg.episodes = 1;
  const auto rs = compute_radius_set(cfg);
  CHECK(rs.j_cap == doctest::Approx(cfg.dim * cfg.horizon * std::log(2.0)));
  CHECK(rs.l_cap == doctest::Approx(cfg.w_bound + 1.0 / cfg.lambda));
}

TEST_CASE("radii grow with K and with log(1/delta)") {
  RadiusConfig cfg = desk_config();
  auto values = [](const RadiusSet& r) {
    return std::vector<double>{r.beta_hat1, r.beta_hat2, r.beta_hat,
                               r.beta_bar,  r.beta_tilde, r.beta_check};
  };
  RadiusSet prev = compute_radius_set(cfg);
  for (long long k : {100LL, 200LL, 400LL, 800LL}) {
    cfg.episodes = k;
    const RadiusSet cur = compute_radius_set(cfg);
    if (k > 100) {
      const auto a = values(prev), b = values(cur);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] >= a[i]);
    }
    prev = cur;
  }
  cfg = desk_config();
  prev = compute_radius_set(cfg);
  for (double delta : {0.1, 0.05, 0.01, 0.001}) {
    cfg.delta = delta;
    const RadiusSet cur = compute_radius_set(cfg);
    if (delta < 0.1) {
      const auto a = values(prev), b = values(cur);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] >= a[i]);
    }
    prev = cur;
  }
}

TEST_CASE("config validation") {
  RadiusConfig cfg = desk_config();
  cfg.delta = 0.0;
  CHECK_THROWS_AS(compute_radius_set(cfg), std::invalid_argument);
  cfg = desk_config();
  cfg.lambda = 0.0;
  CHECK_THROWS_AS(compute_radius_set(cfg), std::invalid_argument);
  cfg = desk_config();
  cfg.bonus_scale = -1.0;
  CHECK_THROWS_AS(compute_radius_set(cfg), std::invalid_argument);
}
