#pragma once

#include <cmath>
#include <stdexcept>

#include "linucblab/linalg.hpp"

namespace linucblab::radii {

using linucblab::linalg::NumericError;

struct RadiusConfig {
  int dim = 1;             // feature dimension d
  int horizon = 1;         // H
  long long episodes = 1;  // K
  double w_bound = 1.0;    // cap on the reward parameter norm
  double lambda = 1.0;     // ridge regularizer
  double delta = 0.1;      // confidence level
  double bonus_scale = 1.0;

  void check() const {
    if (dim < 1 || horizon < 1 || episodes < 1)
      throw std::invalid_argument("RadiusConfig: dim, horizon, episodes must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("RadiusConfig: lambda must be > 0");
    if (!(delta > 0.0 && delta < 1.0))
      throw std::invalid_argument("RadiusConfig: delta must be in (0,1)");
    if (!(bonus_scale > 0.0)) throw std::invalid_argument("RadiusConfig: bonus_scale must be > 0");
    if (!(w_bound >= 0.0)) throw std::invalid_argument("RadiusConfig: w_bound must be >= 0");
  }
};

inline double default_lambda(int horizon, int dim) {
  return 1.0 / (static_cast<double>(horizon) * horizon * std::sqrt(static_cast<double>(dim)));
}

// Every closed-form confidence radius for one configuration. beta_hat/beta_check
// are the bonus radii of the optimistic/pessimistic Q constructions;
// beta_bar/beta_tilde/beta_check also enter the variance offsets. b_hat/b_check
// are the self-consistent caps resolving the circular log terms.
struct RadiusSet {
  double beta_hat1 = 0.0;
  double beta_hat2 = 0.0;
  double beta_hat = 0.0;
  double beta_bar = 0.0;
  double beta_tilde = 0.0;
  double beta_check = 0.0;
  double b_hat = 0.0;
  double b_check = 0.0;
  double j_cap = 0.0;  // d*H*log(1+K), cap on optimistic-table rebuilds
  double l_cap = 0.0;  // W + K/lambda, norm cap on regression weight vectors
  // true when beta_hat2 >= beta_hat1: at small K the covering-log terms make
  // the correction radius dominate, reported rather than asserted.
  bool correction_term_dominant = false;
};

// beta_t = 8*sigma*sqrt(d*log(1+t*L^2/(d*lambda))*log(4t^2/delta)) + 4*R*log(4t^2/delta)
inline double bernstein_radius(double sigma, double r_cap, int d, double l2_cap,
                               double lambda, long long t, double delta) {
  if (d < 1 || t < 1) throw std::invalid_argument("bernstein_radius: d and t must be >= 1");
  if (!(lambda > 0.0) || !(l2_cap >= 0.0) || !(sigma >= 0.0) || !(r_cap >= 0.0))
    throw std::invalid_argument("bernstein_radius: domain violation");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("bernstein_radius: delta must be in (0,1)");
  const double td = static_cast<double>(t);
  const double log_cov = std::log1p(td * l2_cap * l2_cap / (d * lambda));
  const double log_conf = std::log(4.0 * td * td / delta);
  return 8.0 * sigma * std::sqrt(d * log_cov * log_conf) + 4.0 * r_cap * log_conf;
}

// R*sqrt(d*log(1+t*L^2/(d*lambda)) + log(1/delta))
inline double hoeffding_radius(double r_cap, int d, double l2_cap, double lambda,
                               long long t, double delta) {
  if (d < 1 || t < 1) throw std::invalid_argument("hoeffding_radius: d and t must be >= 1");
  if (!(lambda > 0.0) || !(l2_cap >= 0.0) || !(r_cap >= 0.0))
    throw std::invalid_argument("hoeffding_radius: domain violation");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("hoeffding_radius: delta must be in (0,1)");
  const double td = static_cast<double>(t);
  return r_cap * std::sqrt(d * std::log1p(td * l2_cap * l2_cap / (d * lambda)) +
                           std::log(1.0 / delta));
}

// (3d/log(1+c^2)) * log(1 + L^2/(lambda*log(1+c^2))): bound on how often an
// elliptical potential can reach c.
inline double elliptical_count_bound(int d, double l2_cap, double lambda, double c) {
  if (d < 1 || !(c > 0.0) || !(lambda > 0.0) || !(l2_cap >= 0.0))
    throw std::invalid_argument("elliptical_count_bound: domain violation");
  const double lc = std::log1p(c * c);
  return (3.0 * d / lc) * std::log1p(l2_cap * l2_cap / (lambda * lc));
}

// d*H*log(1+K): cap on the number of det-doubling table rebuilds.
inline double switch_count_bound(int d, int horizon, long long episodes) {
  if (d < 1 || horizon < 1 || episodes < 0)
    throw std::invalid_argument("switch_count_bound: domain violation");
  return static_cast<double>(d) * horizon * std::log1p(static_cast<double>(episodes));
}

namespace detail {

struct RadiusTerms {
  double d, h, k, w, lambda, delta;
  double j;      // d*H*log(1+K)
  double l;      // W + K/lambda
  double log_base;   // log(1+K/(H*d*lambda))
  double log_conf;   // log(4K^2 H/delta)
  double log_hd;     // log(H/delta)

  explicit RadiusTerms(const RadiusConfig& cfg)
      : d(cfg.dim),
        h(cfg.horizon),
        k(static_cast<double>(cfg.episodes)),
        w(cfg.w_bound),
        lambda(cfg.lambda),
        delta(cfg.delta) {
    j = d * h * std::log1p(k);
    l = w + k / lambda;
    log_base = std::log1p(k / (h * d * lambda));
    log_conf = std::log(4.0 * k * k * h / delta);
    log_hd = std::log(h / delta);
  }

  // dJ log(1+4KL/(H sqrt(lambda))) + d^2 J log(1+8K^2 B^2 sqrt(d)/(H^2 lambda^2))
  double cover_terms_hat(double b) const {
    const double t1 = d * j * std::log1p(4.0 * k * l / (h * std::sqrt(lambda)));
    const double t2 =
        d * d * j * std::log1p(8.0 * k * k * b * b * std::sqrt(d) / (h * h * lambda * lambda));
    return t1 + t2;
  }

  double beta_hat1() const {
    return 8.0 * std::sqrt(d * log_base * log_conf) + 4.0 * log_conf +
           h * std::sqrt(lambda * d);
  }

  double beta_hat2(double b_hat) const {
    const double bracket = log_conf + cover_terms_hat(b_hat);
    const double lead = 8.0 * std::sqrt((2.0 / (h * d * d)) * log_base * bracket);
    const double tail = (4.0 / (h * std::sqrt(std::pow(d, 5)))) * bracket;
    return lead + tail + h * std::sqrt(lambda * d) + 2.0;
  }

  double beta_bar(double b_hat) const {
    const double inner = d * log_base + log_hd + cover_terms_hat(b_hat);
    return std::sqrt(h) * std::sqrt(inner) + h * std::sqrt(lambda * d) + 2.0;
  }

  double beta_tilde(double b_hat) const {
    const double t1 = d * j * std::log1p(8.0 * k * l / std::sqrt(lambda));
    const double t2 =
        d * d * j *
        std::log1p(32.0 * k * k * b_hat * b_hat * std::sqrt(d) / (lambda * lambda));
    const double inner = d * log_base + log_hd + t1 + t2;
    return std::sqrt(h * h * h) * std::sqrt(inner) + h * h * std::sqrt(lambda * d) + 2.0;
  }

  double beta_check(double b_check) const {
    const double t1 = d * std::log1p(4.0 * k * l / (h * std::sqrt(lambda)));
    const double t2 = d * d * std::log1p(8.0 * k * k * b_check * b_check * std::sqrt(d) /
                                         (h * h * lambda * lambda));
    const double inner = d * log_base + log_hd + t1 + t2;
    return std::sqrt(h) * std::sqrt(inner) + h * std::sqrt(lambda * d) + 2.0;
  }
};

// The cap B enters its own radius only through log(B^2), so doubling until
// radius(B) <= B closes in a handful of steps.
template <typename F>
inline double resolve_cap(F radius_of, const char* what) {
  double b = 1.0;
  for (int iter = 0; iter < 100; ++iter) {
    const double r = radius_of(b);
    if (r <= b) return b;
    b = 2.0 * r;
  }
  throw NumericError(std::string("radius cap failed to close: ") + what);
}

}  // namespace detail

inline RadiusSet compute_radius_set(const RadiusConfig& cfg) {
  cfg.check();
  detail::RadiusTerms t(cfg);
  RadiusSet out;
  out.j_cap = t.j;
  out.l_cap = t.l;
  out.beta_hat1 = t.beta_hat1();
  out.b_hat = detail::resolve_cap(
      [&](double b) { return t.beta_hat1() + t.beta_hat2(b); }, "b_hat");
  out.beta_hat2 = t.beta_hat2(out.b_hat);
  out.beta_hat = out.beta_hat1 + out.beta_hat2;
  out.beta_bar = t.beta_bar(out.b_hat);
  out.beta_tilde = t.beta_tilde(out.b_hat);
  out.b_check = detail::resolve_cap([&](double b) { return t.beta_check(b); }, "b_check");
  out.beta_check = t.beta_check(out.b_check);
  out.correction_term_dominant = out.beta_hat2 >= out.beta_hat1;
  if (!(out.beta_hat <= out.b_hat) || !(out.beta_check <= out.b_check))
    throw NumericError("compute_radius_set: cap consistency lost");
  return out;
}

}  // namespace linucblab::radii
