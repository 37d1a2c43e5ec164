#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "linucblab/linalg.hpp"
#include "linucblab/radii.hpp"
#include "linucblab/rng.hpp"

namespace linucblab::conclab {

using linucblab::linalg::GramState;
using linucblab::linalg::Vector;
using linucblab::linalg::dot;

// thrown when a deterministic potential bound is exceeded: that is an
// implementation bug, not bad luck
struct BoundViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class NoiseModel { UniformBounded, TruncatedGaussian, RademacherScaled };
enum class FeatureModel { IidSphere, AdversarialRepeat, Decaying };

inline const char* to_string(NoiseModel m) {
  switch (m) {
    case NoiseModel::UniformBounded: return "uniform";
    case NoiseModel::TruncatedGaussian: return "gauss";
    case NoiseModel::RademacherScaled: return "rademacher";
  }
  return "?";
}
inline const char* to_string(FeatureModel m) {
  switch (m) {
    case FeatureModel::IidSphere: return "sphere";
    case FeatureModel::AdversarialRepeat: return "repeat";
    case FeatureModel::Decaying: return "decay";
  }
  return "?";
}

// One simulated self-normalized martingale: features x_t (declared norm cap
// l2_cap), conditionally mean-zero noise eta_t with second moment <= sigma^2,
// and the cap r_cap enforced on eta_t * min(1, ||x_t||_{Z_{t-1}^{-1}}).
struct MartingaleSpec {
  int d = 2;
  long long t_max = 200;
  double lambda = 1.0;
  double l2_cap = 1.0;
  double sigma = 1.0;
  double r_cap = 1.0;
  NoiseModel noise = NoiseModel::UniformBounded;
  FeatureModel features = FeatureModel::IidSphere;

  void check() const {
    if (d < 1 || t_max < 1) throw std::invalid_argument("MartingaleSpec: d, t_max must be >= 1");
    if (!(lambda > 0.0) || !(l2_cap >= 0.0) || !(sigma >= 0.0) || !(r_cap >= 0.0))
      throw std::invalid_argument("MartingaleSpec: caps must be nonnegative, lambda positive");
  }
};

struct TrialOutcome {
  bool violated = false;
  double tightness = 0.0;  // max_t norm_t / bound_t
  long long argmax_t = 0;
};

namespace detail {

inline Vector sphere_point(int d, double radius, Rng& rng) {
  Vector x(d);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (int j = 0; j < d; ++j) {
      x[j] = rng.normal();
      n2 += x[j] * x[j];
    }
  } while (n2 == 0.0);
  const double scale = radius / std::sqrt(n2);
  for (double& v : x) v *= scale;
  return x;
}

class FeatureSource {
 public:
  FeatureSource(const MartingaleSpec& spec, Rng& rng) : spec_(spec), rng_(rng) {
    if (spec.features == FeatureModel::AdversarialRepeat)
      fixed_ = sphere_point(spec.d, spec.l2_cap, rng_);
  }

  Vector next(long long t) {
    switch (spec_.features) {
      case FeatureModel::IidSphere:
        return sphere_point(spec_.d, spec_.l2_cap, rng_);
      case FeatureModel::AdversarialRepeat:
        return fixed_;
      case FeatureModel::Decaying: {
        Vector x = sphere_point(spec_.d, spec_.l2_cap, rng_);
        const double damp = 1.0 / std::sqrt(static_cast<double>(t));
        for (double& v : x) v *= damp;
        return x;
      }
    }
    return Vector(spec_.d, 0.0);
  }

 private:
  const MartingaleSpec& spec_;
  Rng& rng_;
  Vector fixed_;
};

// raw amplitude cap of each symmetric mean-zero family at second moment sigma^2
inline double raw_noise_cap(NoiseModel m, double sigma) {
  switch (m) {
    case NoiseModel::UniformBounded: return std::sqrt(3.0) * sigma;
    case NoiseModel::TruncatedGaussian: return 3.0 * sigma;
    case NoiseModel::RademacherScaled: return sigma;
  }
  return sigma;
}

inline double draw_noise(NoiseModel m, double sigma, Rng& rng) {
  switch (m) {
    case NoiseModel::UniformBounded:
      return rng.uniform(-std::sqrt(3.0) * sigma, std::sqrt(3.0) * sigma);
    case NoiseModel::TruncatedGaussian: {
      double z = rng.normal();
      while (std::fabs(z) > 3.0) z = rng.normal();
      return sigma * z;
    }
    case NoiseModel::RademacherScaled:
      return sigma * rng.sign();
  }
  return 0.0;
}

}  // namespace detail

inline double raw_noise_cap(const MartingaleSpec& spec) {
  return detail::raw_noise_cap(spec.noise, spec.sigma);
}

// The filtration is simulated honestly: x_t is produced before eta_t is drawn,
// and the r_cap is enforced by symmetric clipping of eta_t at r_cap/m_t with
// m_t = min(1, ||x_t||_{Z_{t-1}^{-1}}), which keeps symmetric noise mean-zero.
template <typename BoundFn>
inline TrialOutcome run_trial_with_bound(const MartingaleSpec& spec, Rng& rng,
                                         BoundFn bound_at, bool clip_scaled) {
  spec.check();
  GramState z(spec.d, spec.lambda);
  Vector sum(spec.d, 0.0);
  detail::FeatureSource features(spec, rng);
  TrialOutcome out;
  for (long long t = 1; t <= spec.t_max; ++t) {
    const Vector x = features.next(t);
    const double pot = z.elliptical_potential(x);
    const double m = std::min(1.0, pot);
    double eta = detail::draw_noise(spec.noise, spec.sigma, rng);
    if (clip_scaled && m > 0.0 && std::fabs(eta) * m > spec.r_cap)
      eta = (eta > 0.0 ? 1.0 : -1.0) * spec.r_cap / m;
    for (int j = 0; j < spec.d; ++j) sum[j] += x[j] * eta;
    z.rank1_update(x, 1.0);
    const double norm = std::sqrt(std::max(0.0, dot(sum, z.solve(sum))));
    const double bound = bound_at(t);
    const double ratio = bound > 0.0 ? norm / bound : (norm > 0.0 ? 1e300 : 0.0);
    if (ratio > out.tightness) {
      out.tightness = ratio;
      out.argmax_t = t;
    }
  }
  out.violated = out.tightness > 1.0;
  return out;
}

inline TrialOutcome run_self_normalized_trial(const MartingaleSpec& spec, double delta,
                                              Rng& rng) {
  return run_trial_with_bound(
      spec, rng,
      [&](long long t) {
        return radii::bernstein_radius(spec.sigma, spec.r_cap, spec.d, spec.l2_cap,
                                       spec.lambda, t, delta);
      },
      /*clip_scaled=*/true);
}

// Hoeffding-style companion bound: needs the raw |eta| cap, no scaled clipping.
inline TrialOutcome run_hoeffding_trial(const MartingaleSpec& spec, double delta, Rng& rng) {
  const double raw = raw_noise_cap(spec);
  return run_trial_with_bound(
      spec, rng,
      [&](long long t) {
        return radii::hoeffding_radius(raw, spec.d, spec.l2_cap, spec.lambda, t, delta);
      },
      /*clip_scaled=*/false);
}

struct RateSummary {
  long long trials = 0;
  long long violations = 0;
  double rate = 0.0;
  double mean_tightness = 0.0;
  double max_tightness = 0.0;
};

enum class BoundKind { Bernstein, Hoeffding };

// Trials are fanned across workers on substream (seed, trial_index); the
// aggregation reduces in trial order, so results do not depend on thread count.
inline RateSummary violation_rate(const MartingaleSpec& spec, double delta,
                                  long long n_trials, std::uint64_t seed,
                                  BoundKind kind = BoundKind::Bernstein,
                                  int n_threads = 1,
                                  std::vector<TrialOutcome>* sink = nullptr) {
  if (n_trials < 1) throw std::invalid_argument("violation_rate: n_trials must be >= 1");
  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(n_trials));
  auto worker = [&](long long begin, long long end) {
    for (long long i = begin; i < end; ++i) {
      Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
      outcomes[static_cast<std::size_t>(i)] =
          kind == BoundKind::Bernstein ? run_self_normalized_trial(spec, delta, rng)
                                       : run_hoeffding_trial(spec, delta, rng);
    }
  };
  const int workers = std::max(1, n_threads);
  if (workers == 1) {
    worker(0, n_trials);
  } else {
    std::vector<std::thread> pool;
    const long long chunk = (n_trials + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const long long b = w * chunk;
      if (b >= n_trials) break;
      pool.emplace_back(worker, b, std::min(n_trials, b + chunk));
    }
    for (auto& t : pool) t.join();
  }
  RateSummary s;
  s.trials = n_trials;
  for (const auto& o : outcomes) {
    if (o.violated) ++s.violations;
    s.mean_tightness += o.tightness;
    s.max_tightness = std::max(s.max_tightness, o.tightness);
  }
  s.rate = static_cast<double>(s.violations) / static_cast<double>(n_trials);
  s.mean_tightness /= static_cast<double>(n_trials);
  if (sink) *sink = std::move(outcomes);
  return s;
}

// Counts steps whose potential reaches c and checks the closed-form cap, which
// holds pathwise; exceeding it signals a bug.
inline std::pair<long long, double> elliptical_count_experiment(
    int d, long long t_max, double l2_cap, double lambda, double c,
    FeatureModel features, Rng& rng) {
  if (!(c > 0.0)) throw std::invalid_argument("elliptical_count_experiment: c must be > 0");
  MartingaleSpec spec;
  spec.d = d;
  spec.t_max = t_max;
  spec.lambda = lambda;
  spec.l2_cap = l2_cap;
  spec.features = features;
  spec.check();
  GramState z(d, lambda);
  detail::FeatureSource source(spec, rng);
  long long count = 0;
  double sum_min_sq = 0.0;
  for (long long t = 1; t <= t_max; ++t) {
    const Vector x = source.next(t);
    const double pot = z.elliptical_potential(x);
    if (pot >= c) ++count;
    sum_min_sq += std::min(1.0, pot * pot);
    z.rank1_update(x, 1.0);
  }
  const double bound = radii::elliptical_count_bound(d, l2_cap, lambda, c);
  if (static_cast<double>(count) > bound)
    throw BoundViolation("elliptical potential count exceeded its bound");
  const double sum_bound =
      2.0 * d * std::log1p(static_cast<double>(t_max) * l2_cap * l2_cap / (d * lambda));
  if (sum_min_sq > sum_bound + 1e-9)
    throw BoundViolation("elliptical potential sum exceeded its bound");
  return {count, bound};
}

inline RateSummary azuma_check(long long n, double step_cap, double delta,
                               long long n_trials, std::uint64_t seed) {
  RateSummary s;
  s.trials = n_trials;
  const double bound = step_cap * std::sqrt(2.0 * static_cast<double>(n) * std::log(1.0 / delta));
  for (long long i = 0; i < n_trials; ++i) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
    double sum = 0.0;
    for (long long t = 0; t < n; ++t) sum += step_cap * rng.sign();
    const double tightness = bound > 0.0 ? std::max(0.0, sum) / bound : 0.0;
    if (sum > bound) ++s.violations;
    s.mean_tightness += tightness;
    s.max_tightness = std::max(s.max_tightness, tightness);
  }
  s.rate = static_cast<double>(s.violations) / static_cast<double>(n_trials);
  s.mean_tightness /= static_cast<double>(n_trials);
  return s;
}

struct FreedmanSummary {
  RateSummary freedman;
  double mean_tightness_azuma = 0.0;  // same sequences measured against the Azuma bound
};

// Steps c*(Bernoulli(p) - p): variance-starved when p is small, which is where
// the variance-sensitive bound separates from the range-based one.
inline FreedmanSummary freedman_check(long long n, double p, double c, double delta,
                                      long long n_trials, std::uint64_t seed) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("freedman_check: p must be in (0,1)");
  FreedmanSummary out;
  out.freedman.trials = n_trials;
  const double var_n = static_cast<double>(n) * c * c * p * (1.0 - p);
  const double step_cap = c * std::max(p, 1.0 - p);
  const double log_term = std::log(1.0 / delta);
  const double freedman_bound = std::sqrt(2.0 * var_n * log_term) + (2.0 / 3.0) * c * log_term;
  const double azuma_bound =
      step_cap * std::sqrt(2.0 * static_cast<double>(n) * log_term);
  for (long long i = 0; i < n_trials; ++i) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
    double sum = 0.0;
    for (long long t = 0; t < n; ++t) sum += c * ((rng.next_double() < p ? 1.0 : 0.0) - p);
    const double pos = std::max(0.0, sum);
    if (sum > freedman_bound) ++out.freedman.violations;
    out.freedman.mean_tightness += pos / freedman_bound;
    out.freedman.max_tightness = std::max(out.freedman.max_tightness, pos / freedman_bound);
    out.mean_tightness_azuma += pos / azuma_bound;
  }
  out.freedman.rate =
      static_cast<double>(out.freedman.violations) / static_cast<double>(n_trials);
  out.freedman.mean_tightness /= static_cast<double>(n_trials);
  out.mean_tightness_azuma /= static_cast<double>(n_trials);
  return out;
}

// Radius with the scaled-noise cap over radius with the raw cap: in regimes
// where potentials stay small the scaled cap is strictly smaller, so the
// variance-aware bound wins. The raw cap is what a bound ignoring the
// attenuation factor would have to use.
inline double sharpness_ratio(const MartingaleSpec& spec, double delta) {
  spec.check();
  const double raw = raw_noise_cap(spec);
  const double with_scaled = radii::bernstein_radius(spec.sigma, spec.r_cap, spec.d,
                                                     spec.l2_cap, spec.lambda, spec.t_max, delta);
  const double with_raw = radii::bernstein_radius(spec.sigma, raw, spec.d, spec.l2_cap,
                                                  spec.lambda, spec.t_max, delta);
  return with_scaled / with_raw;
}

// Spec whose pathwise scaled cap sigma * l2_cap / sqrt(lambda) is below the raw
// noise amplitude by construction: potentials never exceed l2_cap/sqrt(lambda).
inline MartingaleSpec make_decaying_sharpness_spec(int d, long long t_max) {
  MartingaleSpec spec;
  spec.d = d;
  spec.t_max = t_max;
  spec.l2_cap = 1.0;
  spec.lambda = 25.0;
  spec.sigma = 1.0;
  spec.noise = NoiseModel::RademacherScaled;
  spec.features = FeatureModel::Decaying;
  spec.r_cap = spec.sigma * spec.l2_cap / std::sqrt(spec.lambda);
  return spec;
}

}  // namespace linucblab::conclab
