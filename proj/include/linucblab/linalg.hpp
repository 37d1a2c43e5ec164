#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace linucblab::linalg {

using Vector = std::vector<double>;

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline bool all_finite(const Vector& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

// Regularized weighted Gram matrix lambda*I + sum_i w_i x_i x_i^T with a
// cached inverse (rank-1 Sherman-Morrison updates) and a running
// log-determinant (matrix determinant lemma). The inverse is rebuilt by
// Cholesky every 64 updates and whenever ||M*Minv - I||_inf exceeds 1e-8.
class GramState {
 public:
  GramState(int dim, double lambda) : d_(dim), lambda_(lambda) {
    if (dim < 1) throw std::invalid_argument("GramState: dim must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("GramState: lambda must be > 0");
    mat_.assign(static_cast<std::size_t>(d_) * d_, 0.0);
    inv_.assign(static_cast<std::size_t>(d_) * d_, 0.0);
    for (int i = 0; i < d_; ++i) {
      mat_[idx(i, i)] = lambda_;
      inv_[idx(i, i)] = 1.0 / lambda_;
    }
    log_det_ = d_ * std::log(lambda_);
  }

  int dim() const { return d_; }
  double lambda() const { return lambda_; }
  double log_det() const { return log_det_; }
  const std::vector<double>& matrix() const { return mat_; }
  const std::vector<double>& inverse() const { return inv_; }

  // M' = M + w x x^T. log det grows by log(1 + w * x^T M^-1 x) >= 0.
  void rank1_update(const Vector& x, double w) {
    check_vector(x);
    if (!(w > 0.0) || !std::isfinite(w))
      throw std::invalid_argument("rank1_update: weight must be positive and finite");
    Vector z = apply_inverse(x);
    const double s = std::max(0.0, dot(x, z));
    const double denom = 1.0 + w * s;
    log_det_ += std::log1p(w * s);
    const double scale = w / denom;
    for (int i = 0; i < d_; ++i) {
      const double xi_w = w * x[i];
      const double zi_s = scale * z[i];
      for (int j = 0; j < d_; ++j) {
        mat_[idx(i, j)] += xi_w * x[j];
        inv_[idx(i, j)] -= zi_s * z[j];
      }
    }
    ++updates_since_refresh_;
    if (updates_since_refresh_ >= 64 || identity_residual() > 1e-8) refresh_inverse();
  }

  // sqrt(x^T M^-1 x)
  double elliptical_potential(const Vector& x) const {
    check_vector(x);
    return std::sqrt(std::max(0.0, dot(x, apply_inverse(x))));
  }

  // M^-1 b
  Vector solve(const Vector& b) const {
    check_vector(b);
    return apply_inverse(b);
  }

  double identity_residual() const {
    double worst = 0.0;
    for (int i = 0; i < d_; ++i) {
      for (int j = 0; j < d_; ++j) {
        double s = 0.0;
        for (int k = 0; k < d_; ++k) s += mat_[idx(i, k)] * inv_[idx(k, j)];
        worst = std::max(worst, std::fabs(s - (i == j ? 1.0 : 0.0)));
      }
    }
    return worst;
  }

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * d_ + j; }

  void check_vector(const Vector& x) const {
    if (static_cast<int>(x.size()) != d_)
      throw std::invalid_argument("GramState: dimension mismatch");
    if (!all_finite(x)) throw std::invalid_argument("GramState: nonfinite entries");
  }

  Vector apply_inverse(const Vector& x) const {
    Vector out(d_, 0.0);
    for (int i = 0; i < d_; ++i) {
      double s = 0.0;
      const double* row = inv_.data() + idx(i, 0);
      for (int j = 0; j < d_; ++j) s += row[j] * x[j];
      out[i] = s;
    }
    return out;
  }

  void refresh_inverse() {
    // Cholesky M = L L^T, then M^-1 column by column.
    std::vector<double> L(static_cast<std::size_t>(d_) * d_, 0.0);
    for (int i = 0; i < d_; ++i) {
      for (int j = 0; j <= i; ++j) {
        double s = mat_[idx(i, j)];
        for (int k = 0; k < j; ++k) s -= L[idx(i, k)] * L[idx(j, k)];
        if (i == j) {
          if (s <= 0.0) throw NumericError("GramState: matrix lost positive definiteness");
          L[idx(i, i)] = std::sqrt(s);
        } else {
          L[idx(i, j)] = s / L[idx(j, j)];
        }
      }
    }
    std::vector<double> y(d_), x(d_);
    for (int col = 0; col < d_; ++col) {
      for (int i = 0; i < d_; ++i) {
        double s = (i == col) ? 1.0 : 0.0;
        for (int k = 0; k < i; ++k) s -= L[idx(i, k)] * y[k];
        y[i] = s / L[idx(i, i)];
      }
      for (int i = d_ - 1; i >= 0; --i) {
        double s = y[i];
        for (int k = i + 1; k < d_; ++k) s -= L[idx(k, i)] * x[k];
        x[i] = s / L[idx(i, i)];
      }
      for (int i = 0; i < d_; ++i) inv_[idx(i, col)] = x[i];
    }
    // symmetrize against roundoff
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < i; ++j) {
        const double m = 0.5 * (inv_[idx(i, j)] + inv_[idx(j, i)]);
        inv_[idx(i, j)] = m;
        inv_[idx(j, i)] = m;
      }
    updates_since_refresh_ = 0;
  }

  int d_;
  double lambda_;
  std::vector<double> mat_, inv_;
  double log_det_ = 0.0;
  int updates_since_refresh_ = 0;
};

inline GramState gram_init(int dim, double lambda) { return GramState(dim, lambda); }

inline GramState gram_rank1_update(const GramState& g, const Vector& x, double w) {
  GramState out = g;
  out.rank1_update(x, w);
  return out;
}

inline double elliptical_potential(const GramState& g, const Vector& x) {
  return g.elliptical_potential(x);
}

inline Vector gram_solve(const GramState& g, const Vector& b) { return g.solve(b); }

}  // namespace linucblab::linalg
