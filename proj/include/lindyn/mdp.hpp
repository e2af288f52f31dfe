#pragma once

#include <cmath>
#include <string>

#include "lindyn/error.hpp"
#include "lindyn/linalg.hpp"

namespace lindyn {

/// Upper bound on the number of states of any dense instance, composed or not.
inline constexpr Eigen::Index kMaxStates = 4096;

/// Policy-evaluation instance: row-stochastic kernel P, reward r, discount gamma.
/// Immutable; the only way to obtain one is validate_process (or an operation
/// that calls it), so every instance satisfies the stochasticity invariants.
class MarkovProcess {
 public:
  Eigen::Index n() const { return P_.rows(); }
  const Matrix& P() const { return P_; }
  const Vector& r() const { return r_; }
  double gamma() const { return gamma_; }

  /// Same kernel and discount, new reward.
  MarkovProcess with_reward(Vector r) const {
    if (r.size() != n()) fail(Errc::shape_mismatch, "reward length does not match state count");
    if (!r.allFinite()) fail(Errc::invalid_argument, "reward has non-finite entries");
    return MarkovProcess(P_, std::move(r), gamma_);
  }

 private:
  MarkovProcess(Matrix P, Vector r, double gamma) : P_(std::move(P)), r_(std::move(r)), gamma_(gamma) {}

  friend MarkovProcess validate_process(Matrix P, Vector r, double gamma);

  Matrix P_;
  Vector r_;
  double gamma_;
};

/// Checks and normalizes a raw (P, r, gamma) triple.
///
/// Entries in [-1e-15, 0) are clamped to zero; anything more negative is a
/// NegativeEntry. Rows whose sum is within 1e-12 of one are kept bit-for-bit,
/// rows within 1e-9 are rescaled to sum to one, anything further off is
/// NonStochastic. Keeping nearly exact rows untouched makes validation
/// idempotent, so serialized processes round-trip exactly.
inline MarkovProcess validate_process(Matrix P, Vector r, double gamma) {
  if (P.rows() != P.cols()) fail(Errc::shape_mismatch, "transition matrix must be square");
  if (P.rows() < 1) fail(Errc::invalid_argument, "state count must be at least 1");
  if (P.rows() > kMaxStates) fail(Errc::too_large, "state count exceeds 4096");
  if (r.size() != P.rows()) fail(Errc::shape_mismatch, "reward length does not match state count");
  if (!P.allFinite() || !r.allFinite()) fail(Errc::invalid_argument, "non-finite entries");
  if (!(gamma >= 0.0 && gamma < 1.0)) fail(Errc::bad_discount, "gamma must lie in [0, 1)");

  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
      double& p = P(i, j);
      if (p < -1e-15)
        fail(Errc::negative_entry, "entry (" + std::to_string(i) + ", " + std::to_string(j) + ") is negative");
      if (p < 0.0) p = 0.0;
    }
    const double sum = P.row(i).sum();
    const double off = std::abs(sum - 1.0);
    if (off > 1e-9)
      fail(Errc::non_stochastic, "row " + std::to_string(i) + " sums to " + std::to_string(sum));
    if (off > 1e-12) P.row(i) /= sum;
  }
  return MarkovProcess(std::move(P), std::move(r), gamma);
}

/// Invertible observation matrix O replacing one-hot state coordinates.
class ObservationMap {
 public:
  /// Validates invertibility: sigma_min(O) > 1e-10 * sigma_max(O).
  static ObservationMap from_matrix(Matrix O) {
    if (O.rows() != O.cols() || O.rows() < 1) fail(Errc::shape_mismatch, "observation matrix must be square");
    if (!O.allFinite()) fail(Errc::invalid_argument, "observation matrix has non-finite entries");
    const Vector s = singular_values(O);
    if (!(s(s.size() - 1) > 1e-10 * s(0))) fail(Errc::invalid_argument, "observation matrix is not invertible");
    const double cond = s(0) / s(s.size() - 1);
    return ObservationMap(std::move(O), cond);
  }

  static ObservationMap identity(Eigen::Index n) { return ObservationMap(Matrix::Identity(n, n), 1.0); }

  Eigen::Index n() const { return O_.rows(); }
  const Matrix& O() const { return O_; }
  double condition_number() const { return cond_; }

 private:
  ObservationMap(Matrix O, double cond) : O_(std::move(O)), cond_(cond) {}

  Matrix O_;
  double cond_;
};

struct FactoredSpec {
  MarkovProcess foreground;
  MarkovProcess background;
  bool background_reward_zeroed = true;
};

/// Solves (I - gamma P) x = rhs for one or more right-hand sides with a
/// partial-pivot LU factorization.
inline Matrix solve_resolvent(const MarkovProcess& proc, const Matrix& rhs) {
  const Eigen::Index n = proc.n();
  const Matrix A = Matrix::Identity(n, n) - proc.gamma() * proc.P();
  Eigen::PartialPivLU<Matrix> lu(A);
  Matrix x = lu.solve(rhs);
  const double scale = std::max(1.0, rhs.norm());
  if (!x.allFinite() || (A * x - rhs).norm() > 1e-8 * scale * std::max(1.0, x.norm()))
    fail(Errc::solve_failure, "resolvent system is singular or badly conditioned");
  return x;
}

/// V = (I - gamma P)^-1 r by LU solve.
inline Vector value_exact(const MarkovProcess& proc) { return solve_resolvent(proc, proc.r()); }

/// Fixed-point iteration V <- r + gamma P V from V = 0; stops once the sup-norm
/// update falls below tol.
inline Vector value_iterative(const MarkovProcess& proc, int max_steps, double tol) {
  if (!(tol > 0.0)) fail(Errc::invalid_argument, "tol must be positive");
  Vector v = Vector::Zero(proc.n());
  for (int step = 0; step < max_steps; ++step) {
    Vector next = proc.r() + proc.gamma() * (proc.P() * v);
    const double update = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (update < tol) return v;
  }
  fail(Errc::no_convergence, "value iteration did not reach tolerance in " + std::to_string(max_steps) + " steps");
}

/// Product process M (x) N: kernel P_M (x) P_N, reward r_M (x) 1 + 1 (x) r_N.
/// State (i, j) of the product has index i * n_N + j.
inline MarkovProcess kron_compose(const FactoredSpec& spec) {
  const auto& m = spec.foreground;
  const auto& nproc = spec.background;
  if (m.gamma() != nproc.gamma()) fail(Errc::gamma_mismatch, "component discounts differ");
  if (m.n() * nproc.n() > kMaxStates) fail(Errc::too_large, "composed state count exceeds 4096");
  const Vector r_n = spec.background_reward_zeroed ? Vector::Zero(nproc.n()) : nproc.r();
  Vector r = kron(m.r(), Vector::Ones(nproc.n())) + kron(Vector::Ones(m.n()), r_n);
  return validate_process(kron(m.P(), nproc.P()), std::move(r), m.gamma());
}

}  // namespace lindyn
