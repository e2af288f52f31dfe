#pragma once

// Reference computations for the tests. Everything here is written with
// explicit loops and textbook algorithms so that it shares no code path with
// the library routines it is compared against.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "lindyn/lindyn.hpp"

namespace oracle {

using lindyn::Matrix;
using lindyn::Vector;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index l = 0; l < a.cols(); ++l) s += a(i, l) * b(l, j);
      c(i, j) = s;
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline double sq_frobenius(const Matrix& a) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) s += a(i, j) * a(i, j);
  return s;
}

/// Classical Gram-Schmidt with one reorthogonalization pass.
inline Matrix gram_schmidt(const Matrix& a) {
  Matrix q = a;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i < j; ++i) {
        double d = 0.0;
        for (Eigen::Index r = 0; r < a.rows(); ++r) d += q(r, i) * q(r, j);
        for (Eigen::Index r = 0; r < a.rows(); ++r) q(r, j) -= d * q(r, i);
      }
    double norm = 0.0;
    for (Eigen::Index r = 0; r < a.rows(); ++r) norm += q(r, j) * q(r, j);
    norm = std::sqrt(norm);
    for (Eigen::Index r = 0; r < a.rows(); ++r) q(r, j) /= norm;
  }
  return q;
}

/// Projection of v onto span(a) by Gram-Schmidt.
inline Vector project(const Matrix& a, const Vector& v) {
  const Matrix q = gram_schmidt(a);
  Vector out = Vector::Zero(v.size());
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    double d = 0.0;
    for (Eigen::Index r = 0; r < v.size(); ++r) d += q(r, j) * v(r);
    for (Eigen::Index r = 0; r < v.size(); ++r) out(r) += d * q(r, j);
  }
  return out;
}

/// ||A A^T - B B^T||_F for orthonormalized spans of a and b.
inline double projector_distance(const Matrix& a, const Matrix& b) {
  const Matrix qa = gram_schmidt(a);
  const Matrix qb = gram_schmidt(b);
  return std::sqrt(sq_frobenius(matmul(qa, transpose(qa)) - matmul(qb, transpose(qb))));
}

/// V = sum_t gamma^t P^t r, truncated once the term is below 1e-17.
inline Vector neumann_value(const Matrix& P, const Vector& r, double gamma) {
  Vector term = r;
  Vector v = r;
  for (int t = 0; t < 100000; ++t) {
    Vector next = Vector::Zero(term.size());
    for (Eigen::Index i = 0; i < P.rows(); ++i)
      for (Eigen::Index j = 0; j < P.cols(); ++j) next(i) += gamma * P(i, j) * term(j);
    term = next;
    v += term;
    if (term.cwiseAbs().maxCoeff() < 1e-17) break;
  }
  return v;
}

/// Central finite-difference gradient of f at x.
inline Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      Matrix xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      g(i, j) = (f(xp) - f(xm)) / (2.0 * h);
    }
  return g;
}

/// The losses with their stop-gradient targets passed in explicitly, so that
/// differentiating in Phi leaves the targets untouched. X is the observation
/// matrix (identity for the plain losses).
struct Losses {
  Matrix P, X;
  Vector r;
  double gamma;

  Matrix obs(const Matrix& Phi) const { return matmul(X, Phi); }

  double rec(const Matrix& Phi, const Matrix& F, const Matrix& Psi) const {
    return sq_frobenius(matmul(matmul(obs(Phi), F), Psi) - matmul(P, X));
  }
  double lat(const Matrix& Phi, const Matrix& F, const Matrix& target) const {
    return sq_frobenius(matmul(obs(Phi), F) - target);
  }
  Matrix lat_target(const Matrix& Phi) const { return matmul(P, obs(Phi)); }
  double td(const Matrix& Phi, const Vector& Vhat, const Vector& target) const {
    const Vector pred = matmul(obs(Phi), Vhat);
    return (pred - target).squaredNorm();
  }
  Vector td_target(const Matrix& Phi, const Vector& Vhat) const {
    return r + gamma * Vector(matmul(P, matmul(obs(Phi), Vhat)));
  }
};

/// Loss evaluated by the oracle with frozen targets computed at (Phi0, Vhat0).
struct FrozenLoss {
  Losses L;
  lindyn::Loss loss;
  Matrix lat_target;
  Vector td_target;

  FrozenLoss(const lindyn::MarkovProcess& p, const Matrix& X, const lindyn::Representation& rep, lindyn::Loss l)
      : L{p.P(), X, p.r(), p.gamma()}, loss(l) {
    lat_target = L.lat_target(rep.Phi);
    td_target = L.td_target(rep.Phi, rep.Vhat);
  }

  double operator()(const Matrix& Phi, const Matrix& F, const Matrix& Psi, const Vector& Vhat) const {
    double v = 0.0;
    if (lindyn::uses_rec(loss)) v += L.rec(Phi, F, Psi);
    if (lindyn::uses_lat(loss)) v += L.lat(Phi, F, lat_target);
    if (lindyn::uses_td(loss)) v += L.td(Phi, Vhat, td_target);
    return v;
  }
};

/// Random row-stochastic matrix with entries bounded away from zero.
inline Matrix random_stochastic(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix P(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) s += (P(i, j) = u(rng));
    for (Eigen::Index j = 0; j < n; ++j) P(i, j) /= s;
  }
  return P;
}

inline Matrix random_gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng) { return random_gaussian(n, 1, rng).col(0); }

/// Relative mismatch used for gradient comparisons.
inline double rel_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max({1e-2, std::sqrt(sq_frobenius(a)), std::sqrt(sq_frobenius(b))});
  return std::sqrt(sq_frobenius(a - b)) / scale;
}

}  // namespace oracle
