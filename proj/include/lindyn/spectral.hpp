#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "lindyn/error.hpp"
#include "lindyn/linalg.hpp"

namespace lindyn {

/// Eigen- and singular decomposition of a square matrix.
///
/// Eigenpairs are sorted by descending real part, then descending magnitude.
/// Singular triples are sorted by descending singular value. Every eigenvector
/// and every left singular vector has its largest-magnitude entry positive; a
/// right singular vector is flipped together with its left partner so that
/// P = U diag(s) V^T keeps holding.
struct SpectralSummary {
  ComplexVector eigenvalues;
  /// Real unit-norm eigenvectors (columns). Meaningful only when
  /// is_real_diagonalizable; otherwise holds normalized real parts.
  Matrix eigenvectors;
  Vector singular_values;
  Matrix left_singular;
  Matrix right_singular;
  bool is_real_diagonalizable = false;

  Eigen::Index n() const { return eigenvectors.rows(); }
  /// Real parts of the sorted eigenvalues.
  Vector eigenvalues_real() const { return eigenvalues.real(); }
};

/// A linear subspace of R^n stored as an orthonormal basis (columns).
class Subspace {
 public:
  /// Wraps a basis that must already be orthonormal to 1e-10.
  static Subspace from_orthonormal(Matrix basis) {
    const Eigen::Index k = basis.cols();
    if ((basis.transpose() * basis - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-10)
      fail(Errc::invalid_argument, "basis is not orthonormal");
    return Subspace(std::move(basis));
  }

  /// Orthonormal basis for the column span of `spanning` (full column rank).
  static Subspace span_of(const Matrix& spanning) { return Subspace(orthonormalize(spanning)); }

  Eigen::Index ambient() const { return basis_.rows(); }
  Eigen::Index dim() const { return basis_.cols(); }
  const Matrix& basis() const { return basis_; }
  Matrix projector() const { return basis_ * basis_.transpose(); }

 private:
  explicit Subspace(Matrix basis) : basis_(std::move(basis)) {}
  Matrix basis_;
};

enum class SubspaceKind { eigen, left_singular, right_singular };

namespace detail {

inline std::vector<Eigen::Index> eigen_order(const ComplexVector& values) {
  std::vector<Eigen::Index> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    const auto& x = values(a);
    const auto& y = values(b);
    if (x.real() != y.real()) return x.real() > y.real();
    if (std::abs(x) != std::abs(y)) return std::abs(x) > std::abs(y);
    return x.imag() > y.imag();
  });
  return idx;
}

}  // namespace detail

/// Full eigendecomposition and SVD. Symmetric inputs (to 1e-12 relative) go
/// through the self-adjoint solver, which yields an orthonormal eigenbasis;
/// everything else through the general real solver.
inline SpectralSummary decompose(const Matrix& P) {
  if (P.rows() != P.cols() || P.rows() == 0) fail(Errc::shape_mismatch, "decompose needs a non-empty square matrix");
  if (!P.allFinite()) fail(Errc::invalid_argument, "matrix has non-finite entries");
  const Eigen::Index n = P.rows();
  SpectralSummary out;

  if (is_symmetric(P)) {
    const Matrix sym = 0.5 * (P + P.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) fail(Errc::numerical_failure, "self-adjoint eigensolver failed");
    out.eigenvalues = ComplexVector(n);
    out.eigenvectors = Matrix(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.eigenvalues(i) = es.eigenvalues()(n - 1 - i);
      out.eigenvectors.col(i) = es.eigenvectors().col(n - 1 - i);
    }
    // Self-adjoint output is ascending; reversing gives descending. Ties keep
    // the solver's orthonormal basis.
    out.is_real_diagonalizable = true;
  } else {
    Eigen::EigenSolver<Matrix> es(P, true);
    if (es.info() != Eigen::Success) fail(Errc::numerical_failure, "eigensolver failed");
    const ComplexVector values = es.eigenvalues();
    const Eigen::MatrixXcd vectors = es.eigenvectors();
    const auto order = detail::eigen_order(values);
    out.eigenvalues = ComplexVector(n);
    Eigen::MatrixXcd sorted(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.eigenvalues(i) = values(order[i]);
      sorted.col(i) = vectors.col(order[i]);
    }
    const double max_imag = out.eigenvalues.imag().cwiseAbs().maxCoeff();
    out.eigenvectors = sorted.real();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = out.eigenvectors.col(i).norm();
      if (norm > 0.0) out.eigenvectors.col(i) /= norm;
    }
    bool real_diag = max_imag < 1e-10;
    if (real_diag) {
      // A defective matrix returns (nearly) parallel eigenvectors: require a
      // well-conditioned eigenbasis as well as small eigenpair residuals.
      const Vector s = singular_values(out.eigenvectors);
      real_diag = s(n - 1) > 1e-8 * s(0);
      for (Eigen::Index i = 0; real_diag && i < n; ++i) {
        const double lambda = out.eigenvalues(i).real();
        const double res = (P * out.eigenvectors.col(i) - lambda * out.eigenvectors.col(i)).norm();
        if (!(res < 1e-8)) real_diag = false;
      }
    }
    out.is_real_diagonalizable = real_diag;
  }
  for (Eigen::Index i = 0; i < n; ++i) fix_sign(out.eigenvectors.col(i));

  Eigen::BDCSVD<Matrix> svd(P, Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.singular_values = svd.singularValues();
  out.left_singular = svd.matrixU();
  out.right_singular = svd.matrixV();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double top = out.left_singular.col(i).cwiseAbs().maxCoeff();
    for (Eigen::Index j = 0; j < n; ++j) {
      const double x = out.left_singular(j, i);
      if (std::abs(x) >= top * (1.0 - 1e-12)) {
        if (x < 0.0) {
          out.left_singular.col(i) *= -1.0;
          out.right_singular.col(i) *= -1.0;
        }
        break;
      }
    }
  }
  const Matrix recon = out.left_singular * out.singular_values.asDiagonal() * out.right_singular.transpose();
  if ((P - recon).norm() > 1e-8 * std::max(P.norm(), 1e-300))
    fail(Errc::numerical_failure, "SVD reconstruction residual above threshold");
  return out;
}

/// Orthonormalized span of the top-k eigenvectors or singular vectors.
/// Refuses ambiguous cuts: the k-th and (k+1)-th values must differ by 1e-8.
inline Subspace top_k_subspace(const SpectralSummary& s, Eigen::Index k, SubspaceKind kind) {
  const Eigen::Index n = s.n();
  if (k < 1 || k > n) fail(Errc::invalid_argument, "k must lie in [1, n]");
  const Matrix* vectors = nullptr;
  Vector values;
  switch (kind) {
    case SubspaceKind::eigen:
      if (!s.is_real_diagonalizable) fail(Errc::not_diagonalizable, "eigen subspace of a non real-diagonalizable matrix");
      vectors = &s.eigenvectors;
      values = s.eigenvalues_real();
      break;
    case SubspaceKind::left_singular:
      vectors = &s.left_singular;
      values = s.singular_values;
      break;
    case SubspaceKind::right_singular:
      vectors = &s.right_singular;
      values = s.singular_values;
      break;
  }
  if (k < n && !(values(k - 1) - values(k) >= 1e-8))
    fail(Errc::degenerate_gap, "values at positions k and k+1 are not separated by 1e-8");
  return Subspace::span_of(vectors->leftCols(k));
}

/// Orthonormalized span of chosen eigenvectors, 1-based indices into the
/// sorted eigenpairs.
inline Subspace eigen_subspace(const SpectralSummary& s, std::span<const int> indices) {
  if (!s.is_real_diagonalizable) fail(Errc::not_diagonalizable, "eigen subspace of a non real-diagonalizable matrix");
  Matrix cols(s.n(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const int i = indices[j];
    if (i < 1 || i > s.n()) fail(Errc::invalid_argument, "eigenvector index out of range");
    cols.col(static_cast<Eigen::Index>(j)) = s.eigenvectors.col(i - 1);
  }
  return Subspace::span_of(cols);
}

/// Projector Frobenius distance ||A A^T - B B^T||_F. For equal dimensions this
/// equals sqrt(2) * ||B - A A^T B||_F, which is evaluated instead because it
/// does not cancel catastrophically near zero.
inline double subspace_distance(const Subspace& a, const Subspace& b) {
  if (a.ambient() != b.ambient() || a.dim() != b.dim())
    fail(Errc::dimension_mismatch, "subspaces differ in ambient dimension or rank");
  const Matrix& A = a.basis();
  const Matrix& B = b.basis();
  return std::sqrt(2.0) * (B - A * (A.transpose() * B)).norm();
}

struct InvarianceResult {
  bool invariant = false;
  double residual = 0.0;
};

/// residual = ||(I - S S^T) P S||_F / ||P S||_F (zero when P S = 0).
inline InvarianceResult is_invariant_subspace(const Matrix& P, const Subspace& S, double tol) {
  if (P.rows() != P.cols() || P.cols() != S.ambient()) fail(Errc::dimension_mismatch, "matrix and subspace sizes differ");
  const Matrix& Q = S.basis();
  const Matrix PS = P * Q;
  const double denom = PS.norm();
  const double residual = denom > 0.0 ? (PS - Q * (Q.transpose() * PS)).norm() / denom : 0.0;
  return {residual < tol, residual};
}

inline Vector project_vector(const Subspace& S, const Vector& v) {
  if (v.size() != S.ambient()) fail(Errc::dimension_mismatch, "vector length differs from ambient dimension");
  const Matrix& Q = S.basis();
  return Q * (Q.transpose() * v);
}

}  // namespace lindyn
