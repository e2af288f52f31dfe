#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "lindyn/error.hpp"

namespace lindyn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Kronecker product, row-major block layout: block (i, j) of the result is A(i, j) * B.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Vector kron(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

inline double max_abs_asymmetry(const Matrix& m) {
  if (m.rows() != m.cols()) return INFINITY;
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return max_abs_asymmetry(m) <= rel_tol * scale;
}

inline Vector singular_values(const Matrix& m) {
  return Eigen::BDCSVD<Matrix>(m).singularValues();
}

inline double sigma_min(const Matrix& m) {
  const Vector s = singular_values(m);
  return s.size() ? s(s.size() - 1) : 0.0;
}

inline double condition_number(const Matrix& m) {
  const Vector s = singular_values(m);
  if (s.size() == 0) return 1.0;
  const double lo = s(s.size() - 1);
  return lo > 0.0 ? s(0) / lo : INFINITY;
}

/// Flips v so that its largest-magnitude entry is positive. Entries within a
/// relative 1e-12 of the maximum count as tied and the first of them decides,
/// so vectors like [1, -1]/sqrt(2) get a stable sign.
template <typename Derived>
void fix_sign(Eigen::MatrixBase<Derived>&& v) {
  if (v.size() == 0) return;
  const double top = v.cwiseAbs().maxCoeff();
  if (top == 0.0) return;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= top * (1.0 - 1e-12)) {
      if (v(i) < 0.0) v *= -1.0;
      return;
    }
  }
}

template <typename Derived>
void fix_sign(Eigen::MatrixBase<Derived>& v) {
  fix_sign(std::move(v));
}

/// Orthonormal basis for the column span of a (full column rank) matrix.
/// Throws invalid_argument when a column is numerically dependent on the others.
inline Matrix orthonormalize(const Matrix& a, double rank_tol = 1e-12) {
  if (a.cols() == 0) return Matrix(a.rows(), 0);
  if (a.cols() > a.rows()) fail(Errc::invalid_argument, "more columns than rows");
  Eigen::HouseholderQR<Matrix> qr(a);
  const auto& packed = qr.matrixQR();
  double rmax = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) rmax = std::max(rmax, std::abs(packed(i, i)));
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    if (!(std::abs(packed(i, i)) > rank_tol * rmax))
      fail(Errc::invalid_argument, "columns are linearly dependent");
  return qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
}

/// Orthonormal basis of the orthogonal complement of span(a).
inline Matrix orthogonal_complement(const Matrix& a) {
  const Eigen::Index n = a.rows();
  if (a.cols() == 0) return Matrix::Identity(n, n);
  Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  return q.rightCols(n - a.cols());
}

/// Column-major flatten, matching Eigen's storage order.
inline Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

inline Matrix unvec(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

/// Eigenvalues sorted by (real part, imaginary part) ascending; the canonical
/// order for comparing spectra as multisets.
inline std::vector<std::complex<double>> sorted_spectrum(const ComplexVector& values) {
  std::vector<std::complex<double>> out(values.data(), values.data() + values.size());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return out;
}

/// Distance between two spectra viewed as multisets: each value of `a` (in
/// sorted order) is paired with its nearest unused value of `b`; returns the
/// largest paired distance, or +inf when the sizes differ. Nearest pairing
/// keeps conjugate pairs with nearly equal real parts from being crossed.
inline double spectrum_gap(const ComplexVector& a, const ComplexVector& b) {
  if (a.size() != b.size()) return INFINITY;
  const auto sa = sorted_spectrum(a);
  const auto sb = sorted_spectrum(b);
  std::vector<bool> used(sb.size(), false);
  double gap = 0.0;
  for (const auto& x : sa) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t j = 0; j < sb.size(); ++j) {
      if (used[j]) continue;
      const double d = std::abs(x - sb[j]);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    used[best] = true;
    gap = std::max(gap, best_d);
  }
  return gap;
}

}  // namespace lindyn
