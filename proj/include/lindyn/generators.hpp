#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lindyn/mdp.hpp"
#include "lindyn/spectral.hpp"

namespace lindyn {

/// Recipe for P = (1 - beta) I + beta S with S the symmetrized average of
/// `num_permutations` random permutation matrices.
struct ChainRecipe {
  Eigen::Index n = 8;
  double beta = 0.25;
  int num_permutations = 3;
  std::uint64_t seed = 0;
  double gamma = 0.9;
};

/// Indices are 1-based positions in the descending eigenvalue order.
struct RewardRecipe {
  std::vector<int> eig_indices;
  std::vector<double> coefficients;
};

enum class ObservationKind { gaussian, binary };

struct ObservationParams {
  double bernoulli_p = 0.2;
  double max_condition = 1e6;
};

inline constexpr double kEigenGapFloor = 1e-6;
inline constexpr double kPositivityFloor = 1e-10;

/// P = (1 - beta) I + beta S for a given symmetric doubly stochastic S.
/// Rejects (DegenerateSpectrum) a minimum eigenvalue <= 1e-10 or any gap below
/// 1e-6 among the top max(8, n/2) eigenvalues.
inline MarkovProcess chain_from_mixing(const Matrix& S, double beta, double gamma) {
  if (!(beta > 0.0 && beta <= 0.5)) fail(Errc::invalid_argument, "beta must lie in (0, 0.5]");
  if (S.rows() != S.cols()) fail(Errc::shape_mismatch, "mixing matrix must be square");
  if (!is_symmetric(S, 1e-14)) fail(Errc::invalid_argument, "mixing matrix must be symmetric");
  const Eigen::Index n = S.rows();
  const Matrix P = (1.0 - beta) * Matrix::Identity(n, n) + beta * S;
  auto proc = validate_process(P, Vector::Zero(n), gamma);

  Eigen::SelfAdjointEigenSolver<Matrix> es(proc.P(), Eigen::EigenvaluesOnly);
  const Vector ascending = es.eigenvalues();
  if (!(ascending(0) > kPositivityFloor))
    fail(Errc::degenerate_spectrum, "smallest eigenvalue " + std::to_string(ascending(0)) + " is not positive");
  const Eigen::Index top = std::min<Eigen::Index>(n, std::max<Eigen::Index>(8, n / 2));
  for (Eigen::Index i = 0; i + 1 < top; ++i) {
    const double gap = ascending(n - 1 - i) - ascending(n - 2 - i);
    if (gap < kEigenGapFloor)
      fail(Errc::degenerate_spectrum, "eigenvalue gap " + std::to_string(gap) + " below 1e-6 among the top eigenvalues");
  }
  return proc;
}

inline MarkovProcess make_positive_chain(const ChainRecipe& recipe) {
  if (recipe.n < 1) fail(Errc::invalid_argument, "n must be at least 1");
  if (recipe.n > kMaxStates) fail(Errc::too_large, "state count exceeds 4096");
  if (recipe.num_permutations < 2) fail(Errc::invalid_argument, "num_permutations must be at least 2");
  if (!(recipe.beta > 0.0 && recipe.beta <= 0.5)) fail(Errc::invalid_argument, "beta must lie in (0, 0.5]");
  const Eigen::Index n = recipe.n;
  std::mt19937_64 rng(recipe.seed);
  Matrix S = Matrix::Zero(n, n);
  std::vector<Eigen::Index> perm(n);
  for (int k = 0; k < recipe.num_permutations; ++k) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      S(i, perm[i]) += 1.0;
      S(perm[i], i) += 1.0;
    }
  }
  S /= 2.0 * recipe.num_permutations;
  return chain_from_mixing(S, recipe.beta, recipe.gamma);
}

/// Non-symmetric doubly stochastic kernel (1 - beta) I + beta * mean(permutations).
/// Its spectrum is generally complex; the SVD is always real.
inline MarkovProcess make_permutation_mixture(Eigen::Index n, double beta, int num_permutations, std::uint64_t seed,
                                              double gamma) {
  if (n < 1 || num_permutations < 1) fail(Errc::invalid_argument, "n and num_permutations must be positive");
  if (!(beta > 0.0 && beta <= 1.0)) fail(Errc::invalid_argument, "beta must lie in (0, 1]");
  std::mt19937_64 rng(seed);
  Matrix S = Matrix::Zero(n, n);
  std::vector<Eigen::Index> perm(n);
  for (int k = 0; k < num_permutations; ++k) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index i = 0; i < n; ++i) S(i, perm[i]) += 1.0;
  }
  S /= num_permutations;
  return validate_process((1.0 - beta) * Matrix::Identity(n, n) + beta * S, Vector::Zero(n), gamma);
}

/// Reversible chain D^-1 W from random symmetric positive weights W: real
/// spectrum, non-symmetric kernel, eigenvectors distinct from singular vectors.
inline MarkovProcess make_reversible_chain(Eigen::Index n, std::uint64_t seed, double gamma) {
  if (n < 1) fail(Errc::invalid_argument, "n must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  Matrix W(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) W(i, j) = W(j, i) = unif(rng);
  W.diagonal().array() += static_cast<double>(n);  // lazy chain, positive spectrum
  const Vector deg = W.rowwise().sum();
  return validate_process(deg.cwiseInverse().asDiagonal() * W, Vector::Zero(n), gamma);
}

/// Symmetric doubly stochastic kernel with a prescribed spectrum: the first
/// eigenvalue must be 1 (eigenvector 1/sqrt(n)); the rest are attached to the
/// remaining columns of the Helmert basis. Fails with NegativeEntry when the
/// spectrum does not give a nonnegative matrix.
inline MarkovProcess make_chain_with_spectrum(std::span<const double> eigenvalues, double gamma) {
  const auto n = static_cast<Eigen::Index>(eigenvalues.size());
  if (n < 1) fail(Errc::invalid_argument, "spectrum must be non-empty");
  if (eigenvalues[0] != 1.0) fail(Errc::invalid_argument, "first eigenvalue of a stochastic kernel must be 1");
  Matrix H(n, n);
  H.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(n)));
  for (Eigen::Index j = 1; j < n; ++j) {
    Vector v = Vector::Zero(n);
    v.head(j).setOnes();
    v(j) = -static_cast<double>(j);
    H.col(j) = v / v.norm();
  }
  Vector d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = eigenvalues[static_cast<std::size_t>(i)];
  Matrix P = H * d.asDiagonal() * H.transpose();
  P = 0.5 * (P + P.transpose());
  return validate_process(std::move(P), Vector::Zero(n), gamma);
}

/// Random invertible observation matrix. Gaussian entries are N(0, 1); binary
/// entries are Bernoulli(p). Resamples until sigma_min > 1e-10 sigma_max and
/// cond(O) <= max_condition, at most 100 draws.
inline ObservationMap make_observation(Eigen::Index n, ObservationKind kind, const ObservationParams& params,
                                       std::uint64_t seed) {
  if (n < 1) fail(Errc::invalid_argument, "n must be at least 1");
  if (kind == ObservationKind::binary && !(params.bernoulli_p > 0.0 && params.bernoulli_p <= 1.0))
    fail(Errc::invalid_argument, "bernoulli_p must lie in (0, 1]");
  if (!(params.max_condition >= 1.0)) fail(Errc::invalid_argument, "max_condition must be at least 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution coin(std::min(params.bernoulli_p, 1.0));
  Matrix O(n, n);
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        O(i, j) = kind == ObservationKind::gaussian ? gauss(rng) : (coin(rng) ? 1.0 : 0.0);
    const Vector s = singular_values(O);
    const double lo = s(n - 1);
    if (lo > 1e-10 * s(0) && s(0) / lo <= params.max_condition) return ObservationMap::from_matrix(O);
  }
  fail(Errc::generation_failure, "no acceptable observation matrix in 100 draws");
}

/// Coordinates of v in the (real) eigenbasis of `s`.
inline Vector eigen_coordinates(const SpectralSummary& s, const Vector& v) {
  if (!s.is_real_diagonalizable) fail(Errc::not_diagonalizable, "eigenbasis is not real");
  return Eigen::PartialPivLU<Matrix>(s.eigenvectors).solve(v);
}

/// Replaces the reward by sum_j c_j w_{i_j}, scaled to unit norm. Requires a
/// real-diagonalizable kernel and checks minimality: every chosen eigenvector
/// carries a coordinate of magnitude > 1e-10 in the result.
inline MarkovProcess make_low_rank_reward(const MarkovProcess& proc, const RewardRecipe& recipe) {
  if (recipe.eig_indices.size() != recipe.coefficients.size() || recipe.eig_indices.empty())
    fail(Errc::invalid_argument, "reward recipe needs one coefficient per index");
  std::set<int> seen;
  for (int i : recipe.eig_indices) {
    if (i < 1 || i > proc.n()) fail(Errc::invalid_argument, "eigenvector index out of range");
    if (!seen.insert(i).second) fail(Errc::invalid_argument, "eigenvector indices must be distinct");
  }
  for (double c : recipe.coefficients)
    if (c == 0.0 || !std::isfinite(c)) fail(Errc::minimality_violation, "every coefficient must be nonzero");

  const SpectralSummary s = decompose(proc.P());
  if (!s.is_real_diagonalizable) fail(Errc::not_diagonalizable, "kernel is not real-diagonalizable");
  Vector r = Vector::Zero(proc.n());
  for (std::size_t j = 0; j < recipe.eig_indices.size(); ++j)
    r += recipe.coefficients[j] * s.eigenvectors.col(recipe.eig_indices[j] - 1);
  const double norm = r.norm();
  if (!(norm > 0.0)) fail(Errc::minimality_violation, "reward combination vanishes");
  r /= norm;
  const Vector coords = eigen_coordinates(s, r);
  for (int i : recipe.eig_indices)
    if (!(std::abs(coords(i - 1)) > 1e-10))
      fail(Errc::minimality_violation, "eigenvector " + std::to_string(i) + " does not contribute to the reward");
  return proc.with_reward(std::move(r));
}

}  // namespace lindyn
