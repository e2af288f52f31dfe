#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lindyn/error.hpp"
#include "lindyn/linalg.hpp"
#include "lindyn/mdp.hpp"
#include "lindyn/spectral.hpp"

namespace lindyn {

/// Learnable matrices of the linear model: encoder Phi (n x k), latent model
/// F (k x k), decoder Psi (k x n), value weights Vhat (k). Reward weights are
/// carried along but no loss reads them.
struct Representation {
  Matrix Phi;
  Matrix F;
  Matrix Psi;
  Vector Vhat;
  std::optional<Vector> rhat;

  Eigen::Index n() const { return Phi.rows(); }
  Eigen::Index k() const { return Phi.cols(); }
};

enum class Loss { rec, lat, td, td_plus_lat, td_plus_rec };

inline bool uses_rec(Loss l) { return l == Loss::rec || l == Loss::td_plus_rec; }
inline bool uses_lat(Loss l) { return l == Loss::lat || l == Loss::td_plus_lat; }
inline bool uses_td(Loss l) { return l == Loss::td || l == Loss::td_plus_lat || l == Loss::td_plus_rec; }

inline const char* to_string(Loss l) {
  switch (l) {
    case Loss::rec: return "rec";
    case Loss::lat: return "lat";
    case Loss::td: return "td";
    case Loss::td_plus_lat: return "td_plus_lat";
    case Loss::td_plus_rec: return "td_plus_rec";
  }
  return "?";
}

inline Loss loss_from_string(const std::string& s) {
  if (s == "rec") return Loss::rec;
  if (s == "lat") return Loss::lat;
  if (s == "td") return Loss::td;
  if (s == "td_plus_lat") return Loss::td_plus_lat;
  if (s == "td_plus_rec") return Loss::td_plus_rec;
  fail(Errc::invalid_argument, "unknown loss '" + s + "'");
}

struct FlowConfig {
  Loss loss = Loss::lat;
  bool two_timescale = true;
  std::optional<ObservationMap> observation;
  double step_size = 1e-2;
  /// Multiplies the F, Psi and Vhat steps when not in two-timescale mode.
  double rate_ratio = 1.0;
  int max_steps = 200000;
  double stationarity_tol = 1e-8;
  int record_every = 100;

  void validate() const {
    if (!(step_size > 0.0 && step_size <= 1.0)) fail(Errc::invalid_argument, "step_size must lie in (0, 1]");
    if (!(stationarity_tol > 0.0)) fail(Errc::invalid_argument, "stationarity_tol must be positive");
    if (!(rate_ratio > 0.0)) fail(Errc::invalid_argument, "rate_ratio must be positive");
    if (max_steps < 0) fail(Errc::invalid_argument, "max_steps must be nonnegative");
    if (record_every < 1) fail(Errc::invalid_argument, "record_every must be at least 1");
  }
};

/// Population loss and its (semi-)gradients. Parameters a loss does not use
/// get zero gradients of the right shape.
struct Gradients {
  double loss = 0.0;
  Matrix dPhi;
  Matrix dF;
  Matrix dPsi;
  Vector dVhat;

  double norm() const {
    return std::sqrt(dPhi.squaredNorm() + dF.squaredNorm() + dPsi.squaredNorm() + dVhat.squaredNorm());
  }
};

namespace detail {

/// Dense copies of the quantities every flow evaluation needs. X is the
/// observation matrix, or empty for the identity.
struct FlowContext {
  Matrix P;
  Vector r;
  double gamma = 0.0;
  std::optional<Matrix> X;
  Matrix PX;

  FlowContext(const MarkovProcess& proc, const std::optional<ObservationMap>& obs)
      : P(proc.P()), r(proc.r()), gamma(proc.gamma()) {
    if (obs) {
      if (obs->n() != proc.n()) fail(Errc::shape_mismatch, "observation map size differs from state count");
      X = obs->O();
      PX = P * (*X);
    } else {
      PX = P;
    }
  }

  Eigen::Index n() const { return P.rows(); }
  Matrix apply(const Matrix& m) const { return X ? Matrix((*X) * m) : m; }
  Matrix pull(const Matrix& m) const { return X ? Matrix(X->transpose() * m) : m; }
};

inline void check_shapes(const FlowContext& ctx, const Representation& rep, Loss loss) {
  const Eigen::Index n = ctx.n();
  const Eigen::Index k = rep.k();
  if (rep.Phi.rows() != n) fail(Errc::shape_mismatch, "Phi must have n rows");
  if (k < 1 || k > n) fail(Errc::shape_mismatch, "embedding dimension must lie in [1, n]");
  if ((uses_lat(loss) || uses_rec(loss)) && (rep.F.rows() != k || rep.F.cols() != k))
    fail(Errc::shape_mismatch, "F must be k x k");
  if (uses_rec(loss) && (rep.Psi.rows() != k || rep.Psi.cols() != n)) fail(Errc::shape_mismatch, "Psi must be k x n");
  if (uses_td(loss) && rep.Vhat.size() != k) fail(Errc::shape_mismatch, "Vhat must have length k");
}

inline Gradients loss_and_grads(const FlowContext& ctx, const Representation& rep, Loss loss) {
  check_shapes(ctx, rep, loss);
  const Eigen::Index n = ctx.n();
  const Eigen::Index k = rep.k();
  Gradients g;
  g.dPhi = Matrix::Zero(n, k);
  g.dF = Matrix::Zero(uses_lat(loss) || uses_rec(loss) ? k : 0, uses_lat(loss) || uses_rec(loss) ? k : 0);
  g.dPsi = Matrix::Zero(uses_rec(loss) ? k : 0, uses_rec(loss) ? n : 0);
  g.dVhat = Vector::Zero(uses_td(loss) ? k : 0);
  const Matrix A = ctx.apply(rep.Phi);

  if (uses_rec(loss)) {
    const Matrix FPsi = rep.F * rep.Psi;
    const Matrix R = A * FPsi - ctx.PX;
    g.loss += R.squaredNorm();
    g.dPhi += 2.0 * ctx.pull(R * FPsi.transpose());
    g.dF += 2.0 * A.transpose() * R * rep.Psi.transpose();
    g.dPsi += 2.0 * (A * rep.F).transpose() * R;
  }
  if (uses_lat(loss)) {
    // Target P X Phi is held fixed.
    const Matrix R = A * rep.F - ctx.P * A;
    g.loss += R.squaredNorm();
    g.dPhi += 2.0 * ctx.pull(R * rep.F.transpose());
    g.dF += 2.0 * A.transpose() * R;
  }
  if (uses_td(loss)) {
    // Bootstrapped target r + gamma P X Phi Vhat is held fixed.
    const Vector y = A * rep.Vhat;
    const Vector R = y - ctx.r - ctx.gamma * (ctx.P * y);
    g.loss += R.squaredNorm();
    g.dPhi += 2.0 * ctx.pull(R * rep.Vhat.transpose());
    g.dVhat += 2.0 * A.transpose() * R;
  }
  return g;
}

/// Gram matrix (X Phi)^T (X Phi); Collapse when it is numerically singular.
inline Matrix checked_gram(const Matrix& A) {
  const Matrix G = A.transpose() * A;
  const Vector s = Eigen::JacobiSVD<Matrix>(G).singularValues();
  if (!(s(s.size() - 1) > 1e-10 * std::max(1.0, s(0))))
    fail(Errc::collapse, "encoder Gram matrix is singular (sigma_min <= 1e-10)");
  return G;
}

inline Matrix closed_form_F(const FlowContext& ctx, const Matrix& Phi) {
  const Matrix A = ctx.apply(Phi);
  const Matrix G = checked_gram(A);
  return G.ldlt().solve(A.transpose() * (ctx.P * A));
}

inline Matrix closed_form_Psi(const FlowContext& ctx, const Matrix& Phi, const Matrix& F) {
  const Vector sf = Eigen::JacobiSVD<Matrix>(F).singularValues();
  if (!(sf(sf.size() - 1) > 1e-10 * std::max(1.0, sf(0)))) fail(Errc::singular_f, "latent model F is singular");
  const Matrix A = ctx.apply(Phi);
  const Matrix G = checked_gram(A);
  const Matrix core = G.ldlt().solve(A.transpose() * ctx.PX);
  return F.partialPivLu().solve(core);
}

inline Matrix td_iteration_matrix(const FlowContext& ctx, const Matrix& Phi) {
  const Matrix A = ctx.apply(Phi);
  return A.transpose() * A - ctx.gamma * A.transpose() * (ctx.P * A);
}

inline Vector closed_form_Vhat(const FlowContext& ctx, const Matrix& Phi) {
  const Matrix M = td_iteration_matrix(ctx, Phi);
  const ComplexVector ev = M.eigenvalues();
  if (!(ev.real().minCoeff() > 0.0))
    fail(Errc::td_unstable, "TD iteration matrix has an eigenvalue with nonpositive real part");
  Vector v = M.partialPivLu().solve(ctx.apply(Phi).transpose() * ctx.r);
  if (!v.allFinite()) fail(Errc::td_unstable, "TD fixed point is not finite");
  return v;
}

/// Replaces the fast variables by their optima for the current encoder.
inline Representation substitute(const FlowContext& ctx, Representation rep, Loss loss) {
  if (uses_lat(loss)) rep.F = closed_form_F(ctx, rep.Phi);
  if (uses_rec(loss)) rep.Psi = closed_form_Psi(ctx, rep.Phi, rep.F);
  if (uses_td(loss)) rep.Vhat = closed_form_Vhat(ctx, rep.Phi);
  return rep;
}

struct StepState {
  Representation rep;
  Gradients grads;
};

inline StepState prepare(const FlowContext& ctx, const Representation& rep, const FlowConfig& cfg) {
  StepState s{cfg.two_timescale ? substitute(ctx, rep, cfg.loss) : rep, {}};
  s.grads = loss_and_grads(ctx, s.rep, cfg.loss);
  return s;
}

/// One explicit Euler step with backtracking: the step is halved while the
/// loss would grow by more than 10% (plus a 1e-14 absolute slack), at most
/// 30 times. Candidates that collapse or break TD stability count as growth.
inline StepState euler_step(const FlowContext& ctx, const StepState& cur, const FlowConfig& cfg) {
  if (cur.grads.norm() == 0.0) return cur;
  const double limit = 1.1 * cur.grads.loss + 1e-14;
  double h = cfg.step_size;
  for (int halvings = 0; halvings <= 30; ++halvings, h *= 0.5) {
    Representation cand = cur.rep;
    cand.Phi -= h * cur.grads.dPhi;
    if (!cfg.two_timescale) {
      const double hf = h * cfg.rate_ratio;
      if (cand.F.size() && cur.grads.dF.size()) cand.F -= hf * cur.grads.dF;
      if (cand.Psi.size() && cur.grads.dPsi.size()) cand.Psi -= hf * cur.grads.dPsi;
      if (cand.Vhat.size() && cur.grads.dVhat.size()) cand.Vhat -= hf * cur.grads.dVhat;
    }
    try {
      StepState next = prepare(ctx, cand, cfg);
      if (std::isfinite(next.grads.loss) && next.grads.loss <= limit && next.rep.Phi.allFinite()) return next;
    } catch (const Error& e) {
      if (e.code() != Errc::collapse && e.code() != Errc::td_unstable && e.code() != Errc::singular_f) throw;
    }
  }
  fail(Errc::step_rejected, "loss kept increasing after 30 step halvings");
}

/// Encoder velocity -dL/dPhi with the fast variables substituted (two-timescale)
/// or held at their values in `rep`.
inline Matrix phi_velocity(const FlowContext& ctx, const Representation& rep, const Matrix& Phi,
                           const FlowConfig& cfg) {
  Representation at = rep;
  at.Phi = Phi;
  if (cfg.two_timescale) at = substitute(ctx, std::move(at), cfg.loss);
  return -loss_and_grads(ctx, at, cfg.loss).dPhi;
}

}  // namespace detail

inline Gradients loss_and_grads(const MarkovProcess& proc, const Representation& rep, const FlowConfig& cfg) {
  return detail::loss_and_grads(detail::FlowContext(proc, cfg.observation), rep, cfg.loss);
}

/// F* = (Phi^T X^T X Phi)^-1 Phi^T X^T P X Phi.
inline Matrix two_timescale_F(const MarkovProcess& proc, const Matrix& Phi,
                              const std::optional<ObservationMap>& obs = std::nullopt) {
  const detail::FlowContext ctx(proc, obs);
  if (Phi.rows() != proc.n()) fail(Errc::shape_mismatch, "Phi must have n rows");
  return detail::closed_form_F(ctx, Phi);
}

/// Psi* = F^-1 (Phi^T X^T X Phi)^-1 Phi^T X^T P X, the least-squares decoder.
inline Matrix two_timescale_Psi(const MarkovProcess& proc, const Matrix& Phi, const Matrix& F,
                                const std::optional<ObservationMap>& obs = std::nullopt) {
  const detail::FlowContext ctx(proc, obs);
  if (Phi.rows() != proc.n() || F.rows() != Phi.cols() || F.cols() != Phi.cols())
    fail(Errc::shape_mismatch, "Phi must be n x k and F k x k");
  return detail::closed_form_Psi(ctx, Phi, F);
}

/// TD fixed point Vhat* = A_Phi^-1 Phi^T X^T r with A_Phi = Phi^T X^T (I - gamma P) X Phi.
/// For orthonormal Phi and X = I this is (I - gamma Phi^T P Phi)^-1 Phi^T r.
/// TDUnstable unless every eigenvalue of A_Phi has positive real part.
inline Vector two_timescale_Vhat(const MarkovProcess& proc, const Matrix& Phi,
                                 const std::optional<ObservationMap>& obs = std::nullopt) {
  const detail::FlowContext ctx(proc, obs);
  if (Phi.rows() != proc.n()) fail(Errc::shape_mismatch, "Phi must have n rows");
  return detail::closed_form_Vhat(ctx, Phi);
}

inline Matrix td_iteration_matrix(const MarkovProcess& proc, const Matrix& Phi,
                                  const std::optional<ObservationMap>& obs = std::nullopt) {
  return detail::td_iteration_matrix(detail::FlowContext(proc, obs), Phi);
}

/// Closed-form fast variables for the configured loss at the current encoder.
inline Representation with_closed_forms(const MarkovProcess& proc, const Representation& rep, const FlowConfig& cfg) {
  return detail::substitute(detail::FlowContext(proc, cfg.observation), rep, cfg.loss);
}

/// Default initialization: orthonormalized Gaussian Phi, F = I + 0.01 N(0,1),
/// Psi and Vhat at 0.01 N(0,1) scale.
inline Representation init_representation(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  if (k < 1 || k > n) fail(Errc::invalid_argument, "embedding dimension must lie in [1, n]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = gauss(rng);
    return m;
  };
  Representation rep;
  rep.Phi = orthonormalize(draw(n, k));
  rep.F = Matrix::Identity(k, k) + 0.01 * draw(k, k);
  rep.Psi = 0.01 * draw(k, n);
  rep.Vhat = 0.01 * draw(k, 1).col(0);
  return rep;
}

/// One Euler step of the configured flow. In two-timescale mode the returned
/// representation carries the closed-form fast variables at the new encoder.
inline Representation flow_step(const MarkovProcess& proc, const Representation& rep, const FlowConfig& cfg) {
  cfg.validate();
  const detail::FlowContext ctx(proc, cfg.observation);
  return detail::euler_step(ctx, detail::prepare(ctx, rep, cfg), cfg).rep;
}

struct TrajectoryRecord {
  int step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double dist_top_eig = 0.0;
  double dist_top_sv = 0.0;
  double value_error = 0.0;
  double collapse_min_sv = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  bool converged = false;
  int steps_taken = 0;
  /// Set when sigma_min(Phi) fell below half its initial value at a record.
  bool collapse_flag = false;
};

struct SimulationResult {
  Trajectory trajectory;
  Representation final_rep;
};

/// Reference spaces for trajectory metrics: the decomposition of P, or of
/// O^-1 P O when an observation map is configured.
struct FlowTargets {
  std::optional<Subspace> top_eig;
  std::optional<Subspace> top_sv;
  Vector value;
};

inline FlowTargets flow_targets(const MarkovProcess& proc, Eigen::Index k, const std::optional<ObservationMap>& obs) {
  FlowTargets t;
  Matrix T = proc.P();
  if (obs) T = obs->O().partialPivLu().solve(proc.P() * obs->O());
  const SpectralSummary s = decompose(T);
  try {
    t.top_eig = top_k_subspace(s, k, SubspaceKind::eigen);
  } catch (const Error&) {
  }
  try {
    t.top_sv = top_k_subspace(s, k, SubspaceKind::left_singular);
  } catch (const Error&) {
  }
  t.value = value_exact(proc);
  return t;
}

namespace detail {

inline TrajectoryRecord make_record(const FlowContext& ctx, const FlowTargets& targets, const StepState& s, int step) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  TrajectoryRecord rec;
  rec.step = step;
  rec.loss = s.grads.loss;
  rec.grad_norm = s.grads.norm();
  rec.collapse_min_sv = sigma_min(s.rep.Phi);
  rec.dist_top_eig = nan;
  rec.dist_top_sv = nan;
  if (rec.collapse_min_sv > 1e-12) {
    const Subspace span = Subspace::span_of(s.rep.Phi);
    if (targets.top_eig) rec.dist_top_eig = subspace_distance(span, *targets.top_eig);
    if (targets.top_sv) rec.dist_top_sv = subspace_distance(span, *targets.top_sv);
  }
  rec.value_error = s.rep.Vhat.size() == s.rep.k()
                        ? (ctx.apply(s.rep.Phi) * s.rep.Vhat - targets.value).norm()
                        : nan;
  return rec;
}

}  // namespace detail

/// Runs the flow until the gradient norm drops below stationarity_tol or
/// max_steps steps have been taken. Records step 0, every record_every-th
/// step, and the last step.
inline SimulationResult simulate(const MarkovProcess& proc, const Representation& rep0, const FlowConfig& cfg) {
  cfg.validate();
  const detail::FlowContext ctx(proc, cfg.observation);
  detail::check_shapes(ctx, rep0, cfg.loss);
  const FlowTargets targets = flow_targets(proc, rep0.k(), cfg.observation);

  SimulationResult out;
  auto& traj = out.trajectory;
  detail::StepState cur = detail::prepare(ctx, rep0, cfg);
  traj.records.push_back(detail::make_record(ctx, targets, cur, 0));
  const double initial_min_sv = traj.records.front().collapse_min_sv;

  int step = 0;
  while (true) {
    if (cur.grads.norm() < cfg.stationarity_tol) {
      traj.converged = true;
      break;
    }
    if (step >= cfg.max_steps) break;
    cur = detail::euler_step(ctx, cur, cfg);
    ++step;
    if (step % cfg.record_every == 0) traj.records.push_back(detail::make_record(ctx, targets, cur, step));
  }
  if (traj.records.back().step != step) traj.records.push_back(detail::make_record(ctx, targets, cur, step));
  traj.steps_taken = step;
  for (const auto& r : traj.records)
    if (r.collapse_min_sv < 0.5 * initial_min_sv) traj.collapse_flag = true;
  out.final_rep = std::move(cur.rep);
  return out;
}

enum class JacobianMode {
  /// Jacobian of Phi' = -dL/dPhi, the flow flow_step discretizes.
  gradient_flow,
  /// Jacobian of x' = O^-1 f(O x) with f the observation-free flow: the plain
  /// dynamics written in observation coordinates. Needs an observation map.
  coordinate_change,
};

struct JacobianOptions {
  JacobianMode mode = JacobianMode::gradient_flow;
  /// Restrict inputs and outputs to directions orthogonal to span(Phi).
  bool orthogonal_only = false;
  double h = 1e-6;
  double stationarity_threshold = 1e-6;
};

struct JacobianResult {
  Matrix jacobian;
  /// Sorted by descending real part.
  ComplexVector eigenvalues;

  double max_real() const { return eigenvalues.size() ? eigenvalues.real().maxCoeff() : -INFINITY; }
};

/// Central-difference Jacobian of the vectorized (column-major) encoder flow
/// at an approximately stationary point.
inline JacobianResult jacobian_at(const MarkovProcess& proc, const Representation& rep, const FlowConfig& cfg,
                                  const JacobianOptions& opts = {}) {
  const detail::FlowContext ctx(proc, cfg.observation);
  detail::check_shapes(ctx, rep, cfg.loss);
  const Eigen::Index n = rep.n();
  const Eigen::Index k = rep.k();

  std::function<Matrix(const Matrix&)> velocity;
  double stationarity = 0.0;
  if (opts.mode == JacobianMode::gradient_flow) {
    velocity = [&](const Matrix& Phi) { return detail::phi_velocity(ctx, rep, Phi, cfg); };
    stationarity = detail::prepare(ctx, rep, cfg).grads.norm();
  } else {
    if (!cfg.observation) fail(Errc::invalid_argument, "coordinate_change mode needs an observation map");
    const Matrix O = cfg.observation->O();
    auto lu = std::make_shared<Eigen::PartialPivLU<Matrix>>(O);
    auto plain = std::make_shared<detail::FlowContext>(proc, std::nullopt);
    auto O_inv = std::make_shared<Matrix>(lu->inverse());
    velocity = [&, O, lu, plain, O_inv](const Matrix& x) -> Matrix {
      Representation mapped = rep;
      if (mapped.Psi.size()) mapped.Psi = mapped.Psi * (*O_inv);
      return lu->solve(detail::phi_velocity(*plain, mapped, O * x, cfg));
    };
    stationarity = velocity(rep.Phi).norm();
  }
  if (!(stationarity < opts.stationarity_threshold))
    fail(Errc::not_stationary, "gradient norm " + std::to_string(stationarity) + " above stationarity threshold");

  Matrix basis;  // n x m columns spanning the input directions of one encoder column
  if (opts.orthogonal_only)
    basis = orthogonal_complement(rep.Phi);
  else
    basis = Matrix::Identity(n, n);
  const Eigen::Index m = basis.cols();
  const Eigen::Index dim = m * k;
  Matrix J(dim, dim);
  for (Eigen::Index col = 0; col < k; ++col) {
    for (Eigen::Index b = 0; b < m; ++b) {
      Matrix delta = Matrix::Zero(n, k);
      delta.col(col) = basis.col(b);
      const Matrix diff = (velocity(rep.Phi + opts.h * delta) - velocity(rep.Phi - opts.h * delta)) / (2.0 * opts.h);
      const Matrix reduced = basis.transpose() * diff;  // m x k
      J.col(col * m + b) = vec(reduced);
    }
  }
  JacobianResult out;
  out.jacobian = J;
  const ComplexVector ev = Eigen::EigenSolver<Matrix>(J, false).eigenvalues();
  const auto order = detail::eigen_order(ev);
  out.eigenvalues = ComplexVector(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) out.eigenvalues(i) = ev(order[i]);
  return out;
}

}  // namespace lindyn
