// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Each criterion also has a wall-clock budget; exceeding it is a failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "../tools/cli.hpp"
#include "oracles.hpp"

using namespace lindyn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string kv(const std::string& key, double value) { return key + "=" + fmt("%.3g", value) + " "; }

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool pass = o.ok && in_time;
  if (!pass) ++failures;
  std::printf("%s %2d %-24s %s| %.1fs (budget %.0fs)%s\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs,
              budget_s, in_time ? "" : " over budget");
  std::fflush(stdout);
}

MarkovProcess gapped(std::uint64_t seed, Eigen::Index n = 8) {
  ChainRecipe r;
  r.n = n;
  r.seed = seed;
  return make_gapped_chain(r, 1e-3).proc;
}

/// Top-k eigenvectors of a symmetric matrix by the self-adjoint solver.
Matrix top_eigvecs(const Matrix& P, Eigen::Index k) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(P).eigenvectors().rightCols(k);
}

Matrix top_left_sv(const Matrix& P, Eigen::Index k) {
  return Eigen::JacobiSVD<Matrix>(P, Eigen::ComputeFullU).matrixU().leftCols(k);
}

Representation rep_at(const Matrix& Phi) {
  Representation rep;
  rep.Phi = Phi;
  rep.F = Matrix::Identity(Phi.cols(), Phi.cols());
  rep.Psi = Matrix::Zero(Phi.cols(), Phi.rows());
  rep.Vhat = Vector::Zero(Phi.cols());
  return rep;
}

FlowConfig flow(Loss loss) {
  FlowConfig cfg;
  cfg.loss = loss;
  cfg.record_every = 10000;
  return cfg;
}

// 1 ---------------------------------------------------------------------------
Outcome gradient_oracle() {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  int evaluations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 7);
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % std::min<Eigen::Index>(3, n));
    const auto p = validate_process(oracle::random_stochastic(n, rng), oracle::random_vector(n, rng), 0.9);
    Representation rep;
    rep.Phi = oracle::random_gaussian(n, k, rng);
    rep.F = oracle::random_gaussian(k, k, rng);
    rep.Psi = oracle::random_gaussian(k, n, rng);
    rep.Vhat = oracle::random_vector(k, rng);
    for (bool observed : {false, true}) {
      FlowConfig cfg;
      if (observed) cfg.observation = make_observation(n, ObservationKind::gaussian, {0.2, 100.0}, rng());
      const Matrix X = observed ? cfg.observation->O() : Matrix::Identity(n, n);
      for (Loss loss : {Loss::rec, Loss::lat, Loss::td, Loss::td_plus_lat, Loss::td_plus_rec}) {
        cfg.loss = loss;
        const Gradients g = loss_and_grads(p, rep, cfg);
        const oracle::FrozenLoss f(p, X, rep, loss);
        auto track = [&](const Matrix& analytic, const Matrix& fd) {
          worst = std::max(worst, oracle::rel_error(analytic, fd));
          ++evaluations;
        };
        track(g.dPhi, oracle::fd_gradient([&](const Matrix& x) { return f(x, rep.F, rep.Psi, rep.Vhat); }, rep.Phi));
        if (uses_rec(loss) || uses_lat(loss))
          track(g.dF, oracle::fd_gradient([&](const Matrix& x) { return f(rep.Phi, x, rep.Psi, rep.Vhat); }, rep.F));
        if (uses_rec(loss))
          track(g.dPsi, oracle::fd_gradient([&](const Matrix& x) { return f(rep.Phi, rep.F, x, rep.Vhat); }, rep.Psi));
        if (uses_td(loss))
          track(g.dVhat, oracle::fd_gradient([&](const Matrix& x) { return f(rep.Phi, rep.F, rep.Psi, x.col(0)); },
                                             Matrix(rep.Vhat)));
      }
    }
  }
  return {worst < 1e-5, kv("max_rel_error", worst) + kv("gradients", evaluations)};
}

// 2 ---------------------------------------------------------------------------
Outcome prop1_stationarity() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  int instances = 0, subsets = 0;
  for (std::uint64_t seed = 0; instances < 20; ++seed) {
    ChainRecipe recipe;
    recipe.n = 4 + static_cast<Eigen::Index>(seed % 6);
    recipe.seed = seed;
    std::optional<MarkovProcess> made;
    try {
      made = make_positive_chain(recipe);
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_spectrum) throw;
      continue;
    }
    const MarkovProcess& p = *made;
    ++instances;
    const Matrix W = Eigen::SelfAdjointEigenSolver<Matrix>(p.P()).eigenvectors();
    const FlowConfig cfg = flow(Loss::lat);
    for (int t = 0; t < 10; ++t) {
      // Random nonempty proper subset of eigenvector indices.
      std::vector<Eigen::Index> idx;
      for (Eigen::Index i = 0; i < p.n(); ++i)
        if (rng() % 2) idx.push_back(i);
      if (idx.empty()) idx.push_back(static_cast<Eigen::Index>(rng() % p.n()));
      Matrix Phi(p.n(), static_cast<Eigen::Index>(idx.size()));
      for (std::size_t j = 0; j < idx.size(); ++j) Phi.col(static_cast<Eigen::Index>(j)) = W.col(idx[j]);
      worst = std::max(worst, loss_and_grads(p, with_closed_forms(p, rep_at(Phi), cfg), cfg).norm());
      ++subsets;
    }
  }
  return {worst < 1e-10, kv("max_grad_norm", worst) + kv("subsets", subsets)};
}

// 3 ---------------------------------------------------------------------------
Outcome prop1_instability() {
  double min_jac = INFINITY, min_growth = INFINITY;
  int checked = 0, failed = 0;
  const Eigen::Index n = 6, k = 2;
  for (std::uint64_t inst = 0; inst < 10; ++inst) {
    const auto p = gapped(inst * 1000, n);
    std::vector<int> subset(static_cast<std::size_t>(k));
    std::vector<bool> pick(static_cast<std::size_t>(n), false);
    std::fill(pick.begin(), pick.begin() + k, true);
    do {
      subset.clear();
      for (Eigen::Index i = 0; i < n; ++i)
        if (pick[static_cast<std::size_t>(i)]) subset.push_back(static_cast<int>(i + 1));
      if (subset == std::vector<int>{1, 2}) continue;
      const CheckReport r = check_prop1(p, k, subset, inst);
      ++checked;
      if (!r.passed()) ++failed;
      min_jac = std::min(min_jac, r.measured.at("jacobian_max_real"));
      min_growth = std::min(min_growth, r.measured.at("escape_growth"));
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  const bool ok = failed == 0 && min_jac > 1e-6 && min_growth >= 10.0;
  return {ok, kv("subspaces", checked) + kv("min_jacobian_max_real", min_jac) + kv("min_escape_growth", min_growth)};
}

// 4 and 5 ----------------------------------------------------------------------
Outcome flow_quorum(Loss loss) {
  const auto p = gapped(0);
  const Matrix target = loss == Loss::rec ? top_left_sv(p.P(), 3) : top_eigvecs(p.P(), 3);
  FlowConfig cfg = flow(loss);
  cfg.max_steps = 200000;
  int hits = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SimulationResult res = simulate(p, init_representation(8, 3, seed), cfg);
    const double d = oracle::projector_distance(res.final_rep.Phi, target);
    worst = std::max(worst, d);
    if (d < 1e-3) ++hits;
  }
  return {hits >= 18, kv("successes_of_20", hits) + kv("max_dist", worst)};
}

// 6 ---------------------------------------------------------------------------
Outcome props3_4() {
  // The default suite instance and observation map.
  SuiteConfig suite;
  const auto reports = run_suite(suite, {"prop3_prop4"});
  const CheckReport& r = reports.at(0);
  const auto& m = r.measured;
  const double cond = std::stod(r.hypothesis_params.at("cond_O"));
  const bool grads = m.at("grad_norm_observed") < 1e-7;
  const bool jac = m.at("jacobian_gap_gradient_flow") < 1e-5;
  const bool span = m.at("rec_dist_claimed_span") < 1e-3;
  const bool ok = grads && jac && span && cond < 100.0;
  return {ok, kv("cond_O", cond) + kv("grad_norm_observed", m.at("grad_norm_observed")) +
                  kv("jacobian_gap", m.at("jacobian_gap_gradient_flow")) +
                  kv("rec_span_dist", m.at("rec_dist_claimed_span")) + "[coordinate-change gap " +
                  fmt("%.2g", m.at("jacobian_gap_coordinate_change")) + ", span dist to O^-1 U_k(PO) " +
                  fmt("%.2g", m.at("rec_dist_corrected_span")) + "] "};
}

// 7 ---------------------------------------------------------------------------
Outcome prop5() {
  ChainRecipe recipe;
  const auto p = make_low_rank_reward(make_gapped_chain(recipe, 1e-3).proc, {{2, 4}, {1.0, 0.5}});
  const CheckReport r = check_prop5(p, 3);

  // Independent construction: eigenvectors 2 and 4 plus the top one, with the
  // joint gradient and value error written out by hand.
  const Matrix W = Eigen::SelfAdjointEigenSolver<Matrix>(p.P()).eigenvectors();
  Matrix Phi(8, 3);
  Phi << W.col(6), W.col(4), W.col(7);
  Phi = oracle::gram_schmidt(Phi);
  const Matrix Pt = oracle::transpose(Phi);
  const Matrix PPhi = oracle::matmul(p.P(), Phi);
  const Matrix F = Eigen::FullPivLU<Matrix>(oracle::matmul(Pt, Phi)).solve(oracle::matmul(Pt, PPhi));
  const Matrix M = oracle::matmul(Pt, Phi) - p.gamma() * oracle::matmul(Pt, PPhi);
  const Vector Vhat = Eigen::FullPivLU<Matrix>(M).solve(Vector(oracle::matmul(Pt, p.r())));
  const Matrix lat_res = oracle::matmul(Phi, F) - PPhi;
  const Vector td_res = Vector(oracle::matmul(Phi, Vhat)) - p.r() - p.gamma() * Vector(oracle::matmul(PPhi, Vhat));
  const Matrix dPhi = 2.0 * oracle::matmul(lat_res, oracle::transpose(F)) + 2.0 * td_res * Vhat.transpose();
  const Vector dVhat = 2.0 * Vector(oracle::matmul(Pt, td_res));
  const Matrix dF = 2.0 * oracle::matmul(Pt, lat_res);
  const double grad = std::sqrt(oracle::sq_frobenius(dPhi) + oracle::sq_frobenius(dF) + dVhat.squaredNorm());
  const double verr =
      (Vector(oracle::matmul(Phi, Vhat)) - oracle::neumann_value(p.P(), p.r(), p.gamma())).norm();

  const double lib_grad = r.measured.at("grad_norm_joint");
  const double lib_err = r.measured.at("value_error");
  const bool ok = r.passed() && lib_grad < 1e-9 && lib_err < 1e-8 && grad < 1e-9 && verr < 1e-8;
  return {ok, kv("joint_grad", lib_grad) + kv("value_error", lib_err) + kv("oracle_grad", grad) +
                  kv("oracle_value_error", verr)};
}

// 8 ---------------------------------------------------------------------------
Outcome prop6() {
  const auto p = counterexample_instance();
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(s);
  const CheckReport r = check_prop6(p, 2, seeds);
  const Matrix U = top_left_sv(p.P(), 2);
  const Vector V = oracle::neumann_value(p.P(), p.r(), p.gamma());
  const double residual = (V - oracle::project(U, V)).norm();
  const double bound = std::max(1e-3, 0.5 * residual);
  const double min_err = r.measured.at("min_value_error");
  const bool ok = r.passed() && min_err > bound && r.measured.at("converged_fraction") == 1.0;
  return {ok, kv("min_value_error", min_err) + kv("bound", bound) + kv("oracle_residual", residual) +
                  kv("converged_fraction", r.measured.at("converged_fraction"))};
}

// 9 ---------------------------------------------------------------------------
Outcome prop7() {
  const DistractionPair d = default_distraction_pair();
  const CheckReport r = check_prop7(d.foreground, d.background, 2);
  const MarkovProcess c = kron_compose({d.foreground, d.background, true});
  const Matrix top = top_eigvecs(c.P(), 2);
  // span{1 (x) v_i} for the top two background eigenvectors.
  const Matrix Wn = Eigen::SelfAdjointEigenSolver<Matrix>(d.background.P()).eigenvectors().rightCols(2);
  const Matrix distractor = kron(Matrix::Ones(2, 1), Wn);
  const double dist = oracle::projector_distance(top, distractor);
  const Vector proj = oracle::project(top, c.r());
  const double mean = d.foreground.r().mean();
  const double gap = (proj - Vector::Constant(c.n(), mean)).cwiseAbs().maxCoeff();
  const bool ok = r.passed() && dist < 1e-9 && gap < 1e-9;
  return {ok, kv("span_dist", dist) + kv("projection_gap", gap) + kv("mean_r_M", mean) +
                  kv("check_span_dist", r.measured.at("dist_topk_to_distractor_span"))};
}

// 10 --------------------------------------------------------------------------
Outcome lemma_suite() {
  std::mt19937_64 rng(10);
  double kron_gap = 0.0, value_gap = 0.0, lossless = 0.0, td_gap = 0.0, td_min_real = INFINITY;
  for (int t = 0; t < 10; ++t) {
    const auto a = gapped(rng(), 3 + static_cast<Eigen::Index>(rng() % 3));
    const auto b = gapped(rng(), 2 + static_cast<Eigen::Index>(rng() % 3));
    const SpectralSummary sc = decompose(kron(a.P(), b.P()));
    const Vector la = Eigen::SelfAdjointEigenSolver<Matrix>(a.P()).eigenvalues();
    const Vector lb = Eigen::SelfAdjointEigenSolver<Matrix>(b.P()).eigenvalues();
    std::vector<double> prod;
    for (Eigen::Index i = 0; i < la.size(); ++i)
      for (Eigen::Index j = 0; j < lb.size(); ++j) prod.push_back(la(i) * lb(j));
    std::sort(prod.rbegin(), prod.rend());
    for (std::size_t i = 0; i < prod.size(); ++i)
      kron_gap = std::max(kron_gap, std::abs(sc.eigenvalues(static_cast<Eigen::Index>(i)).real() - prod[i]));

    const auto p = validate_process(oracle::random_stochastic(8, rng), oracle::random_vector(8, rng), 0.9);
    value_gap = std::max(value_gap, (value_exact(p) - value_iterative(p, 100000, 1e-12)).cwiseAbs().maxCoeff());
  }
  for (int t = 0; t < 20; ++t) {
    const auto base = gapped(rng());
    const int i = 1 + static_cast<int>(rng() % 8);
    const int j = 1 + static_cast<int>((static_cast<std::uint64_t>(i) + rng() % 7) % 8);
    const auto p = make_low_rank_reward(base, {{i, j}, {1.0, -0.5}});
    const Eigen::SelfAdjointEigenSolver<Matrix> es(p.P());
    // Invariant reward-spanning basis: the reward's eigenvectors plus one more.
    int extra = 1;
    while (extra == i || extra == j) ++extra;
    std::vector<int> chosen{i, j, extra};
    Matrix Phi(8, 3);
    for (int c = 0; c < 3; ++c) Phi.col(c) = es.eigenvectors().col(8 - chosen[static_cast<std::size_t>(c)]);
    const Matrix Q = oracle::gram_schmidt(Phi * oracle::random_gaussian(3, 3, rng));
    lossless = std::max(lossless, (Q * two_timescale_Vhat(p, Q) - oracle::neumann_value(p.P(), p.r(), p.gamma()))
                                      .cwiseAbs()
                                      .maxCoeff());
    // A_Phi on an invariant subspace has spectrum {1 - gamma lambda} of the chosen eigenvalues.
    const ComplexVector ev = td_iteration_matrix(p, Q).eigenvalues();
    std::vector<double> got, want;
    for (Eigen::Index e = 0; e < ev.size(); ++e) {
      got.push_back(ev(e).real());
      td_min_real = std::min(td_min_real, ev(e).real());
      td_gap = std::max(td_gap, std::abs(ev(e).imag()));
    }
    for (int c : chosen) want.push_back(1.0 - p.gamma() * es.eigenvalues()(8 - c));
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    for (std::size_t e = 0; e < got.size(); ++e) td_gap = std::max(td_gap, std::abs(got[e] - want[e]));
  }
  const bool ok = kron_gap < 1e-10 && value_gap < 1e-8 && lossless < 1e-10 && td_gap < 1e-10 && td_min_real > 0.0;
  return {ok, kv("kron_gap", kron_gap) + kv("value_gap", value_gap) + kv("lossless_error", lossless) +
                  kv("td_spectrum_gap", td_gap) + kv("td_min_real", td_min_real)};
}

// 11 --------------------------------------------------------------------------
Outcome plumbing() {
  std::mt19937_64 rng(11);
  bool exact = true;
  auto same = [](const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
  };
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 10);
    const auto p = validate_process(oracle::random_stochastic(n, rng), oracle::random_vector(n, rng), 0.95);
    const auto q = process_from_json(parse_json(to_json(p).dump()));
    exact = exact && same(p.P(), q.P()) && same(p.r(), q.r()) && p.gamma() == q.gamma();
    const auto o = make_observation(n, ObservationKind::gaussian, {}, rng());
    exact = exact && same(o.O(), observation_from_json(parse_json(to_json(o).dump())).O());
    const Representation rep = init_representation(n, 1 + static_cast<Eigen::Index>(rng() % n), rng());
    const Representation back = representation_from_json(parse_json(to_json(rep).dump()));
    exact = exact && same(rep.Phi, back.Phi) && same(rep.F, back.F) && same(rep.Psi, back.Psi) &&
            same(rep.Vhat, back.Vhat);
    const SpectralSummary s = decompose(p.P());
    const SpectralSummary sb = spectral_from_json(parse_json(to_json(s).dump()));
    exact = exact && (s.eigenvalues.array() == sb.eigenvalues.array()).all() && same(s.eigenvectors, sb.eigenvectors) &&
            same(s.left_singular, sb.left_singular) && same(s.singular_values, sb.singular_values);
  }

  const fs::path dir = fs::temp_directory_path() / "lindyn_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_text_file(dir / "config.json", R"({"instance": {"kind": "chain", "n": 8, "seed": 0},
      "reward": {"eig_indices": [2, 4], "coefficients": [1.0, 0.5]}, "verify": {"k": 3}})");
  int codes[2];
  std::string reports[2];
  for (int run = 0; run < 2; ++run) {
    const std::string out = (dir / ("run" + std::to_string(run))).string();
    const std::string cfg = (dir / "config.json").string();
    const char* argv[] = {"lindyn", "verify", "--config", cfg.c_str(), "--seed", "0,1", "--output-dir", out.c_str()};
    std::ostringstream sink, err;
    codes[run] = cli::run_cli(8, argv, sink, err);
    reports[run] = read_text_file(fs::path(out) / "report.jsonl");
  }
  const bool identical = reports[0] == reports[1] && codes[0] == codes[1] && !reports[0].empty();
  return {exact && identical, std::string("round_trip_bit_exact=") + (exact ? "yes" : "no") +
                                  " verify_byte_identical=" + (identical ? "yes" : "no") + " "};
}

}  // namespace

int main() {
  criterion(1, "gradient_oracle", 30, gradient_oracle);
  criterion(2, "prop1_stationarity", 10, prop1_stationarity);
  criterion(3, "prop1_instability", 120, prop1_instability);
  criterion(4, "prop2_convergence", 120, [] { return flow_quorum(Loss::rec); });
  criterion(5, "prop1_convergence", 120, [] { return flow_quorum(Loss::lat); });
  criterion(6, "props3_4_observation", 60, props3_4);
  criterion(7, "prop5_joint_stationary", 10, prop5);
  criterion(8, "prop6_counterexample", 120, prop6);
  criterion(9, "prop7_distraction", 10, prop7);
  criterion(10, "lemma_suite", 60, lemma_suite);
  criterion(11, "plumbing", 30, plumbing);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
