// A slow background process takes over the top eigenspace of a product MDP.
// Prints how much of the value function each candidate subspace can express.

#include <cstdio>
#include <vector>

#include "lindyn/lindyn.hpp"

using namespace lindyn;

int main() {
  const std::vector<double> fg_spec{1.0, 0.5};
  const std::vector<double> bg_spec{1.0, 0.95, 0.9};
  Vector r_fg(2);
  r_fg << 1.0, 0.0;
  const MarkovProcess fg = make_chain_with_spectrum(fg_spec, 0.9).with_reward(r_fg);
  const MarkovProcess bg = make_chain_with_spectrum(bg_spec, 0.9);
  const MarkovProcess composed = kron_compose({fg, bg, true});

  const Vector V = value_exact(composed);
  const SpectralSummary s = decompose(composed.P());
  std::printf("composed eigenvalues:");
  for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i) std::printf(" %.3f", s.eigenvalues(i).real());
  std::printf("\n");

  const Subspace top = top_k_subspace(s, 2, SubspaceKind::eigen);
  const Vector proj = project_vector(top, composed.r());
  std::printf("reward projected on top-2 eigenspace:");
  for (Eigen::Index i = 0; i < proj.size(); ++i) std::printf(" %.3f", proj(i));
  std::printf("\n");
  std::printf("value residual, top-2 eigenspace:      %.6f\n", (V - project_vector(top, V)).norm());

  const Matrix fg_basis = kron(decompose(fg.P()).eigenvectors, Matrix::Ones(3, 1));
  const Subspace fg_span = Subspace::span_of(fg_basis);
  std::printf("value residual, foreground eigenspace: %.6f\n", (V - project_vector(fg_span, V)).norm());
}
