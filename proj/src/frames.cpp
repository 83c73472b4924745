#include "crsim/frames.hpp"

#include <cmath>

#include "crsim/numerics.hpp"

namespace crsim {

namespace {

std::string label_string(const std::array<int, 3>& l) {
  return "|" + std::to_string(l[0]) + std::to_string(l[1]) + std::to_string(l[2]) + ">";
}

}  // namespace

DressedBasis diagonalize_bare(const CMat& h0, const BasisLayout& layout,
                              double min_overlap_error) {
  if (h0.rows() != layout.dim())
    throw std::invalid_argument("diagonalize_bare: dimension mismatch");
  const EigResult eig = eig_hermitian(h0);
  const int n = layout.dim();

  // Assign each eigenvector the bare index of its dominant component. Ties
  // resolve to the lower bare index; a second claim on the same index means
  // the labeling is not a bijection and the point is degenerate.
  std::vector<int> claimed(static_cast<size_t>(n), -1);
  double min_overlap = 1.0;
  for (int k = 0; k < n; ++k) {
    int best = 0;
    double best_w = -1.0;
    for (int i = 0; i < n; ++i) {
      const double w = std::norm(eig.eigenvectors(i, k));
      // Ties resolve to the lower bare index; both members of an exactly
      // hybridized pair then claim it, which is the intended failure.
      if (w > best_w + 1e-12) {
        best_w = w;
        best = i;
      }
    }
    if (best_w < min_overlap_error)
      throw DegenerateLabelingError(
          "dressed state " + std::to_string(k) + " has no dominant bare component (best overlap " +
          std::to_string(best_w) + " on " + label_string(layout.label(best)) + ")");
    if (claimed[static_cast<size_t>(best)] >= 0)
      throw DegenerateLabelingError(
          "bare label " + label_string(layout.label(best)) +
          " is claimed by two dressed states (eigenvectors " +
          std::to_string(claimed[static_cast<size_t>(best)]) + " and " + std::to_string(k) + ")");
    claimed[static_cast<size_t>(best)] = k;
    min_overlap = std::min(min_overlap, best_w);
  }

  DressedBasis out{CMat(n, n), RVec(n), layout, min_overlap};
  for (int i = 0; i < n; ++i) {
    const int k = claimed[static_cast<size_t>(i)];
    CVec col = eig.eigenvectors.col(k);
    // Gauge: largest-magnitude component real positive.
    Eigen::Index arg_max = 0;
    col.cwiseAbs().maxCoeff(&arg_max);
    const cxd pivot = col[arg_max];
    if (std::abs(pivot) > 0) col *= std::conj(pivot) / std::abs(pivot);
    out.u.col(i) = col;
    out.energies[i] = eig.eigenvalues[k];
  }
  return out;
}

CMat rotate_operator(const CMat& u, const CMat& o) {
  if (u.rows() != o.rows() || u.cols() != o.cols() || o.rows() != o.cols())
    throw std::invalid_argument("rotate_operator: shape mismatch");
  return u.adjoint() * o * u;
}

GradedOperator grade_by_excitation(const CMat& op, const DressedBasis& basis) {
  const int n = static_cast<int>(op.rows());
  if (n != basis.layout.dim())
    throw std::invalid_argument("grade_by_excitation: dimension mismatch");
  GradedOperator g{CMat::Zero(n, n), CMat::Zero(n, n), CMat::Zero(n, n)};
  for (int r = 0; r < n; ++r) {
    const int er = basis.excitation(r);
    for (int c = 0; c < n; ++c) {
      const int diff = er - basis.excitation(c);
      if (diff == 1)
        g.plus(r, c) = op(r, c);
      else if (diff == -1)
        g.minus(r, c) = op(r, c);
      else
        g.rest(r, c) = op(r, c);
    }
  }
  return g;
}

RwaHamiltonian apply_rwa(const DressedBasis& basis, const CMat& d_t,
                         const CMat& d_a, const DriveSpec& drive,
                         double omega_d) {
  drive.validate();
  const int n = basis.layout.dim();
  if (d_t.rows() != n || d_a.rows() != n)
    throw std::invalid_argument("apply_rwa: operator dimension mismatch");

  RwaHamiltonian out;
  out.omega_d = omega_d;
  out.h = CMat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    out.h(i, i) = basis.energies[i] - omega_d * basis.excitation(i);

  double dropped_sq = 0.0;
  auto add_channel = [&](const CMat& d, double amp, double phase) {
    const GradedOperator g = grade_by_excitation(d, basis);
    const cxd up = 0.5 * amp * std::exp(cxd(0, -phase));
    out.h += up * g.plus + std::conj(up) * g.minus;
    // Counter-rotating graded terms oscillate at 2 omega_d and everything in
    // `rest` at omega_d or above; both halves of the cosine hit `rest`.
    dropped_sq += std::norm(up) * (g.plus.squaredNorm() + g.minus.squaredNorm()) +
                  2.0 * std::norm(up) * g.rest.squaredNorm();
  };
  if (drive.amplitude != 0.0) {
    add_channel(d_t, drive.amplitude, drive.phase);
    if (drive.crosstalk_m > 0.0)
      add_channel(d_a, drive.crosstalk_m * drive.amplitude,
                  drive.crosstalk_phase);
  }
  out.dropped_norm = std::sqrt(dropped_sq);
  return out;
}

}  // namespace crsim
