#include "crsim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace crsim {

void SimplexOptions::validate() const {
  if (alpha <= 0 || gamma <= 0 || rho <= 0 || sigma <= 0)
    throw std::invalid_argument("SimplexOptions: coefficients must be positive");
  if (gamma <= alpha)
    throw std::invalid_argument("SimplexOptions: expansion must exceed reflection");
  if (max_iterations <= 0)
    throw std::invalid_argument("SimplexOptions: max_iterations must be positive");
}

SimplexResult nelder_mead(const std::function<double(const RVec&)>& f,
                          const RVec& x0, const SimplexOptions& opts) {
  opts.validate();
  const int n = static_cast<int>(x0.size());
  if (n == 0) throw std::invalid_argument("nelder_mead: empty start point");

  std::vector<RVec> verts(static_cast<size_t>(n) + 1, x0);
  std::vector<double> fv(static_cast<size_t>(n) + 1);
  for (int i = 0; i < n; ++i) {
    double step = opts.initial_step;
    if (x0[i] != 0.0) step = opts.initial_step * std::abs(x0[i]);
    verts[static_cast<size_t>(i) + 1][i] += step;
  }
  for (size_t i = 0; i < verts.size(); ++i) {
    fv[i] = f(verts[i]);
    if (!std::isfinite(fv[i]))
      throw std::invalid_argument("nelder_mead: objective not finite at initial simplex");
  }

  std::vector<size_t> order(verts.size());
  std::iota(order.begin(), order.end(), size_t{0});
  auto sort_order = [&] {
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return fv[a] < fv[b]; });
  };

  int iter = 0;
  bool converged = false;
  for (; iter < opts.max_iterations; ++iter) {
    sort_order();
    const size_t best = order.front();
    const size_t worst = order.back();
    const size_t second_worst = order[order.size() - 2];

    double diameter = 0.0;
    for (size_t i = 1; i < order.size(); ++i)
      diameter = std::max(diameter, (verts[order[i]] - verts[best]).norm());
    if (diameter < opts.x_tol && fv[worst] - fv[best] < opts.f_tol) {
      converged = true;
      break;
    }

    RVec centroid = RVec::Zero(n);
    for (size_t i = 0; i + 1 < order.size(); ++i) centroid += verts[order[i]];
    centroid /= static_cast<double>(n);

    const RVec reflected = centroid + opts.alpha * (centroid - verts[worst]);
    const double fr = f(reflected);

    if (fr < fv[order.front()]) {
      const RVec expanded = centroid + opts.gamma * (centroid - verts[worst]);
      const double fe = f(expanded);
      if (fe < fr) {
        verts[worst] = expanded;
        fv[worst] = fe;
      } else {
        verts[worst] = reflected;
        fv[worst] = fr;
      }
    } else if (fr < fv[second_worst]) {
      verts[worst] = reflected;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      const RVec base = outside ? reflected : verts[worst];
      const RVec contracted = centroid + opts.rho * (base - centroid);
      const double fc = f(contracted);
      if (fc < std::min(fr, fv[worst])) {
        verts[worst] = contracted;
        fv[worst] = fc;
      } else {
        for (size_t i = 1; i < order.size(); ++i) {
          verts[order[i]] =
              verts[best] + opts.sigma * (verts[order[i]] - verts[best]);
          fv[order[i]] = f(verts[order[i]]);
        }
      }
    }
  }

  sort_order();
  SimplexResult out;
  out.x = verts[order.front()];
  out.fx = fv[order.front()];
  out.iterations = iter;
  out.converged = converged;
  return out;
}

EigResult eig_hermitian(const CMat& h) {
  if (h.rows() != h.cols())
    throw std::invalid_argument("eig_hermitian: matrix must be square");
  if (!h.allFinite())
    throw std::invalid_argument("eig_hermitian: non-finite entries");
  const double dev = (h - h.adjoint()).norm();
  if (dev > 1e-9 * std::max(1.0, h.norm()))
    throw std::invalid_argument("eig_hermitian: input is not Hermitian");
  Eigen::SelfAdjointEigenSolver<CMat> solver(hermitize(h));
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eig_hermitian: eigensolver failed");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

namespace {

// Scaling-and-squaring with the [13/13] Pade approximant (Higham 2005).
CMat expm_pade(const CMat& m) {
  static const double b[] = {64764752532480000.0, 32382376266240000.0,
                             7771770303897600.0,  1187353796428800.0,
                             129060195264000.0,   10559470521600.0,
                             670442572800.0,      33522128640.0,
                             1323241920.0,        40840800.0,
                             960960.0,            16380.0,
                             182.0,               1.0};
  const Eigen::Index n = m.rows();
  const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  CMat a = m;
  const double theta13 = 5.371920351148152;
  if (norm > theta13) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / theta13)));
    a /= std::pow(2.0, squarings);
  }
  const CMat a2 = a * a;
  const CMat a4 = a2 * a2;
  const CMat a6 = a2 * a4;
  const CMat id = CMat::Identity(n, n);
  const CMat u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 +
                      b[5] * a4 + b[3] * a2 + b[1] * id);
  const CMat v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 +
                 b[4] * a4 + b[2] * a2 + b[0] * id;
  CMat r = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < squarings; ++i) r = r * r;
  return r;
}

}  // namespace

CMat expm(const CMat& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("expm: matrix must be square");
  if (!m.allFinite()) throw std::invalid_argument("expm: non-finite entries");
  const double scale = std::max(1.0, m.norm());
  if ((m - m.adjoint()).norm() <= 1e-12 * scale) {
    const EigResult eig = eig_hermitian(m);
    const CVec phases = eig.eigenvalues.array().exp().matrix().cast<cxd>();
    return eig.eigenvectors * phases.asDiagonal() * eig.eigenvectors.adjoint();
  }
  if ((m + m.adjoint()).norm() <= 1e-12 * scale) {
    // m = i*h with h Hermitian; exp(m) = V exp(i lambda) V^dag.
    const EigResult eig = eig_hermitian(CMat(cxd(0, -1) * m));
    CVec phases(eig.eigenvalues.size());
    for (Eigen::Index k = 0; k < phases.size(); ++k)
      phases[k] = std::exp(cxd(0, eig.eigenvalues[k]));
    return eig.eigenvectors * phases.asDiagonal() * eig.eigenvectors.adjoint();
  }
  return expm_pade(m);
}

CMat inv_sqrt_psd(const CMat& m, double eps_reg) {
  const EigResult eig = eig_hermitian(m);
  const double min_eig = eig.eigenvalues.minCoeff();
  if (min_eig <= eps_reg)
    throw std::runtime_error(
        "inv_sqrt_psd: matrix is singular or not positive definite (min "
        "eigenvalue " +
        std::to_string(min_eig) + ")");
  CVec d(eig.eigenvalues.size());
  for (Eigen::Index k = 0; k < d.size(); ++k)
    d[k] = 1.0 / std::sqrt(eig.eigenvalues[k]);
  return eig.eigenvectors * d.asDiagonal() * eig.eigenvectors.adjoint();
}

}  // namespace crsim
