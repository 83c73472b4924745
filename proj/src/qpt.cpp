#include "crsim/qpt.hpp"

#include <algorithm>
#include <cmath>

namespace crsim {

namespace {

CVec vectorize(const Mat4& m) {
  CVec v(16);
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 4; ++r) v[4 * c + r] = m(r, c);
  return v;
}

// A_n^dag A_m for every flat chi index pair, used by the TP penalty.
const std::array<Mat4, 256>& pauli_pair_products() {
  static const std::array<Mat4, 256> products = [] {
    std::array<Mat4, 256> out;
    for (int m = 0; m < 16; ++m)
      for (int n = 0; n < 16; ++n)
        out[static_cast<size_t>(16 * m + n)] = pauli2(n).adjoint() * pauli2(m);
    return out;
  }();
  return products;
}

}  // namespace

double ChiMatrix::min_eigenvalue() const {
  return eig_hermitian(hermitize(m)).eigenvalues.minCoeff();
}

InputStateSet::InputStateSet() {
  const cxd inv_sqrt2 = 1.0 / std::sqrt(2.0);
  std::array<Eigen::Vector2cd, 4> kets;
  kets[0] << 1, 0;
  kets[1] << 0, 1;
  kets[2] << inv_sqrt2, inv_sqrt2;
  kets[3] << inv_sqrt2, cxd(0, -1) * inv_sqrt2;

  CMat r(16, 16);
  for (int j1 = 0; j1 < 4; ++j1)
    for (int j2 = 0; j2 < 4; ++j2) {
      Eigen::Vector4cd ket;
      ket << kets[static_cast<size_t>(j1)][0] * kets[static_cast<size_t>(j2)],
          kets[static_cast<size_t>(j1)][1] * kets[static_cast<size_t>(j2)];
      const int j = 4 * j1 + j2;
      states_[static_cast<size_t>(j)] = ket * ket.adjoint();
      r.col(j) = vectorize(states_[static_cast<size_t>(j)]);
    }
  lu_.compute(r);
  const Eigen::JacobiSVD<CMat> svd(r);
  condition_ = svd.singularValues()(0) / svd.singularValues()(15);
}

CVec InputStateSet::expand(const Mat4& m) const { return lu_.solve(vectorize(m)); }

Mat4 state_tomography(const std::array<double, 15>& pauli_expectations) {
  for (double e : pauli_expectations)
    if (!(e >= -1.0 - 1e-9 && e <= 1.0 + 1e-9))
      throw std::invalid_argument("state_tomography: expectations must lie in [-1, 1]");
  Mat4 rho = 0.25 * Mat4::Identity();
  for (int m = 1; m < 16; ++m)
    rho += 0.25 * pauli_expectations[static_cast<size_t>(m - 1)] * Mat4(pauli2(m));

  const EigResult eig = eig_hermitian(rho);
  if (eig.eigenvalues.minCoeff() >= -1e-9) return rho;
  RVec clipped = eig.eigenvalues.cwiseMax(0.0);
  clipped /= clipped.sum();
  return eig.eigenvectors * clipped.cast<cxd>().asDiagonal() * eig.eigenvectors.adjoint();
}

BetaTensor::BetaTensor(const InputStateSet& inputs) : b_(256, 256) {
  for (int m = 0; m < 16; ++m)
    for (int n = 0; n < 16; ++n) {
      const int column = 16 * m + n;
      for (int j = 0; j < 16; ++j) {
        const Mat4 transformed = pauli2(m) * inputs.state(j) * pauli2(n).adjoint();
        const CVec coeffs = inputs.expand(transformed);
        for (int k = 0; k < 16; ++k) b_(16 * j + k, column) = coeffs[k];
      }
    }
}

ChiFromLambdaResult chi_from_lambda(const CMat& lambda, const BetaTensor& beta) {
  if (lambda.rows() != 16 || lambda.cols() != 16)
    throw std::invalid_argument("chi_from_lambda: lambda must be 16x16");
  CVec rhs(256);
  for (int j = 0; j < 16; ++j)
    for (int k = 0; k < 16; ++k) rhs[16 * j + k] = lambda(j, k);

  ChiFromLambdaResult out;
  const Eigen::BDCSVD<CMat> svd(beta.system_matrix(),
                                Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.condition_number =
      svd.singularValues()(0) / svd.singularValues()(svd.singularValues().size() - 1);
  out.ill_conditioned = out.condition_number > 1e8;
  const CVec x = svd.solve(rhs);
  for (int m = 0; m < 16; ++m)
    for (int n = 0; n < 16; ++n) out.chi.m(m, n) = x[16 * m + n];
  return out;
}

namespace {

// chi = T^dag T factorization with T lower triangular: 16 real diagonal
// entries first, then (Re, Im) pairs of the strictly lower triangle row by
// row. 256 real parameters in total.
constexpr int kParams = 16 + 2 * 120;

CMat unpack_t(const RVec& p) {
  CMat t = CMat::Zero(16, 16);
  for (int k = 0; k < 16; ++k) t(k, k) = p[k];
  int idx = 16;
  for (int r = 1; r < 16; ++r)
    for (int c = 0; c < r; ++c) {
      t(r, c) = cxd(p[idx], p[idx + 1]);
      idx += 2;
    }
  return t;
}

RVec pack_t(const CMat& t) {
  RVec p(kParams);
  for (int k = 0; k < 16; ++k) p[k] = t(k, k).real();
  int idx = 16;
  for (int r = 1; r < 16; ++r)
    for (int c = 0; c < r; ++c) {
      p[idx] = t(r, c).real();
      p[idx + 1] = t(r, c).imag();
      idx += 2;
    }
  return p;
}

CMat chi_of_t(const CMat& t) {
  CMat chi = t.adjoint() * t;
  const double tr = chi.trace().real();
  if (tr <= 0) return CMat::Zero(16, 16);
  return chi / tr;
}

double tp_defect_of(const CMat& chi) {
  const auto& products = pauli_pair_products();
  Mat4 acc = Mat4::Zero();
  for (int m = 0; m < 16; ++m)
    for (int n = 0; n < 16; ++n)
      acc += chi(m, n) * products[static_cast<size_t>(16 * m + n)];
  return (acc - Mat4::Identity()).norm();
}

// Lower-triangular factor of a PSD matrix in the T^dag T convention, via the
// Cholesky factorization of the index-reversed matrix.
CMat reverse_cholesky(const CMat& psd) {
  const int n = static_cast<int>(psd.rows());
  CMat reversed(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) reversed(r, c) = psd(n - 1 - r, n - 1 - c);
  const Eigen::LLT<CMat> llt(reversed);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("reverse_cholesky: factorization failed");
  const CMat l = llt.matrixL();
  CMat t(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) t(r, c) = std::conj(l(n - 1 - c, n - 1 - r));
  // Left phase freedom: make the diagonal real nonnegative.
  for (int r = 0; r < n; ++r) {
    const cxd d = t(r, r);
    if (std::abs(d) > 0) t.row(r) *= std::conj(d) / std::abs(d);
  }
  return t;
}

}  // namespace

ProjectionResult project_physical(const ChiMatrix& chi_exp, const ProjectionOptions& opts) {
  const CMat sym = hermitize(chi_exp.m);
  const EigResult eig = eig_hermitian(sym);
  const double spectral_norm = eig.eigenvalues.cwiseAbs().maxCoeff();
  const double lagrange = opts.lagrange > 0 ? opts.lagrange : 10.0 * spectral_norm;

  // Seed: spectral projection of chi_exp, floored away from singularity so
  // the factorization exists.
  RVec clipped = eig.eigenvalues.cwiseMax(1e-10);
  clipped /= clipped.sum();
  const CMat seed =
      eig.eigenvectors * clipped.cast<cxd>().asDiagonal() * eig.eigenvectors.adjoint();
  const RVec p0 = pack_t(reverse_cholesky(seed));

  auto objective = [&](const RVec& p) {
    const CMat chi = chi_of_t(unpack_t(p));
    return (sym - chi).norm() + lagrange * tp_defect_of(chi);
  };

  SimplexOptions nm;
  nm.max_iterations = opts.max_iterations;
  nm.x_tol = opts.x_tol;
  nm.f_tol = opts.f_tol;
  nm.initial_step = 0.02;
  const SimplexResult res = nelder_mead(objective, p0, nm);

  ProjectionResult out;
  out.chi.m = chi_of_t(unpack_t(res.x));
  out.objective = res.fx;
  out.tp_defect = tp_defect_of(out.chi.m);
  out.iterations = res.iterations;
  out.converged = res.converged;
  return out;
}

double process_fidelity(const ChiMatrix& chi_p, const ChiMatrix& chi_id, bool* clipped) {
  const double raw = (chi_p.m * chi_id.m.adjoint()).trace().real();
  const double f = std::clamp(raw, 0.0, 1.0);
  if (clipped) *clipped = f != raw;
  return f;
}

double gate_fidelity_from_process(double f_pro, int d) {
  if (f_pro < 0.0 || f_pro > 1.0)
    throw std::invalid_argument("gate_fidelity_from_process: F_pro must lie in [0, 1]");
  if (d < 2) throw std::invalid_argument("gate_fidelity_from_process: dimension too small");
  return (d * f_pro + 1.0) / (d + 1.0);
}

ChiMatrix ideal_chi(const Mat4& u) {
  if ((u.adjoint() * u - Mat4::Identity()).norm() > 1e-10)
    throw std::invalid_argument("ideal_chi: input is not unitary");
  CVec c(16);
  for (int m = 0; m < 16; ++m) c[m] = (pauli2(m).adjoint() * u).trace() / 4.0;
  ChiMatrix chi;
  chi.m = c * c.adjoint();
  return chi;
}

Mat4 ideal_zx90() {
  const Mat4 zx = pauli2(13);
  return (std::cos(M_PI / 4) * Mat4::Identity() -
          cxd(0, 1) * std::sin(M_PI / 4) * zx);
}

ReadoutCorrection correct_readout(const std::array<double, 4>& raw,
                                  const Eigen::Matrix2d& confusion_q1,
                                  const Eigen::Matrix2d& confusion_q2) {
  for (const auto* c : {&confusion_q1, &confusion_q2}) {
    for (int col = 0; col < 2; ++col) {
      double sum = 0;
      for (int row = 0; row < 2; ++row) {
        const double v = (*c)(row, col);
        if (v < 0.0 || v > 1.0)
          throw std::invalid_argument("correct_readout: confusion entries must be in [0, 1]");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("correct_readout: confusion columns must sum to 1");
    }
    if (std::abs(c->determinant()) < 1e-12)
      throw std::invalid_argument("correct_readout: confusion matrix is singular");
  }

  Eigen::Matrix4d joint;
  for (int r1 = 0; r1 < 2; ++r1)
    for (int r2 = 0; r2 < 2; ++r2)
      for (int c1 = 0; c1 < 2; ++c1)
        for (int c2 = 0; c2 < 2; ++c2)
          joint(2 * r1 + r2, 2 * c1 + c2) = confusion_q1(r1, c1) * confusion_q2(r2, c2);

  Eigen::Vector4d p;
  for (int i = 0; i < 4; ++i) p[i] = raw[static_cast<size_t>(i)];
  Eigen::Vector4d corrected = joint.partialPivLu().solve(p);

  ReadoutCorrection out;
  double clipped = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (corrected[i] < 0) {
      clipped -= corrected[i];
      corrected[i] = 0;
    }
  }
  const double total = corrected.sum();
  if (total > 0) corrected /= total;
  for (int i = 0; i < 4; ++i) out.probabilities[static_cast<size_t>(i)] = corrected[i];
  out.clipped_mass = clipped;
  return out;
}

QptResult run_qpt(const TwoQubitChannel& channel, const QptOptions& opts) {
  const InputStateSet inputs;
  CMat lambda(16, 16);
  for (int j = 0; j < 16; ++j) {
    const Mat4 out_state = channel(inputs.state(j));
    std::array<double, 15> expectations{};
    for (int m = 1; m < 16; ++m) {
      double e = (out_state * pauli2(m)).trace().real();
      expectations[static_cast<size_t>(m - 1)] = std::clamp(e, -1.0, 1.0);
    }
    const Mat4 reconstructed = state_tomography(expectations);
    const CVec coeffs = inputs.expand(reconstructed);
    for (int k = 0; k < 16; ++k) lambda(j, k) = coeffs[k];
  }

  const BetaTensor beta(inputs);
  const ChiFromLambdaResult inversion = chi_from_lambda(lambda, beta);

  QptResult out;
  out.chi_exp = inversion.chi;
  out.condition_number = inversion.condition_number;
  out.projection = project_physical(inversion.chi, opts.projection);
  out.chi_p = out.projection.chi;
  const ChiMatrix chi_id = ideal_chi(opts.ideal);
  out.f_pro = process_fidelity(out.chi_p, chi_id);
  out.f_gate = gate_fidelity_from_process(out.f_pro);
  return out;
}

}  // namespace crsim
