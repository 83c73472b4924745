#ifndef CRSIM_QPT_HPP
#define CRSIM_QPT_HPP

#include <array>
#include <functional>
#include <optional>

#include "crsim/numerics.hpp"
#include "crsim/types.hpp"

namespace crsim {

using Mat4 = Eigen::Matrix4cd;
using TwoQubitChannel = std::function<Mat4(const Mat4&)>;

// 16x16 process matrix in the two-qubit Pauli basis A_m = B_i (x) B_j,
// m = 4 i + j with (I, X, Y, Z) -> (0, 1, 2, 3).
struct ChiMatrix {
  CMat m = CMat::Zero(16, 16);

  double trace_real() const { return m.trace().real(); }
  double min_eigenvalue() const;
  bool is_hermitian(double tol = 1e-9) const { return crsim::is_hermitian(m, tol); }
};

// The 16 tensor products of {|0>, |1>, |0>+|1>, |0>-i|1>} per qubit,
// j = 4 j1 + j2. Linearly independent as operators; the condition number of
// the vectorized set is reported for diagnostics.
class InputStateSet {
 public:
  InputStateSet();

  const Mat4& state(int j) const { return states_[static_cast<size_t>(j)]; }
  double condition_number() const { return condition_; }

  // Coefficients c with M = sum_k c_k rho_k (solved through one factorization).
  CVec expand(const Mat4& m) const;

 private:
  std::array<Mat4, 16> states_;
  Eigen::PartialPivLU<CMat> lu_;
  double condition_ = 0.0;
};

// Linear-inversion state tomography from the 15 nontrivial two-qubit Pauli
// expectations (basis order A_1..A_15), followed by spectral clipping to the
// nearest PSD unit-trace matrix when needed.
Mat4 state_tomography(const std::array<double, 15>& pauli_expectations);

// beta[j, k, m, n] with A_m rho_j A_n^dag = sum_k beta rho_k, stored as the
// 256x256 system matrix mapping chi (column-stacked (m, n)) to lambda.
class BetaTensor {
 public:
  explicit BetaTensor(const InputStateSet& inputs);

  const CMat& system_matrix() const { return b_; }
  cxd value(int j, int k, int m, int n) const {
    return b_(16 * j + k, 16 * m + n);
  }

 private:
  CMat b_;  // (j*16+k, m*16+n)
};

struct ChiFromLambdaResult {
  ChiMatrix chi;
  double condition_number = 0.0;
  bool ill_conditioned = false;  // condition number above 1e8
};

// Inverts lambda_jk = sum_mn chi_mn beta_jk^mn as one 256x256 linear system.
ChiFromLambdaResult chi_from_lambda(const CMat& lambda, const BetaTensor& beta);

struct ProjectionOptions {
  int max_iterations = 30000;
  double x_tol = 1e-9;
  double f_tol = 1e-10;
  // Lagrange multiplier of the trace-preservation penalty; zero or negative
  // selects the default 10 * ||chi_exp||_2.
  double lagrange = -1.0;
};

struct ProjectionResult {
  ChiMatrix chi;
  double objective = 0.0;
  double tp_defect = 0.0;  // || sum chi_mn A_n^dag A_m - I ||_F
  int iterations = 0;
  bool converged = false;
};

// Closest physical process matrix: chi_p(t) = T(t)^dag T(t) / tr[...] over a
// complex lower-triangular T, minimizing ||chi_exp - chi_p||_F plus the
// trace-preservation penalty, Nelder-Mead seeded with the spectral
// projection of chi_exp. PSD and unit trace hold by construction.
ProjectionResult project_physical(const ChiMatrix& chi_exp,
                                  const ProjectionOptions& opts = {});

// Re tr(chi_p chi_id^dag), clipped to [0, 1]; *clipped reports whether the
// clip engaged.
double process_fidelity(const ChiMatrix& chi_p, const ChiMatrix& chi_id,
                        bool* clipped = nullptr);

// Average gate fidelity from process fidelity, F = (d F_pro + 1) / (d + 1).
double gate_fidelity_from_process(double f_pro, int d = 4);

// Rank-one process matrix of a unitary, c_m = tr(A_m^dag U) / 4.
ChiMatrix ideal_chi(const Mat4& u);

Mat4 ideal_zx90();

struct ReadoutCorrection {
  std::array<double, 4> probabilities{};
  double clipped_mass = 0.0;
};

// Inverts the tensor-product confusion model (columns of each single-qubit
// matrix sum to one: entry (i, j) = P(read i | prepared j)), clipping
// negative quasi-probabilities and renormalizing.
ReadoutCorrection correct_readout(const std::array<double, 4>& raw,
                                  const Eigen::Matrix2d& confusion_q1,
                                  const Eigen::Matrix2d& confusion_q2);

struct QptOptions {
  Mat4 ideal = ideal_zx90();
  ProjectionOptions projection;
};

struct QptResult {
  ChiMatrix chi_exp;
  ChiMatrix chi_p;
  double f_pro = 0.0;
  double f_gate = 0.0;
  double condition_number = 0.0;
  ProjectionResult projection;
};

// Full pipeline: prepare the 16 inputs, apply the channel, state tomography
// on every output, lambda inversion, chi extraction, physicality projection
// and fidelities against the ideal unitary.
QptResult run_qpt(const TwoQubitChannel& channel, const QptOptions& opts = {});

}  // namespace crsim

#endif  // CRSIM_QPT_HPP
