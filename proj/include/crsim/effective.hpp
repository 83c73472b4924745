#ifndef CRSIM_EFFECTIVE_HPP
#define CRSIM_EFFECTIVE_HPP

#include <optional>
#include <vector>

#include "crsim/frames.hpp"
#include "crsim/model.hpp"
#include "crsim/types.hpp"

namespace crsim {

// Ordered index groups over the working basis. For CR extraction the first
// two blocks are {|000>, |010>} and {|100>, |110>} (B mode frozen at zero)
// and the third holds everything else.
struct Partition {
  std::vector<std::vector<int>> groups;

  void validate(int dim) const;
  static Partition cr_partition(const BasisLayout& layout);
};

// Pauli coefficients of the block-diagonal two-qubit Hamiltonian in the
// convention H = (1/2) sum c_PQ sigma_P (x) sigma_Q (control (x) target),
// all in rad/s. With this normalization a pure ZX term drives conditional
// target rotations at +-zx, and zz is half the conditional-Ramsey splitting.
struct EffectiveHamiltonian {
  double ii = 0, ix = 0, iy = 0, iz = 0;
  double zi = 0, zx = 0, zy = 0, zz = 0;

  Eigen::Matrix4cd reconstruct() const;
};

class BlockDiagonalizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BlockDiagonalization {
  CMat t;      // least-action unitary
  CMat h_eff;  // T^dag H T with verified off-block entries zeroed
};

// Least-action block diagonalization: eigenvectors of H are assigned to
// basis slots by maximum overlap, S_BD is the block-diagonal part of the
// ordered eigenvector matrix, and T = S S_BD^dag (S_BD S_BD^dag)^{-1/2} is
// the block-diagonalizing unitary closest to the identity. Throws
// BlockDiagonalizationError on assignment conflicts or singular blocks
// (expected near resonance poles).
BlockDiagonalization least_action_block_diagonalize(const CMat& h,
                                                    const Partition& partition);

// Coefficients of a 4x4 Hermitian block in the {|00>,|01>,|10>,|11>}
// (control, target) ordering: c_PQ = tr[(sigma_P x sigma_Q) H] / 2.
EffectiveHamiltonian extract_pauli_coefficients(const Eigen::Matrix4cd& h);

// Static ZZ of the transmon / A-mode pair (B mode in its ground sector).
// All three values are the conditional-Ramsey splitting 2xi in rad/s:
//   perturbative         second-order formula with anharmonicities entering
//                        as positive magnitudes (reproduces the published
//                        coupling inference),
//   perturbative_signed  the same formula with signed anharmonicities, which
//                        is the variant consistent with perturbation theory
//                        and the numeric branch,
//   numeric              (E_110 - E_100) - (E_010 - E_000) from full
//                        diagonalization.
struct StaticZzResult {
  double perturbative = 0;
  double perturbative_signed = 0;
  double numeric = 0;
};

StaticZzResult static_zz(const CircuitSpec& spec);

struct CrOptions {
  std::optional<double> omega_d_override;  // rad/s
  BasisOrdering ordering = BasisOrdering::tensor;
};

struct CrEffectiveResult {
  EffectiveHamiltonian coeffs;
  double omega_d = 0.0;
  double dropped_norm = 0.0;
  double min_label_overlap = 1.0;  // labeling quality of the dressed basis
};

// Drive frequency rule: mean of the two conditional target frequencies
// (E_010 - E_000 and E_110 - E_100 of the dressed energies).
double default_drive_frequency(const DressedBasis& basis);

// Full chain: bare Hamiltonian -> dressed basis -> RWA at omega_d ->
// least-action block diagonalization -> Pauli coefficients.
CrEffectiveResult cr_effective_hamiltonian(const CircuitSpec& spec,
                                           const DriveSpec& drive,
                                           const CrOptions& opts = {});

enum class SweepStatus { ok, near_pole, degenerate };

struct SweepPoint {
  double grid_value = 0.0;
  SweepStatus status = SweepStatus::ok;
  EffectiveHamiltonian coeffs;  // meaningful unless degenerate
  double dropped_norm = 0.0;
  std::string message;  // failure description for degenerate points
};

// Known leakage poles of the dimensionless detuning axis -Delta_TA/delta_T.
std::vector<double> detuning_pole_positions();

// Sweep of the dimensionless detuning x = -Delta_TA/delta_T: the transmon
// frequency is set to omega_A + x |delta_T| at each grid point. Failures are
// recorded per point and never abort the sweep.
std::vector<SweepPoint> sweep_detuning(const CircuitSpec& spec_template,
                                       const DriveSpec& drive,
                                       const std::vector<double>& grid,
                                       const CrOptions& opts = {},
                                       double pole_margin = 0.1);

std::vector<SweepPoint> sweep_amplitude(const CircuitSpec& spec,
                                        const DriveSpec& drive_template,
                                        const std::vector<double>& amplitudes,
                                        const CrOptions& opts = {});

struct PhaseOptimum {
  double phase = 0.0;  // argmin |ZY|
  double zy = 0.0;
  double iy = 0.0;
  double zx = 0.0;
  bool converged = false;
};

// Scalar minimization of |ZY(phi_d)|: coarse scan anchored at the drive's
// phase, then simplex refinement.
PhaseOptimum optimize_drive_phase(const CircuitSpec& spec, const DriveSpec& drive,
                                  const CrOptions& opts = {});

}  // namespace crsim

#endif  // CRSIM_EFFECTIVE_HPP
