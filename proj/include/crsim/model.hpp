#ifndef CRSIM_MODEL_HPP
#define CRSIM_MODEL_HPP

#include <array>
#include <string>
#include <vector>

#include "crsim/types.hpp"

namespace crsim {

// One anharmonic (Duffing) mode. The single-mode term used in the bare
// Hamiltonian is (omega - beta) n - delta n^2 with delta = -alpha/2 and
// beta = -delta, so the 0->1 transition is exactly `omega` and the 1->2
// transition is omega + alpha.
struct ModeSpec {
  char label = '?';      // 'T', 'A' or 'B'
  double omega = 0.0;    // 0->1 angular frequency, rad/s
  double alpha = 0.0;    // anharmonicity omega_12 - omega_01, rad/s
  int levels = 4;

  double delta() const { return -0.5 * alpha; }
  double beta() const { return -delta(); }
  // Bare ladder energy of level n (rad/s).
  double energy(int n) const {
    return (omega - beta()) * n - delta() * static_cast<double>(n) * n;
  }

  void validate() const;
};

// Transmon (T) + dimon dipolar/quadrupolar modes (A, B). j_zz is the
// longitudinal A-B coupling, j_xx the transverse T-A exchange, and lambda the
// relative strength of the residual T-B exchange.
struct CircuitSpec {
  ModeSpec t, a, b;
  double j_zz = 0.0;    // rad/s
  double j_xx = 0.0;    // rad/s
  double lambda = 0.0;  // dimensionless

  // Throws on hard violations; returns human-readable warnings for soft
  // ones (|lambda| > 0.1, dispersive-regime check on j_xx).
  std::vector<std::string> validate() const;

  const ModeSpec& mode(char label) const;
};

// Cross-resonance drive: amplitude * cos(omega_d t + phase) on the transmon
// quadrature plus a cross-talk fraction m on the A mode at phase
// crosstalk_phase. omega_d == 0 means "choose automatically" (conditional
// target-frequency mean).
struct DriveSpec {
  double amplitude = 0.0;        // rad/s
  double omega_d = 0.0;          // rad/s; 0 = auto
  double phase = 0.0;            // rad
  double crosstalk_m = 0.0;      // dimensionless
  double crosstalk_phase = 0.0;  // rad
  double edge_time = 10e-9;      // Gaussian rise/fall of shaped pulses, s

  void validate() const;
};

enum class BasisOrdering { tensor, excitation };

// Truncated three-mode Fock layout |n_T, n_A, n_B>. Tensor ordering puts T
// slowest; excitation ordering sorts by total excitation then by
// (n_T, n_A, n_B) lexicographically. The two are related by an explicit
// permutation.
class BasisLayout {
 public:
  BasisLayout(int d_t, int d_a, int d_b,
              BasisOrdering ordering = BasisOrdering::tensor);
  explicit BasisLayout(const CircuitSpec& spec,
                       BasisOrdering ordering = BasisOrdering::tensor);

  int dim() const { return d_t_ * d_a_ * d_b_; }
  int d_t() const { return d_t_; }
  int d_a() const { return d_a_; }
  int d_b() const { return d_b_; }
  BasisOrdering ordering() const { return ordering_; }

  int index(int n_t, int n_a, int n_b) const;
  std::array<int, 3> label(int index) const;
  int excitation(int index) const;

  // Permutation p such that state i of *this appears at position p[i] of the
  // other ordering.
  std::vector<int> permutation_to(BasisOrdering other) const;

 private:
  int tensor_index(int n_t, int n_a, int n_b) const;

  int d_t_, d_a_, d_b_;
  BasisOrdering ordering_;
  std::vector<int> to_tensor_;    // position in this ordering -> tensor index
  std::vector<int> from_tensor_;  // tensor index -> position in this ordering
};

// H0/hbar: single-mode Duffing terms plus 2 J_zz n_A n_B, the T-A exchange
// and the lambda-weighted T-B exchange, in the layout's ordering. Hermitian
// by construction.
CMat build_bare_hamiltonian(const CircuitSpec& spec, const BasisLayout& layout);

// Quadrature operators (a_T^dag + a_T) and (a_A^dag + a_A) for the drive.
std::pair<CMat, CMat> build_drive_operators(const CircuitSpec& spec,
                                            const BasisLayout& layout);

struct ModeCoherence {
  double t1 = 0.0;        // s
  double t2_echo = 0.0;   // s
  double t2_ramsey = 0.0; // s
};

struct Preset {
  std::string name;
  CircuitSpec circuit;
  ModeCoherence coherence_t, coherence_a, coherence_b;

  const ModeCoherence& coherence(char label) const;
};

// Published device parameter sets. The dimon A-mode frequency stored in
// `circuit` is the transition of the operating sector (B mode in its ground
// state), which is the tabulated sideband used as the CR target; see
// docs/conventions.md. exp2's longitudinal coupling is not published and
// defaults to exp1's value (irrelevant to the frozen-B dynamics when
// lambda = 0).
Preset load_preset(const std::string& name);  // "exp1_cu" or "exp2_al"

}  // namespace crsim

#endif  // CRSIM_MODEL_HPP
