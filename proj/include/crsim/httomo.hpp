#ifndef CRSIM_HTTOMO_HPP
#define CRSIM_HTTOMO_HPP

#include <array>

#include "crsim/dynamics.hpp"
#include "crsim/types.hpp"

namespace crsim {

// Effective two-level drive field (Omega_x, Omega_y) and detuning Delta; the
// Bloch precession axis is (Omega_x, Omega_y, -Delta).
struct GeneralizedField {
  double omega_x = 0.0;  // rad/s
  double omega_y = 0.0;  // rad/s
  double delta = 0.0;    // rad/s

  double b() const {
    return std::sqrt(omega_x * omega_x + omega_y * omega_y + delta * delta);
  }
};

// Antisymmetric generator of the Bloch precession, d r / dt = G r.
Eigen::Matrix3d bloch_generator(const GeneralizedField& field);

// Closed-form evolution from the ground state r0 = (0, 0, 1). Other initial
// states fall back to the matrix exponential of the generator.
std::array<double, 3> bloch_closed_form(const GeneralizedField& field, double t,
                                        const std::array<double, 3>& r0 = {0, 0, 1});

struct BlochFit {
  GeneralizedField field;
  double gamma = 0.0;     // decay rate, 1/s
  double residual = 0.0;  // root-mean-square over all components and samples
  std::array<double, 4> stderr_est{};  // Gauss-Newton estimates, fit units
  int n_starts_converged = 0;
  bool low_confidence = false;  // short or under-sampled trajectory
};

struct BlochFitOptions {
  int max_iterations = 4000;
  double x_tol = 1e-10;
  double f_tol = 1e-14;
};

// Joint least-squares fit of (x, y, z)(t) = exp(-Gamma t) * closed_form(t)
// over all three components with a shared decay, Nelder-Mead with four
// deterministic starts seeded from an FFT of z(t) and early-time derivatives.
BlochFit fit_bloch_trajectory(const BlochTrajectory& traj,
                              const BlochFitOptions& opts = {});

struct TomographyResult {
  double zx = 0, zy = 0, zz = 0;
  double ix = 0, iy = 0, iz = 0;
  BlochFit fit_control0, fit_control1;
  bool gamma_mismatch = false;  // decay rates differ by more than 3x
};

// Sum/difference extraction of the six interaction terms from the two
// conditional trajectories. Z-axis terms follow the axis convention
// B_z = -Delta, matching the sign of the effective-Hamiltonian module.
TomographyResult hamiltonian_tomography(const BlochTrajectory& control0,
                                        const BlochTrajectory& control1,
                                        const BlochFitOptions& opts = {});

}  // namespace crsim

#endif  // CRSIM_HTTOMO_HPP
