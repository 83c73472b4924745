#ifndef CRSIM_DYNAMICS_HPP
#define CRSIM_DYNAMICS_HPP

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "crsim/effective.hpp"
#include "crsim/frames.hpp"
#include "crsim/model.hpp"

namespace crsim {

// Rounded-square pulse: truncated-Gaussian rise and fall of width `edge`
// (sigma = edge/2, rescaled to run from exactly 0 to exactly 1), flat top in
// between. `value` includes amplitude and sign.
struct PulseEnvelope {
  double amplitude = 0.0;  // rad/s peak
  double flat = 0.0;       // s
  double edge = 0.0;       // s
  double phase = 0.0;      // rad
  double sign = 1.0;       // +1 or -1

  double duration() const { return flat + 2.0 * edge; }
  double shape(double t) const;  // normalized envelope in [0, 1]
  double value(double t) const;  // amplitude * sign * shape(t)

  // Integral of one normalized edge (closed form of the truncated Gaussian).
  static double edge_area(double edge);
  // Equivalent flat-top duration of the full envelope.
  double area() const { return flat + 2.0 * edge_area(edge); }
};

enum class Channel { none, cr, control };

struct Segment {
  Channel channel = Channel::none;
  double start = 0.0;     // s
  double duration = 0.0;  // s
  PulseEnvelope env;      // used when channel != none
  bool ideal_flip = false;  // control segment realized as an instantaneous flip
};

// Time-ordered segments. append_* places segments back to back; hand-built
// layouts must pass validate(), which rejects overlapping segments on one
// channel.
struct PulseSequence {
  std::vector<Segment> segments;

  double total_duration() const;
  void append_delay(double duration);
  void append_pulse(Channel channel, const PulseEnvelope& env);
  void append_ideal_pi(double duration);
  void validate() const;
};

// Echoed CR: [CR(+, tau_half)] [gap] [pi on control] [gap] [CR(-, tau_half)].
// tau_half is the full CR pulse length including both edges; a tau_half of
// zero drops the CR pulses entirely.
PulseSequence echoed_cr_sequence(double tau_half, double gap = 5e-9,
                                 double pi_len = 40e-9, double edge = 10e-9);

// Per-mode relaxation/dephasing times. A non-finite time disables the rate.
struct NoiseSpec {
  struct ModeNoise {
    double t1 = std::numeric_limits<double>::infinity();
    double t2 = std::numeric_limits<double>::infinity();

    double gamma1() const { return std::isfinite(t1) ? 1.0 / t1 : 0.0; }
    // Pure-dephasing rate 1/T_phi = 1/T2 - 1/(2 T1).
    double gamma_phi() const;
  };
  std::vector<ModeNoise> modes;

  void validate(size_t n_modes) const;
};

NoiseSpec noise_from_preset(const Preset& preset);

// One drive term of a channel: envelope * weight * (1/2) *
// (exp(-i(env.phase + phase_offset + carrier_detuning*t)) * raising + h.c.).
struct DriveTerm {
  Channel channel = Channel::cr;
  CMat raising;  // +1 excitation-graded part, propagation frame
  double phase_offset = 0.0;
  double carrier_detuning = 0.0;  // rad/s relative to the rotating frame
  double weight = 1.0;
};

// Everything the stepper needs. States handed in and out are expressed in
// the propagation frame (the dressed frame for the physical machine). When
// noise is present, the per-mode channels act in the bare product basis;
// frame_u (bare -> dressed eigenvector matrix) mediates, an identity when
// the propagation frame already is the product basis.
struct PropagationModel {
  std::vector<int> dims;  // per-mode level counts, slowest first
  CMat h_static;
  std::vector<DriveTerm> terms;
  CMat control_flip;  // unitary for ideal-pi segments
  CMat frame_u;
  double dt = 0.05e-9;

  int dim() const;
};

struct TrajectorySample {
  double t = 0.0;
  CMat rho;
};

// Piecewise-constant propagation (midpoint-sampled envelopes) of a density
// matrix through the sequence; per-mode amplitude-damping and pure-dephasing
// channels are applied after every step when noise is given. Samples are
// taken at the step boundaries nearest the requested times.
std::vector<TrajectorySample> propagate(const PropagationModel& model,
                                        const PulseSequence& seq, const CMat& rho0,
                                        const std::optional<NoiseSpec>& noise,
                                        const std::vector<double>& sample_times);

// Noiseless total unitary of a sequence (same stepping rules as propagate).
CMat sequence_unitary(const PropagationModel& model, const PulseSequence& seq);

// A CR simulation context: dressed machinery plus state preparation and
// target/control readout for the two-qubit subspace.
struct CrContext {
  CircuitSpec spec;
  DriveSpec drive;
  BasisLayout layout;
  DressedBasis basis;
  double omega_d = 0.0;
  PropagationModel model;
  std::array<int, 4> qubit_index{};  // dressed indices of |ct> = 00,01,10,11

  CMat prep(int control_state) const;
  // Bloch vector of the target pair within one control sector.
  std::array<double, 3> target_bloch(const CMat& rho, int control_state) const;
  // Reduced target Bloch vector summed over both control sectors.
  std::array<double, 3> target_bloch_reduced(const CMat& rho) const;
  double control_z(const CMat& rho) const;
};

CrContext make_cr_context(const CircuitSpec& spec, const DriveSpec& drive,
                          const CrOptions& opts = {});

// Two-qubit synthetic stand-in: h_static from the static coefficients, CR
// channel from the drive coefficients (X/Y target components only; scaled by
// the envelope). Useful for isolating sequence-level behavior.
CrContext make_synthetic_context(const EffectiveHamiltonian& static_part,
                                 const EffectiveHamiltonian& drive_part);

struct BlochTrajectory {
  std::vector<double> times;  // s
  std::vector<double> x, y, z;
  std::vector<double> control_z;
  int control_state = 0;
};

struct RabiOptions {
  double tau_max = 2e-6;
  int n_points = 120;
  int control_state = 0;
  bool shaped = false;  // false: square pulse (constant drive)
  std::optional<NoiseSpec> noise;
};

// Target-qubit evolution under a CR drive of variable length, the control
// prepared in |0> or |1> and everything else in the ground state.
BlochTrajectory simulate_cr_rabi(const CrContext& ctx, const RabiOptions& opts);

struct CalibrationResult {
  double tau_half = 0.0;        // s, full half-pulse duration incl. edges
  double achieved_angle = 0.0;  // rad, conditional rotation angle
  double zx = 0.0;              // rad/s used for the initial guess
  int iterations = 0;
};

struct CalibrationOptions {
  double max_tau_half = 5e-6;
  double angle_tolerance = 0.5 * kTwoPi / 360.0;  // 0.5 degrees
  double gap = 5e-9;
  double pi_len = 40e-9;
};

// Chooses tau_half so the echoed sequence implements a conditional pi/2
// target rotation: analytic seed 2 |ZX| tau_eff = pi/2 with tau_eff the
// envelope area, then refinement against the simulated angle. The first form
// computes ZX from the effective-Hamiltonian chain; the second takes it
// directly (synthetic contexts).
CalibrationResult calibrate_zx_gate(const CrContext& ctx,
                                    const CalibrationOptions& opts = {});
CalibrationResult calibrate_zx_gate_with_zx(const CrContext& ctx, double zx,
                                            const CalibrationOptions& opts = {});

struct EchoedEvolution {
  std::vector<double> tau_half;  // s
  std::vector<double> total_time;
  std::vector<double> x, y, z;  // reduced target components after the echo
  std::vector<double> control_z;
};

EchoedEvolution simulate_echoed_cr_evolution(const CrContext& ctx,
                                             const std::vector<double>& tau_half_grid,
                                             const std::optional<NoiseSpec>& noise,
                                             double gap = 5e-9, double pi_len = 40e-9);

// Two-qubit channel of the echoed sequence restricted to the computational
// sectors, with the trailing control bit-flip undone so the ideal action is
// a ZX_pi/2 rotation. Leakage shows up as trace loss of the projected state.
std::function<Eigen::Matrix4cd(const Eigen::Matrix4cd&)> make_echoed_cr_channel(
    const CrContext& ctx, double tau_half, const std::optional<NoiseSpec>& noise,
    double gap = 5e-9, double pi_len = 40e-9);

}  // namespace crsim

#endif  // CRSIM_DYNAMICS_HPP
