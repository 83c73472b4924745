#include "crsim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "crsim/numerics.hpp"

namespace crsim {

namespace {

constexpr double kTimeEps = 1e-15;

double truncated_gauss(double u, double edge) {
  const double sigma = 0.5 * edge;
  const double tail = std::exp(-2.0);
  return (std::exp(-(u - edge) * (u - edge) / (2.0 * sigma * sigma)) - tail) /
         (1.0 - tail);
}

}  // namespace

double PulseEnvelope::shape(double t) const {
  if (t < -kTimeEps || t > duration() + kTimeEps)
    throw std::out_of_range("PulseEnvelope: time outside the pulse support");
  if (edge <= 0.0) return 1.0;
  t = std::clamp(t, 0.0, duration());
  if (t < edge) return truncated_gauss(t, edge);
  if (t > duration() - edge) return truncated_gauss(duration() - t, edge);
  return 1.0;
}

double PulseEnvelope::value(double t) const { return amplitude * sign * shape(t); }

double PulseEnvelope::edge_area(double edge) {
  if (edge <= 0.0) return 0.0;
  const double tail = std::exp(-2.0);
  // integral of the truncated Gaussian rise, sigma = edge/2
  const double gauss = 0.5 * std::sqrt(M_PI / 2.0) * std::erf(std::sqrt(2.0));
  return edge * (gauss - tail) / (1.0 - tail);
}

double PulseSequence::total_duration() const {
  double end = 0.0;
  for (const auto& s : segments) end = std::max(end, s.start + s.duration);
  return end;
}

void PulseSequence::append_delay(double duration) {
  if (duration < 0) throw std::invalid_argument("PulseSequence: negative delay");
  Segment s;
  s.channel = Channel::none;
  s.start = total_duration();
  s.duration = duration;
  segments.push_back(s);
}

void PulseSequence::append_pulse(Channel channel, const PulseEnvelope& env) {
  if (channel == Channel::none)
    throw std::invalid_argument("PulseSequence: pulses need a channel");
  Segment s;
  s.channel = channel;
  s.start = total_duration();
  s.duration = env.duration();
  s.env = env;
  segments.push_back(s);
}

void PulseSequence::append_ideal_pi(double duration) {
  Segment s;
  s.channel = Channel::control;
  s.start = total_duration();
  s.duration = duration;
  s.ideal_flip = true;
  segments.push_back(s);
}

void PulseSequence::validate() const {
  for (const auto& s : segments) {
    if (s.duration < 0) throw std::invalid_argument("PulseSequence: negative duration");
    if (s.channel != Channel::none && !s.ideal_flip &&
        std::abs(s.env.duration() - s.duration) > 1e-12)
      throw std::invalid_argument("PulseSequence: envelope/segment duration mismatch");
  }
  for (size_t i = 0; i < segments.size(); ++i)
    for (size_t j = i + 1; j < segments.size(); ++j) {
      const auto& a = segments[i];
      const auto& b = segments[j];
      if (a.channel == Channel::none || a.channel != b.channel) continue;
      const double overlap = std::min(a.start + a.duration, b.start + b.duration) -
                             std::max(a.start, b.start);
      if (overlap > kTimeEps)
        throw std::invalid_argument("PulseSequence: overlapping segments on one channel");
    }
}

PulseSequence echoed_cr_sequence(double tau_half, double gap, double pi_len,
                                 double edge) {
  if (tau_half < 0 || gap <= 0 || pi_len <= 0)
    throw std::invalid_argument("echoed_cr_sequence: durations must be positive");
  PulseSequence seq;
  auto cr = [&](double sign) {
    PulseEnvelope env;
    env.amplitude = 1.0;  // timing skeleton; consumers set amplitude and phase
    env.edge = std::min(edge, 0.5 * tau_half);
    env.flat = tau_half - 2.0 * env.edge;
    env.sign = sign;
    return env;
  };
  if (tau_half > 0) seq.append_pulse(Channel::cr, cr(+1.0));
  seq.append_delay(gap);
  seq.append_ideal_pi(pi_len);
  seq.append_delay(gap);
  if (tau_half > 0) seq.append_pulse(Channel::cr, cr(-1.0));
  seq.validate();
  return seq;
}

double NoiseSpec::ModeNoise::gamma_phi() const {
  const double g1 = std::isfinite(t1) ? 1.0 / t1 : 0.0;
  const double g2 = std::isfinite(t2) ? 1.0 / t2 : 0.0;
  return std::max(0.0, g2 - 0.5 * g1);
}

void NoiseSpec::validate(size_t n_modes) const {
  if (modes.size() != n_modes)
    throw std::invalid_argument("NoiseSpec: one entry per mode required");
  for (const auto& m : modes) {
    if (m.t1 <= 0 || m.t2 <= 0)
      throw std::invalid_argument("NoiseSpec: coherence times must be positive");
    if (std::isfinite(m.t2) && m.t2 > 2.0 * m.t1 * (1.0 + 1e-12))
      throw std::invalid_argument("NoiseSpec: T2 must not exceed 2 T1");
  }
}

NoiseSpec noise_from_preset(const Preset& preset) {
  NoiseSpec n;
  n.modes = {{preset.coherence_t.t1, preset.coherence_t.t2_echo},
             {preset.coherence_a.t1, preset.coherence_a.t2_echo},
             {preset.coherence_b.t1, preset.coherence_b.t2_echo}};
  return n;
}

int PropagationModel::dim() const {
  int d = 1;
  for (int m : dims) d *= m;
  return d;
}

namespace {

struct StepBlock {
  bool flip = false;
  CMat u;
  int repeat = 1;
  double dt_eff = 0.0;
};

CMat step_unitary(const CMat& h, double dt) { return expm(cxd(0, -1) * h * dt); }

CMat segment_hamiltonian(const PropagationModel& model, const Segment& seg,
                         double t_local) {
  CMat h = model.h_static;
  if (seg.channel == Channel::none || seg.ideal_flip) return h;
  const double v = seg.env.value(t_local);
  if (v == 0.0) return h;
  for (const auto& term : model.terms) {
    if (term.channel != seg.channel) continue;
    const double phase = seg.env.phase + term.phase_offset +
                         term.carrier_detuning * (seg.start + t_local);
    const cxd c = 0.5 * v * term.weight * std::exp(cxd(0, -phase));
    h += c * term.raising + std::conj(c) * term.raising.adjoint();
  }
  return h;
}

bool segment_is_static(const PropagationModel& model, const Segment& seg) {
  if (seg.channel == Channel::none || seg.ideal_flip) return true;
  if (seg.env.edge > 0.0) return false;
  for (const auto& term : model.terms)
    if (term.channel == seg.channel && term.carrier_detuning != 0.0) return false;
  return true;
}

// Piecewise-constant step plan. With `stepwise` (needed when noise channels
// interleave) constant stretches are emitted as a repeated single-step op;
// otherwise they collapse to one whole-duration op.
std::vector<StepBlock> compile_steps(const PropagationModel& model,
                                     const PulseSequence& seq, bool stepwise) {
  seq.validate();
  std::vector<Segment> ordered = seq.segments;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Segment& a, const Segment& b) { return a.start < b.start; });
  std::vector<StepBlock> blocks;
  for (const auto& seg : ordered) {
    if (seg.ideal_flip) {
      const double half = 0.5 * seg.duration;
      auto emit_idle = [&](double dur) {
        if (dur <= 0) return;
        if (stepwise) {
          const int n = std::max(1, static_cast<int>(std::lround(dur / model.dt)));
          const double dt_eff = dur / n;
          blocks.push_back({false, step_unitary(model.h_static, dt_eff), n, dt_eff});
        } else {
          blocks.push_back({false, step_unitary(model.h_static, dur), 1, dur});
        }
      };
      emit_idle(half);
      blocks.push_back({true, model.control_flip, 1, 0.0});
      emit_idle(seg.duration - half);
      continue;
    }
    if (seg.duration <= 0) continue;
    const int n = std::max(1, static_cast<int>(std::lround(seg.duration / model.dt)));
    const double dt_eff = seg.duration / n;
    if (segment_is_static(model, seg)) {
      const CMat h = segment_hamiltonian(model, seg, 0.5 * seg.duration);
      if (stepwise)
        blocks.push_back({false, step_unitary(h, dt_eff), n, dt_eff});
      else
        blocks.push_back({false, step_unitary(h, seg.duration), 1, seg.duration});
    } else {
      for (int s = 0; s < n; ++s) {
        const double t_mid = (s + 0.5) * dt_eff;
        blocks.push_back(
            {false, step_unitary(segment_hamiltonian(model, seg, t_mid), dt_eff), 1, dt_eff});
      }
    }
  }
  return blocks;
}

// Exact single-step amplitude-damping and pure-dephasing channels in the
// bare product basis; the two commute, so the application order is free.
class NoiseStepper {
 public:
  NoiseStepper(const std::vector<int>& dims, const NoiseSpec& noise, double dt) {
    const int dim = [&] {
      int d = 1;
      for (int m : dims) d *= m;
      return d;
    }();
    occupation_.resize(dims.size());
    int stride = dim;
    for (size_t m = 0; m < dims.size(); ++m) {
      stride /= dims[m];
      strides_.push_back(stride);
      occupation_[m].resize(static_cast<size_t>(dim));
      for (int i = 0; i < dim; ++i)
        occupation_[m][static_cast<size_t>(i)] = (i / stride) % dims[m];
    }

    for (size_t m = 0; m < dims.size(); ++m) {
      const double g1 = noise.modes[m].gamma1();
      if (g1 <= 0.0) {
        damping_.push_back({});
        continue;
      }
      const double eta = std::exp(-g1 * dt);
      const int d = dims[m];
      std::vector<double> amp(static_cast<size_t>(d) * d, 0.0);
      for (int nn = 0; nn < d; ++nn) {
        double binom = 1.0;
        for (int k = 0; k <= nn; ++k) {
          amp[static_cast<size_t>(nn) * d + k] =
              std::sqrt(binom * std::pow(eta, nn - k) * std::pow(1.0 - eta, k));
          binom *= static_cast<double>(nn - k) / (k + 1);
        }
      }
      damping_.push_back(std::move(amp));
    }

    dephase_ = RMat::Ones(dim, dim);
    bool any = false;
    for (size_t m = 0; m < dims.size(); ++m) {
      const double gp = noise.modes[m].gamma_phi();
      if (gp <= 0.0) continue;
      any = true;
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
          const double dn = occupation_[m][static_cast<size_t>(i)] -
                            occupation_[m][static_cast<size_t>(j)];
          dephase_(i, j) *= std::exp(-gp * dt * dn * dn);
        }
    }
    any_dephase_ = any;
    dims_ = dims;
  }

  void apply(CMat& rho) const {
    const int dim = static_cast<int>(rho.rows());
    for (size_t m = 0; m < dims_.size(); ++m) {
      if (damping_[m].empty()) continue;
      const int d = dims_[m];
      const int stride = strides_[m];
      scratch_ = CMat::Zero(dim, dim);
      for (int i = 0; i < dim; ++i) {
        const int ni = occupation_[m][static_cast<size_t>(i)];
        for (int j = 0; j < dim; ++j) {
          const int nj = occupation_[m][static_cast<size_t>(j)];
          const cxd r = rho(i, j);
          const int kmax = std::min(ni, nj);
          for (int k = 0; k <= kmax; ++k) {
            const double a = damping_[m][static_cast<size_t>(ni) * d + k] *
                             damping_[m][static_cast<size_t>(nj) * d + k];
            scratch_(i - k * stride, j - k * stride) += a * r;
          }
        }
      }
      rho.swap(scratch_);
    }
    if (any_dephase_) rho = rho.cwiseProduct(dephase_.cast<cxd>());
  }

 private:
  std::vector<int> dims_;
  std::vector<int> strides_;
  std::vector<std::vector<int>> occupation_;
  std::vector<std::vector<double>> damping_;  // amp[n*d + k]; empty if off
  RMat dephase_;
  bool any_dephase_ = false;
  mutable CMat scratch_;
};

void check_density(const CMat& rho) {
  if (rho.rows() != rho.cols()) throw std::invalid_argument("density matrix must be square");
  if (std::abs(rho.trace().real() - 1.0) > 1e-9 || std::abs(rho.trace().imag()) > 1e-9)
    throw std::invalid_argument("density matrix must have unit trace");
  const EigResult eig = eig_hermitian(hermitize(rho));
  if (eig.eigenvalues.minCoeff() < -1e-9)
    throw std::invalid_argument("density matrix must be positive semidefinite");
}

}  // namespace

std::vector<TrajectorySample> propagate(const PropagationModel& model,
                                        const PulseSequence& seq, const CMat& rho0,
                                        const std::optional<NoiseSpec>& noise,
                                        const std::vector<double>& sample_times) {
  check_density(rho0);
  if (rho0.rows() != model.dim())
    throw std::invalid_argument("propagate: state dimension mismatch");
  if (noise) noise->validate(model.dims.size());

  const bool noisy = noise.has_value();
  const bool rotate = noisy && model.frame_u.size() > 0;
  std::vector<StepBlock> blocks = compile_steps(model, seq, noisy);
  if (rotate) {
    for (auto& b : blocks) b.u = model.frame_u * b.u * model.frame_u.adjoint();
  }

  std::map<double, NoiseStepper> steppers;
  if (noisy) {
    for (const auto& b : blocks)
      if (!b.flip && !steppers.count(b.dt_eff))
        steppers.emplace(b.dt_eff, NoiseStepper(model.dims, *noise, b.dt_eff));
  }

  CMat rho = rotate ? CMat(model.frame_u * rho0 * model.frame_u.adjoint()) : rho0;
  std::vector<double> wanted = sample_times;
  std::sort(wanted.begin(), wanted.end());
  size_t next = 0;
  std::vector<TrajectorySample> out;
  double t = 0.0;
  auto emit_passed = [&](double t_now, double dt_step) {
    while (next < wanted.size() && wanted[next] <= t_now + 0.5 * dt_step) {
      out.push_back({t_now, rotate
                                ? CMat(model.frame_u.adjoint() * rho * model.frame_u)
                                : rho});
      ++next;
    }
  };
  emit_passed(0.0, model.dt);

  for (const auto& b : blocks) {
    if (b.flip) {
      rho = b.u * rho * b.u.adjoint();
      continue;
    }
    const NoiseStepper* stepper = nullptr;
    if (noisy) stepper = &steppers.at(b.dt_eff);
    for (int r = 0; r < b.repeat; ++r) {
      rho = b.u * rho * b.u.adjoint();
      if (stepper) stepper->apply(rho);
      t += b.dt_eff;
      emit_passed(t, b.dt_eff);
    }
  }
  // Anything requested beyond the sequence end gets the final state.
  while (next < wanted.size()) {
    out.push_back({t, rotate ? CMat(model.frame_u.adjoint() * rho * model.frame_u) : rho});
    ++next;
  }
  return out;
}

CMat sequence_unitary(const PropagationModel& model, const PulseSequence& seq) {
  const std::vector<StepBlock> blocks = compile_steps(model, seq, false);
  CMat u = CMat::Identity(model.dim(), model.dim());
  for (const auto& b : blocks)
    for (int r = 0; r < b.repeat; ++r) u = b.u * u;
  return u;
}

CMat CrContext::prep(int control_state) const {
  if (control_state != 0 && control_state != 1)
    throw std::invalid_argument("control state must be 0 or 1");
  const int dim = model.dim();
  CMat rho = CMat::Zero(dim, dim);
  rho(qubit_index[static_cast<size_t>(2 * control_state)],
      qubit_index[static_cast<size_t>(2 * control_state)]) = 1.0;
  return rho;
}

std::array<double, 3> CrContext::target_bloch(const CMat& rho, int control_state) const {
  const int g = qubit_index[static_cast<size_t>(2 * control_state)];
  const int e = qubit_index[static_cast<size_t>(2 * control_state + 1)];
  return {2.0 * rho(e, g).real(), 2.0 * rho(e, g).imag(),
          rho(g, g).real() - rho(e, e).real()};
}

std::array<double, 3> CrContext::target_bloch_reduced(const CMat& rho) const {
  const auto b0 = target_bloch(rho, 0);
  const auto b1 = target_bloch(rho, 1);
  return {b0[0] + b1[0], b0[1] + b1[1], b0[2] + b1[2]};
}

double CrContext::control_z(const CMat& rho) const {
  double z = 0.0;
  for (int i = 0; i < layout.dim(); ++i) {
    const int nt = layout.label(i)[0];
    if (nt == 0)
      z += rho(i, i).real();
    else if (nt == 1)
      z -= rho(i, i).real();
  }
  return z;
}

CrContext make_cr_context(const CircuitSpec& spec, const DriveSpec& drive,
                          const CrOptions& opts) {
  spec.validate();
  drive.validate();
  BasisLayout layout(spec, opts.ordering);
  const CMat h0 = build_bare_hamiltonian(spec, layout);
  DressedBasis basis = diagonalize_bare(h0, layout);
  const auto [x_t, x_a] = build_drive_operators(spec, layout);
  const CMat d_t = rotate_operator(basis.u, x_t);
  const CMat d_a = rotate_operator(basis.u, x_a);

  double omega_d = drive.omega_d;
  if (opts.omega_d_override)
    omega_d = *opts.omega_d_override;
  else if (omega_d == 0.0)
    omega_d = default_drive_frequency(basis);

  CrContext ctx{spec, drive, layout, basis, omega_d, {}, {}};
  ctx.model.dims = {layout.d_t(), layout.d_a(), layout.d_b()};
  const int dim = layout.dim();
  ctx.model.h_static = CMat::Zero(dim, dim);
  for (int i = 0; i < dim; ++i)
    ctx.model.h_static(i, i) = basis.energies[i] - omega_d * layout.excitation(i);

  const GradedOperator g_t = grade_by_excitation(d_t, basis);
  DriveTerm cr_term;
  cr_term.channel = Channel::cr;
  cr_term.raising = g_t.plus;
  ctx.model.terms.push_back(cr_term);
  if (drive.crosstalk_m > 0.0) {
    const GradedOperator g_a = grade_by_excitation(d_a, basis);
    DriveTerm ct;
    ct.channel = Channel::cr;
    ct.raising = g_a.plus;
    ct.weight = drive.crosstalk_m;
    ct.phase_offset = drive.crosstalk_phase - drive.phase;
    ctx.model.terms.push_back(ct);
  }
  // Control channel for shaped pi pulses, carried at the mean conditional
  // control frequency relative to the CR rotating frame.
  {
    const double f0 = basis.energies[layout.index(1, 0, 0)] - basis.energies[layout.index(0, 0, 0)];
    const double f1 = basis.energies[layout.index(1, 1, 0)] - basis.energies[layout.index(0, 1, 0)];
    DriveTerm pi_term;
    pi_term.channel = Channel::control;
    pi_term.raising = g_t.plus;
    pi_term.carrier_detuning = 0.5 * (f0 + f1) - omega_d;
    ctx.model.terms.push_back(pi_term);
  }

  // Ideal pi: swap the lowest two transmon labels in every spectator sector.
  ctx.model.control_flip = CMat::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) {
    const auto l = layout.label(i);
    if (l[0] == 0)
      ctx.model.control_flip(layout.index(1, l[1], l[2]), i) = 1.0;
    else if (l[0] == 1)
      ctx.model.control_flip(layout.index(0, l[1], l[2]), i) = 1.0;
    else
      ctx.model.control_flip(i, i) = 1.0;
  }
  ctx.model.frame_u = basis.u;

  ctx.qubit_index = {layout.index(0, 0, 0), layout.index(0, 1, 0),
                     layout.index(1, 0, 0), layout.index(1, 1, 0)};
  return ctx;
}

CrContext make_synthetic_context(const EffectiveHamiltonian& static_part,
                                 const EffectiveHamiltonian& drive_part) {
  if (drive_part.ii != 0 || drive_part.iz != 0 || drive_part.zi != 0 || drive_part.zz != 0)
    throw std::invalid_argument(
        "synthetic drive supports transverse (X/Y) target components only");
  CircuitSpec spec;
  spec.t = {'T', ghz_to_rad(5.0), mhz_to_rad(-200), 2};
  spec.a = {'A', ghz_to_rad(4.5), mhz_to_rad(-100), 2};
  spec.b = {'B', ghz_to_rad(6.5), mhz_to_rad(-150), 2};

  BasisLayout layout(spec);
  const int dim = layout.dim();
  CrContext ctx{spec, DriveSpec{}, layout, DressedBasis{CMat::Identity(dim, dim),
                                                        RVec::Zero(dim), layout, 1.0},
                0.0, {}, {}};
  ctx.drive.amplitude = 1.0;  // envelopes carry the synthetic scale directly
  ctx.drive.edge_time = 0.0;
  ctx.model.dims = {2, 2, 2};
  ctx.qubit_index = {layout.index(0, 0, 0), layout.index(0, 1, 0),
                     layout.index(1, 0, 0), layout.index(1, 1, 0)};

  auto embed = [&](const Eigen::Matrix4cd& m) {
    CMat full = CMat::Zero(dim, dim);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        full(ctx.qubit_index[static_cast<size_t>(r)],
             ctx.qubit_index[static_cast<size_t>(c)]) = m(r, c);
    return full;
  };
  ctx.model.h_static = embed(static_part.reconstruct());

  const CMat h_drive = embed(drive_part.reconstruct());
  DriveTerm term;
  term.channel = Channel::cr;
  term.raising = CMat::Zero(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c)
      if (layout.excitation(r) == layout.excitation(c) + 1)
        term.raising(r, c) = 2.0 * h_drive(r, c);
  ctx.model.terms.push_back(term);

  ctx.model.control_flip = CMat::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) {
    const auto l = layout.label(i);
    ctx.model.control_flip(layout.index(1 - l[0], l[1], l[2]), i) = 1.0;
  }
  ctx.model.frame_u = CMat();  // propagation frame is the product basis
  return ctx;
}

namespace {

// Cached propagators for repeated pulses of the same shape: edge products and
// the flat-top eigendecomposition, per drive sign.
class CrPulseCache {
 public:
  CrPulseCache(const PropagationModel& model, double amplitude, double phase,
               double edge)
      : model_(model), amplitude_(amplitude), phase_(phase), edge_(edge) {}

  CMat pulse_unitary(double sign, double flat) const {
    const Entry& e = entry(sign);
    CMat u = e.rise;
    if (flat > 0) u = flat_unitary(e, flat) * u;
    return e.fall * u;
  }

  const EigResult& flat_eig(double sign) const { return entry(sign).flat; }

 private:
  struct Entry {
    CMat rise, fall;
    EigResult flat;
  };

  CMat flat_unitary(const Entry& e, double flat) const {
    CVec phases(e.flat.eigenvalues.size());
    for (Eigen::Index k = 0; k < phases.size(); ++k)
      phases[k] = std::exp(cxd(0, -e.flat.eigenvalues[k] * flat));
    return e.flat.eigenvectors * phases.asDiagonal() * e.flat.eigenvectors.adjoint();
  }

  const Entry& entry(double sign) const {
    auto& slot = sign > 0 ? pos_ : neg_;
    if (!slot) slot = build(sign);
    return *slot;
  }

  std::optional<Entry> build(double sign) const {
    Entry e;
    PulseEnvelope env;
    env.amplitude = amplitude_;
    env.phase = phase_;
    env.sign = sign;
    env.edge = edge_;
    env.flat = 1.0;  // placeholder; edges depend only on the edge shape
    Segment seg;
    seg.channel = Channel::cr;
    seg.env = env;
    const int dim = model_.dim();
    e.rise = CMat::Identity(dim, dim);
    e.fall = CMat::Identity(dim, dim);
    if (edge_ > 0) {
      const int n = std::max(1, static_cast<int>(std::lround(edge_ / model_.dt)));
      const double dt_eff = edge_ / n;
      for (int s = 0; s < n; ++s) {
        const double t_mid = (s + 0.5) * dt_eff;
        e.rise = step_unitary(segment_hamiltonian(model_, seg, t_mid), dt_eff) * e.rise;
        // mirrored fall edge
        const double t_fall = env.duration() - edge_ + t_mid;
        e.fall = step_unitary(segment_hamiltonian(model_, seg, t_fall), dt_eff) * e.fall;
      }
    }
    Segment flat_seg;
    flat_seg.channel = Channel::cr;
    PulseEnvelope flat_env = env;
    flat_env.edge = 0.0;
    flat_env.flat = 1.0;
    flat_seg.env = flat_env;
    flat_seg.duration = flat_env.duration();
    e.flat = eig_hermitian(segment_hamiltonian(model_, flat_seg, 0.5));
    return e;
  }

  const PropagationModel& model_;
  double amplitude_, phase_, edge_;
  mutable std::optional<Entry> pos_, neg_;
};

CMat idle_unitary(const PropagationModel& model, double duration) {
  return step_unitary(model.h_static, duration);
}

}  // namespace

BlochTrajectory simulate_cr_rabi(const CrContext& ctx, const RabiOptions& opts) {
  if (opts.n_points < 2) throw std::invalid_argument("simulate_cr_rabi: need at least 2 points");
  BlochTrajectory traj;
  traj.control_state = opts.control_state;
  const double edge = opts.shaped ? ctx.drive.edge_time : 0.0;
  const CMat rho0 = ctx.prep(opts.control_state);

  CrPulseCache cache(ctx.model, ctx.drive.amplitude, ctx.drive.phase, edge);
  for (int k = 0; k < opts.n_points; ++k) {
    const double tau = opts.tau_max * k / (opts.n_points - 1);
    CMat rho;
    if (!opts.noise) {
      CMat u;
      if (tau <= 0) {
        u = CMat::Identity(ctx.model.dim(), ctx.model.dim());
      } else if (tau < 2.0 * edge) {
        // Short pulses compress the edges.
        CrPulseCache tiny(ctx.model, ctx.drive.amplitude, ctx.drive.phase, 0.5 * tau);
        u = tiny.pulse_unitary(+1.0, 0.0);
      } else {
        u = cache.pulse_unitary(+1.0, tau - 2.0 * edge);
      }
      rho = u * rho0 * u.adjoint();
    } else {
      PulseSequence seq;
      if (tau > 0) {
        PulseEnvelope env;
        env.amplitude = ctx.drive.amplitude;
        env.phase = ctx.drive.phase;
        env.edge = std::min(edge, 0.5 * tau);
        env.flat = tau - 2.0 * env.edge;
        seq.append_pulse(Channel::cr, env);
      } else {
        seq.append_delay(0.0);
      }
      rho = propagate(ctx.model, seq, rho0, opts.noise, {tau}).back().rho;
    }
    const auto bloch = ctx.target_bloch(rho, opts.control_state);
    const double r2 = bloch[0] * bloch[0] + bloch[1] * bloch[1] + bloch[2] * bloch[2];
    if (r2 > 1.0 + 1e-9)
      throw std::runtime_error("simulate_cr_rabi: Bloch vector left the unit ball");
    traj.times.push_back(tau);
    traj.x.push_back(bloch[0]);
    traj.y.push_back(bloch[1]);
    traj.z.push_back(bloch[2]);
    traj.control_z.push_back(ctx.control_z(rho));
  }
  return traj;
}

namespace {

// Noiseless echoed-sequence propagator with cached pulse pieces.
class EchoEngine {
 public:
  EchoEngine(const CrContext& ctx, double gap, double pi_len)
      : ctx_(ctx),
        gap_(gap),
        pi_len_(pi_len),
        cache_(ctx.model, ctx.drive.amplitude, ctx.drive.phase, ctx.drive.edge_time),
        u_gap_(idle_unitary(ctx.model, gap)),
        u_half_pi_(idle_unitary(ctx.model, 0.5 * pi_len)) {}

  CMat unitary(double tau_half) const {
    const int dim = ctx_.model.dim();
    CMat u = CMat::Identity(dim, dim);
    const double edge = std::min(ctx_.drive.edge_time, 0.5 * tau_half);
    const bool shrunk = edge < ctx_.drive.edge_time - kTimeEps;
    if (tau_half > 0) {
      if (shrunk) {
        CrPulseCache tiny(ctx_.model, ctx_.drive.amplitude, ctx_.drive.phase, edge);
        u = tiny.pulse_unitary(+1.0, tau_half - 2 * edge) * u;
      } else {
        u = cache_.pulse_unitary(+1.0, tau_half - 2 * edge) * u;
      }
    }
    u = u_gap_ * u;
    u = u_half_pi_ * u;
    u = ctx_.model.control_flip * u;
    u = u_half_pi_ * u;
    u = u_gap_ * u;
    if (tau_half > 0) {
      if (shrunk) {
        CrPulseCache tiny(ctx_.model, ctx_.drive.amplitude, ctx_.drive.phase, edge);
        u = tiny.pulse_unitary(-1.0, tau_half - 2 * edge) * u;
      } else {
        u = cache_.pulse_unitary(-1.0, tau_half - 2 * edge) * u;
      }
    }
    return u;
  }

 private:
  const CrContext& ctx_;
  double gap_, pi_len_;
  CrPulseCache cache_;
  CMat u_gap_, u_half_pi_;
};

double conditional_angle(const CrContext& ctx, const CMat& u) {
  const CMat rho0 = ctx.prep(0);
  const CMat rho1 = ctx.prep(1);
  const CMat out0 = u * rho0 * u.adjoint();
  const CMat out1 = u * rho1 * u.adjoint();
  // After the echo the control is flipped; read the target in the landing
  // sector. A rotation by theta about +x takes (0,0,1) to y = -sin, z = cos.
  const auto b0 = ctx.target_bloch(out0, 1);
  const auto b1 = ctx.target_bloch(out1, 0);
  const double theta0 = std::atan2(-b0[1], b0[2]);
  const double theta1 = std::atan2(-b1[1], b1[2]);
  return 0.5 * (theta0 - theta1);
}

}  // namespace

CalibrationResult calibrate_zx_gate(const CrContext& ctx, const CalibrationOptions& opts) {
  CrOptions eff_opts;
  eff_opts.omega_d_override = ctx.omega_d;
  const CrEffectiveResult eff = cr_effective_hamiltonian(ctx.spec, ctx.drive, eff_opts);
  return calibrate_zx_gate_with_zx(ctx, eff.coeffs.zx, opts);
}

CalibrationResult calibrate_zx_gate_with_zx(const CrContext& ctx, double zx,
                                            const CalibrationOptions& opts) {
  if (zx == 0.0 || !std::isfinite(zx))
    throw std::invalid_argument("calibrate_zx_gate: ZX rate must be nonzero");
  const double edge = ctx.drive.edge_time;
  const double tau_eff = 0.25 * M_PI / std::abs(zx);
  double tau = std::max(2.0 * edge, tau_eff - 2.0 * PulseEnvelope::edge_area(edge) + 2.0 * edge);
  if (tau > opts.max_tau_half)
    throw std::runtime_error("calibrate_zx_gate: interaction too weak, gate exceeds the cap");

  EchoEngine engine(ctx, opts.gap, opts.pi_len);
  const double target = 0.5 * M_PI;
  auto angle_at = [&](double tau_half) {
    return std::abs(conditional_angle(ctx, engine.unitary(tau_half)));
  };

  double f = angle_at(tau) - target;
  int iterations = 1;
  double tau_prev = tau * 0.95;
  double f_prev = angle_at(tau_prev) - target;
  ++iterations;
  while (std::abs(f) > 0.2 * opts.angle_tolerance && iterations < 30) {
    const double denom = f - f_prev;
    double tau_next;
    if (std::abs(denom) < 1e-18) {
      tau_next = tau * (target / (f + target));
    } else {
      tau_next = tau - f * (tau - tau_prev) / denom;
    }
    if (!(tau_next > 0)) tau_next = 0.5 * tau;
    if (tau_next > opts.max_tau_half)
      throw std::runtime_error("calibrate_zx_gate: interaction too weak, gate exceeds the cap");
    tau_prev = tau;
    f_prev = f;
    tau = tau_next;
    f = angle_at(tau) - target;
    ++iterations;
  }
  const double achieved = f + target;
  if (std::abs(achieved - target) > opts.angle_tolerance)
    throw std::runtime_error("calibrate_zx_gate: refinement did not reach the target angle");

  CalibrationResult out;
  out.tau_half = tau;
  out.achieved_angle = achieved;
  out.zx = zx;
  out.iterations = iterations;
  return out;
}

std::function<Eigen::Matrix4cd(const Eigen::Matrix4cd&)> make_echoed_cr_channel(
    const CrContext& ctx, double tau_half, const std::optional<NoiseSpec>& noise,
    double gap, double pi_len) {
  const int dim = ctx.model.dim();
  const auto idx = ctx.qubit_index;

  auto embed = [idx, dim](const Eigen::Matrix4cd& rho) {
    CMat full = CMat::Zero(dim, dim);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        full(idx[static_cast<size_t>(r)], idx[static_cast<size_t>(c)]) = rho(r, c);
    return full;
  };
  auto project = [idx](const CMat& full) {
    Eigen::Matrix4cd rho;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        rho(r, c) = full(idx[static_cast<size_t>(r)], idx[static_cast<size_t>(c)]);
    // Undo the control bit-flip of the echo.
    const Eigen::Matrix4cd flip = kron(pauli1(1), pauli1(0));
    return Eigen::Matrix4cd(flip * rho * flip);
  };

  if (!noise) {
    const EchoEngine engine(ctx, gap, pi_len);
    const CMat u = engine.unitary(tau_half);
    return [u, embed, project](const Eigen::Matrix4cd& rho_in) {
      const CMat full = embed(rho_in);
      return project(u * full * u.adjoint());
    };
  }

  PulseSequence seq = echoed_cr_sequence(tau_half, gap, pi_len, ctx.drive.edge_time);
  for (auto& seg : seq.segments)
    if (seg.channel == Channel::cr) {
      seg.env.amplitude = ctx.drive.amplitude;
      seg.env.phase = ctx.drive.phase;
    }
  const PropagationModel model = ctx.model;
  const NoiseSpec noise_spec = *noise;
  const double total = seq.total_duration();
  return [model, seq, noise_spec, total, embed, project](const Eigen::Matrix4cd& rho_in) {
    const CMat full = embed(rho_in);
    const auto samples = propagate(model, seq, full, noise_spec, {total});
    return project(samples.back().rho);
  };
}

EchoedEvolution simulate_echoed_cr_evolution(const CrContext& ctx,
                                             const std::vector<double>& tau_half_grid,
                                             const std::optional<NoiseSpec>& noise,
                                             double gap, double pi_len) {
  EchoedEvolution out;
  EchoEngine engine(ctx, gap, pi_len);
  const CMat rho0 = ctx.prep(0);
  for (double tau : tau_half_grid) {
    CMat rho;
    if (!noise) {
      const CMat u = engine.unitary(tau);
      rho = u * rho0 * u.adjoint();
    } else {
      const PulseSequence seq = echoed_cr_sequence(tau, gap, pi_len, ctx.drive.edge_time);
      // Scale the unit envelopes by the physical drive.
      PulseSequence scaled = seq;
      for (auto& seg : scaled.segments)
        if (seg.channel == Channel::cr) {
          seg.env.amplitude = ctx.drive.amplitude;
          seg.env.phase = ctx.drive.phase;
        }
      rho = propagate(ctx.model, scaled, rho0, noise, {scaled.total_duration()}).back().rho;
    }
    const auto b = ctx.target_bloch_reduced(rho);
    out.tau_half.push_back(tau);
    out.total_time.push_back(2 * tau + 2 * gap + pi_len);
    out.x.push_back(b[0]);
    out.y.push_back(b[1]);
    out.z.push_back(b[2]);
    out.control_z.push_back(ctx.control_z(rho));
  }
  return out;
}

}  // namespace crsim
