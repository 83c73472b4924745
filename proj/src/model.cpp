#include "crsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace crsim {

void ModeSpec::validate() const {
  if (levels < 2)
    throw std::invalid_argument(std::string("mode ") + label +
                                ": needs at least 2 levels");
  if (!(omega > 0.0) || !std::isfinite(omega))
    throw std::invalid_argument(std::string("mode ") + label +
                                ": frequency must be positive and finite");
  if (!std::isfinite(alpha) || std::abs(alpha) >= omega)
    throw std::invalid_argument(std::string("mode ") + label +
                                ": |anharmonicity| must be below the frequency");
}

std::vector<std::string> CircuitSpec::validate() const {
  t.validate();
  a.validate();
  b.validate();
  if (!std::isfinite(j_zz) || !std::isfinite(j_xx) || !std::isfinite(lambda))
    throw std::invalid_argument("couplings must be finite");
  if (std::abs(lambda) >= 0.5)
    throw std::invalid_argument("|lambda| must be below 0.5");

  std::vector<std::string> warnings;
  if (std::abs(lambda) > 0.1)
    warnings.push_back("lambda above 0.1; B-mode admixture is not small");
  const double d_ta = std::abs(t.omega - a.omega);
  const double d_tb = std::abs(t.omega - b.omega);
  const double d_ab = std::abs(a.omega - b.omega);
  const double min_detuning = std::min({d_ta, d_tb, d_ab});
  if (std::abs(j_xx) > min_detuning / 3.0)
    warnings.push_back("j_xx is not small against the mode detunings; dispersive treatment is strained");
  return warnings;
}

const ModeSpec& CircuitSpec::mode(char label) const {
  switch (label) {
    case 'T': return t;
    case 'A': return a;
    case 'B': return b;
    default: throw std::invalid_argument("unknown mode label");
  }
}

void DriveSpec::validate() const {
  if (crosstalk_m < 0) throw std::invalid_argument("cross-talk fraction must be nonnegative");
  if (!std::isfinite(amplitude) || !std::isfinite(omega_d) || !std::isfinite(phase) ||
      !std::isfinite(crosstalk_m) || !std::isfinite(crosstalk_phase))
    throw std::invalid_argument("drive parameters must be finite");
  if (edge_time < 0) throw std::invalid_argument("edge time must be nonnegative");
}

BasisLayout::BasisLayout(int d_t, int d_a, int d_b, BasisOrdering ordering)
    : d_t_(d_t), d_a_(d_a), d_b_(d_b), ordering_(ordering) {
  if (d_t < 2 || d_a < 2 || d_b < 2)
    throw std::invalid_argument("BasisLayout: each mode needs at least 2 levels");
  const int n = dim();
  to_tensor_.resize(static_cast<size_t>(n));
  std::iota(to_tensor_.begin(), to_tensor_.end(), 0);
  if (ordering == BasisOrdering::excitation) {
    std::stable_sort(to_tensor_.begin(), to_tensor_.end(), [&](int lhs, int rhs) {
      const int et = lhs / (d_a_ * d_b_) + (lhs / d_b_) % d_a_ + lhs % d_b_;
      const int er = rhs / (d_a_ * d_b_) + (rhs / d_b_) % d_a_ + rhs % d_b_;
      if (et != er) return et < er;
      return lhs < rhs;  // within a shell: lexicographic in (n_T, n_A, n_B)
    });
  }
  from_tensor_.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) from_tensor_[static_cast<size_t>(to_tensor_[static_cast<size_t>(i)])] = i;
}

BasisLayout::BasisLayout(const CircuitSpec& spec, BasisOrdering ordering)
    : BasisLayout(spec.t.levels, spec.a.levels, spec.b.levels, ordering) {}

int BasisLayout::tensor_index(int n_t, int n_a, int n_b) const {
  return (n_t * d_a_ + n_a) * d_b_ + n_b;
}

int BasisLayout::index(int n_t, int n_a, int n_b) const {
  if (n_t < 0 || n_t >= d_t_ || n_a < 0 || n_a >= d_a_ || n_b < 0 || n_b >= d_b_)
    throw std::out_of_range("BasisLayout::index: occupation out of range");
  return from_tensor_[static_cast<size_t>(tensor_index(n_t, n_a, n_b))];
}

std::array<int, 3> BasisLayout::label(int index) const {
  if (index < 0 || index >= dim()) throw std::out_of_range("BasisLayout::label");
  const int t = to_tensor_[static_cast<size_t>(index)];
  return {t / (d_a_ * d_b_), (t / d_b_) % d_a_, t % d_b_};
}

int BasisLayout::excitation(int index) const {
  const auto l = label(index);
  return l[0] + l[1] + l[2];
}

std::vector<int> BasisLayout::permutation_to(BasisOrdering other) const {
  BasisLayout target(d_t_, d_a_, d_b_, other);
  std::vector<int> perm(static_cast<size_t>(dim()));
  for (int i = 0; i < dim(); ++i) {
    const auto l = label(i);
    perm[static_cast<size_t>(i)] = target.index(l[0], l[1], l[2]);
  }
  return perm;
}

namespace {

// Adds c * |to><from| + h.c. style exchange terms through explicit indices so
// a single code path serves both orderings.
void check_layout(const CircuitSpec& spec, const BasisLayout& layout) {
  if (layout.d_t() != spec.t.levels || layout.d_a() != spec.a.levels ||
      layout.d_b() != spec.b.levels)
    throw std::invalid_argument("layout level counts do not match the circuit spec");
}

}  // namespace

CMat build_bare_hamiltonian(const CircuitSpec& spec, const BasisLayout& layout) {
  spec.validate();
  check_layout(spec, layout);
  const int n = layout.dim();
  CMat h = CMat::Zero(n, n);

  for (int i = 0; i < n; ++i) {
    const auto l = layout.label(i);
    double e = spec.t.energy(l[0]) + spec.a.energy(l[1]) + spec.b.energy(l[2]);
    e += 2.0 * spec.j_zz * l[1] * l[2];
    h(i, i) = e;
  }

  auto add_exchange = [&](char hi, char lo, double coupling) {
    // coupling * (a_hi^dag a_lo + a_lo^dag a_hi)
    if (coupling == 0.0) return;
    for (int i = 0; i < n; ++i) {
      auto l = layout.label(i);
      auto occ = [&](char m) -> int& {
        return m == 'T' ? l[0] : (m == 'A' ? l[1] : l[2]);
      };
      const int nh = occ(hi), nl = occ(lo);
      if (nh + 1 >= (hi == 'T' ? layout.d_t() : hi == 'A' ? layout.d_a() : layout.d_b()) ||
          nl == 0)
        continue;
      occ(hi) = nh + 1;
      occ(lo) = nl - 1;
      const int j = layout.index(l[0], l[1], l[2]);
      const double amp = coupling * std::sqrt(static_cast<double>(nh + 1)) *
                         std::sqrt(static_cast<double>(nl));
      h(j, i) += amp;
      h(i, j) += amp;
    }
  };
  add_exchange('A', 'T', spec.j_xx);
  add_exchange('B', 'T', spec.lambda * spec.j_xx);

  return h;
}

std::pair<CMat, CMat> build_drive_operators(const CircuitSpec& spec,
                                            const BasisLayout& layout) {
  check_layout(spec, layout);
  const int n = layout.dim();
  auto quadrature = [&](char mode) {
    CMat x = CMat::Zero(n, n);
    const int d = mode == 'T' ? layout.d_t() : mode == 'A' ? layout.d_a() : layout.d_b();
    for (int i = 0; i < n; ++i) {
      auto l = layout.label(i);
      int& occ = mode == 'T' ? l[0] : (mode == 'A' ? l[1] : l[2]);
      if (occ + 1 >= d) continue;
      const double amp = std::sqrt(static_cast<double>(occ + 1));
      occ += 1;
      const int j = layout.index(l[0], l[1], l[2]);
      x(j, i) += amp;
      x(i, j) += amp;
    }
    return x;
  };
  return {quadrature('T'), quadrature('A')};
}

const ModeCoherence& Preset::coherence(char label) const {
  switch (label) {
    case 'T': return coherence_t;
    case 'A': return coherence_a;
    case 'B': return coherence_b;
    default: throw std::invalid_argument("unknown mode label");
  }
}

Preset load_preset(const std::string& name) {
  Preset p;
  p.name = name;
  const int d = 4;
  if (name == "exp1_cu") {
    p.circuit.t = {'T', ghz_to_rad(4.959), mhz_to_rad(-220.0), d};
    p.circuit.a = {'A', ghz_to_rad(4.413), mhz_to_rad(-100.0), d};
    p.circuit.b = {'B', ghz_to_rad(5.620), mhz_to_rad(-123.0), d};
    p.circuit.j_zz = mhz_to_rad(70.5);
    p.circuit.j_xx = mhz_to_rad(1.9);
    p.circuit.lambda = 0.0;
    p.coherence_t = {11.3e-6, 1.6e-6, 1.1e-6};
    p.coherence_a = {10.0e-6, 1.8e-6, 1.6e-6};
    p.coherence_b = {5.2e-6, 2.1e-6, 1.3e-6};
  } else if (name == "exp2_al") {
    p.circuit.t = {'T', ghz_to_rad(4.774), mhz_to_rad(-280.0), d};
    p.circuit.a = {'A', ghz_to_rad(4.562), mhz_to_rad(-128.0), d};
    p.circuit.b = {'B', ghz_to_rad(5.822), mhz_to_rad(-142.0), d};
    p.circuit.j_zz = mhz_to_rad(70.5);  // not published for this device
    p.circuit.j_xx = mhz_to_rad(2.76);
    p.circuit.lambda = 0.0;
    p.coherence_t = {14.0e-6, 8.0e-6, 6.0e-6};
    p.coherence_a = {18.0e-6, 19.0e-6, 17.0e-6};
    p.coherence_b = {7.0e-6, 4.0e-6, 4.0e-6};
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return p;
}

}  // namespace crsim
