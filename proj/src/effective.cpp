#include "crsim/effective.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "crsim/numerics.hpp"

namespace crsim {

void Partition::validate(int dim) const {
  std::set<int> seen;
  int total = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("Partition: empty group");
    for (int i : g) {
      if (i < 0 || i >= dim) throw std::invalid_argument("Partition: index out of range");
      if (!seen.insert(i).second) throw std::invalid_argument("Partition: groups overlap");
      ++total;
    }
  }
  if (total != dim) throw std::invalid_argument("Partition: groups do not cover the basis");
}

Partition Partition::cr_partition(const BasisLayout& layout) {
  Partition p;
  const std::vector<int> block1 = {layout.index(0, 0, 0), layout.index(0, 1, 0)};
  const std::vector<int> block2 = {layout.index(1, 0, 0), layout.index(1, 1, 0)};
  std::set<int> used(block1.begin(), block1.end());
  used.insert(block2.begin(), block2.end());
  std::vector<int> rest;
  for (int i = 0; i < layout.dim(); ++i)
    if (!used.count(i)) rest.push_back(i);
  p.groups = {block1, block2, rest};
  return p;
}

Eigen::Matrix4cd EffectiveHamiltonian::reconstruct() const {
  const double c[16] = {ii, ix, iy, iz, 0, 0, 0, 0, 0, 0, 0, 0, zi, zx, zy, zz};
  Eigen::Matrix4cd h = Eigen::Matrix4cd::Zero();
  for (int m = 0; m < 16; ++m)
    if (c[m] != 0.0) h += 0.5 * c[m] * pauli2(m);
  return h;
}

BlockDiagonalization least_action_block_diagonalize(const CMat& h,
                                                    const Partition& partition) {
  const int n = static_cast<int>(h.rows());
  partition.validate(n);
  if (!is_hermitian(h, 1e-9))
    throw std::invalid_argument("least_action_block_diagonalize: H not Hermitian");

  const EigResult eig = eig_hermitian(h);

  // Assign each eigenvector to the partition block carrying most of its
  // weight. T is invariant under within-block column reordering, so only
  // block membership matters; a block claimed by the wrong number of
  // eigenvectors means states hybridize across the partition.
  const size_t n_groups = partition.groups.size();
  std::vector<std::vector<int>> members(n_groups);
  std::vector<std::vector<double>> member_weights(n_groups);
  for (int k = 0; k < n; ++k) {
    size_t best = 0;
    double best_w = -1.0;
    for (size_t b = 0; b < n_groups; ++b) {
      double w_sum = 0.0;
      for (int i : partition.groups[b]) w_sum += std::norm(eig.eigenvectors(i, k));
      if (w_sum > best_w + 1e-12) {
        best_w = w_sum;
        best = b;
      }
    }
    members[best].push_back(k);
    member_weights[best].push_back(best_w);
  }
  for (size_t b = 0; b < n_groups; ++b) {
    if (members[b].size() == partition.groups[b].size()) continue;
    std::string detail;
    for (size_t j = 0; j < members[b].size(); ++j)
      detail += (j ? ", " : "") + std::to_string(members[b][j]) + " (weight " +
                std::to_string(member_weights[b][j]) + ")";
    throw BlockDiagonalizationError(
        "partition block " + std::to_string(b) + " of size " +
        std::to_string(partition.groups[b].size()) + " is claimed by " +
        std::to_string(members[b].size()) + " eigenvectors: " + detail);
  }
  CMat s(n, n);
  for (size_t b = 0; b < n_groups; ++b)
    for (size_t j = 0; j < members[b].size(); ++j)
      s.col(partition.groups[b][j]) = eig.eigenvectors.col(members[b][j]);

  // S_BD: block-diagonal part of S. T = S S_BD^dag (S_BD S_BD^dag)^{-1/2},
  // assembled block by block since S_BD S_BD^dag is block diagonal.
  CMat s_bd = CMat::Zero(n, n);
  for (const auto& g : partition.groups)
    for (int r : g)
      for (int c : g) s_bd(r, c) = s(r, c);

  CMat w = CMat::Zero(n, n);
  for (const auto& g : partition.groups) {
    const int m = static_cast<int>(g.size());
    CMat block(m, m);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) block(r, c) = s_bd(g[static_cast<size_t>(r)], g[static_cast<size_t>(c)]);
    CMat gram = block * block.adjoint();
    CMat inv_sqrt;
    try {
      inv_sqrt = inv_sqrt_psd(gram);
    } catch (const std::runtime_error& e) {
      std::string overlaps;
      for (int r = 0; r < m; ++r) {
        double row = 0;
        for (int c = 0; c < m; ++c) row += std::norm(block(r, c));
        overlaps += (overlaps.empty() ? "" : ", ") + std::to_string(row);
      }
      throw BlockDiagonalizationError(
          std::string("singular eigenvector block (in-block overlaps ") + overlaps + "): " + e.what());
    }
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) w(g[static_cast<size_t>(r)], g[static_cast<size_t>(c)]) = inv_sqrt(r, c);
  }

  BlockDiagonalization out;
  out.t = s * s_bd.adjoint() * w;
  const double unitarity = (out.t.adjoint() * out.t - CMat::Identity(n, n)).norm();
  if (unitarity > 1e-10)
    throw BlockDiagonalizationError("transformation lost unitarity (" + std::to_string(unitarity) + ")");
  out.h_eff = out.t.adjoint() * h * out.t;

  // Off-block entries must be numerically zero before they are cleared.
  const double scale = h.norm();
  std::vector<int> group_of(static_cast<size_t>(n));
  for (size_t gi = 0; gi < partition.groups.size(); ++gi)
    for (int i : partition.groups[gi]) group_of[static_cast<size_t>(i)] = static_cast<int>(gi);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      if (group_of[static_cast<size_t>(r)] == group_of[static_cast<size_t>(c)]) continue;
      if (std::abs(out.h_eff(r, c)) > 1e-9 * scale)
        throw BlockDiagonalizationError("off-block residual " +
                                        std::to_string(std::abs(out.h_eff(r, c))) +
                                        " exceeds tolerance");
      out.h_eff(r, c) = 0.0;
    }
  return out;
}

EffectiveHamiltonian extract_pauli_coefficients(const Eigen::Matrix4cd& h) {
  if ((h - h.adjoint()).norm() > 1e-9 * std::max(1.0, h.norm()))
    throw std::invalid_argument("extract_pauli_coefficients: input not Hermitian");
  auto coeff = [&](int m) { return 0.5 * (pauli2(m) * h).trace().real(); };
  EffectiveHamiltonian e;
  e.ii = coeff(0);
  e.ix = coeff(1);
  e.iy = coeff(2);
  e.iz = coeff(3);
  e.zi = coeff(12);
  e.zx = coeff(13);
  e.zy = coeff(14);
  e.zz = coeff(15);
  return e;
}

namespace {

double zz_formula(double j, double delta_t, double delta_a, double detuning) {
  const double denom1 = detuning + delta_t;
  const double denom2 = delta_a - detuning;
  const double scale = std::abs(delta_t) + std::abs(delta_a);
  if (std::abs(denom1) < 1e-9 * scale || std::abs(denom2) < 1e-9 * scale)
    throw std::invalid_argument("static_zz: parameters sit on a pole of the perturbative formula");
  return -2.0 * j * j * (delta_t + delta_a) / (denom1 * denom2);
}

}  // namespace

StaticZzResult static_zz(const CircuitSpec& spec) {
  spec.validate();
  StaticZzResult out;
  const double detuning = spec.t.omega - spec.a.omega;

  out.perturbative =
      zz_formula(spec.j_xx, std::abs(spec.t.alpha), std::abs(spec.a.alpha), detuning);
  out.perturbative_signed =
      zz_formula(spec.j_xx, spec.t.alpha, spec.a.alpha, detuning);

  const BasisLayout layout(spec);
  const CMat h0 = build_bare_hamiltonian(spec, layout);
  const DressedBasis basis = diagonalize_bare(h0, layout);
  const auto e = [&](int nt, int na) { return basis.energies[layout.index(nt, na, 0)]; };
  out.numeric = (e(1, 1) - e(1, 0)) - (e(0, 1) - e(0, 0));
  return out;
}

double default_drive_frequency(const DressedBasis& basis) {
  const auto& layout = basis.layout;
  const double f0 = basis.energies[layout.index(0, 1, 0)] - basis.energies[layout.index(0, 0, 0)];
  const double f1 = basis.energies[layout.index(1, 1, 0)] - basis.energies[layout.index(1, 0, 0)];
  return 0.5 * (f0 + f1);
}

CrEffectiveResult cr_effective_hamiltonian(const CircuitSpec& spec,
                                           const DriveSpec& drive,
                                           const CrOptions& opts) {
  spec.validate();
  drive.validate();
  const BasisLayout layout(spec, opts.ordering);
  const CMat h0 = build_bare_hamiltonian(spec, layout);
  const DressedBasis basis = diagonalize_bare(h0, layout);
  const auto [x_t, x_a] = build_drive_operators(spec, layout);
  const CMat d_t = rotate_operator(basis.u, x_t);
  const CMat d_a = rotate_operator(basis.u, x_a);

  double omega_d = drive.omega_d;
  if (opts.omega_d_override)
    omega_d = *opts.omega_d_override;
  else if (omega_d == 0.0)
    omega_d = default_drive_frequency(basis);

  const RwaHamiltonian rwa = apply_rwa(basis, d_t, d_a, drive, omega_d);
  const Partition partition = Partition::cr_partition(layout);
  const BlockDiagonalization bd = least_action_block_diagonalize(rwa.h, partition);

  const int idx[4] = {layout.index(0, 0, 0), layout.index(0, 1, 0),
                      layout.index(1, 0, 0), layout.index(1, 1, 0)};
  Eigen::Matrix4cd block;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) block(r, c) = bd.h_eff(idx[r], idx[c]);

  CrEffectiveResult out;
  out.coeffs = extract_pauli_coefficients(block);
  out.omega_d = omega_d;
  out.dropped_norm = rwa.dropped_norm;
  out.min_label_overlap = basis.min_overlap;
  return out;
}

std::vector<double> detuning_pole_positions() { return {-0.5, 0.0, 0.5, 1.0, 1.5}; }

std::vector<SweepPoint> sweep_detuning(const CircuitSpec& spec_template,
                                       const DriveSpec& drive,
                                       const std::vector<double>& grid,
                                       const CrOptions& opts, double pole_margin) {
  std::vector<SweepPoint> rows;
  rows.reserve(grid.size());
  const double delta_t_mag = std::abs(spec_template.t.alpha);
  const auto poles = detuning_pole_positions();
  for (double x : grid) {
    SweepPoint row;
    row.grid_value = x;
    for (double p : poles)
      if (std::abs(x - p) < pole_margin) row.status = SweepStatus::near_pole;
    CircuitSpec spec = spec_template;
    spec.t.omega = spec.a.omega + x * delta_t_mag;
    try {
      const CrEffectiveResult r = cr_effective_hamiltonian(spec, drive, opts);
      row.coeffs = r.coeffs;
      row.dropped_norm = r.dropped_norm;
    } catch (const std::exception& e) {
      row.status = SweepStatus::degenerate;
      row.message = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SweepPoint> sweep_amplitude(const CircuitSpec& spec,
                                        const DriveSpec& drive_template,
                                        const std::vector<double>& amplitudes,
                                        const CrOptions& opts) {
  std::vector<SweepPoint> rows;
  rows.reserve(amplitudes.size());
  for (double amp : amplitudes) {
    SweepPoint row;
    row.grid_value = amp;
    DriveSpec drive = drive_template;
    drive.amplitude = amp;
    try {
      const CrEffectiveResult r = cr_effective_hamiltonian(spec, drive, opts);
      row.coeffs = r.coeffs;
      row.dropped_norm = r.dropped_norm;
    } catch (const std::exception& e) {
      row.status = SweepStatus::degenerate;
      row.message = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

PhaseOptimum optimize_drive_phase(const CircuitSpec& spec, const DriveSpec& drive,
                                  const CrOptions& opts) {
  if (drive.amplitude == 0.0)
    throw std::invalid_argument("optimize_drive_phase: drive must be on");
  auto eval = [&](double phi) {
    DriveSpec d = drive;
    d.phase = phi;
    return cr_effective_hamiltonian(spec, d, opts);
  };

  // Coarse scan anchored at the incoming phase keeps the selected |ZY| zero
  // covariant under global phase shifts of the drive.
  const int n_scan = 24;
  double best_phi = drive.phase;
  double best_val = std::abs(eval(best_phi).coeffs.zy);
  for (int k = 1; k < n_scan; ++k) {
    const double phi = drive.phase + kTwoPi * k / n_scan;
    const double v = std::abs(eval(phi).coeffs.zy);
    if (v < best_val) {
      best_val = v;
      best_phi = phi;
    }
  }

  SimplexOptions nm;
  nm.max_iterations = 200;
  nm.x_tol = 1e-10;
  nm.f_tol = 1e-6;  // rad/s scale; |ZY| lands well below 2*pi*1e3
  nm.initial_step = kTwoPi / (2.0 * n_scan);
  RVec x0(1);
  x0[0] = best_phi;
  const SimplexResult res =
      nelder_mead([&](const RVec& x) { return std::abs(eval(x[0]).coeffs.zy); }, x0, nm);
  if (!res.converged)
    throw std::runtime_error("optimize_drive_phase: refinement did not converge");

  const CrEffectiveResult at_opt = eval(res.x[0]);
  PhaseOptimum out;
  out.phase = res.x[0];
  out.zy = at_opt.coeffs.zy;
  out.iy = at_opt.coeffs.iy;
  out.zx = at_opt.coeffs.zx;
  out.converged = res.converged;
  return out;
}

}  // namespace crsim
