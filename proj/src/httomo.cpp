#include "crsim/httomo.hpp"

#include <algorithm>
#include <cmath>

#include "crsim/numerics.hpp"

namespace crsim {

Eigen::Matrix3d bloch_generator(const GeneralizedField& field) {
  if (!std::isfinite(field.omega_x) || !std::isfinite(field.omega_y) ||
      !std::isfinite(field.delta))
    throw std::invalid_argument("bloch_generator: field must be finite");
  Eigen::Matrix3d g;
  g << 0, field.delta, field.omega_y,
      -field.delta, 0, -field.omega_x,
      -field.omega_y, field.omega_x, 0;
  return g;
}

std::array<double, 3> bloch_closed_form(const GeneralizedField& field, double t,
                                        const std::array<double, 3>& r0) {
  const bool ground = r0[0] == 0.0 && r0[1] == 0.0 && r0[2] == 1.0;
  if (!ground) {
    const Eigen::Matrix3d g = bloch_generator(field);
    const CMat u = expm(g.cast<cxd>() * t);
    Eigen::Vector3d r(r0[0], r0[1], r0[2]);
    const Eigen::Vector3d out = (u.real()) * r;
    return {out[0], out[1], out[2]};
  }
  const double b = field.b();
  if (b == 0.0) return r0;
  const double c = std::cos(b * t);
  const double s = std::sin(b * t);
  const double b2 = b * b;
  const double ox = field.omega_x, oy = field.omega_y, d = field.delta;
  return {(-ox * d + ox * d * c + oy * b * s) / b2,
          (-oy * d + oy * d * c - ox * b * s) / b2,
          (d * d + (ox * ox + oy * oy) * c) / b2};
}

namespace {

struct FitData {
  std::vector<double> t, x, y, z;
};

double sum_squares(const FitData& data, const GeneralizedField& f, double gamma) {
  double sse = 0.0;
  for (size_t k = 0; k < data.t.size(); ++k) {
    const auto r = bloch_closed_form(f, data.t[k]);
    const double decay = std::exp(-gamma * data.t[k]);
    const double dx = data.x[k] - decay * r[0];
    const double dy = data.y[k] - decay * r[1];
    const double dz = data.z[k] - decay * r[2];
    sse += dx * dx + dy * dy + dz * dz;
  }
  return sse;
}

// Peak angular frequency of z(t) by direct DFT scan with parabolic refine.
double dominant_frequency(const FitData& data) {
  const size_t n = data.t.size();
  const double span = data.t.back() - data.t.front();
  if (span <= 0) return 0.0;
  double mean = 0;
  for (double v : data.z) mean += v;
  mean /= static_cast<double>(n);

  const double w_min = 0.25 * kTwoPi / span;
  const double dt = span / static_cast<double>(n - 1);
  const double w_max = M_PI / dt;
  const int n_scan = 600;
  double best_w = w_min, best_a = -1.0;
  std::vector<double> amps(n_scan);
  for (int k = 0; k < n_scan; ++k) {
    const double w = w_min + (w_max - w_min) * k / (n_scan - 1);
    cxd acc = 0;
    for (size_t j = 0; j < n; ++j)
      acc += (data.z[j] - mean) * std::exp(cxd(0, -w * data.t[j]));
    amps[static_cast<size_t>(k)] = std::abs(acc);
    if (amps[static_cast<size_t>(k)] > best_a) {
      best_a = amps[static_cast<size_t>(k)];
      best_w = w;
    }
  }
  return best_w;
}

}  // namespace

BlochFit fit_bloch_trajectory(const BlochTrajectory& traj, const BlochFitOptions& opts) {
  const size_t n = traj.times.size();
  if (n < 2 || traj.x.size() != n || traj.y.size() != n || traj.z.size() != n)
    throw std::invalid_argument("fit_bloch_trajectory: inconsistent trajectory");

  FitData data{traj.times, traj.x, traj.y, traj.z};
  BlochFit out;

  double spread = 0.0;
  for (size_t k = 0; k < n; ++k)
    spread = std::max({spread, std::abs(data.x[k]), std::abs(data.y[k]),
                       std::abs(data.z[k] - data.z[0])});

  const double span = data.t.back() - data.t.front();
  if (span <= 0) throw std::invalid_argument("fit_bloch_trajectory: empty time span");

  // Flat trajectory: no field information, fit only the decay of z.
  if (spread < 1e-9) {
    auto loss = [&](const RVec& p) {
      double sse = 0;
      for (size_t k = 0; k < n; ++k) {
        const double d = data.z[k] - std::exp(-p[0] * data.t[k]);
        sse += d * d;
      }
      return sse;
    };
    SimplexOptions nm;
    nm.max_iterations = opts.max_iterations;
    nm.initial_step = 0.1 / span;
    RVec p0(1);
    p0 << 0.0;
    const SimplexResult res = nelder_mead(loss, p0, nm);
    out.gamma = std::max(0.0, res.x[0]);
    out.residual = std::sqrt(res.fx / (3.0 * static_cast<double>(n)));
    out.n_starts_converged = res.converged ? 1 : 0;
    out.low_confidence = true;
    return out;
  }

  const double b_guess = dominant_frequency(data);
  // Early-time slopes over a window short against the detected period:
  // x'(0) = Omega_y, y'(0) = -Omega_x.
  double min_dt = span;
  for (size_t k = 1; k < n; ++k) min_dt = std::min(min_dt, data.t[k] - data.t[k - 1]);
  const double window_t = 0.08 * kTwoPi / std::max(b_guess, kTwoPi / span);
  size_t w = 1;
  while (w + 1 < n && data.t[w] - data.t[0] < window_t) ++w;
  const double dt0 = data.t[w] - data.t[0];
  const double oy_guess = (data.x[w] - data.x[0]) / dt0;
  const double ox_guess = -(data.y[w] - data.y[0]) / dt0;
  const double d2 = std::max(0.0, b_guess * b_guess - ox_guess * ox_guess -
                                      oy_guess * oy_guess);
  const double d_guess = std::sqrt(d2);
  const double gamma_guess = 0.5 / span;

  // Uniform sampling cannot distinguish fields beyond the Nyquist rate; pin
  // the fit to the identifiable branch.
  const double b_cap = M_PI / min_dt;
  const double penalty_scale = 10.0 * static_cast<double>(n);
  const double scale = std::max(b_guess, 1.0 / span);
  auto loss = [&](const RVec& p) {
    const GeneralizedField f{p[0] * scale, p[1] * scale, p[2] * scale};
    double value = sum_squares(data, f, p[3] * scale);
    const double b = f.b();
    if (b > b_cap) {
      const double excess = (b - b_cap) / b_cap;
      value += penalty_scale * excess * excess;
    }
    return value;
  };
  SimplexOptions nm;
  nm.max_iterations = opts.max_iterations;
  nm.x_tol = opts.x_tol;
  nm.f_tol = opts.f_tol;
  nm.initial_step = 0.15;

  const std::array<std::array<double, 4>, 4> starts = {{
      {ox_guess, oy_guess, +d_guess, gamma_guess},
      {ox_guess, oy_guess, -d_guess, gamma_guess},
      {-ox_guess, -oy_guess, +d_guess, gamma_guess},
      {-ox_guess, -oy_guess, -d_guess, gamma_guess},
  }};

  double best_sse = std::numeric_limits<double>::infinity();
  RVec best_x;
  int converged = 0;
  for (const auto& s : starts) {
    RVec p0(4);
    p0 << s[0] / scale, s[1] / scale, s[2] / scale, s[3] / scale;
    const SimplexResult res = nelder_mead(loss, p0, nm);
    if (res.converged) ++converged;
    if (res.fx < best_sse - 1e-18) {
      best_sse = res.fx;
      best_x = res.x;
    }
  }

  out.field = {best_x[0] * scale, best_x[1] * scale, best_x[2] * scale};
  out.gamma = std::max(0.0, best_x[3] * scale);
  out.residual = std::sqrt(best_sse / (3.0 * static_cast<double>(n)));
  out.n_starts_converged = converged;
  out.low_confidence = (n < 12) || (out.field.b() * span < M_PI);

  // Gauss-Newton standard errors from a finite-difference Jacobian.
  const size_t rows = 3 * n;
  RMat jac(rows, 4);
  auto model_at = [&](const RVec& p, std::vector<double>& values) {
    values.resize(rows);
    const GeneralizedField f{p[0] * scale, p[1] * scale, p[2] * scale};
    const double g = p[3] * scale;
    for (size_t k = 0; k < n; ++k) {
      const auto r = bloch_closed_form(f, data.t[k]);
      const double decay = std::exp(-g * data.t[k]);
      values[3 * k] = decay * r[0];
      values[3 * k + 1] = decay * r[1];
      values[3 * k + 2] = decay * r[2];
    }
  };
  std::vector<double> base, bumped;
  model_at(best_x, base);
  const double h = 1e-6;
  for (int c = 0; c < 4; ++c) {
    RVec p = best_x;
    p[c] += h;
    model_at(p, bumped);
    for (size_t r = 0; r < rows; ++r)
      jac(static_cast<Eigen::Index>(r), c) = (bumped[r] - base[r]) / h;
  }
  const RMat jtj = jac.transpose() * jac;
  const double dof = std::max(1.0, static_cast<double>(rows) - 4.0);
  const double sigma2 = best_sse / dof;
  const RMat cov = sigma2 * jtj.ldlt().solve(RMat::Identity(4, 4));
  for (int c = 0; c < 4; ++c)
    out.stderr_est[static_cast<size_t>(c)] =
        std::sqrt(std::max(0.0, cov(c, c))) * scale;
  return out;
}

TomographyResult hamiltonian_tomography(const BlochTrajectory& control0,
                                        const BlochTrajectory& control1,
                                        const BlochFitOptions& opts) {
  if (control0.control_state == control1.control_state)
    throw std::invalid_argument("hamiltonian_tomography: need both control states");
  const BlochFit f0 = fit_bloch_trajectory(control0, opts);
  const BlochFit f1 = fit_bloch_trajectory(control1, opts);

  TomographyResult out;
  out.fit_control0 = f0;
  out.fit_control1 = f1;
  out.zx = 0.5 * (f0.field.omega_x - f1.field.omega_x);
  out.ix = 0.5 * (f0.field.omega_x + f1.field.omega_x);
  out.zy = 0.5 * (f0.field.omega_y - f1.field.omega_y);
  out.iy = 0.5 * (f0.field.omega_y + f1.field.omega_y);
  // The precession axis stores B_z = -Delta.
  out.zz = 0.5 * (-f0.field.delta + f1.field.delta);
  out.iz = -0.5 * (f0.field.delta + f1.field.delta);

  const double g_lo = std::min(f0.gamma, f1.gamma);
  const double g_hi = std::max(f0.gamma, f1.gamma);
  out.gamma_mismatch = g_hi > 3.0 * g_lo && g_hi * (control0.times.back()) > 1e-3;
  return out;
}

}  // namespace crsim
