#include <algorithm>
#include <cmath>
#include <numeric>

#include "crsim/dynamics.hpp"
#include "crsim/qpt.hpp"
#include "crsim/rng.hpp"
#include "doctest.h"

using namespace crsim;

namespace {

Mat4 apply_kraus(const std::vector<Mat4>& kraus, const Mat4& rho) {
  Mat4 out = Mat4::Zero();
  for (const auto& e : kraus) out += e * rho * e.adjoint();
  return out;
}

// Random CPTP channel from a Haar-ish Stinespring isometry.
std::vector<Mat4> random_kraus(int n_ops, RngStream& rng) {
  CMat g(4 * n_ops, 4);
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    for (int c = 0; c < 4; ++c) g(r, c) = cxd(rng.normal(), rng.normal());
  const Eigen::HouseholderQR<CMat> qr(g);
  const CMat q = CMat(qr.householderQ()).leftCols(4);
  std::vector<Mat4> kraus;
  for (int i = 0; i < n_ops; ++i) kraus.push_back(q.block(4 * i, 0, 4, 4));
  return kraus;
}

std::vector<Mat4> depolarizing_kraus(double p) {
  std::vector<Mat4> kraus;
  kraus.push_back(std::sqrt(1.0 - 15.0 * p / 16.0) * Mat4::Identity());
  for (int m = 1; m < 16; ++m) kraus.push_back(std::sqrt(p / 16.0) * Mat4(pauli2(m)));
  return kraus;
}

Mat4 random_state(RngStream& rng) {
  CMat g(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) g(r, c) = cxd(rng.normal(), rng.normal());
  Mat4 rho = g * g.adjoint();
  return rho / rho.trace().real();
}

// Exact-output lambda matrix of a channel over the standard input set.
CMat lambda_of_channel(const InputStateSet& inputs,
                       const std::function<Mat4(const Mat4&)>& channel) {
  CMat lambda(16, 16);
  for (int j = 0; j < 16; ++j) {
    const CVec c = inputs.expand(channel(inputs.state(j)));
    for (int k = 0; k < 16; ++k) lambda(j, k) = c[k];
  }
  return lambda;
}

Mat4 chi_apply(const ChiMatrix& chi, const Mat4& rho) {
  Mat4 out = Mat4::Zero();
  for (int m = 0; m < 16; ++m)
    for (int n = 0; n < 16; ++n)
      out += chi.m(m, n) * pauli2(m) * rho * pauli2(n).adjoint();
  return out;
}

}  // namespace

TEST_CASE("input state set is well conditioned") {
  const InputStateSet inputs;
  CHECK(inputs.condition_number() > 1.0);
  CHECK(inputs.condition_number() < 100.0);
  for (int j = 0; j < 16; ++j) {
    CHECK(inputs.state(j).trace().real() == doctest::Approx(1.0));
    const CVec c = inputs.expand(inputs.state(j));
    for (int k = 0; k < 16; ++k)
      CHECK(std::abs(c[k] - (j == k ? cxd(1, 0) : cxd(0, 0))) < 1e-12);
  }
}

TEST_CASE("state tomography on exact expectations") {
  SUBCASE("ground state") {
    std::array<double, 15> e{};
    // <IZ> = <ZI> = <ZZ> = 1 for |00>; basis order A_1..A_15
    e[2] = 1.0;   // IZ
    e[11] = 1.0;  // ZI
    e[14] = 1.0;  // ZZ
    const Mat4 rho = state_tomography(e);
    CHECK(std::abs(rho(0, 0) - cxd(1, 0)) < 1e-12);
    CHECK(rho.trace().real() == doctest::Approx(1.0));
  }
  SUBCASE("vanishing expectations give the maximally mixed state") {
    const Mat4 rho = state_tomography({});
    CHECK((rho - 0.25 * Mat4::Identity()).norm() < 1e-14);
  }
  SUBCASE("depolarized Bell state fidelity follows 1 - 3p/4") {
    const double p = 0.1;
    Eigen::Vector4cd bell;
    bell << 1 / std::sqrt(2.0), 0, 0, 1 / std::sqrt(2.0);
    const Mat4 ideal = bell * bell.adjoint();
    const Mat4 noisy = (1 - p) * ideal + p * 0.25 * Mat4::Identity();
    std::array<double, 15> e{};
    for (int m = 1; m < 16; ++m)
      e[static_cast<size_t>(m - 1)] = (noisy * pauli2(m)).trace().real();
    const Mat4 rho = state_tomography(e);
    const double fidelity = (bell.adjoint() * rho * bell)(0).real();
    CHECK(std::abs(fidelity - (1.0 - 0.75 * p)) < 1e-3);
  }
  SUBCASE("negative eigenvalues are clipped to a physical state") {
    std::array<double, 15> e{};
    e[0] = 1.0;   // IX
    e[2] = 1.0;   // IZ  (jointly unphysical at full strength)
    e[11] = 1.0;
    e[14] = 1.0;
    const Mat4 rho = state_tomography(e);
    CHECK(eig_hermitian(rho).eigenvalues.minCoeff() >= -1e-12);
    CHECK(rho.trace().real() == doctest::Approx(1.0));
  }
}

TEST_CASE("beta tensor: identity pair reproduces the Kronecker delta") {
  const InputStateSet inputs;
  const BetaTensor beta(inputs);
  for (int j = 0; j < 16; ++j)
    for (int k = 0; k < 16; ++k)
      CHECK(std::abs(beta.value(j, k, 0, 0) - (j == k ? cxd(1, 0) : cxd(0, 0))) < 1e-12);
}

TEST_CASE("identity process inverts to chi with a single II element") {
  const InputStateSet inputs;
  const BetaTensor beta(inputs);
  const CMat lambda = lambda_of_channel(inputs, [](const Mat4& rho) { return rho; });
  const ChiFromLambdaResult r = chi_from_lambda(lambda, beta);
  CHECK_FALSE(r.ill_conditioned);
  CHECK(std::abs(r.chi.m(0, 0) - cxd(1, 0)) < 1e-10);
  CHECK(r.chi.m.norm() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("random CPTP channels round trip through the beta/lambda/chi chain") {
  RngStream rng(2718);
  const InputStateSet inputs;
  const BetaTensor beta(inputs);
  for (int trial = 0; trial < 4; ++trial) {
    const auto kraus = random_kraus(3, rng);
    Mat4 completeness = Mat4::Zero();
    for (const auto& e : kraus) completeness += e.adjoint() * e;
    REQUIRE((completeness - Mat4::Identity()).norm() < 1e-12);

    auto channel = [&](const Mat4& rho) { return apply_kraus(kraus, rho); };
    const ChiFromLambdaResult r = chi_from_lambda(lambda_of_channel(inputs, channel), beta);
    CHECK(std::abs(r.chi.trace_real() - 1.0) < 1e-9);
    for (int s = 0; s < 50; ++s) {
      const Mat4 rho = random_state(rng);
      CHECK((chi_apply(r.chi, rho) - channel(rho)).norm() < 1e-8);
    }
  }
}

TEST_CASE("ideal CNOT gives a rank-one process matrix with unit fidelity") {
  Mat4 cnot = Mat4::Zero();
  cnot(0, 0) = cnot(1, 1) = cnot(2, 3) = cnot(3, 2) = 1.0;
  const InputStateSet inputs;
  const BetaTensor beta(inputs);
  auto channel = [&](const Mat4& rho) { return Mat4(cnot * rho * cnot.adjoint()); };
  const ChiFromLambdaResult r = chi_from_lambda(lambda_of_channel(inputs, channel), beta);
  const RVec ev = eig_hermitian(hermitize(r.chi.m)).eigenvalues;
  CHECK(ev(15) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(ev(14)) < 1e-9);
  CHECK(process_fidelity(r.chi, ideal_chi(cnot)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("depolarizing channel lands on the expected chi mixture") {
  const double p = 0.12;
  const InputStateSet inputs;
  const BetaTensor beta(inputs);
  auto channel = [&](const Mat4& rho) {
    return Mat4((1 - p) * rho + p * 0.25 * Mat4::Identity());
  };
  const ChiFromLambdaResult r = chi_from_lambda(lambda_of_channel(inputs, channel), beta);
  CHECK(std::abs(r.chi.m(0, 0) - cxd(1.0 - 15.0 * p / 16.0, 0)) < 1e-9);
  for (int m = 1; m < 16; ++m) CHECK(std::abs(r.chi.m(m, m) - cxd(p / 16.0, 0)) < 1e-9);
  CHECK(std::abs(r.chi.trace_real() - 1.0) < 1e-10);
}

TEST_CASE("physicality projection") {
  const InputStateSet inputs;
  const BetaTensor beta(inputs);

  SUBCASE("an already physical chi is a fixed point") {
    const double p = 0.2;
    auto channel = [&](const Mat4& rho) {
      return Mat4((1 - p) * rho + p * 0.25 * Mat4::Identity());
    };
    const ChiMatrix chi = chi_from_lambda(lambda_of_channel(inputs, channel), beta).chi;
    const ProjectionResult r = project_physical(chi);
    CHECK((r.chi.m - chi.m).norm() < 1e-6);
    CHECK(std::abs(r.chi.trace_real() - 1.0) < 1e-12);
  }

  SUBCASE("a negative eigenvalue is projected away") {
    const ChiMatrix base = ideal_chi(ideal_zx90());
    ChiMatrix bad;
    CVec dir = CVec::Zero(16);
    dir[5] = 1.0;
    bad.m = hermitize(0.95 * base.m + 0.05 * CMat::Identity(16, 16) / 16.0 -
                      0.05 * (dir * dir.adjoint()));
    REQUIRE(bad.min_eigenvalue() < -0.01);
    const ProjectionResult r = project_physical(bad);
    CHECK(r.chi.min_eigenvalue() >= -1e-10);
    CHECK(std::abs(r.chi.trace_real() - 1.0) < 1e-12);
    CHECK((r.chi.m - hermitize(bad.m)).norm() < 0.5);
  }
}

TEST_CASE("process and gate fidelity relations") {
  const ChiMatrix chi_id = ideal_chi(ideal_zx90());
  CHECK(process_fidelity(chi_id, chi_id) == doctest::Approx(1.0).epsilon(1e-12));

  ChiMatrix depol;
  depol.m = CMat::Identity(16, 16) / 16.0;
  CHECK(process_fidelity(depol, chi_id) == doctest::Approx(1.0 / 16.0).epsilon(1e-12));

  CHECK(gate_fidelity_from_process(1.0) == doctest::Approx(1.0));
  CHECK(gate_fidelity_from_process(0.9282) == doctest::Approx(0.94256).epsilon(1e-12));
  CHECK(std::abs(gate_fidelity_from_process(0.9282) - 0.9426) < 1e-4);
  CHECK(gate_fidelity_from_process(1.0 / 16.0) == doctest::Approx(0.25).epsilon(1e-12));

  // Monotone in F_pro.
  double prev = -1.0;
  for (double f = 0.0; f <= 1.0; f += 0.05) {
    const double g = gate_fidelity_from_process(f);
    CHECK(g > prev);
    prev = g;
  }
}

TEST_CASE("fidelity is invariant under simultaneous basis reordering") {
  RngStream rng(55);
  ChiMatrix chi_p;
  {
    CMat g(16, 16);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c) g(r, c) = cxd(rng.normal(), rng.normal());
    chi_p.m = g * g.adjoint();
    chi_p.m /= chi_p.m.trace().real();
  }
  const ChiMatrix chi_id = ideal_chi(ideal_zx90());
  const double base = process_fidelity(chi_p, chi_id);

  std::vector<int> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 15; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)], perm[rng.uniform_int(static_cast<uint64_t>(i + 1))]);
  ChiMatrix p_chi, p_id;
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) {
      p_chi.m(perm[static_cast<size_t>(r)], perm[static_cast<size_t>(c)]) = chi_p.m(r, c);
      p_id.m(perm[static_cast<size_t>(r)], perm[static_cast<size_t>(c)]) = chi_id.m(r, c);
    }
  CHECK(process_fidelity(p_chi, p_id) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("ideal chi of elementary unitaries") {
  const ChiMatrix id = ideal_chi(Mat4::Identity());
  CHECK(std::abs(id.m(0, 0) - cxd(1, 0)) < 1e-14);
  CHECK(id.m.norm() == doctest::Approx(1.0));

  const ChiMatrix xi = ideal_chi(Mat4(pauli2(4)));  // X (x) I
  CHECK(std::abs(xi.m(4, 4) - cxd(1, 0)) < 1e-14);

  const ChiMatrix zx90 = ideal_chi(ideal_zx90());
  CHECK(std::abs(zx90.m(0, 0) - cxd(0.5, 0)) < 1e-12);
  CHECK(std::abs(zx90.m(13, 13) - cxd(0.5, 0)) < 1e-12);
  CHECK(std::abs(zx90.m(0, 13) - cxd(0, 0.5)) < 1e-12);
  CHECK(std::abs(zx90.m(13, 0) - cxd(0, -0.5)) < 1e-12);

  CHECK_THROWS_AS(ideal_chi(Mat4(2.0 * Mat4::Identity())), std::invalid_argument);
}

TEST_CASE("readout correction") {
  Eigen::Matrix2d ident;
  ident << 1, 0, 0, 1;

  SUBCASE("identity confusion changes nothing") {
    const auto r = correct_readout({0.4, 0.3, 0.2, 0.1}, ident, ident);
    CHECK(r.probabilities[0] == doctest::Approx(0.4));
    CHECK(r.clipped_mass == 0.0);
  }

  SUBCASE("forward model then inverse recovers the ideal distribution") {
    Eigen::Matrix2d conf;
    conf << 0.93, 0.07, 0.07, 0.93;
    Eigen::Matrix4d joint;
    for (int r1 = 0; r1 < 2; ++r1)
      for (int r2 = 0; r2 < 2; ++r2)
        for (int c1 = 0; c1 < 2; ++c1)
          for (int c2 = 0; c2 < 2; ++c2)
            joint(2 * r1 + r2, 2 * c1 + c2) = conf(r1, c1) * conf(r2, c2);
    const Eigen::Vector4d raw = joint * Eigen::Vector4d(1, 0, 0, 0);
    const auto r = correct_readout({raw[0], raw[1], raw[2], raw[3]}, conf, conf);
    CHECK(std::abs(r.probabilities[0] - 1.0) < 1e-10);
    CHECK(std::abs(r.probabilities[1]) < 1e-10);
    CHECK(r.clipped_mass < 1e-12);
  }

  SUBCASE("uniform distribution is a fixed point of symmetric confusion") {
    Eigen::Matrix2d conf;
    conf << 0.9, 0.1, 0.1, 0.9;
    const auto r = correct_readout({0.25, 0.25, 0.25, 0.25}, conf, conf);
    for (double pr : r.probabilities) CHECK(pr == doctest::Approx(0.25).epsilon(1e-10));
  }

  SUBCASE("singular confusion is rejected") {
    Eigen::Matrix2d conf;
    conf << 0.5, 0.5, 0.5, 0.5;
    CHECK_THROWS_AS(correct_readout({1, 0, 0, 0}, conf, ident), std::invalid_argument);
  }
}

TEST_CASE("run_qpt on the identity channel") {
  QptOptions opts;
  opts.ideal = Mat4::Identity();
  const QptResult r = run_qpt([](const Mat4& rho) { return rho; }, opts);
  CHECK(r.f_pro > 1.0 - 1e-6);
  CHECK(std::abs(r.chi_p.trace_real() - 1.0) < 1e-9);
}

TEST_CASE("run_qpt on the noiseless calibrated echoed CR gate") {
  Preset p = load_preset("exp2_al");
  p.circuit.t.levels = p.circuit.a.levels = p.circuit.b.levels = 3;
  DriveSpec drive;
  drive.amplitude = mhz_to_rad(40.0);
  const CrContext ctx = make_cr_context(p.circuit, drive);
  const CalibrationResult cal = calibrate_zx_gate(ctx);
  const auto channel = make_echoed_cr_channel(ctx, cal.tau_half, std::nullopt);
  const QptResult r = run_qpt(channel);
  CHECK(r.f_pro >= 0.99);
  CHECK(r.chi_p.min_eigenvalue() >= -1e-10);
  CHECK(std::abs(r.chi_p.trace_real() - 1.0) < 1e-9);
}

TEST_CASE("run_qpt on the noisy echoed CR gate brackets the published numbers") {
  Preset p = load_preset("exp2_al");
  p.circuit.t.levels = p.circuit.a.levels = p.circuit.b.levels = 3;
  DriveSpec drive;
  drive.amplitude = mhz_to_rad(110.0);
  const CrContext ctx = make_cr_context(p.circuit, drive);
  const CalibrationResult cal = calibrate_zx_gate(ctx);
  const auto channel = make_echoed_cr_channel(ctx, cal.tau_half, noise_from_preset(p));
  const QptResult r = run_qpt(channel);
  CHECK(r.f_gate > 0.93);
  CHECK(r.f_gate < 0.985);
}
