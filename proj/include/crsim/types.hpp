#ifndef CRSIM_TYPES_HPP
#define CRSIM_TYPES_HPP

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace crsim {

using cxd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Frequencies are stored as angular frequencies (rad/s) everywhere in the
// library; file formats use ordinary frequencies and convert at the boundary.
inline double ghz_to_rad(double nu_ghz) { return kTwoPi * nu_ghz * 1e9; }
inline double mhz_to_rad(double nu_mhz) { return kTwoPi * nu_mhz * 1e6; }
inline double rad_to_mhz(double w) { return w / (kTwoPi * 1e6); }
inline double rad_to_ghz(double w) { return w / (kTwoPi * 1e9); }

inline CMat kron(const CMat& a, const CMat& b) {
  CMat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline double frobenius(const CMat& m) { return m.norm(); }

inline bool is_hermitian(const CMat& m, double tol = 1e-9) {
  return (m - m.adjoint()).norm() <= tol * std::max(1.0, m.norm());
}

inline CMat hermitize(const CMat& m) { return 0.5 * (m + m.adjoint()); }

// Single-qubit Pauli matrices, index order (I, X, Y, Z).
inline const CMat& pauli1(int i) {
  static const CMat ops = [] {
    CMat p(2, 8);
    p.setZero();
    p.block(0, 0, 2, 2) << 1, 0, 0, 1;
    p.block(0, 2, 2, 2) << 0, 1, 1, 0;
    p.block(0, 4, 2, 2) << 0, cxd(0, -1), cxd(0, 1), 0;
    p.block(0, 6, 2, 2) << 1, 0, 0, -1;
    return p;
  }();
  static const CMat mats[4] = {ops.block(0, 0, 2, 2), ops.block(0, 2, 2, 2),
                               ops.block(0, 4, 2, 2), ops.block(0, 6, 2, 2)};
  if (i < 0 || i > 3) throw std::out_of_range("pauli1: index must be 0..3");
  return mats[i];
}

// Two-qubit Pauli product B_i (x) B_j, flat index m = 4*i + j.
inline const CMat& pauli2(int m) {
  static const std::array<CMat, 16> mats = [] {
    std::array<CMat, 16> out;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) out[4 * i + j] = kron(pauli1(i), pauli1(j));
    return out;
  }();
  if (m < 0 || m > 15) throw std::out_of_range("pauli2: index must be 0..15");
  return mats[static_cast<size_t>(m)];
}

inline const char* pauli2_label(int m) {
  static const char* labels[16] = {"II", "IX", "IY", "IZ", "XI", "XX",
                                   "XY", "XZ", "YI", "YX", "YY", "YZ",
                                   "ZI", "ZX", "ZY", "ZZ"};
  if (m < 0 || m > 15) throw std::out_of_range("pauli2_label");
  return labels[m];
}

}  // namespace crsim

#endif  // CRSIM_TYPES_HPP
