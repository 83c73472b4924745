#ifndef CRSIM_NUMERICS_HPP
#define CRSIM_NUMERICS_HPP

#include <functional>

#include "crsim/types.hpp"

namespace crsim {

struct SimplexOptions {
  int max_iterations = 20000;
  double x_tol = 1e-9;
  double f_tol = 1e-12;
  double initial_step = 0.1;
  // Reflection / expansion / contraction / shrink coefficients.
  double alpha = 1.0;
  double gamma = 2.0;
  double rho = 0.5;
  double sigma = 0.5;

  void validate() const;
};

struct SimplexResult {
  RVec x;
  double fx = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Standard Nelder-Mead simplex minimization. Convergence requires both the
// simplex diameter below x_tol and the function spread below f_tol.
SimplexResult nelder_mead(const std::function<double(const RVec&)>& f,
                          const RVec& x0, const SimplexOptions& opts = {});

struct EigResult {
  RVec eigenvalues;   // ascending
  CMat eigenvectors;  // orthonormal columns matching eigenvalues
};

// Eigendecomposition of a Hermitian matrix (symmetrized internally when the
// deviation is below 1e-9 relative; larger deviations are an error).
EigResult eig_hermitian(const CMat& h);

// Matrix exponential. (Anti-)Hermitian inputs take the eigendecomposition
// path; general inputs use scaling-and-squaring with a Pade approximant.
CMat expm(const CMat& m);

// Inverse square root of a Hermitian PSD matrix via eigendecomposition.
// Throws if the smallest eigenvalue is below eps_reg.
CMat inv_sqrt_psd(const CMat& m, double eps_reg = 1e-12);

}  // namespace crsim

#endif  // CRSIM_NUMERICS_HPP
