#ifndef CRSIM_FRAMES_HPP
#define CRSIM_FRAMES_HPP

#include <array>
#include <vector>

#include "crsim/model.hpp"
#include "crsim/types.hpp"

namespace crsim {

// Raised when two dressed states claim the same bare label, or the best
// overlap is too small to label at all. This is the expected failure mode
// near resonances; sweeps catch it and mark the point degenerate.
class DegenerateLabelingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Eigenbasis of the bare Hamiltonian with max-overlap labels. Columns of
// `u` are ordered so that the dressed state labeled |n_T n_A n_B> sits at
// the same position as the bare state in `layout`; `energies[i]` is its
// eigenvalue. Column phases are fixed so the largest-magnitude component is
// real positive.
struct DressedBasis {
  CMat u;
  RVec energies;
  BasisLayout layout;
  double min_overlap = 1.0;  // smallest |<bare(label)|dressed>|^2 accepted

  std::array<int, 3> label(int dressed_index) const {
    return layout.label(dressed_index);
  }
  int excitation(int dressed_index) const {
    return layout.excitation(dressed_index);
  }
};

// Max-overlap labeled eigendecomposition of a bare Hamiltonian. Assignment
// conflicts raise DegenerateLabelingError naming the contested label; a best
// overlap below `min_overlap_error` (default 0.25) is also an error, while
// overlaps below 0.5 only lower DressedBasis::min_overlap.
DressedBasis diagonalize_bare(const CMat& h0, const BasisLayout& layout,
                              double min_overlap_error = 0.25);

// U^dag O U.
CMat rotate_operator(const CMat& u, const CMat& o);

// Partition of a dressed-frame quadrature operator by the change in
// bare-label excitation: `plus` raises it by one, `minus` lowers it by one,
// `rest` is everything else. plus + minus + rest reconstructs the input.
struct GradedOperator {
  CMat plus, minus, rest;
};

GradedOperator grade_by_excitation(const CMat& op, const DressedBasis& basis);

struct RwaHamiltonian {
  CMat h;                    // time-independent, Hermitian, rad/s
  double omega_d = 0.0;      // rad/s
  double dropped_norm = 0.0; // Frobenius amplitude of discarded fast terms
};

// Rotating-frame Hamiltonian at the drive frequency with the rotating-wave
// approximation realized by excitation grading:
//   H = H0_diag - omega_d N
//     + (amp/2) (e^{-i phi} D_T^+ + e^{+i phi} D_T^-)
//     + (m amp/2)(e^{-i phi'} D_A^+ + e^{+i phi'} D_A^-)
// where N counts bare-label excitation. Everything rotating at omega_d or
// faster (counter-rotating graded terms and all |grade| != 1 elements) goes
// into dropped_norm.
RwaHamiltonian apply_rwa(const DressedBasis& basis, const CMat& d_t,
                         const CMat& d_a, const DriveSpec& drive,
                         double omega_d);

}  // namespace crsim

#endif  // CRSIM_FRAMES_HPP
