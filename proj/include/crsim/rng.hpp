#ifndef CRSIM_RNG_HPP
#define CRSIM_RNG_HPP

#include <cstdint>
#include <string>

namespace crsim {

// Deterministic, platform-independent random stream: xoshiro256++ seeded
// through SplitMix64, with splittable substreams derived by hashing
// (root seed, child index) through SplitMix64. The algorithm is frozen; see
// docs/determinism.md. Do not replace with std:: distributions, whose output
// is implementation-defined.
class RngStream {
 public:
  explicit RngStream(uint64_t seed);

  // Derived child stream; children with distinct indices are independent and
  // reproducible regardless of how much the parent has been consumed.
  RngStream child(uint64_t index) const;
  RngStream child(const std::string& label) const;

  uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();

  // Uniform integer in [0, n), rejection sampled (no modulo bias).
  uint64_t uniform_int(uint64_t n);

  // Standard normal via Box-Muller (frozen algorithm, deterministic).
  double normal();

  uint64_t root_seed() const { return root_; }

 private:
  RngStream(uint64_t root, uint64_t path);

  uint64_t root_;
  uint64_t path_;
  uint64_t state_[4];
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace crsim

#endif  // CRSIM_RNG_HPP
