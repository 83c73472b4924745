#include "crsim/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace crsim {

namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

// FNV-1a over the label bytes, used only to map labels to child indices.
uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RngStream::RngStream(uint64_t seed) : RngStream(seed, 0) {}

RngStream::RngStream(uint64_t root, uint64_t path) : root_(root), path_(path) {
  uint64_t sm = root ^ (path * 0x9e3779b97f4a7c15ULL + 0x243f6a8885a308d3ULL);
  for (auto& s : state_) s = splitmix64(sm);
}

RngStream RngStream::child(uint64_t index) const {
  uint64_t sm = path_ ^ (index + 0x452821e638d01377ULL);
  uint64_t mixed = splitmix64(sm);
  return RngStream(root_, mixed);
}

RngStream RngStream::child(const std::string& label) const {
  return child(fnv1a(label));
}

uint64_t RngStream::next_u64() {
  uint64_t* s = state_;
  const uint64_t result = rotl(s[0] + s[3], 23) + s[0];
  const uint64_t t = s[1] << 17;
  s[2] ^= s[0];
  s[3] ^= s[1];
  s[1] ^= s[2];
  s[0] ^= s[3];
  s[2] ^= t;
  s[3] = rotl(s[3], 45);
  return result;
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t RngStream::uniform_int(uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double RngStream::normal() {
  if (have_cached_normal_) {
    have_cached_normal_ = false;
    return cached_normal_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 6.283185307179586476925286766559 * u2;
  cached_normal_ = r * std::sin(theta);
  have_cached_normal_ = true;
  return r * std::cos(theta);
}

}  // namespace crsim
