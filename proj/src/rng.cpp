#include "carsm/rng.hpp"

#include <cmath>

namespace carsm {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

uint64_t Rng::next_u64() { return gen_(); }

double Rng::uniform() {
  // 53 random bits plus a half-ulp offset: values lie strictly inside (0,1).
  return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
}

int Rng::uniform_int(int n) {
  // Rejection-free would bias for huge n; n here is always small (action
  // counts, buffer sizes), so modulo of a fresh 64-bit draw is fine in
  // practice, but use rejection anyway to keep the draw exactly uniform.
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

double Rng::exponential() { return -std::log(uniform()); }

Rng Rng::fork(uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x51ed2701ULL)));
}

}  // namespace carsm
