#pragma once

#include <cstdint>
#include <random>

namespace carsm {

// splitmix64: cheap stateless mixer used to derive independent seed streams.
uint64_t splitmix64(uint64_t x);

// Deterministic random source. All distributions are implemented by hand on
// top of mt19937_64 so results are identical across platforms and standard
// library versions. fork(k) derives an independent child stream as a pure
// function of (creation seed, k), which keeps sharded parallel kernels
// schedule independent.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // Uniform on the open interval (0, 1); never returns an endpoint, so
  // log(uniform()) is always finite.
  double uniform();
  // Uniform on [0, n).
  int uniform_int(int n);
  // Standard normal via Box-Muller (one fresh pair per call, cosine branch).
  double normal();
  // Unit-rate exponential.
  double exponential();

  // Independent child stream. Depends only on this object's creation seed
  // and the stream index, not on how much the parent has been consumed.
  Rng fork(uint64_t stream) const;

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace carsm
