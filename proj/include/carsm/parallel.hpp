#pragma once

#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace carsm {

enum class ExecMode { serial, parallel };

// Runs fn(i) for i in [0, n). In parallel mode the iterations are distributed
// over OpenMP threads; fn must write only to slots owned by iteration i so
// that results are bitwise identical to the serial path regardless of thread
// count or schedule. The serial path is kept as a reference implementation
// and is compared against the parallel one in tests and benchmarks.
template <typename Fn>
void for_each_index(int64_t n, ExecMode mode, Fn&& fn) {
  if (mode == ExecMode::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
#endif
  }
  for (int64_t i = 0; i < n; ++i) fn(i);
}

// Sharded sum reduction: shard_fn(s) returns a vector of partial sums for
// shard s; shards are combined sequentially in index order, which fixes the
// floating-point reduction order independent of the schedule.
template <typename ShardFn>
std::vector<double> sharded_sum(int n_shards, int width, ExecMode mode,
                                ShardFn&& shard_fn) {
  std::vector<std::vector<double>> partial(n_shards);
  for_each_index(n_shards, mode,
                 [&](int64_t s) { partial[s] = shard_fn(static_cast<int>(s)); });
  std::vector<double> total(width, 0.0);
  for (int s = 0; s < n_shards; ++s)
    for (int j = 0; j < width; ++j) total[j] += partial[s][j];
  return total;
}

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace carsm
