#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace bqcf {

/// Process-wide worker count used by the assembly loops. Results never
/// depend on it: work is split into fixed-size chunks and every reduction
/// is performed in chunk order.
int thread_count();
void set_thread_count(int n);

inline constexpr std::size_t kChunk = 2048;

/// Runs fn(chunk_index, begin, end) over fixed chunks of [0, n).
template <class Fn>
void parallel_chunks(std::size_t n, Fn&& fn) {
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  const int workers = std::min<int>(thread_count(), static_cast<int>(chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c, c * kChunk, std::min(n, (c + 1) * kChunk));
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += workers)
          fn(c, c * kChunk, std::min(n, (c + 1) * kChunk));
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Deterministic sum of per-item values: per-chunk partial sums, then the
/// partials are added in chunk order.
template <class Fn>
double parallel_sum(std::size_t n, Fn&& value) {
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks, 0.0);
  parallel_chunks(n, [&](std::size_t c, std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += value(i);
    partial[c] = s;
  });
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

}  // namespace bqcf
