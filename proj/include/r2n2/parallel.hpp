#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace r2n2 {

/// Runs body(chunk, begin, end) over [0, count) split into at most `threads`
/// contiguous chunks. The split depends only on (count, threads), so callers
/// that reduce per-chunk results in chunk order get reproducible sums. The
/// first exception thrown by any chunk is rethrown.
template <class Body>
std::size_t parallel_chunks(std::size_t count, std::size_t threads, Body&& body) {
  const std::size_t chunks = std::max<std::size_t>(1, std::min(threads, count));
  if (chunks == 1) {
    body(std::size_t{0}, std::size_t{0}, count);
    return 1;
  }
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = count * c / chunks;
    const std::size_t end = count * (c + 1) / chunks;
    pool.emplace_back([&, c, begin, end] {
      try {
        body(c, begin, end);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return chunks;
}

inline std::size_t chunk_count(std::size_t count, std::size_t threads) {
  return std::max<std::size_t>(1, std::min(threads, count));
}

}  // namespace r2n2
