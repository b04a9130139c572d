#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace thinwall {

/// Worker count from THINWALL_WORKERS, defaulting to 1.
inline int worker_count() {
  if (const char* env = std::getenv("THINWALL_WORKERS")) {
    try {
      int n = std::stoi(env);
      if (n > 0) return std::min(n, 256);
    } catch (...) {
    }
  }
  return 1;
}

/// Splits [0, n) into contiguous chunks, one per worker, and runs
/// body(worker, begin, end). Chunk k always covers a fixed index range, so
/// concatenating per-worker outputs in worker order reproduces the serial
/// order exactly.
template <typename Body>
void for_each_chunk(std::size_t n, int workers, Body&& body) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    body(0, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    std::size_t begin = n * w / workers;
    std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&body, w, begin, end] { body(w, begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace thinwall
