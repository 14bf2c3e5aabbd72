#ifndef TPR_UTIL_THREADS_HPP
#define TPR_UTIL_THREADS_HPP

#include <malloc.h>
#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace tpr {

// Worker cap: TPR_THREADS if set, else the hardware count.
inline int worker_count() {
  if (const char* env = std::getenv("TPR_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Call once from every entry point (CLI, tests) before heavy work.
inline void init_runtime() {
  omp_set_num_threads(worker_count());
#ifdef M_MMAP_THRESHOLD
  // training reallocates the same large activation/col buffers every step;
  // keep them on the heap instead of mmap/munmap churn with page refaults
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace tpr

#endif
