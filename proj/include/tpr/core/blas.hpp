#ifndef TPR_CORE_BLAS_HPP
#define TPR_CORE_BLAS_HPP

#include <cblas.h>

#include <cstdlib>
#include <mutex>

extern "C" void openblas_set_num_threads(int);

namespace tpr {
namespace detail {

// OpenBLAS selects its kernels in a library constructor that, on VMs with an
// unrecognized CPUID model string, falls back to generic SSE2 code paths.
// OPENBLAS_CORETYPE must therefore be set before that constructor runs; with
// OpenBLAS linked statically, a higher-priority constructor of our own gets
// there first. Respects a core type the user already exported.
__attribute__((constructor(101))) inline void blas_coretype_init() {
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx512f"))
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
  else if (__builtin_cpu_supports("avx2"))
    setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
}

// BLAS-level threading scales poorly at these GEMM sizes; parallelism lives
// at the batch level (OpenMP) instead, and single-threaded GEMMs keep
// results independent of worker count.
inline void blas_runtime_init() {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
}

}  // namespace detail

// C[m x n] += / = A[m x k] * B[k x n], row-major, optional transposes
// interpreted on the logical (pre-transpose) shapes.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  detail::blas_runtime_init();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  detail::blas_runtime_init();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

}  // namespace tpr

#endif
