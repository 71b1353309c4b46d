#include "enginefault/matmul_kernel.hpp"

#ifdef EF_USE_CBLAS
#include <cblas.h>
#endif

namespace enginefault::nn {

void gemm_reference(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                    const double* a, int lda, const double* b, int ldb, double beta, double* c,
                    int ldc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) c[i * ldc + j] = beta == 0.0 ? 0.0 : c[i * ldc + j] * beta;
  // i-k-j order keeps the inner loop contiguous in B and C.
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      double av = trans_a ? a[p * lda + i] : a[i * lda + p];
      av *= alpha;
      if (av == 0.0) continue;
      const double* brow = trans_b ? nullptr : &b[p * ldb];
      double* crow = &c[i * ldc];
      if (!trans_b) {
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (int j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
      }
    }
  }
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc) {
#ifdef EF_USE_CBLAS
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
              ldc);
#else
  gemm_reference(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
#endif
}

}  // namespace enginefault::nn
