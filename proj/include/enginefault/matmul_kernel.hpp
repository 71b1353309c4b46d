#pragma once

namespace enginefault::nn {

// Row-major C = alpha * op(A) * op(B) + beta * C.
// Dispatches to CBLAS when the build links it, else to the reference loop.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc);

// Reference triple loop, always available; used to cross-check the fast path.
void gemm_reference(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                    const double* a, int lda, const double* b, int ldb, double beta, double* c,
                    int ldc);

}  // namespace enginefault::nn
