#pragma once

#include "n3l/real.hpp"

// Dense row-major matrix kernels. `serial` is the reference; `omp` splits
// output rows across threads with the same per-element summation order, so
// both produce bit-identical results.
namespace n3l::kernels {

namespace serial {
// C[m,n] = A[m,k] B[k,n]  (or += when accumulate)
void gemm_nn(int m, int n, int k, const real* a, const real* b, real* c, bool accumulate);
// C[m,n] += A[m,k] B[n,k]^T
void gemm_nt(int m, int n, int k, const real* a, const real* b, real* c);
// C[k,n] += A[m,k]^T G[m,n]
void gemm_tn(int m, int n, int k, const real* a, const real* g, real* c);
}  // namespace serial

namespace omp {
void gemm_nn(int m, int n, int k, const real* a, const real* b, real* c, bool accumulate);
void gemm_nt(int m, int n, int k, const real* a, const real* b, real* c);
void gemm_tn(int m, int n, int k, const real* a, const real* g, real* c);
}  // namespace omp

int max_threads();

}  // namespace n3l::kernels
