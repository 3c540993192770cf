#include "n3l/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace n3l::kernels {

namespace {

// Work below this many multiply-adds stays on the calling thread.
constexpr long parallel_threshold = 1L << 15;

int thread_count();

// Below the threshold or with one thread, the serial loop is used directly:
// the outlined parallel region costs vectorization even on a single thread.
inline bool go_parallel(int m, int n, int k) {
    return static_cast<long>(m) * n * k >= parallel_threshold && thread_count() > 1;
}

inline void row_nn(int i, int n, int k, const real* a, const real* b, real* c, bool accumulate) {
    real* crow = c + static_cast<long>(i) * n;
    if (!accumulate)
        for (int j = 0; j < n; ++j) crow[j] = 0;
    const real* arow = a + static_cast<long>(i) * k;
    for (int p = 0; p < k; ++p) {
        const real av = arow[p];
        const real* brow = b + static_cast<long>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void row_nt(int i, int n, int k, const real* a, const real* b, real* c) {
    const real* arow = a + static_cast<long>(i) * k;
    real* crow = c + static_cast<long>(i) * n;
    for (int j = 0; j < n; ++j) {
        const real* brow = b + static_cast<long>(j) * k;
        real acc = 0;
        for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
    }
}

inline void row_tn(int p, int m, int n, int k, const real* a, const real* g, real* c) {
    real* crow = c + static_cast<long>(p) * n;
    for (int i = 0; i < m; ++i) {
        const real av = a[static_cast<long>(i) * k + p];
        if (av == 0) continue;
        const real* grow = g + static_cast<long>(i) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
}

int thread_count() {
#ifdef _OPENMP
    return omp_in_parallel() ? 1 : omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace

namespace serial {

void gemm_nn(int m, int n, int k, const real* a, const real* b, real* c, bool accumulate) {
    for (int i = 0; i < m; ++i) row_nn(i, n, k, a, b, c, accumulate);
}

void gemm_nt(int m, int n, int k, const real* a, const real* b, real* c) {
    for (int i = 0; i < m; ++i) row_nt(i, n, k, a, b, c);
}

void gemm_tn(int m, int n, int k, const real* a, const real* g, real* c) {
    for (int p = 0; p < k; ++p) row_tn(p, m, n, k, a, g, c);
}

}  // namespace serial

namespace omp {

void gemm_nn(int m, int n, int k, const real* a, const real* b, real* c, bool accumulate) {
    if (!go_parallel(m, n, k)) return serial::gemm_nn(m, n, k, a, b, c, accumulate);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) row_nn(i, n, k, a, b, c, accumulate);
}

void gemm_nt(int m, int n, int k, const real* a, const real* b, real* c) {
    if (!go_parallel(m, n, k)) return serial::gemm_nt(m, n, k, a, b, c);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) row_nt(i, n, k, a, b, c);
}

void gemm_tn(int m, int n, int k, const real* a, const real* g, real* c) {
    if (!go_parallel(m, n, k)) return serial::gemm_tn(m, n, k, a, g, c);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < k; ++p) row_tn(p, m, n, k, a, g, c);
}

}  // namespace omp

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace n3l::kernels
