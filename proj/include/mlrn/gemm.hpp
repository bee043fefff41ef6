#pragma once

#include <cstdint>

namespace mlrn {

// Row-major matrix kernels in saxpy form: the inner j-loop has no loop-carried
// dependence, so the compiler vectorizes it without reassociating sums. Each
// C[i][j] accumulates its k-terms in ascending k order, which keeps results
// bitwise stable run to run.

// C[M][N] += A[M][K] * B[K][N]
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, int M, int K, int N) {
    int i = 0;
    for (; i + 4 <= M; i += 4) {
        T* c0 = C + static_cast<std::int64_t>(i) * N;
        T* c1 = c0 + N;
        T* c2 = c1 + N;
        T* c3 = c2 + N;
        const T* a = A + static_cast<std::int64_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const T a0 = a[k], a1 = a[K + k], a2 = a[2 * K + k], a3 = a[3 * K + k];
            const T* b = B + static_cast<std::int64_t>(k) * N;
            for (int j = 0; j < N; ++j) {
                c0[j] += a0 * b[j];
                c1[j] += a1 * b[j];
                c2[j] += a2 * b[j];
                c3[j] += a3 * b[j];
            }
        }
    }
    for (; i < M; ++i) {
        T* c = C + static_cast<std::int64_t>(i) * N;
        const T* a = A + static_cast<std::int64_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const T ak = a[k];
            const T* b = B + static_cast<std::int64_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += ak * b[j];
        }
    }
}

// C[M][N] += A^T * B with A stored [K][M]
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, int M, int K, int N) {
    for (int k = 0; k < K; ++k) {
        const T* a = A + static_cast<std::int64_t>(k) * M;
        const T* b = B + static_cast<std::int64_t>(k) * N;
        for (int i = 0; i < M; ++i) {
            const T ak = a[i];
            T* c = C + static_cast<std::int64_t>(i) * N;
            for (int j = 0; j < N; ++j) c[j] += ak * b[j];
        }
    }
}

// Row-by-row dot products: C[M][N] += A[M][K] * B^T with B stored [N][K].
// One sequential accumulator per dot: the sum's grouping then cannot depend
// on K, so widening a weight matrix with zero columns leaves results
// bit-identical. Only classifier layers come through here; the heavy conv
// paths use the axpy kernels above.
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        const T* a = A + static_cast<std::int64_t>(i) * K;
        T* c = C + static_cast<std::int64_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const T* b = B + static_cast<std::int64_t>(j) * K;
            T s = 0;
            for (int k = 0; k < K; ++k) s += a[k] * b[k];
            c[j] += s;
        }
    }
}

}  // namespace mlrn
