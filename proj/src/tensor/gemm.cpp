#include <algorithm>
#include <vector>

#include "spat/tensor/kernels.hpp"

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spat::kernels {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_max_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

namespace parallel {

namespace {

template <typename T>
void gemm_nn_generic(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                     const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(m); ++i) {
        T* crow = c + i * ldc;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * lda + p];
            const T* brow = b + p * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void gemm_nt_generic(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                     const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(m); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = 0;
            const T* arow = a + i * lda;
            const T* brow = b + j * ldb;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            if (accumulate) {
                c[i * ldc + j] += acc;
            } else {
                c[i * ldc + j] = acc;
            }
        }
    }
}

#if defined(__AVX512F__)

constexpr std::size_t kPanel = 64;

// Rows [0, MR) of a C tile 64 columns wide, B packed as K x 64.
template <int MR>
inline void micro_nn(std::size_t k, const float* a, std::size_t lda, const float* packed, float* c,
                     std::size_t ldc, bool accumulate) {
    __m512 acc[MR][4];
    for (int i = 0; i < MR; ++i) {
        for (int j = 0; j < 4; ++j) {
            acc[i][j] = accumulate ? _mm512_loadu_ps(c + i * ldc + 16 * j) : _mm512_setzero_ps();
        }
    }
    for (std::size_t p = 0; p < k; ++p) {
        const float* bp = packed + p * kPanel;
        const __m512 b0 = _mm512_loadu_ps(bp);
        const __m512 b1 = _mm512_loadu_ps(bp + 16);
        const __m512 b2 = _mm512_loadu_ps(bp + 32);
        const __m512 b3 = _mm512_loadu_ps(bp + 48);
#pragma GCC unroll 8
        for (int i = 0; i < MR; ++i) {
            const __m512 av = _mm512_set1_ps(a[i * lda + p]);
            acc[i][0] = _mm512_fmadd_ps(av, b0, acc[i][0]);
            acc[i][1] = _mm512_fmadd_ps(av, b1, acc[i][1]);
            acc[i][2] = _mm512_fmadd_ps(av, b2, acc[i][2]);
            acc[i][3] = _mm512_fmadd_ps(av, b3, acc[i][3]);
        }
    }
    for (int i = 0; i < MR; ++i) {
        for (int j = 0; j < 4; ++j) _mm512_storeu_ps(c + i * ldc + 16 * j, acc[i][j]);
    }
}

void gemm_nn_avx512(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                    const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    const std::size_t panels = n / kPanel;
#pragma omp parallel
    {
        std::vector<float> packed(k * kPanel);
#pragma omp for schedule(static)
        for (long pi = 0; pi < static_cast<long>(panels); ++pi) {
            const std::size_t n0 = static_cast<std::size_t>(pi) * kPanel;
            for (std::size_t p = 0; p < k; ++p) {
                std::copy_n(b + p * ldb + n0, kPanel, packed.data() + p * kPanel);
            }
            std::size_t i = 0;
            for (; i + 6 <= m; i += 6) {
                micro_nn<6>(k, a + i * lda, lda, packed.data(), c + i * ldc + n0, ldc, accumulate);
            }
            for (; i < m; ++i) {
                micro_nn<1>(k, a + i * lda, lda, packed.data(), c + i * ldc + n0, ldc, accumulate);
            }
        }
    }
    const std::size_t tail = panels * kPanel;
    if (tail < n) {
        gemm_nn_generic<float>(m, n - tail, k, a, lda, b + tail, ldb, c + tail, ldc, accumulate);
    }
}

template <int MT, int NT>
inline void micro_nt(std::size_t k, const float* a, std::size_t lda, const float* b,
                     std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    __m512 acc[MT][NT];
    for (int i = 0; i < MT; ++i) {
        for (int j = 0; j < NT; ++j) acc[i][j] = _mm512_setzero_ps();
    }
    std::size_t p = 0;
    for (; p + 16 <= k; p += 16) {
        __m512 bv[NT];
        for (int j = 0; j < NT; ++j) bv[j] = _mm512_loadu_ps(b + j * ldb + p);
        for (int i = 0; i < MT; ++i) {
            const __m512 av = _mm512_loadu_ps(a + i * lda + p);
            for (int j = 0; j < NT; ++j) acc[i][j] = _mm512_fmadd_ps(av, bv[j], acc[i][j]);
        }
    }
    if (p < k) {
        const __mmask16 mask = static_cast<__mmask16>((1u << (k - p)) - 1u);
        __m512 bv[NT];
        for (int j = 0; j < NT; ++j) bv[j] = _mm512_maskz_loadu_ps(mask, b + j * ldb + p);
        for (int i = 0; i < MT; ++i) {
            const __m512 av = _mm512_maskz_loadu_ps(mask, a + i * lda + p);
            for (int j = 0; j < NT; ++j) acc[i][j] = _mm512_fmadd_ps(av, bv[j], acc[i][j]);
        }
    }
    for (int i = 0; i < MT; ++i) {
        for (int j = 0; j < NT; ++j) {
            const float v = _mm512_reduce_add_ps(acc[i][j]);
            if (accumulate) {
                c[i * ldc + j] += v;
            } else {
                c[i * ldc + j] = v;
            }
        }
    }
}

void gemm_nt_avx512(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                    const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    constexpr std::size_t tile = 4;
    const std::size_t mt = (m + tile - 1) / tile;
    const std::size_t nt = (n + tile - 1) / tile;
#pragma omp parallel for schedule(static) collapse(2)
    for (long ti = 0; ti < static_cast<long>(mt); ++ti) {
        for (long tj = 0; tj < static_cast<long>(nt); ++tj) {
            const std::size_t i0 = static_cast<std::size_t>(ti) * tile;
            const std::size_t j0 = static_cast<std::size_t>(tj) * tile;
            const float* ap = a + i0 * lda;
            const float* bp = b + j0 * ldb;
            float* cp = c + i0 * ldc + j0;
            if (i0 + tile <= m && j0 + tile <= n) {
                micro_nt<4, 4>(k, ap, lda, bp, ldb, cp, ldc, accumulate);
            } else {
                for (std::size_t i = i0; i < std::min(m, i0 + tile); ++i) {
                    for (std::size_t j = j0; j < std::min(n, j0 + tile); ++j) {
                        micro_nt<1, 1>(k, a + i * lda, lda, b + j * ldb, ldb, c + i * ldc + j, ldc,
                                       accumulate);
                    }
                }
            }
        }
    }
}

#endif

}  // namespace

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
#if defined(__AVX512F__)
    if constexpr (std::is_same_v<T, float>) {
        gemm_nn_avx512(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
        return;
    }
#endif
    gemm_nn_generic(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
#if defined(__AVX512F__)
    if constexpr (std::is_same_v<T, float>) {
        gemm_nt_avx512(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
        return;
    }
#endif
    gemm_nt_generic(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                             const float*, std::size_t, float*, std::size_t, bool);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                              const double*, std::size_t, double*, std::size_t, bool);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                             const float*, std::size_t, float*, std::size_t, bool);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                              const double*, std::size_t, double*, std::size_t, bool);

}  // namespace parallel
}  // namespace spat::kernels
