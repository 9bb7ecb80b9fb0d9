#include "roattn/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

// AVX2/FMA backend. One ymm register holds the four striped accumulator
// lanes of the scalar reference, so reductions round identically. Tails are
// folded into the same lanes scalar code uses.

namespace roattn::kern {
namespace {

double reduce_lanes(__m256d acc, const double* a, const double* b,
                    std::size_t i, std::size_t n) {
    alignas(32) double p[4];
    _mm256_store_pd(p, acc);
    for (std::size_t j = 0; i < n; ++i, ++j) {
        p[j] = std::fma(a[i], b[i], p[j]);
    }
    return (p[0] + p[1]) + (p[2] + p[3]);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    }
    return reduce_lanes(acc, a, b, i, n);
}

double sum_avx2(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    }
    alignas(32) double p[4];
    _mm256_store_pd(p, acc);
    for (std::size_t j = 0; i < n; ++i, ++j) {
        p[j] += x[i];
    }
    return (p[0] + p[1]) + (p[2] + p[3]);
}

double max_avx2(const double* x, std::size_t n) {
    double m = x[0];
    std::size_t i = 1;
    if (n >= 5) {
        __m256d vm = _mm256_loadu_pd(x + 1);
        for (i = 5; i + 4 <= n; i += 4) {
            vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
        }
        alignas(32) double p[4];
        _mm256_store_pd(p, vm);
        for (int j = 0; j < 4; ++j) {
            m = p[j] > m ? p[j] : m;
        }
    }
    for (; i < n; ++i) {
        m = x[i] > m ? x[i] : m;
    }
    return m;
}

void axpy_avx2(double* y, double a, const double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) {
        y[i] = std::fma(a, x[i], y[i]);
    }
}

void scale_avx2(double* y, double a, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(y + i), va));
    }
    for (; i < n; ++i) {
        y[i] *= a;
    }
}

void add_scaled_avx2(double* out, const double* x, double a, const double* b,
                     std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_fmadd_pd(va, _mm256_loadu_pd(b + i), _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(out + i, v);
    }
    for (; i < n; ++i) {
        out[i] = std::fma(a, b[i], x[i]);
    }
}

void relu_avx2(double* y, std::size_t n) {
    const __m256d vz = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(y + i), vz));
    }
    for (; i < n; ++i) {
        y[i] = y[i] > 0.0 ? y[i] : 0.0;
    }
}

void lerp_const_avx2(double* out, const double* a, const double* b, double t,
                     std::size_t n) {
    const __m256d vt = _mm256_set1_pd(t);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d va = _mm256_loadu_pd(a + i);
        __m256d vd = _mm256_sub_pd(_mm256_loadu_pd(b + i), va);
        _mm256_storeu_pd(out + i, _mm256_fmadd_pd(vt, vd, va));
    }
    for (; i < n; ++i) {
        out[i] = std::fma(t, b[i] - a[i], a[i]);
    }
}

void lerp_elems_avx2(double* out, const double* a, const double* b,
                     const double* t, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d va = _mm256_loadu_pd(a + i);
        __m256d vd = _mm256_sub_pd(_mm256_loadu_pd(b + i), va);
        _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(t + i), vd, va));
    }
    for (; i < n; ++i) {
        out[i] = std::fma(t[i], b[i] - a[i], a[i]);
    }
}

}  // namespace

const Ops kAvx2Ops = {
    dot_avx2,    sum_avx2,        max_avx2,
    axpy_avx2,   scale_avx2,      add_scaled_avx2,
    relu_avx2,   lerp_const_avx2, lerp_elems_avx2,
};

}  // namespace roattn::kern

#endif  // x86_64
