#include "roattn/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

// NEON backend. Two float64x2 registers hold the four striped accumulator
// lanes of the scalar reference (q01 = p0,p1; q23 = p2,p3).

namespace roattn::kern {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t q01 = vdupq_n_f64(0.0);
    float64x2_t q23 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        q01 = vfmaq_f64(q01, vld1q_f64(a + i), vld1q_f64(b + i));
        q23 = vfmaq_f64(q23, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    double p[4] = {vgetq_lane_f64(q01, 0), vgetq_lane_f64(q01, 1),
                   vgetq_lane_f64(q23, 0), vgetq_lane_f64(q23, 1)};
    for (std::size_t j = 0; i < n; ++i, ++j) {
        p[j] = std::fma(a[i], b[i], p[j]);
    }
    return (p[0] + p[1]) + (p[2] + p[3]);
}

double sum_neon(const double* x, std::size_t n) {
    float64x2_t q01 = vdupq_n_f64(0.0);
    float64x2_t q23 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        q01 = vaddq_f64(q01, vld1q_f64(x + i));
        q23 = vaddq_f64(q23, vld1q_f64(x + i + 2));
    }
    double p[4] = {vgetq_lane_f64(q01, 0), vgetq_lane_f64(q01, 1),
                   vgetq_lane_f64(q23, 0), vgetq_lane_f64(q23, 1)};
    for (std::size_t j = 0; i < n; ++i, ++j) {
        p[j] += x[i];
    }
    return (p[0] + p[1]) + (p[2] + p[3]);
}

double max_neon(const double* x, std::size_t n) {
    double m = x[0];
    std::size_t i = 1;
    for (; i + 2 <= n; i += 2) {
        float64x2_t v = vld1q_f64(x + i);
        double a = vgetq_lane_f64(v, 0);
        double b = vgetq_lane_f64(v, 1);
        double c = a > b ? a : b;
        m = c > m ? c : m;
    }
    for (; i < n; ++i) {
        m = x[i] > m ? x[i] : m;
    }
    return m;
}

void axpy_neon(double* y, double a, const double* x, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) {
        y[i] = std::fma(a, x[i], y[i]);
    }
}

void scale_neon(double* y, double a, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vmulq_f64(vld1q_f64(y + i), va));
    }
    for (; i < n; ++i) {
        y[i] *= a;
    }
}

void add_scaled_neon(double* out, const double* x, double a, const double* b,
                     std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vfmaq_f64(vld1q_f64(x + i), va, vld1q_f64(b + i)));
    }
    for (; i < n; ++i) {
        out[i] = std::fma(a, b[i], x[i]);
    }
}

void relu_neon(double* y, std::size_t n) {
    const float64x2_t vz = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vmaxq_f64(vld1q_f64(y + i), vz));
    }
    for (; i < n; ++i) {
        y[i] = y[i] > 0.0 ? y[i] : 0.0;
    }
}

void lerp_const_neon(double* out, const double* a, const double* b, double t,
                     std::size_t n) {
    const float64x2_t vt = vdupq_n_f64(t);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t va = vld1q_f64(a + i);
        float64x2_t vd = vsubq_f64(vld1q_f64(b + i), va);
        vst1q_f64(out + i, vfmaq_f64(va, vt, vd));
    }
    for (; i < n; ++i) {
        out[i] = std::fma(t, b[i] - a[i], a[i]);
    }
}

void lerp_elems_neon(double* out, const double* a, const double* b,
                     const double* t, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t va = vld1q_f64(a + i);
        float64x2_t vd = vsubq_f64(vld1q_f64(b + i), va);
        vst1q_f64(out + i, vfmaq_f64(va, vld1q_f64(t + i), vd));
    }
    for (; i < n; ++i) {
        out[i] = std::fma(t[i], b[i] - a[i], a[i]);
    }
}

}  // namespace

const Ops kNeonOps = {
    dot_neon,    sum_neon,        max_neon,
    axpy_neon,   scale_neon,      add_scaled_neon,
    relu_neon,   lerp_const_neon, lerp_elems_neon,
};

}  // namespace roattn::kern

#endif  // __aarch64__
