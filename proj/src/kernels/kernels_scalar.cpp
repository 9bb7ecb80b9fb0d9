#include "roattn/kernels.hpp"

#include <cmath>

// Reference implementations. The striped 4-accumulator reduction below is
// the contract all SIMD backends reproduce lane-for-lane.

namespace roattn::kern {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double p[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        p[0] = std::fma(a[i + 0], b[i + 0], p[0]);
        p[1] = std::fma(a[i + 1], b[i + 1], p[1]);
        p[2] = std::fma(a[i + 2], b[i + 2], p[2]);
        p[3] = std::fma(a[i + 3], b[i + 3], p[3]);
    }
    for (std::size_t j = 0; i < n; ++i, ++j) {
        p[j] = std::fma(a[i], b[i], p[j]);
    }
    return (p[0] + p[1]) + (p[2] + p[3]);
}

double sum_scalar(const double* x, std::size_t n) {
    double p[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        p[0] += x[i + 0];
        p[1] += x[i + 1];
        p[2] += x[i + 2];
        p[3] += x[i + 3];
    }
    for (std::size_t j = 0; i < n; ++i, ++j) {
        p[j] += x[i];
    }
    return (p[0] + p[1]) + (p[2] + p[3]);
}

double max_scalar(const double* x, std::size_t n) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i) {
        m = x[i] > m ? x[i] : m;
    }
    return m;
}

void axpy_scalar(double* y, double a, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = std::fma(a, x[i], y[i]);
    }
}

void scale_scalar(double* y, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] *= a;
    }
}

void add_scaled_scalar(double* out, const double* x, double a, const double* b,
                       std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::fma(a, b[i], x[i]);
    }
}

void relu_scalar(double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = y[i] > 0.0 ? y[i] : 0.0;
    }
}

void lerp_const_scalar(double* out, const double* a, const double* b, double t,
                       std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::fma(t, b[i] - a[i], a[i]);
    }
}

void lerp_elems_scalar(double* out, const double* a, const double* b,
                       const double* t, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::fma(t[i], b[i] - a[i], a[i]);
    }
}

}  // namespace

const Ops kScalarOps = {
    dot_scalar,    sum_scalar,        max_scalar,
    axpy_scalar,   scale_scalar,      add_scaled_scalar,
    relu_scalar,   lerp_const_scalar, lerp_elems_scalar,
};

}  // namespace roattn::kern
