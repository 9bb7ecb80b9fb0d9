#pragma once

// Dispatched double-precision kernels for the numeric inner loops.
//
// Every backend implements the same fixed algorithms: reductions use a
// 4-lane striped accumulator combined as (p0+p1)+(p2+p3), and elementwise
// ops use fused multiply-add per element. This makes scalar, AVX2 and NEON
// results bit-identical, so backend selection never changes output.

#include <cstddef>
#include <string>

namespace roattn::kern {

enum class Backend { scalar, avx2, neon };

struct Ops {
    // reductions (4-lane striped accumulation)
    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    double (*max)(const double* x, std::size_t n);  // n >= 1

    // elementwise
    void (*axpy)(double* y, double a, const double* x, std::size_t n);  // y += a*x
    void (*scale)(double* y, double a, std::size_t n);                  // y *= a
    void (*add_scaled)(double* out, const double* x, double a, const double* b,
                       std::size_t n);                                  // out = x + a*b
    void (*relu)(double* y, std::size_t n);                             // y = max(y, 0)
    void (*lerp_const)(double* out, const double* a, const double* b, double t,
                       std::size_t n);                                  // out = a + t*(b-a)
    void (*lerp_elems)(double* out, const double* a, const double* b,
                       const double* t, std::size_t n);                 // out = a + t[i]*(b-a)
};

extern const Ops kScalarOps;
#if defined(__x86_64__) || defined(_M_X64)
extern const Ops kAvx2Ops;
#endif
#if defined(__aarch64__)
extern const Ops kNeonOps;
#endif

bool backend_supported(Backend b);
Backend preferred_backend();
Backend active_backend();
void set_backend(Backend b);  // throws std::runtime_error if unsupported
const char* backend_name(Backend b);
Backend backend_from_name(const std::string& name);

const Ops& ops();

// Numerically stable in-place softmax over a contiguous row.
// exp() stays libm in every backend; max/sum/scale go through ops().
void softmax_inplace(double* row, std::size_t n);

// Softmax over the concatenation of two disjoint spans (used for rows whose
// valid positions are [text | visual] with a padding hole between them).
void softmax_spans2(double* s1, std::size_t n1, double* s2, std::size_t n2);

}  // namespace roattn::kern
