#include "roattn/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace roattn::kern {

namespace {

const Ops* table_for(Backend b) {
    switch (b) {
        case Backend::scalar:
            return &kScalarOps;
#if defined(__x86_64__) || defined(_M_X64)
        case Backend::avx2:
            return &kAvx2Ops;
#endif
#if defined(__aarch64__)
        case Backend::neon:
            return &kNeonOps;
#endif
        default:
            return nullptr;
    }
}

Backend g_active = preferred_backend();
const Ops* g_ops = table_for(g_active);

}  // namespace

bool backend_supported(Backend b) {
    if (b == Backend::scalar) {
        return true;
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (b == Backend::avx2) {
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    }
#endif
#if defined(__aarch64__)
    if (b == Backend::neon) {
        return true;
    }
#endif
    return false;
}

Backend preferred_backend() {
#if defined(__aarch64__)
    return Backend::neon;
#else
    return backend_supported(Backend::avx2) ? Backend::avx2 : Backend::scalar;
#endif
}

Backend active_backend() { return g_active; }

void set_backend(Backend b) {
    if (!backend_supported(b)) {
        throw std::runtime_error(std::string("kernel backend not supported on this host: ") +
                                 backend_name(b));
    }
    g_active = b;
    g_ops = table_for(b);
}

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::scalar:
            return "scalar";
        case Backend::avx2:
            return "avx2";
        case Backend::neon:
            return "neon";
    }
    return "?";
}

Backend backend_from_name(const std::string& name) {
    if (name == "scalar") return Backend::scalar;
    if (name == "avx2") return Backend::avx2;
    if (name == "neon") return Backend::neon;
    if (name == "auto") return preferred_backend();
    throw std::runtime_error("unknown kernel backend: " + name);
}

const Ops& ops() { return *g_ops; }

void softmax_inplace(double* row, std::size_t n) {
    softmax_spans2(row, n, nullptr, 0);
}

void softmax_spans2(double* s1, std::size_t n1, double* s2, std::size_t n2) {
    const Ops& k = ops();
    if (n1 + n2 == 0) {
        return;
    }
    double m;
    if (n1 == 0) {
        m = k.max(s2, n2);
    } else if (n2 == 0) {
        m = k.max(s1, n1);
    } else {
        const double m1 = k.max(s1, n1);
        const double m2 = k.max(s2, n2);
        m = m1 > m2 ? m1 : m2;
    }
    for (std::size_t i = 0; i < n1; ++i) {
        s1[i] = std::exp(s1[i] - m);
    }
    for (std::size_t i = 0; i < n2; ++i) {
        s2[i] = std::exp(s2[i] - m);
    }
    const double total = k.sum(s1, n1) + k.sum(s2, n2);
    const double inv = 1.0 / total;
    k.scale(s1, inv, n1);
    k.scale(s2, inv, n2);
}

}  // namespace roattn::kern
