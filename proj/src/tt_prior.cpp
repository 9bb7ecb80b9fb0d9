#include "roattn/tt_prior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "roattn/kernels.hpp"

namespace roattn::ttprior {

void validate(const TTRoutingConfig& cfg) {
    if (!(cfg.tolerance > 0.0 && cfg.tolerance < 1.0)) {
        throw std::invalid_argument("tolerance must be in (0, 1)");
    }
    if (cfg.t_max < 1) {
        throw std::invalid_argument("t_max must be >= 1");
    }
    if (cfg.bins.empty()) {
        throw std::invalid_argument("routing bins must be non-empty");
    }
    for (std::size_t i = 1; i < cfg.bins.size(); ++i) {
        if (cfg.bins[i] <= cfg.bins[i - 1]) {
            throw std::invalid_argument("routing bins must be strictly increasing");
        }
    }
    if (cfg.pool_k < 8) {
        throw std::invalid_argument("pool_k must be >= 8");
    }
}

double dispersion_ratio(const std::vector<int>& lengths) {
    if (lengths.empty()) {
        throw std::invalid_argument("empty length list");
    }
    int lo = lengths[0];
    int hi = lengths[0];
    for (int v : lengths) {
        if (v <= 0) {
            throw std::invalid_argument("lengths must be positive");
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return static_cast<double>(hi - lo) / static_cast<double>(hi);
}

int ceil_to_8(int x) {
    if (x < 1) {
        throw std::invalid_argument("ceil_to_8 requires x >= 1");
    }
    return 8 * ((x + 7) / 8);
}

int reference_length(const std::vector<int>& lengths, const TTRoutingConfig& cfg) {
    const double dispersion = dispersion_ratio(lengths);
    int t_ref;
    if (dispersion <= cfg.tolerance) {
        const int hi = *std::max_element(lengths.begin(), lengths.end());
        t_ref = static_cast<int>(std::floor(static_cast<double>(hi) + 0.5));
    } else {
        double mean = 0.0;
        for (int v : lengths) {
            mean += static_cast<double>(v);
        }
        mean /= static_cast<double>(lengths.size());
        t_ref = ceil_to_8(static_cast<int>(std::floor(mean + 0.5)));
    }
    return std::clamp(t_ref, 1, cfg.t_max);
}

int route_bucket(int t_ref, const std::vector<int>& bins) {
    if (bins.empty()) {
        throw std::invalid_argument("routing bins must be non-empty");
    }
    for (int b : bins) {
        if (b >= t_ref) {
            return b;
        }
    }
    return bins.back();
}

Conv3x3 make_conv3x3_zero(int channels) {
    Conv3x3 conv;
    conv.channels = channels;
    conv.weights.assign(static_cast<std::size_t>(channels) * channels * 9, 0.0);
    conv.offsets.assign(channels, 0.0);
    return conv;
}

Conv3x3 make_conv3x3_uniform(int channels, Rng& rng) {
    Conv3x3 conv = make_conv3x3_zero(channels);
    const double limit = std::sqrt(1.0 / (9.0 * channels));
    for (double& w : conv.weights) {
        w = rng.uniform(-limit, limit);
    }
    for (double& b : conv.offsets) {
        b = rng.uniform(-limit, limit);
    }
    return conv;
}

TTPriorModule make_module(int bucket_size, int channels, Rng& rng) {
    TTPriorModule m;
    m.bucket_size = bucket_size;
    m.conv1 = make_conv3x3_uniform(channels, rng);
    m.conv2 = make_conv3x3_zero(channels);
    return m;
}

std::vector<double> adaptive_avg_pool(const double* in, int ch, int t, int s) {
    const auto& k = kern::ops();
    std::vector<double> out(static_cast<std::size_t>(ch) * s * s);
    for (int c = 0; c < ch; ++c) {
        const double* src = in + static_cast<std::size_t>(c) * t * t;
        double* dst = out.data() + static_cast<std::size_t>(c) * s * s;
        for (int i = 0; i < s; ++i) {
            const int r0 = static_cast<int>(static_cast<std::int64_t>(i) * t / s);
            const int r1 = static_cast<int>(static_cast<std::int64_t>(i + 1) * t / s);
            for (int j = 0; j < s; ++j) {
                const int c0 = static_cast<int>(static_cast<std::int64_t>(j) * t / s);
                const int c1 = static_cast<int>(static_cast<std::int64_t>(j + 1) * t / s);
                double acc = 0.0;
                for (int r = r0; r < r1; ++r) {
                    acc += k.sum(src + static_cast<std::size_t>(r) * t + c0,
                                 static_cast<std::size_t>(c1 - c0));
                }
                dst[static_cast<std::size_t>(i) * s + j] =
                    acc / (static_cast<double>(r1 - r0) * (c1 - c0));
            }
        }
    }
    return out;
}

void adaptive_avg_pool_backward(const double* dout, int ch, int t, int s, double* din_accum) {
    for (int c = 0; c < ch; ++c) {
        const double* dsrc = dout + static_cast<std::size_t>(c) * s * s;
        double* ddst = din_accum + static_cast<std::size_t>(c) * t * t;
        for (int i = 0; i < s; ++i) {
            const int r0 = static_cast<int>(static_cast<std::int64_t>(i) * t / s);
            const int r1 = static_cast<int>(static_cast<std::int64_t>(i + 1) * t / s);
            for (int j = 0; j < s; ++j) {
                const int c0 = static_cast<int>(static_cast<std::int64_t>(j) * t / s);
                const int c1 = static_cast<int>(static_cast<std::int64_t>(j + 1) * t / s);
                const double g = dsrc[static_cast<std::size_t>(i) * s + j] /
                                 (static_cast<double>(r1 - r0) * (c1 - c0));
                for (int r = r0; r < r1; ++r) {
                    double* row = ddst + static_cast<std::size_t>(r) * t;
                    for (int cc = c0; cc < c1; ++cc) {
                        row[cc] += g;
                    }
                }
            }
        }
    }
}

namespace {

// x-segment of a 3x3 tap: out[x0 + i] accumulates w * in[s0 + i] for i < len
struct TapSegment {
    int out_x0;
    int in_x0;
    int len;
};

TapSegment tap_segment(int kx, int n) {
    switch (kx) {
        case 0:
            return {1, 0, n - 1};
        case 1:
            return {0, 0, n};
        default:
            return {0, 1, n - 1};
    }
}

}  // namespace

std::vector<double> conv3x3_forward(const double* in, int n, const Conv3x3& conv,
                                    PriorStats* stats) {
    const auto& k = kern::ops();
    const int ch = conv.channels;
    std::vector<double> out(static_cast<std::size_t>(ch) * n * n);
    std::uint64_t madds = 0;

    for (int co = 0; co < ch; ++co) {
        double* omap = out.data() + static_cast<std::size_t>(co) * n * n;
        for (int y = 0; y < n; ++y) {
            double* orow = omap + static_cast<std::size_t>(y) * n;
            for (int x = 0; x < n; ++x) {
                orow[x] = conv.offsets[co];
            }
        }
        for (int ci = 0; ci < ch; ++ci) {
            const double* imap = in + static_cast<std::size_t>(ci) * n * n;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double w = conv.w(co, ci, ky, kx);
                    const TapSegment seg = tap_segment(kx, n);
                    for (int y = 0; y < n; ++y) {
                        const int ys = y + ky - 1;
                        if (ys < 0 || ys >= n) {
                            continue;
                        }
                        k.axpy(omap + static_cast<std::size_t>(y) * n + seg.out_x0, w,
                               imap + static_cast<std::size_t>(ys) * n + seg.in_x0,
                               static_cast<std::size_t>(seg.len));
                        madds += static_cast<std::uint64_t>(seg.len);
                    }
                }
            }
        }
    }
    if (stats) {
        stats->conv_madds += madds;
    }
    return out;
}

void conv3x3_backward(const double* in, int n, const Conv3x3& conv, const double* dout,
                      Conv3x3& grad_accum, double* din_accum) {
    const auto& k = kern::ops();
    const int ch = conv.channels;

    for (int co = 0; co < ch; ++co) {
        const double* dmap = dout + static_cast<std::size_t>(co) * n * n;
        grad_accum.offsets[co] +=
            k.sum(dmap, static_cast<std::size_t>(n) * n);
        for (int ci = 0; ci < ch; ++ci) {
            const double* imap = in + static_cast<std::size_t>(ci) * n * n;
            double* dinmap = din_accum + static_cast<std::size_t>(ci) * n * n;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double w = conv.w(co, ci, ky, kx);
                    const TapSegment seg = tap_segment(kx, n);
                    double wgrad = 0.0;
                    for (int y = 0; y < n; ++y) {
                        const int ys = y + ky - 1;
                        if (ys < 0 || ys >= n) {
                            continue;
                        }
                        const double* drow = dmap + static_cast<std::size_t>(y) * n + seg.out_x0;
                        const double* irow = imap + static_cast<std::size_t>(ys) * n + seg.in_x0;
                        wgrad += k.dot(drow, irow, static_cast<std::size_t>(seg.len));
                        k.axpy(dinmap + static_cast<std::size_t>(ys) * n + seg.in_x0, w, drow,
                               static_cast<std::size_t>(seg.len));
                    }
                    grad_accum.w(co, ci, ky, kx) += wgrad;
                }
            }
        }
    }
}

namespace {

struct ResizeAxis {
    std::vector<int> i0;
    std::vector<int> i1;
    std::vector<double> frac;
};

// half-pixel-center source mapping with edge clamping
ResizeAxis make_resize_axis(int src, int dst) {
    ResizeAxis ax;
    ax.i0.resize(dst);
    ax.i1.resize(dst);
    ax.frac.resize(dst);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (int i = 0; i < dst; ++i) {
        double pos = (static_cast<double>(i) + 0.5) * scale - 0.5;
        pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
        const int lo = static_cast<int>(std::floor(pos));
        ax.i0[i] = lo;
        ax.i1[i] = std::min(lo + 1, src - 1);
        ax.frac[i] = pos - static_cast<double>(lo);
    }
    return ax;
}

}  // namespace

std::vector<double> bilinear_resize(const double* in, int ch, int s, int d) {
    const auto& k = kern::ops();
    const ResizeAxis ax = make_resize_axis(s, d);

    std::vector<double> out(static_cast<std::size_t>(ch) * d * d);
    std::vector<double> hrows(static_cast<std::size_t>(s) * d);
    std::vector<double> ga(d);
    std::vector<double> gb(d);

    for (int c = 0; c < ch; ++c) {
        const double* src = in + static_cast<std::size_t>(c) * s * s;
        // horizontal pass for every source row
        for (int r = 0; r < s; ++r) {
            const double* row = src + static_cast<std::size_t>(r) * s;
            for (int x = 0; x < d; ++x) {
                ga[x] = row[ax.i0[x]];
                gb[x] = row[ax.i1[x]];
            }
            k.lerp_elems(hrows.data() + static_cast<std::size_t>(r) * d, ga.data(), gb.data(),
                         ax.frac.data(), static_cast<std::size_t>(d));
        }
        // vertical pass
        double* dst = out.data() + static_cast<std::size_t>(c) * d * d;
        for (int y = 0; y < d; ++y) {
            k.lerp_const(dst + static_cast<std::size_t>(y) * d,
                         hrows.data() + static_cast<std::size_t>(ax.i0[y]) * d,
                         hrows.data() + static_cast<std::size_t>(ax.i1[y]) * d, ax.frac[y],
                         static_cast<std::size_t>(d));
        }
    }
    return out;
}

void bilinear_resize_backward(const double* dout, int ch, int s, int d, double* din_accum) {
    const ResizeAxis ax = make_resize_axis(s, d);
    for (int c = 0; c < ch; ++c) {
        const double* dmap = dout + static_cast<std::size_t>(c) * d * d;
        double* din = din_accum + static_cast<std::size_t>(c) * s * s;
        for (int y = 0; y < d; ++y) {
            const double fy = ax.frac[y];
            const int y0 = ax.i0[y];
            const int y1 = ax.i1[y];
            for (int x = 0; x < d; ++x) {
                const double g = dmap[static_cast<std::size_t>(y) * d + x];
                const double fx = ax.frac[x];
                const int x0 = ax.i0[x];
                const int x1 = ax.i1[x];
                din[static_cast<std::size_t>(y0) * s + x0] += (1.0 - fy) * (1.0 - fx) * g;
                din[static_cast<std::size_t>(y0) * s + x1] += (1.0 - fy) * fx * g;
                din[static_cast<std::size_t>(y1) * s + x0] += fy * (1.0 - fx) * g;
                din[static_cast<std::size_t>(y1) * s + x1] += fy * fx * g;
            }
        }
    }
}

std::vector<double> compute_tt_prior(const std::vector<double>& tt_logits, int num_heads, int t,
                                     const TTPriorModule& module, int t_ref, int pool_k,
                                     PriorStats* stats) {
    if (t < 1 || t_ref < 1) {
        throw std::invalid_argument("map sizes must be >= 1");
    }
    if (tt_logits.size() != static_cast<std::size_t>(num_heads) * t * t) {
        throw std::invalid_argument("tt logit shape mismatch");
    }
    if (module.conv1.channels != num_heads || module.conv2.channels != num_heads) {
        throw std::invalid_argument("module channel count != num_heads");
    }

    const int s = std::min(t, pool_k);
    std::vector<double> pooled;
    const double* stage = tt_logits.data();
    if (t > pool_k) {
        pooled = adaptive_avg_pool(tt_logits.data(), num_heads, t, s);
        stage = pooled.data();
    }

    std::vector<double> c1 = conv3x3_forward(stage, s, module.conv1, stats);
    kern::ops().relu(c1.data(), c1.size());
    const std::vector<double> c2 = conv3x3_forward(c1.data(), s, module.conv2, stats);

    if (s == t_ref) {
        return c2;
    }
    return bilinear_resize(c2.data(), num_heads, s, t_ref);
}

std::vector<double> inject_tt_prior(const std::vector<double>& logits, int num_heads, int L,
                                    const std::vector<double>& prior, int t_ref, double gate_raw,
                                    rorpb::GateMode mode, int valid_len, int d_k) {
    if (logits.size() != static_cast<std::size_t>(num_heads) * L * L) {
        throw std::invalid_argument("logit shape mismatch");
    }
    if (prior.size() != static_cast<std::size_t>(num_heads) * t_ref * t_ref) {
        throw std::invalid_argument("prior shape mismatch");
    }
    if (valid_len < 1 || valid_len > L) {
        throw std::invalid_argument("valid_len out of range");
    }
    const double g = rorpb::effective_gate(gate_raw, mode);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
    const int m = std::min(valid_len, t_ref);
    const auto& k = kern::ops();

    std::vector<double> probs(logits.size(), 0.0);
    for (int head = 0; head < num_heads; ++head) {
        for (int i = 0; i < L; ++i) {
            const std::size_t off = (static_cast<std::size_t>(head) * L + i) * L;
            double* row = probs.data() + off;
            const double* lrow = logits.data() + off;
            if (i < m) {
                const std::size_t poff = (static_cast<std::size_t>(head) * t_ref + i) * t_ref;
                k.add_scaled(row, lrow, g, prior.data() + poff, static_cast<std::size_t>(m));
                for (int j = m; j < valid_len; ++j) {
                    row[j] = lrow[j];
                }
            } else {
                for (int j = 0; j < valid_len; ++j) {
                    row[j] = lrow[j];
                }
            }
            k.scale(row, inv_sqrt_dk, static_cast<std::size_t>(valid_len));
            kern::softmax_inplace(row, static_cast<std::size_t>(valid_len));
        }
    }
    return probs;
}

}  // namespace roattn::ttprior
