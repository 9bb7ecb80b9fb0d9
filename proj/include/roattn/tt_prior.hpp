#pragma once

// Textual-token sub-block attention prior: batch reference-length
// estimation, bucket routing, and the pool -> conv -> upsample refiner with
// gated injection. Forward and backward primitives are exposed so the
// simulator can differentiate through the whole path.

#include <cstdint>
#include <vector>

#include "roattn/ro_rpb.hpp"
#include "roattn/rng.hpp"

namespace roattn::ttprior {

struct TTRoutingConfig {
    double tolerance = 0.1;  // fraction in (0,1)
    int t_max = 512;
    std::vector<int> bins = {128, 192, 256, 320, 384, 512};
    int pool_k = 64;
};

void validate(const TTRoutingConfig& cfg);

// (max - min) / max. Throws if empty or any length <= 0.
double dispersion_ratio(const std::vector<int>& lengths);

// smallest multiple of 8 that is >= x
int ceil_to_8(int x);

// Batch max when dispersion <= tolerance, otherwise the mean rounded half-up
// and aligned to a multiple of 8; clamped to [1, t_max].
int reference_length(const std::vector<int>& lengths, const TTRoutingConfig& cfg);

// Smallest bin >= t_ref; the largest bin when t_ref overflows all bins.
int route_bucket(int t_ref, const std::vector<int>& bins);

struct Conv3x3 {
    int channels = 0;             // input channels == output channels
    std::vector<double> weights;  // [co][ci][ky][kx], channels^2 * 9
    std::vector<double> offsets;  // per output channel

    double& w(int co, int ci, int ky, int kx) {
        return weights[((static_cast<std::size_t>(co) * channels + ci) * 3 + ky) * 3 + kx];
    }
    double w(int co, int ci, int ky, int kx) const {
        return weights[((static_cast<std::size_t>(co) * channels + ci) * 3 + ky) * 3 + kx];
    }
};

Conv3x3 make_conv3x3_zero(int channels);
Conv3x3 make_conv3x3_uniform(int channels, Rng& rng);  // U(-sqrt(k), sqrt(k)), k = 1/(9*channels)

struct TTPriorModule {
    int bucket_size = 0;
    Conv3x3 conv1;
    Conv3x3 conv2;  // zero-initialized so the prior starts as a no-op
};

TTPriorModule make_module(int bucket_size, int channels, Rng& rng);

struct PriorStats {
    std::uint64_t conv_madds = 0;  // multiply-adds performed in the conv stage
};

// ---- differentiable primitives on channel-stacked square maps (ch x n x n) ----

// t x t -> s x s adaptive average pooling; bin i covers [floor(i*t/s), floor((i+1)*t/s))
std::vector<double> adaptive_avg_pool(const double* in, int ch, int t, int s);
void adaptive_avg_pool_backward(const double* dout, int ch, int t, int s, double* din_accum);

// zero-padded 3x3 convolution over the channel stack
std::vector<double> conv3x3_forward(const double* in, int n, const Conv3x3& conv,
                                    PriorStats* stats = nullptr);
void conv3x3_backward(const double* in, int n, const Conv3x3& conv, const double* dout,
                      Conv3x3& grad_accum, double* din_accum);

// s x s -> d x d bilinear resize, half-pixel centers, edge clamped
std::vector<double> bilinear_resize(const double* in, int ch, int s, int d);
void bilinear_resize_backward(const double* dout, int ch, int s, int d, double* din_accum);

// ---- the refiner ----

// Pool each head map of tt_logits (H x t x t) to min(t, pool_k), run
// conv1 -> relu -> conv2 across the channel stack, then bilinear-resize to
// t_ref x t_ref. Returns H x t_ref x t_ref.
std::vector<double> compute_tt_prior(const std::vector<double>& tt_logits, int num_heads, int t,
                                     const TTPriorModule& module, int t_ref, int pool_k,
                                     PriorStats* stats = nullptr);

// Row softmax of (logits + g*prior)/sqrt(d_k) with the prior applied on the
// top-left min(valid_len, t_ref) square; key positions j >= valid_len are
// masked out of the normalization and receive exactly zero probability.
std::vector<double> inject_tt_prior(const std::vector<double>& logits, int num_heads, int L,
                                    const std::vector<double>& prior, int t_ref, double gate_raw,
                                    rorpb::GateMode mode, int valid_len, int d_k);

}  // namespace roattn::ttprior
