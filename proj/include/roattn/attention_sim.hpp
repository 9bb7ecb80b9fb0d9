#pragma once

// Toy-scale multi-head self-attention stack wiring the reading-order bias
// and the textual-token prior into forward and backward passes, with finite
// difference verification of every parameter group. All arithmetic is
// double precision.
//
// Token layout per sample: [t_b text slots | visual tokens]. Valid text
// tokens occupy the first lens[b] slots; the rest of the text span is
// padding and is masked out of every softmax. Layers are residual attention
// blocks (no feed-forward or normalization); the training objective is the
// mean squared norm of the final text-token outputs, which is enough to
// drive gradients through every parameter.

#include <cstdint>
#include <string>
#include <vector>

#include "roattn/ro_rpb.hpp"
#include "roattn/tt_prior.hpp"

namespace roattn::sim {

struct SimConfig {
    int num_layers = 2;
    int num_heads = 2;
    int d_k = 4;
    int t_max = 512;
    int num_visual_tokens = 4;
    std::vector<int> ro_layers = {0};
    std::vector<int> tt_layers = {1};
    std::uint64_t seed = 42;

    bool ro_enabled = true;
    bool tt_enabled = true;
    rorpb::GateMode gate_mode = rorpb::GateMode::sigmoid;

    rorpb::RoBucketConfig ro_buckets;
    ttprior::TTRoutingConfig tt_routing;

    double ro_gate_init_lo = -3.0;
    double ro_gate_init_hi = -2.0;
    double tt_gate_init_lo = -2.0;
    double tt_gate_init_hi = -1.0;
    double ro_table_init_scale = 0.02;

    int d_model() const { return num_heads * d_k; }
};

void validate(const SimConfig& cfg);

struct SimParams {
    std::vector<std::vector<double>> wq, wk, wv, wo;  // per layer, d_model^2 row-major
    std::vector<double> ro_gate_raw;                  // per layer
    std::vector<double> tt_gate_raw;                  // per layer
    rorpb::RoBiasTable ro_table;
    std::vector<ttprior::TTPriorModule> tt_modules;   // one per routing bin
};

// Deterministic initialization from cfg.seed.
SimParams init_params(const SimConfig& cfg);
SimParams zeros_like(const SimConfig& cfg);

// Named view over one parameter group; the order is fixed and shared by
// gradients, checkpoints and the finite-difference sampler.
struct ParamView {
    std::string name;
    std::vector<std::size_t> shape;
    double* data;
    std::size_t size;
};
std::vector<ParamView> param_views(SimParams& params);

struct SimBatch {
    int batch = 0;
    int t_b = 0;    // textual slots (padded)
    int visual = 0; // visual tokens per sample
    std::vector<int> lens;                          // valid text length per sample
    std::vector<std::vector<int>> reading_indices;  // per sample, size t_b
    std::vector<double> embeddings;                 // batch * L * d_model

    int seq_len() const { return t_b + visual; }
};

// Random batch with Gaussian embeddings and identity reading order; handy
// for gradient checks and goldens without going through ingest.
SimBatch make_random_batch(const SimConfig& cfg, int batch, const std::vector<int>& lens,
                           std::uint64_t seed);

struct ForwardResult {
    double loss = 0.0;
    std::vector<double> outputs;  // batch * L * d_model
    int t_ref = 0;                // 0 when no tt layer ran
    int bucket_size = 0;
    // retained probability maps: attn[layer][sample] flattened H x L x L
    std::vector<std::vector<std::vector<double>>> attn;
};

ForwardResult forward(const SimBatch& batch, const SimConfig& cfg, const SimParams& params,
                      bool retain_maps = false);

// Gradients use the same structure (and param_views order) as SimParams.
struct BackwardResult {
    double loss = 0.0;
    SimParams grads;
};

BackwardResult backward(const SimBatch& batch, const SimConfig& cfg, const SimParams& params);

struct FdGroupReport {
    std::string group;
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
};

// Central finite differences on a sampled subset of each parameter group
// (all coordinates when a group is small). Relative error uses
// |g_a - g_fd| / max(1, |g_fd|).
std::vector<FdGroupReport> finite_difference_check(const SimBatch& batch, const SimConfig& cfg,
                                                   SimParams& params, double epsilon,
                                                   std::size_t coords_per_group = 64,
                                                   std::uint64_t sample_seed = 7);

double max_rel_err(const std::vector<FdGroupReport>& reports);

// Writes the retained map as a text matrix and a binary PGM heatmap scaled
// to the map maximum. Returns the maximum attention value.
// Throws on unknown layer/head/sample or when maps were not retained.
double dump_attention(const ForwardResult& result, const SimConfig& cfg, const SimBatch& batch,
                      int layer, int head, int sample, const std::string& text_path,
                      const std::string& pgm_path);

}  // namespace roattn::sim
