#pragma once

// Reading-order relative position bias: pairwise order deltas over the
// textual-token region, logarithmic bucketing, a learnable per-head
// embedding table, and gated injection into attention logits.

#include <cstdint>
#include <vector>

namespace roattn::rorpb {

enum class GateMode { sigmoid, raw };

struct RoBucketConfig {
    int num_buckets = 32;   // even
    int exact_span = 8;     // |delta| <= exact_span gets its own bucket
    int max_distance = 1024;
};

void validate(const RoBucketConfig& cfg);

struct RoBiasTable {
    std::vector<double> table;  // num_buckets x num_heads, row-major
    int num_heads = 0;
    RoBucketConfig config;

    double& at(int bucket, int head) { return table[bucket * num_heads + head]; }
    double at(int bucket, int head) const { return table[bucket * num_heads + head]; }
};

struct DeltaMatrix {
    int t_b = 0;
    std::vector<std::int64_t> deltas;  // t_b x t_b, row-major

    std::int64_t at(int i, int j) const { return deltas[i * t_b + j]; }
};

// deltas[i][j] = reading_indices[i] - reading_indices[j] over the first t_b
// entries. Throws if t_b <= 0 or the index list is shorter than t_b.
DeltaMatrix pairwise_delta(const std::vector<int>& reading_indices, int t_b);

// Bucket layout: 0 maps to 0; 1..exact_span map to themselves; larger deltas
// fall into log-spaced buckets clamped to num_buckets/2 - 1; negatives mirror
// into the upper half. Total for any integer input.
int bin_delta(std::int64_t delta, const RoBucketConfig& cfg);

// bias[h][i][j] = table[bin_delta(deltas[i][j])][h], flattened H x t_b x t_b.
std::vector<double> assemble_ro_bias(const DeltaMatrix& deltas, const RoBiasTable& table);

double effective_gate(double gate_raw, GateMode mode);

// Row softmax of (logits + g*bias)/sqrt(d_k) per head; logits and bias are
// flattened H x t_b x t_b. Throws on non-finite logits.
std::vector<double> inject_ro_bias(const std::vector<double>& logits,
                                   const std::vector<double>& bias, int num_heads, int t_b,
                                   double gate_raw, GateMode mode, int d_k);

}  // namespace roattn::rorpb
