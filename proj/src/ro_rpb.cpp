#include "roattn/ro_rpb.hpp"

#include <cmath>
#include <stdexcept>

#include "roattn/kernels.hpp"

namespace roattn::rorpb {

void validate(const RoBucketConfig& cfg) {
    if (cfg.num_buckets < 2 || cfg.num_buckets % 2 != 0) {
        throw std::invalid_argument("num_buckets must be even and >= 2");
    }
    if (cfg.num_buckets < 2 * (cfg.exact_span + 1)) {
        throw std::invalid_argument("num_buckets must be >= 2*(exact_span+1)");
    }
    if (cfg.max_distance <= cfg.exact_span) {
        throw std::invalid_argument("max_distance must exceed exact_span");
    }
}

DeltaMatrix pairwise_delta(const std::vector<int>& reading_indices, int t_b) {
    if (t_b <= 0) {
        throw std::invalid_argument("t_b must be positive");
    }
    if (reading_indices.size() < static_cast<std::size_t>(t_b)) {
        throw std::invalid_argument("reading index list shorter than t_b");
    }
    DeltaMatrix dm;
    dm.t_b = t_b;
    dm.deltas.resize(static_cast<std::size_t>(t_b) * t_b);
    for (int i = 0; i < t_b; ++i) {
        for (int j = 0; j < t_b; ++j) {
            dm.deltas[static_cast<std::size_t>(i) * t_b + j] =
                static_cast<std::int64_t>(reading_indices[i]) - reading_indices[j];
        }
    }
    return dm;
}

int bin_delta(std::int64_t delta, const RoBucketConfig& cfg) {
    const int half = cfg.num_buckets / 2;
    if (delta < 0) {
        return half + bin_delta(-delta, cfg);
    }
    if (delta <= cfg.exact_span) {
        return static_cast<int>(delta);
    }
    const int log_slots = half - cfg.exact_span - 1;
    const double ratio = std::log(static_cast<double>(delta) / cfg.exact_span) /
                         std::log(static_cast<double>(cfg.max_distance) / cfg.exact_span);
    int bucket = cfg.exact_span + static_cast<int>(std::floor(ratio * log_slots));
    if (bucket > half - 1) {
        bucket = half - 1;
    }
    return bucket;
}

std::vector<double> assemble_ro_bias(const DeltaMatrix& deltas, const RoBiasTable& table) {
    validate(table.config);
    const int h = table.num_heads;
    const int t = deltas.t_b;
    std::vector<double> bias(static_cast<std::size_t>(h) * t * t);
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j < t; ++j) {
            const int bucket = bin_delta(deltas.at(i, j), table.config);
            for (int head = 0; head < h; ++head) {
                bias[(static_cast<std::size_t>(head) * t + i) * t + j] = table.at(bucket, head);
            }
        }
    }
    return bias;
}

double effective_gate(double gate_raw, GateMode mode) {
    if (mode == GateMode::raw) {
        return gate_raw;
    }
    return 1.0 / (1.0 + std::exp(-gate_raw));
}

std::vector<double> inject_ro_bias(const std::vector<double>& logits,
                                   const std::vector<double>& bias, int num_heads, int t_b,
                                   double gate_raw, GateMode mode, int d_k) {
    const std::size_t expect = static_cast<std::size_t>(num_heads) * t_b * t_b;
    if (logits.size() != expect || bias.size() != expect) {
        throw std::invalid_argument("logit/bias shape mismatch");
    }
    if (d_k < 1) {
        throw std::invalid_argument("d_k must be >= 1");
    }
    for (double v : logits) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("non-finite attention logits");
        }
    }

    const double g = effective_gate(gate_raw, mode);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
    const auto& k = kern::ops();

    std::vector<double> probs(expect);
    for (int head = 0; head < num_heads; ++head) {
        for (int i = 0; i < t_b; ++i) {
            const std::size_t off = (static_cast<std::size_t>(head) * t_b + i) * t_b;
            double* row = probs.data() + off;
            k.add_scaled(row, logits.data() + off, g, bias.data() + off,
                         static_cast<std::size_t>(t_b));
            k.scale(row, inv_sqrt_dk, static_cast<std::size_t>(t_b));
            kern::softmax_inplace(row, static_cast<std::size_t>(t_b));
        }
    }
    return probs;
}

}  // namespace roattn::rorpb
