#include "roattn/attention_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "roattn/kernels.hpp"

namespace roattn::sim {

namespace {

using kern::ops;

// C(MxN) = A(MxK) * B(KxN), row-major
void matmul(double* c, const double* a, const double* b, int m, int k, int n) {
    std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        const double* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            ops().axpy(crow, arow[p], b + static_cast<std::size_t>(p) * n,
                       static_cast<std::size_t>(n));
        }
    }
}

// C(MxN) += A(MxK) * B(NxK)^T  i.e. C[i][j] += dot(A_i, B_j)
void matmul_abt_acc(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        const double* arow = a + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            crow[j] += ops().dot(arow, b + static_cast<std::size_t>(j) * k,
                                 static_cast<std::size_t>(k));
        }
    }
}

// C(KxN) += A(MxK)^T * B(MxN)
void matmul_atb_acc(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* brow = b + static_cast<std::size_t>(i) * n;
        for (int r = 0; r < k; ++r) {
            ops().axpy(c + static_cast<std::size_t>(r) * n, arow[r], brow,
                       static_cast<std::size_t>(n));
        }
    }
}

bool contains(const std::vector<int>& set, int v) {
    return std::find(set.begin(), set.end(), v) != set.end();
}

struct LayerSampleCache {
    std::vector<double> q, k, v;   // L x d_model
    std::vector<double> probs;     // H x L x L
    std::vector<double> concat;    // L x d_model
    bool ro_active = false;
    bool tt_active = false;
    int s = 0;  // pooled map size
    std::vector<double> tt_input;  // H x l x l block fed to the refiner
    std::vector<double> pooled;    // H x s x s (== tt_input when bypassed)
    std::vector<double> c1;        // pre-activation conv1 output
    std::vector<double> r1;        // rectified
    std::vector<double> prior;     // H x t_ref x t_ref
};

struct SampleRoCache {
    std::vector<double> bias;    // H x l x l
    std::vector<int> buckets;    // l x l
};

struct Cache {
    std::vector<std::vector<double>> x;   // num_layers+1 entries of B*L*d
    std::vector<std::vector<LayerSampleCache>> layer;  // [layer][sample]
    std::vector<SampleRoCache> ro;        // per sample
    int t_ref = 0;
    int bucket_size = 0;
    int module_index = -1;
};

void check_batch(const SimBatch& batch, const SimConfig& cfg) {
    const int d = cfg.d_model();
    const std::size_t want =
        static_cast<std::size_t>(batch.batch) * batch.seq_len() * d;
    if (batch.batch < 1 || batch.embeddings.size() != want) {
        throw std::invalid_argument("batch embedding shape mismatch");
    }
    if (batch.t_b < 1 || batch.t_b > cfg.t_max) {
        throw std::invalid_argument("textual span out of range");
    }
    if (batch.visual != cfg.num_visual_tokens) {
        throw std::invalid_argument("visual token count mismatch");
    }
    if (batch.lens.size() != static_cast<std::size_t>(batch.batch) ||
        batch.reading_indices.size() != static_cast<std::size_t>(batch.batch)) {
        throw std::invalid_argument("per-sample metadata size mismatch");
    }
    for (int b = 0; b < batch.batch; ++b) {
        const int l = batch.lens[b];
        if (l < 1 || l > batch.t_b) {
            throw std::invalid_argument("valid length out of range");
        }
        if (batch.reading_indices[b].size() != static_cast<std::size_t>(batch.t_b)) {
            throw std::invalid_argument("reading index row size mismatch");
        }
        std::vector<bool> seen(static_cast<std::size_t>(l), false);
        for (int i = 0; i < l; ++i) {
            const int r = batch.reading_indices[b][i];
            if (r < 0 || r >= l || seen[static_cast<std::size_t>(r)]) {
                throw std::invalid_argument("reading indices are not a permutation");
            }
            seen[static_cast<std::size_t>(r)] = true;
        }
    }
}

double loss_denominator(const SimBatch& batch, int d_model) {
    double total = 0.0;
    for (int l : batch.lens) {
        total += static_cast<double>(l);
    }
    return total * static_cast<double>(d_model);
}

// Forward pass, optionally filling a backward cache and/or retaining maps.
double run_forward(const SimBatch& batch, const SimConfig& cfg, const SimParams& params,
                   Cache* cache, ForwardResult* retained, std::vector<double>* final_x) {
    const int d = cfg.d_model();
    const int dk = cfg.d_k;
    const int heads = cfg.num_heads;
    const int L = batch.seq_len();
    const int B = batch.batch;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    const bool any_tt = cfg.tt_enabled && !cfg.tt_layers.empty();
    int t_ref = 0;
    int module_index = -1;
    if (any_tt) {
        t_ref = ttprior::reference_length(batch.lens, cfg.tt_routing);
        const int bucket = ttprior::route_bucket(t_ref, cfg.tt_routing.bins);
        for (std::size_t i = 0; i < params.tt_modules.size(); ++i) {
            if (params.tt_modules[i].bucket_size == bucket) {
                module_index = static_cast<int>(i);
            }
        }
        if (module_index < 0) {
            throw std::invalid_argument("no prior module for routed bucket");
        }
        if (retained) {
            retained->t_ref = t_ref;
            retained->bucket_size = bucket;
        }
        if (cache) {
            cache->t_ref = t_ref;
            cache->bucket_size = bucket;
            cache->module_index = module_index;
        }
    }

    // reading-order bias per sample (layer independent)
    std::vector<SampleRoCache> ro_cache(static_cast<std::size_t>(B));
    const bool any_ro = cfg.ro_enabled && !cfg.ro_layers.empty();
    if (any_ro) {
        for (int b = 0; b < B; ++b) {
            const int l = batch.lens[b];
            const rorpb::DeltaMatrix dm = rorpb::pairwise_delta(batch.reading_indices[b], l);
            ro_cache[b].bias = rorpb::assemble_ro_bias(dm, params.ro_table);
            ro_cache[b].buckets.resize(static_cast<std::size_t>(l) * l);
            for (int i = 0; i < l; ++i) {
                for (int j = 0; j < l; ++j) {
                    ro_cache[b].buckets[static_cast<std::size_t>(i) * l + j] =
                        rorpb::bin_delta(dm.at(i, j), params.ro_table.config);
                }
            }
        }
    }

    std::vector<double> x = batch.embeddings;
    if (cache) {
        cache->x.clear();
        cache->x.push_back(x);
        cache->layer.assign(static_cast<std::size_t>(cfg.num_layers), {});
        cache->ro = ro_cache;
    }
    if (retained) {
        retained->attn.assign(static_cast<std::size_t>(cfg.num_layers), {});
    }

    std::vector<double> logits(static_cast<std::size_t>(heads) * L * L);
    std::vector<double> attn_out(static_cast<std::size_t>(L) * d);

    for (int layer = 0; layer < cfg.num_layers; ++layer) {
        const bool ro_active = any_ro && contains(cfg.ro_layers, layer);
        const bool tt_active = any_tt && contains(cfg.tt_layers, layer);
        const double ro_g = rorpb::effective_gate(params.ro_gate_raw[layer], cfg.gate_mode);
        const double tt_g = rorpb::effective_gate(params.tt_gate_raw[layer], cfg.gate_mode);

        if (cache) {
            cache->layer[layer].assign(static_cast<std::size_t>(B), {});
        }
        if (retained) {
            retained->attn[layer].assign(static_cast<std::size_t>(B), {});
        }

        std::vector<double> x_next = x;  // residual seed

        for (int b = 0; b < B; ++b) {
            const double* xb = x.data() + static_cast<std::size_t>(b) * L * d;
            const int l = batch.lens[b];

            LayerSampleCache local;
            LayerSampleCache& sc = cache ? cache->layer[layer][b] : local;
            sc.ro_active = ro_active;
            sc.tt_active = tt_active;

            sc.q.resize(static_cast<std::size_t>(L) * d);
            sc.k.resize(static_cast<std::size_t>(L) * d);
            sc.v.resize(static_cast<std::size_t>(L) * d);
            matmul(sc.q.data(), xb, params.wq[layer].data(), L, d, d);
            matmul(sc.k.data(), xb, params.wk[layer].data(), L, d, d);
            matmul(sc.v.data(), xb, params.wv[layer].data(), L, d, d);

            // raw logits per head
            for (int h = 0; h < heads; ++h) {
                const std::size_t ho = static_cast<std::size_t>(h) * L * L;
                for (int i = 0; i < L; ++i) {
                    const double* qi = sc.q.data() + static_cast<std::size_t>(i) * d + h * dk;
                    double* lrow = logits.data() + ho + static_cast<std::size_t>(i) * L;
                    for (int j = 0; j < L; ++j) {
                        lrow[j] = ops().dot(
                            qi, sc.k.data() + static_cast<std::size_t>(j) * d + h * dk,
                            static_cast<std::size_t>(dk));
                    }
                }
            }

            if (ro_active) {
                for (int h = 0; h < heads; ++h) {
                    for (int i = 0; i < l; ++i) {
                        ops().axpy(logits.data() + (static_cast<std::size_t>(h) * L + i) * L,
                                   ro_g,
                                   ro_cache[b].bias.data() +
                                       (static_cast<std::size_t>(h) * l + i) * l,
                                   static_cast<std::size_t>(l));
                    }
                }
            }

            if (tt_active) {
                const ttprior::TTPriorModule& module =
                    params.tt_modules[static_cast<std::size_t>(module_index)];
                sc.tt_input.resize(static_cast<std::size_t>(heads) * l * l);
                for (int h = 0; h < heads; ++h) {
                    for (int i = 0; i < l; ++i) {
                        const double* src =
                            logits.data() + (static_cast<std::size_t>(h) * L + i) * L;
                        std::copy(src, src + l,
                                  sc.tt_input.data() + (static_cast<std::size_t>(h) * l + i) * l);
                    }
                }
                sc.s = std::min(l, cfg.tt_routing.pool_k);
                if (l > cfg.tt_routing.pool_k) {
                    sc.pooled = ttprior::adaptive_avg_pool(sc.tt_input.data(), heads, l, sc.s);
                } else {
                    sc.pooled = sc.tt_input;
                }
                sc.c1 = ttprior::conv3x3_forward(sc.pooled.data(), sc.s, module.conv1, nullptr);
                sc.r1 = sc.c1;
                ops().relu(sc.r1.data(), sc.r1.size());
                const std::vector<double> c2 =
                    ttprior::conv3x3_forward(sc.r1.data(), sc.s, module.conv2, nullptr);
                sc.prior = sc.s == t_ref
                               ? c2
                               : ttprior::bilinear_resize(c2.data(), heads, sc.s, t_ref);

                const int m = std::min(l, t_ref);
                for (int h = 0; h < heads; ++h) {
                    for (int i = 0; i < m; ++i) {
                        ops().axpy(
                            logits.data() + (static_cast<std::size_t>(h) * L + i) * L, tt_g,
                            sc.prior.data() + (static_cast<std::size_t>(h) * t_ref + i) * t_ref,
                            static_cast<std::size_t>(m));
                    }
                }
            }

            // masked scaled softmax; valid keys are [0, l) and [t_b, L)
            sc.probs.assign(static_cast<std::size_t>(heads) * L * L, 0.0);
            const int vis = batch.visual;
            for (int h = 0; h < heads; ++h) {
                for (int i = 0; i < L; ++i) {
                    const std::size_t off = (static_cast<std::size_t>(h) * L + i) * L;
                    double* prow = sc.probs.data() + off;
                    const double* lrow = logits.data() + off;
                    std::copy(lrow, lrow + l, prow);
                    std::copy(lrow + batch.t_b, lrow + batch.t_b + vis, prow + batch.t_b);
                    ops().scale(prow, inv_sqrt_dk, static_cast<std::size_t>(l));
                    ops().scale(prow + batch.t_b, inv_sqrt_dk, static_cast<std::size_t>(vis));
                    kern::softmax_spans2(prow, static_cast<std::size_t>(l), prow + batch.t_b,
                                         static_cast<std::size_t>(vis));
                }
            }

            // head outputs -> concat -> output projection, residual add
            sc.concat.assign(static_cast<std::size_t>(L) * d, 0.0);
            for (int h = 0; h < heads; ++h) {
                for (int i = 0; i < L; ++i) {
                    double* out = sc.concat.data() + static_cast<std::size_t>(i) * d + h * dk;
                    const double* prow =
                        sc.probs.data() + (static_cast<std::size_t>(h) * L + i) * L;
                    for (int j = 0; j < l; ++j) {
                        ops().axpy(out, prow[j],
                                   sc.v.data() + static_cast<std::size_t>(j) * d + h * dk,
                                   static_cast<std::size_t>(dk));
                    }
                    for (int j = batch.t_b; j < batch.t_b + vis; ++j) {
                        ops().axpy(out, prow[j],
                                   sc.v.data() + static_cast<std::size_t>(j) * d + h * dk,
                                   static_cast<std::size_t>(dk));
                    }
                }
            }
            matmul(attn_out.data(), sc.concat.data(), params.wo[layer].data(), L, d, d);
            double* xnb = x_next.data() + static_cast<std::size_t>(b) * L * d;
            for (std::size_t i = 0; i < static_cast<std::size_t>(L) * d; ++i) {
                xnb[i] += attn_out[i];
            }

            if (retained) {
                retained->attn[layer][b] = sc.probs;
            }
        }

        x.swap(x_next);
        if (cache) {
            cache->x.push_back(x);
        }
    }

    // loss: mean squared entry over valid text outputs
    const double denom = loss_denominator(batch, d);
    double sq = 0.0;
    for (int b = 0; b < B; ++b) {
        const double* xb = x.data() + static_cast<std::size_t>(b) * L * d;
        sq += ops().dot(xb, xb, static_cast<std::size_t>(batch.lens[b]) * d);
    }
    const double loss = sq / denom;

    if (final_x) {
        *final_x = std::move(x);
    }
    return loss;
}

}  // namespace

void validate(const SimConfig& cfg) {
    if (cfg.num_layers < 1 || cfg.num_heads < 1 || cfg.d_k < 1) {
        throw std::invalid_argument("layers, heads and d_k must be >= 1");
    }
    if (cfg.t_max < 1 || cfg.num_visual_tokens < 0) {
        throw std::invalid_argument("bad token span configuration");
    }
    for (int l : cfg.ro_layers) {
        if (l < 0 || l >= cfg.num_layers) {
            throw std::invalid_argument("ro layer index out of range");
        }
    }
    for (int l : cfg.tt_layers) {
        if (l < 0 || l >= cfg.num_layers) {
            throw std::invalid_argument("tt layer index out of range");
        }
    }
    rorpb::validate(cfg.ro_buckets);
    ttprior::validate(cfg.tt_routing);
}

SimParams init_params(const SimConfig& cfg) {
    validate(cfg);
    Rng rng(cfg.seed);
    const int d = cfg.d_model();
    const double limit = std::sqrt(3.0 / static_cast<double>(d));

    SimParams p;
    p.wq.resize(cfg.num_layers);
    p.wk.resize(cfg.num_layers);
    p.wv.resize(cfg.num_layers);
    p.wo.resize(cfg.num_layers);
    for (int layer = 0; layer < cfg.num_layers; ++layer) {
        for (auto* w : {&p.wq[layer], &p.wk[layer], &p.wv[layer], &p.wo[layer]}) {
            w->resize(static_cast<std::size_t>(d) * d);
            for (double& v : *w) {
                v = rng.uniform(-limit, limit);
            }
        }
    }
    p.ro_gate_raw.resize(cfg.num_layers);
    p.tt_gate_raw.resize(cfg.num_layers);
    for (int layer = 0; layer < cfg.num_layers; ++layer) {
        p.ro_gate_raw[layer] = rng.uniform(cfg.ro_gate_init_lo, cfg.ro_gate_init_hi);
        p.tt_gate_raw[layer] = rng.uniform(cfg.tt_gate_init_lo, cfg.tt_gate_init_hi);
    }
    p.ro_table.config = cfg.ro_buckets;
    p.ro_table.num_heads = cfg.num_heads;
    p.ro_table.table.resize(static_cast<std::size_t>(cfg.ro_buckets.num_buckets) * cfg.num_heads);
    for (double& v : p.ro_table.table) {
        v = rng.uniform(-cfg.ro_table_init_scale, cfg.ro_table_init_scale);
    }
    p.tt_modules.reserve(cfg.tt_routing.bins.size());
    for (int bucket : cfg.tt_routing.bins) {
        p.tt_modules.push_back(ttprior::make_module(bucket, cfg.num_heads, rng));
    }
    return p;
}

SimParams zeros_like(const SimConfig& cfg) {
    SimParams p = init_params(cfg);
    for (ParamView& view : param_views(p)) {
        std::fill(view.data, view.data + view.size, 0.0);
    }
    return p;
}

std::vector<ParamView> param_views(SimParams& params) {
    std::vector<ParamView> views;
    const auto add = [&](std::string name, std::vector<std::size_t> shape, double* data) {
        std::size_t size = 1;
        for (std::size_t s : shape) {
            size *= s;
        }
        views.push_back(ParamView{std::move(name), std::move(shape), data, size});
    };

    const std::size_t d2 = params.wq.empty() ? 0 : params.wq[0].size();
    const auto dim = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d2))));
    for (std::size_t layer = 0; layer < params.wq.size(); ++layer) {
        const std::string tag = "layer" + std::to_string(layer);
        add(tag + ".wq", {dim, dim}, params.wq[layer].data());
        add(tag + ".wk", {dim, dim}, params.wk[layer].data());
        add(tag + ".wv", {dim, dim}, params.wv[layer].data());
        add(tag + ".wo", {dim, dim}, params.wo[layer].data());
    }
    add("gates.ro_raw", {params.ro_gate_raw.size()}, params.ro_gate_raw.data());
    add("gates.tt_raw", {params.tt_gate_raw.size()}, params.tt_gate_raw.data());
    add("ro_table",
        {static_cast<std::size_t>(params.ro_table.config.num_buckets),
         static_cast<std::size_t>(params.ro_table.num_heads)},
        params.ro_table.table.data());
    for (ttprior::TTPriorModule& m : params.tt_modules) {
        const std::string tag = "tt.bucket" + std::to_string(m.bucket_size);
        const auto ch = static_cast<std::size_t>(m.conv1.channels);
        add(tag + ".conv1.w", {ch, ch, 3, 3}, m.conv1.weights.data());
        add(tag + ".conv1.b", {ch}, m.conv1.offsets.data());
        add(tag + ".conv2.w", {ch, ch, 3, 3}, m.conv2.weights.data());
        add(tag + ".conv2.b", {ch}, m.conv2.offsets.data());
    }
    return views;
}

SimBatch make_random_batch(const SimConfig& cfg, int batch, const std::vector<int>& lens,
                           std::uint64_t seed) {
    if (lens.size() != static_cast<std::size_t>(batch)) {
        throw std::invalid_argument("lens size != batch");
    }
    SimBatch sb;
    sb.batch = batch;
    sb.t_b = *std::max_element(lens.begin(), lens.end());
    sb.visual = cfg.num_visual_tokens;
    sb.lens = lens;

    Rng rng(seed);
    const int d = cfg.d_model();
    const int L = sb.seq_len();
    sb.embeddings.assign(static_cast<std::size_t>(batch) * L * d, 0.0);
    sb.reading_indices.assign(static_cast<std::size_t>(batch), {});
    for (int b = 0; b < batch; ++b) {
        sb.reading_indices[b].assign(static_cast<std::size_t>(sb.t_b), 0);
        for (int i = 0; i < lens[b]; ++i) {
            sb.reading_indices[b][static_cast<std::size_t>(i)] = i;
        }
        double* eb = sb.embeddings.data() + static_cast<std::size_t>(b) * L * d;
        for (int i = 0; i < L; ++i) {
            const bool padding = i >= lens[b] && i < sb.t_b;
            if (padding) {
                continue;
            }
            for (int c = 0; c < d; ++c) {
                eb[static_cast<std::size_t>(i) * d + c] = rng.gaussian();
            }
        }
    }
    return sb;
}

ForwardResult forward(const SimBatch& batch, const SimConfig& cfg, const SimParams& params,
                      bool retain_maps) {
    validate(cfg);
    check_batch(batch, cfg);
    ForwardResult result;
    std::vector<double> final_x;
    result.loss =
        run_forward(batch, cfg, params, nullptr, retain_maps ? &result : nullptr, &final_x);
    result.outputs = std::move(final_x);
    if (!retain_maps) {
        result.attn.clear();
    }
    return result;
}

BackwardResult backward(const SimBatch& batch, const SimConfig& cfg, const SimParams& params) {
    validate(cfg);
    check_batch(batch, cfg);

    Cache cache;
    std::vector<double> final_x;
    BackwardResult res;
    res.loss = run_forward(batch, cfg, params, &cache, nullptr, &final_x);
    res.grads = zeros_like(cfg);
    SimParams& g = res.grads;

    const int d = cfg.d_model();
    const int dk = cfg.d_k;
    const int heads = cfg.num_heads;
    const int L = batch.seq_len();
    const int B = batch.batch;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    const double denom = loss_denominator(batch, d);

    // d loss / d final_x
    std::vector<double> dx(static_cast<std::size_t>(B) * L * d, 0.0);
    for (int b = 0; b < B; ++b) {
        const std::size_t off = static_cast<std::size_t>(b) * L * d;
        for (std::size_t i = 0; i < static_cast<std::size_t>(batch.lens[b]) * d; ++i) {
            dx[off + i] = 2.0 * final_x[off + i] / denom;
        }
    }

    std::vector<double> d_logits(static_cast<std::size_t>(heads) * L * L);
    std::vector<double> d_concat(static_cast<std::size_t>(L) * d);
    std::vector<double> d_attn_out(static_cast<std::size_t>(L) * d);
    std::vector<double> dq(static_cast<std::size_t>(L) * d);
    std::vector<double> dkey(static_cast<std::size_t>(L) * d);
    std::vector<double> dv(static_cast<std::size_t>(L) * d);

    for (int layer = cfg.num_layers - 1; layer >= 0; --layer) {
        const std::vector<double>& x_in = cache.x[static_cast<std::size_t>(layer)];
        const double ro_graw = params.ro_gate_raw[layer];
        const double tt_graw = params.tt_gate_raw[layer];
        const double ro_g = rorpb::effective_gate(ro_graw, cfg.gate_mode);
        const double tt_g = rorpb::effective_gate(tt_graw, cfg.gate_mode);

        for (int b = 0; b < B; ++b) {
            LayerSampleCache& sc = cache.layer[layer][b];
            const double* xb = x_in.data() + static_cast<std::size_t>(b) * L * d;
            double* dxb = dx.data() + static_cast<std::size_t>(b) * L * d;
            const int l = batch.lens[b];
            const int vis = batch.visual;

            // residual: dxb flows both into the attention block and straight through
            std::copy(dxb, dxb + static_cast<std::size_t>(L) * d, d_attn_out.begin());

            // output projection
            matmul_atb_acc(g.wo[layer].data(), sc.concat.data(), d_attn_out.data(), L, d, d);
            std::fill(d_concat.begin(), d_concat.end(), 0.0);
            matmul_abt_acc(d_concat.data(), d_attn_out.data(), params.wo[layer].data(), L, d, d);

            // attention-weighted value sum
            std::fill(dv.begin(), dv.end(), 0.0);
            std::fill(d_logits.begin(), d_logits.end(), 0.0);
            for (int h = 0; h < heads; ++h) {
                for (int i = 0; i < L; ++i) {
                    const double* dout = d_concat.data() + static_cast<std::size_t>(i) * d + h * dk;
                    const double* prow =
                        sc.probs.data() + (static_cast<std::size_t>(h) * L + i) * L;
                    double* dprow = d_logits.data() + (static_cast<std::size_t>(h) * L + i) * L;
                    for (int j = 0; j < l; ++j) {
                        const double* vj = sc.v.data() + static_cast<std::size_t>(j) * d + h * dk;
                        ops().axpy(dv.data() + static_cast<std::size_t>(j) * d + h * dk, prow[j],
                                   dout, static_cast<std::size_t>(dk));
                        dprow[j] = ops().dot(dout, vj, static_cast<std::size_t>(dk));
                    }
                    for (int j = batch.t_b; j < batch.t_b + vis; ++j) {
                        const double* vj = sc.v.data() + static_cast<std::size_t>(j) * d + h * dk;
                        ops().axpy(dv.data() + static_cast<std::size_t>(j) * d + h * dk, prow[j],
                                   dout, static_cast<std::size_t>(dk));
                        dprow[j] = ops().dot(dout, vj, static_cast<std::size_t>(dk));
                    }
                }
            }

            // softmax backward (per valid row span), then the 1/sqrt(dk) factor;
            // afterwards d_logits holds the gradient w.r.t. pre-scale logits
            for (int h = 0; h < heads; ++h) {
                for (int i = 0; i < L; ++i) {
                    const std::size_t off = (static_cast<std::size_t>(h) * L + i) * L;
                    double* drow = d_logits.data() + off;
                    const double* prow = sc.probs.data() + off;
                    double inner = ops().dot(drow, prow, static_cast<std::size_t>(l));
                    inner += ops().dot(drow + batch.t_b, prow + batch.t_b,
                                       static_cast<std::size_t>(vis));
                    for (int j = 0; j < l; ++j) {
                        drow[j] = prow[j] * (drow[j] - inner) * inv_sqrt_dk;
                    }
                    for (int j = batch.t_b; j < batch.t_b + vis; ++j) {
                        drow[j] = prow[j] * (drow[j] - inner) * inv_sqrt_dk;
                    }
                }
            }

            // textual-token prior path
            if (sc.tt_active) {
                const int t_ref = cache.t_ref;
                const int m = std::min(l, t_ref);
                const ttprior::TTPriorModule& module =
                    params.tt_modules[static_cast<std::size_t>(cache.module_index)];
                ttprior::TTPriorModule& gmodule =
                    g.tt_modules[static_cast<std::size_t>(cache.module_index)];

                double d_gate_eff = 0.0;
                std::vector<double> d_prior(static_cast<std::size_t>(heads) * t_ref * t_ref, 0.0);
                for (int h = 0; h < heads; ++h) {
                    for (int i = 0; i < m; ++i) {
                        const double* drow =
                            d_logits.data() + (static_cast<std::size_t>(h) * L + i) * L;
                        const double* prow =
                            sc.prior.data() + (static_cast<std::size_t>(h) * t_ref + i) * t_ref;
                        double* dprow =
                            d_prior.data() + (static_cast<std::size_t>(h) * t_ref + i) * t_ref;
                        d_gate_eff += ops().dot(drow, prow, static_cast<std::size_t>(m));
                        ops().axpy(dprow, tt_g, drow, static_cast<std::size_t>(m));
                    }
                }

                std::vector<double> d_c2(static_cast<std::size_t>(heads) * sc.s * sc.s, 0.0);
                if (sc.s == t_ref) {
                    d_c2 = d_prior;
                } else {
                    ttprior::bilinear_resize_backward(d_prior.data(), heads, sc.s, t_ref,
                                                      d_c2.data());
                }

                std::vector<double> d_r1(sc.r1.size(), 0.0);
                ttprior::conv3x3_backward(sc.r1.data(), sc.s, module.conv2, d_c2.data(),
                                          gmodule.conv2, d_r1.data());
                for (std::size_t i = 0; i < d_r1.size(); ++i) {
                    if (sc.c1[i] <= 0.0) {
                        d_r1[i] = 0.0;
                    }
                }
                std::vector<double> d_pooled(sc.pooled.size(), 0.0);
                ttprior::conv3x3_backward(sc.pooled.data(), sc.s, module.conv1, d_r1.data(),
                                          gmodule.conv1, d_pooled.data());

                std::vector<double> d_tt(static_cast<std::size_t>(heads) * l * l, 0.0);
                if (l > cfg.tt_routing.pool_k) {
                    ttprior::adaptive_avg_pool_backward(d_pooled.data(), heads, l, sc.s,
                                                        d_tt.data());
                } else {
                    d_tt = d_pooled;
                }
                for (int h = 0; h < heads; ++h) {
                    for (int i = 0; i < l; ++i) {
                        ops().axpy(d_logits.data() + (static_cast<std::size_t>(h) * L + i) * L,
                                   1.0, d_tt.data() + (static_cast<std::size_t>(h) * l + i) * l,
                                   static_cast<std::size_t>(l));
                    }
                }

                const double chain = cfg.gate_mode == rorpb::GateMode::sigmoid
                                         ? tt_g * (1.0 - tt_g)
                                         : 1.0;
                g.tt_gate_raw[layer] += d_gate_eff * chain;
            }

            // reading-order bias path
            if (sc.ro_active) {
                const SampleRoCache& rc = cache.ro[b];
                double d_gate_eff = 0.0;
                for (int h = 0; h < heads; ++h) {
                    for (int i = 0; i < l; ++i) {
                        const double* drow =
                            d_logits.data() + (static_cast<std::size_t>(h) * L + i) * L;
                        const double* brow =
                            rc.bias.data() + (static_cast<std::size_t>(h) * l + i) * l;
                        d_gate_eff += ops().dot(drow, brow, static_cast<std::size_t>(l));
                        for (int j = 0; j < l; ++j) {
                            const int bucket = rc.buckets[static_cast<std::size_t>(i) * l + j];
                            g.ro_table.at(bucket, h) += ro_g * drow[j];
                        }
                    }
                }
                const double chain = cfg.gate_mode == rorpb::GateMode::sigmoid
                                         ? ro_g * (1.0 - ro_g)
                                         : 1.0;
                g.ro_gate_raw[layer] += d_gate_eff * chain;
            }

            // raw q.k logits
            std::fill(dq.begin(), dq.end(), 0.0);
            std::fill(dkey.begin(), dkey.end(), 0.0);
            for (int h = 0; h < heads; ++h) {
                for (int i = 0; i < L; ++i) {
                    const double* drow =
                        d_logits.data() + (static_cast<std::size_t>(h) * L + i) * L;
                    double* dqi = dq.data() + static_cast<std::size_t>(i) * d + h * dk;
                    const double* qi = sc.q.data() + static_cast<std::size_t>(i) * d + h * dk;
                    for (int j = 0; j < l; ++j) {
                        ops().axpy(dqi, drow[j],
                                   sc.k.data() + static_cast<std::size_t>(j) * d + h * dk,
                                   static_cast<std::size_t>(dk));
                        ops().axpy(dkey.data() + static_cast<std::size_t>(j) * d + h * dk,
                                   drow[j], qi, static_cast<std::size_t>(dk));
                    }
                    for (int j = batch.t_b; j < batch.t_b + vis; ++j) {
                        ops().axpy(dqi, drow[j],
                                   sc.k.data() + static_cast<std::size_t>(j) * d + h * dk,
                                   static_cast<std::size_t>(dk));
                        ops().axpy(dkey.data() + static_cast<std::size_t>(j) * d + h * dk,
                                   drow[j], qi, static_cast<std::size_t>(dk));
                    }
                }
            }

            // projections; dxb accumulates the three input paths on top of
            // the residual passthrough already present
            matmul_atb_acc(g.wq[layer].data(), xb, dq.data(), L, d, d);
            matmul_atb_acc(g.wk[layer].data(), xb, dkey.data(), L, d, d);
            matmul_atb_acc(g.wv[layer].data(), xb, dv.data(), L, d, d);
            matmul_abt_acc(dxb, dq.data(), params.wq[layer].data(), L, d, d);
            matmul_abt_acc(dxb, dkey.data(), params.wk[layer].data(), L, d, d);
            matmul_abt_acc(dxb, dv.data(), params.wv[layer].data(), L, d, d);
        }
    }
    return res;
}

std::vector<FdGroupReport> finite_difference_check(const SimBatch& batch, const SimConfig& cfg,
                                                   SimParams& params, double epsilon,
                                                   std::size_t coords_per_group,
                                                   std::uint64_t sample_seed) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
        throw std::invalid_argument("epsilon out of the supported range");
    }
    BackwardResult back = backward(batch, cfg, params);
    std::vector<ParamView> views = param_views(params);
    std::vector<ParamView> grad_views = param_views(back.grads);

    Rng rng(sample_seed);
    std::vector<FdGroupReport> reports;
    reports.reserve(views.size());

    for (std::size_t v = 0; v < views.size(); ++v) {
        ParamView& view = views[v];
        const ParamView& gview = grad_views[v];

        std::vector<std::size_t> coords;
        if (view.size <= coords_per_group) {
            coords.resize(view.size);
            for (std::size_t i = 0; i < view.size; ++i) {
                coords[i] = i;
            }
        } else {
            std::vector<bool> taken(view.size, false);
            while (coords.size() < coords_per_group) {
                const auto idx = static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(view.size) - 1));
                if (!taken[idx]) {
                    taken[idx] = true;
                    coords.push_back(idx);
                }
            }
        }

        FdGroupReport rep;
        rep.group = view.name;
        rep.coords_checked = coords.size();
        for (std::size_t idx : coords) {
            const double saved = view.data[idx];
            view.data[idx] = saved + epsilon;
            const double hi = forward(batch, cfg, params).loss;
            view.data[idx] = saved - epsilon;
            const double lo = forward(batch, cfg, params).loss;
            view.data[idx] = saved;
            const double fd = (hi - lo) / (2.0 * epsilon);
            const double rel =
                std::abs(gview.data[idx] - fd) / std::max(1.0, std::abs(fd));
            rep.max_rel_err = std::max(rep.max_rel_err, rel);
        }
        reports.push_back(std::move(rep));
    }
    return reports;
}

double max_rel_err(const std::vector<FdGroupReport>& reports) {
    double worst = 0.0;
    for (const FdGroupReport& r : reports) {
        worst = std::max(worst, r.max_rel_err);
    }
    return worst;
}

double dump_attention(const ForwardResult& result, const SimConfig& cfg, const SimBatch& batch,
                      int layer, int head, int sample, const std::string& text_path,
                      const std::string& pgm_path) {
    if (result.attn.empty()) {
        throw std::invalid_argument("attention maps were not retained");
    }
    if (layer < 0 || layer >= cfg.num_layers || head < 0 || head >= cfg.num_heads ||
        sample < 0 || sample >= batch.batch) {
        throw std::invalid_argument("unknown layer/head/sample");
    }
    const int L = batch.seq_len();
    const std::vector<double>& maps = result.attn[layer][sample];
    const double* m = maps.data() + static_cast<std::size_t>(head) * L * L;

    double max_val = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(L) * L; ++i) {
        max_val = std::max(max_val, m[i]);
    }

    std::ofstream txt(text_path);
    if (!txt) {
        throw std::runtime_error("cannot open " + text_path);
    }
    txt << "# layer " << layer << " head " << head << " sample " << sample << " size " << L
        << " max " << max_val << "\n";
    char buf[32];
    for (int i = 0; i < L; ++i) {
        for (int j = 0; j < L; ++j) {
            std::snprintf(buf, sizeof buf, "%.10g", m[static_cast<std::size_t>(i) * L + j]);
            txt << buf << (j + 1 == L ? '\n' : ' ');
        }
    }
    txt.close();

    std::ofstream pgm(pgm_path, std::ios::binary);
    if (!pgm) {
        throw std::runtime_error("cannot open " + pgm_path);
    }
    pgm << "P5\n" << L << " " << L << "\n255\n";
    const double scale = max_val > 0.0 ? 255.0 / max_val : 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(L) * L; ++i) {
        const auto px = static_cast<unsigned char>(std::lround(m[i] * scale));
        pgm.put(static_cast<char>(px));
    }
    return max_val;
}

}  // namespace roattn::sim
