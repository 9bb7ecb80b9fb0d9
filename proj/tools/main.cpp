// Command-line front end: reading-order extraction, overlay rendering, the
// attention simulator, the verification suite and micro benchmarks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "roattn/axg_tree.hpp"
#include "roattn/checkpoint.hpp"
#include "roattn/config.hpp"
#include "roattn/eval.hpp"
#include "roattn/ingest.hpp"
#include "roattn/kernels.hpp"
#include "roattn/selfcheck.hpp"

#ifndef ROATTN_FIXTURE_DIR
#define ROATTN_FIXTURE_DIR "tests/fixtures"
#endif

namespace fs = std::filesystem;
using namespace roattn;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string input;
    std::string format = "synthetic";
    std::string out_dir;
    std::string filter;
    long long seed = -1;
};

config::RunConfig load_run_config(const CommonOpts& opts) {
    config::RunConfig cfg =
        opts.config_path.empty() ? config::default_config() : config::load_config(opts.config_path);
    if (!opts.out_dir.empty()) {
        cfg.out_dir = opts.out_dir;
    }
    if (!opts.input.empty()) {
        cfg.input_path = opts.input;
    }
    if (opts.seed >= 0) {
        cfg.sim.seed = static_cast<std::uint64_t>(opts.seed);
    }
    kern::set_backend(kern::backend_from_name(cfg.kernel_backend));
    return cfg;
}

// synthetic input spec: "kind" or "kind:rows=5,cols=3,skew=2.5"
ingest::LayoutSpec parse_layout_spec(const std::string& text, std::uint64_t seed) {
    ingest::LayoutSpec spec;
    spec.seed = seed;
    const std::size_t colon = text.find(':');
    spec.kind = ingest::layout_kind_from_name(text.substr(0, colon));
    if (colon == std::string::npos) {
        return spec;
    }
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("bad layout spec item: " + item);
        }
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        if (key == "rows") spec.rows = std::stoi(value);
        else if (key == "cols") spec.cols = std::stoi(value);
        else if (key == "gap") spec.gap_scale = std::stod(value);
        else if (key == "skew") spec.skew_deg = std::stod(value);
        else if (key == "seed") spec.seed = std::stoull(value);
        else throw std::runtime_error("unknown layout spec key: " + key);
    }
    return spec;
}

std::vector<ingest::AnnotatedDocument> load_inputs(const config::RunConfig& cfg,
                                                   const std::string& format) {
    std::vector<ingest::AnnotatedDocument> docs;
    if (format == "synthetic") {
        const std::string spec_text =
            cfg.input_path.empty() ? "single_column" : cfg.input_path;
        docs.push_back(ingest::synthesize_layout(parse_layout_spec(spec_text, cfg.sim.seed)));
        return docs;
    }
    const ingest::Format fmt = ingest::format_from_name(format);
    if (cfg.input_path.empty()) {
        throw std::runtime_error("--input is required for dataset formats");
    }
    if (fs::is_directory(cfg.input_path)) {
        std::vector<std::string> paths;
        for (const auto& entry : fs::directory_iterator(cfg.input_path)) {
            if (entry.path().extension() == ".json") {
                paths.push_back(entry.path().string());
            }
        }
        std::sort(paths.begin(), paths.end());
        for (const std::string& p : paths) {
            docs.push_back(ingest::load_annotations(p, fmt));
        }
    } else {
        docs.push_back(ingest::load_annotations(cfg.input_path, fmt));
    }
    if (docs.empty()) {
        throw std::runtime_error("no input documents found at " + cfg.input_path);
    }
    return docs;
}

std::string order_line(const ingest::AnnotatedDocument& doc, const axg::ReadingOrder& order) {
    std::ostringstream line;
    line << doc.name << "\torder=";
    for (std::size_t i = 0; i < order.order.size(); ++i) {
        line << (i ? "," : "") << order.order[i];
    }
    // per-box reading index, in box (file) order
    std::vector<int> rank(order.order.size());
    for (std::size_t r = 0; r < order.order.size(); ++r) {
        rank[static_cast<std::size_t>(order.order[r])] = static_cast<int>(r);
    }
    line << "\tranks=";
    for (std::size_t i = 0; i < doc.doc.boxes.size(); ++i) {
        const int id = doc.doc.boxes[i].id;
        line << (i ? "," : "") << rank[static_cast<std::size_t>(id)];
    }
    return line.str();
}

int cmd_order(const CommonOpts& opts) {
    const config::RunConfig cfg = load_run_config(opts);
    const auto docs = load_inputs(cfg, opts.format);

    fs::create_directories(cfg.out_dir);
    const std::string out_path = (fs::path(cfg.out_dir) / "ordering.txt").string();
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + out_path);
    }
    for (const ingest::AnnotatedDocument& doc : docs) {
        const axg::ReadingOrder order = axg::axg_order(doc.doc, cfg.axg);
        out << order_line(doc, order) << "\n";
    }
    std::cout << "wrote " << out_path << " (" << docs.size() << " documents)\n";
    return 0;
}

std::vector<int> parse_order_file_line(const std::string& path, const std::string& doc_name) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open order file: " + path);
    }
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || line.substr(0, tab) != doc_name) {
            continue;
        }
        const std::size_t key = line.find("order=", tab);
        if (key == std::string::npos) {
            break;
        }
        const std::size_t end = line.find('\t', key);
        std::stringstream ss(line.substr(key + 6, end - key - 6));
        std::vector<int> ids;
        std::string item;
        while (std::getline(ss, item, ',')) {
            ids.push_back(std::stoi(item));
        }
        return ids;
    }
    throw std::runtime_error("order file has no record for document " + doc_name);
}

void svg_panel(std::ostream& out, const geom::Document& doc, const std::vector<int>& label_by_id,
               double x_off, const std::string& title) {
    out << "  <g transform=\"translate(" << x_off << ",0)\">\n";
    out << "    <text x=\"" << doc.width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-size=\"18\" font-family=\"monospace\">" << title << "</text>\n";
    for (const geom::TextBox& b : doc.boxes) {
        out << "    <rect x=\"" << b.x0 << "\" y=\"" << b.y0 + 40.0 << "\" width=\"" << b.width()
            << "\" height=\"" << b.height()
            << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
        out << "    <text x=\"" << b.cx() << "\" y=\"" << b.cy() + 44.0
            << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"monospace\" "
            << "fill=\"crimson\">" << label_by_id[static_cast<std::size_t>(b.id)] << "</text>\n";
    }
    out << "  </g>\n";
}

int cmd_viz(const CommonOpts& opts, const std::string& order_path) {
    const config::RunConfig cfg = load_run_config(opts);
    const auto docs = load_inputs(cfg, opts.format);
    const ingest::AnnotatedDocument& doc = docs.front();

    const std::vector<int> order = parse_order_file_line(order_path, doc.name);
    std::vector<int> ids;
    for (const geom::TextBox& b : doc.doc.boxes) {
        ids.push_back(b.id);
    }
    if (!eval::is_permutation_of(order, ids)) {
        throw std::runtime_error("order file ids do not match document " + doc.name);
    }

    const std::size_t n = doc.doc.boxes.size();
    std::vector<int> original_index(n);
    for (std::size_t i = 0; i < n; ++i) {
        original_index[static_cast<std::size_t>(doc.doc.boxes[i].id)] = static_cast<int>(i);
    }
    std::vector<int> reading_index(n);
    for (std::size_t r = 0; r < order.size(); ++r) {
        reading_index[static_cast<std::size_t>(order[r])] = static_cast<int>(r);
    }

    fs::path out_path(cfg.out_dir);
    if (out_path.extension() == ".svg") {
        fs::create_directories(out_path.parent_path().empty() ? "." : out_path.parent_path());
    } else {
        fs::create_directories(out_path);
        out_path /= doc.name + ".svg";
    }

    const double w = doc.doc.width;
    const double h = doc.doc.height + 40.0;
    std::ofstream out(out_path);
    if (!out) {
        throw std::runtime_error("cannot write " + out_path.string());
    }
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * w + 60 << "\" height=\""
        << h << "\" viewBox=\"0 0 " << 2 * w + 60 << " " << h << "\">\n";
    svg_panel(out, doc.doc, original_index, 0.0, "original order");
    svg_panel(out, doc.doc, reading_index, w + 60.0, "reordered");
    out << "</svg>\n";
    std::cout << "wrote " << out_path.string() << "\n";
    return 0;
}

int cmd_simulate(const CommonOpts& opts) {
    const config::RunConfig cfg = load_run_config(opts);
    std::vector<ingest::AnnotatedDocument> docs;
    if (opts.format == "synthetic" && cfg.input_path.empty()) {
        // a small mixed batch by default
        for (std::uint64_t s = 0; s < 3; ++s) {
            ingest::LayoutSpec spec;
            spec.kind = s == 0 ? ingest::LayoutKind::single_column
                               : (s == 1 ? ingest::LayoutKind::two_column
                                         : ingest::LayoutKind::grid_table);
            spec.rows = 4;
            spec.cols = 3;
            spec.seed = cfg.sim.seed + s;
            docs.push_back(ingest::synthesize_layout(spec));
        }
    } else {
        docs = load_inputs(cfg, opts.format);
    }

    std::vector<std::vector<int>> orders;
    orders.reserve(docs.size());
    for (const ingest::AnnotatedDocument& doc : docs) {
        orders.push_back(axg::axg_order(doc.doc, cfg.axg).order);
    }
    const sim::SimBatch batch = ingest::batch_assemble(docs, orders, cfg.sim);
    sim::SimParams params = sim::init_params(cfg.sim);

    const sim::ForwardResult fwd = sim::forward(batch, cfg.sim, params, true);
    const sim::BackwardResult back = sim::backward(batch, cfg.sim, params);

    fs::create_directories(cfg.out_dir);
    const std::string ckpt_path = (fs::path(cfg.out_dir) / "params.ckpt").string();
    ckpt::save(params, ckpt_path);

    const int last = cfg.sim.num_layers - 1;
    const std::string base =
        (fs::path(cfg.out_dir) / ("attn_l" + std::to_string(last) + "_h0_s0")).string();
    const double max_attn =
        sim::dump_attention(fwd, cfg.sim, batch, last, 0, 0, base + ".txt", base + ".pgm");

    double grad_norm = 0.0;
    sim::SimParams& grads = const_cast<sim::SimParams&>(back.grads);
    for (const sim::ParamView& view : sim::param_views(grads)) {
        for (std::size_t i = 0; i < view.size; ++i) {
            grad_norm += view.data[i] * view.data[i];
        }
    }
    grad_norm = std::sqrt(grad_norm);

    std::cout << "batch: " << batch.batch << " samples, t_b " << batch.t_b << ", visual "
              << batch.visual << "\n";
    std::cout << "t_ref " << fwd.t_ref << " -> bucket " << fwd.bucket_size << "\n";
    std::cout << "loss " << fwd.loss << "\n";
    std::cout << "grad l2 norm " << grad_norm << "\n";
    std::cout << "max attention (layer " << last << ", head 0, sample 0): " << max_attn << "\n";
    std::cout << "wrote " << ckpt_path << ", " << base << ".txt, " << base << ".pgm\n";
    return 0;
}

int cmd_check(const CommonOpts& opts, const std::string& fixtures, bool print_golden) {
    const config::RunConfig cfg = load_run_config(opts);
    if (print_golden) {
        check::print_golden();
        return 0;
    }
    const auto results = check::run_checks(cfg, opts.filter, fixtures);
    for (const check::CheckResult& r : results) {
        std::printf("[%s] %-38s", r.passed ? "PASS" : "FAIL", r.name.c_str());
        if (r.criterion > 0) {
            std::printf(" (criterion %d)", r.criterion);
        }
        std::printf(" %s (%.2f s)\n", r.detail.c_str(), r.seconds);
    }
    return check::all_passed(results) ? 0 : 1;
}

int cmd_bench(const CommonOpts& opts, const std::string& fixtures) {
    const config::RunConfig cfg = load_run_config(opts);
    using Clock = std::chrono::steady_clock;

    struct Row {
        std::string name;
        std::vector<double> ms;
    };
    std::vector<Row> rows;

    const auto time_one = [&](const std::string& name, int iters, const auto& fn) {
        Row row{name, {}};
        for (int i = 0; i < iters; ++i) {
            const auto t0 = Clock::now();
            fn();
            row.ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
        }
        rows.push_back(std::move(row));
    };

    // ordering per fixture page
    std::vector<ingest::AnnotatedDocument> pages;
    if (fs::exists(fixtures)) {
        for (const auto& entry : fs::directory_iterator(fixtures)) {
            if (entry.path().extension() != ".json") {
                continue;
            }
            const auto fmt = entry.path().string().find("cord") != std::string::npos
                                 ? ingest::Format::cord
                                 : ingest::Format::funsd;
            pages.push_back(ingest::load_annotations(entry.path().string(), fmt));
        }
    }
    if (!pages.empty()) {
        time_one("axg_order_fixture_page", 50, [&] {
            for (const auto& page : pages) {
                axg::axg_order(page.doc, cfg.axg);
            }
        });
    }

    ingest::LayoutSpec spec;
    spec.kind = ingest::LayoutKind::grid_table;
    spec.rows = 25;
    spec.cols = 12;
    spec.seed = 3;
    const ingest::AnnotatedDocument big = ingest::synthesize_layout(spec);
    time_one("axg_order_300_boxes", 50, [&] { axg::axg_order(big.doc, cfg.axg); });

    Rng lrng(4);
    time_one("reference_length_batch16", 2000, [&] {
        std::vector<int> lens(16);
        for (int& v : lens) {
            v = static_cast<int>(lrng.uniform_int(1, 512));
        }
        ttprior::reference_length(lens, cfg.sim.tt_routing);
    });

    for (const int t : {128, 512}) {
        Rng rng(10 + t);
        std::vector<double> logits(static_cast<std::size_t>(2) * t * t);
        for (double& v : logits) {
            v = rng.gaussian();
        }
        Rng mrng(11);
        const ttprior::TTPriorModule module = ttprior::make_module(t, 2, mrng);
        time_one("compute_tt_prior_t" + std::to_string(t), 10, [&] {
            ttprior::compute_tt_prior(logits, 2, t, module, t, cfg.sim.tt_routing.pool_k);
        });
    }

    std::printf("name,median_ms,p95_ms,iters\n");
    for (Row& row : rows) {
        std::sort(row.ms.begin(), row.ms.end());
        const double median = row.ms[row.ms.size() / 2];
        const auto p95_idx = static_cast<std::size_t>(
            std::ceil(0.95 * static_cast<double>(row.ms.size()))) - 1;
        std::printf("%s,%.4f,%.4f,%zu\n", row.name.c_str(), median,
                    row.ms[std::min(p95_idx, row.ms.size() - 1)], row.ms.size());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reading-order extraction and attention-prior toolkit"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string order_path;
    std::string fixtures = ROATTN_FIXTURE_DIR;
    bool print_golden = false;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "configuration file");
        cmd->add_option("--input", opts.input, "input path or synthetic layout spec");
        cmd->add_option("--format", opts.format, "funsd|cord|synthetic")
            ->check(CLI::IsMember({"funsd", "cord", "synthetic"}));
        cmd->add_option("--out", opts.out_dir, "output directory (or .svg path for viz)");
        cmd->add_option("--seed", opts.seed, "seed override");
    };

    CLI::App* order = app.add_subcommand("order", "extract reading order");
    add_common(order);

    CLI::App* viz = app.add_subcommand("viz", "render original vs reordered indices as SVG");
    add_common(viz);
    viz->add_option("--order", order_path, "ordering file from the order command")->required();

    CLI::App* simulate = app.add_subcommand("simulate", "run the attention simulator");
    add_common(simulate);

    CLI::App* chk = app.add_subcommand("check", "run the verification suite");
    add_common(chk);
    chk->add_option("--filter", opts.filter, "run only checks with this name prefix");
    chk->add_option("--fixtures", fixtures, "fixture directory");
    chk->add_flag("--print-golden", print_golden, "print frozen-golden constants and exit");

    CLI::App* bench = app.add_subcommand("bench", "micro benchmarks");
    add_common(bench);
    bench->add_option("--fixtures", fixtures, "fixture directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (order->parsed()) return cmd_order(opts);
        if (viz->parsed()) return cmd_viz(opts, order_path);
        if (simulate->parsed()) return cmd_simulate(opts);
        if (chk->parsed()) return cmd_check(opts, fixtures, print_golden);
        if (bench->parsed()) return cmd_bench(opts, fixtures);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
