#include "roattn/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "roattn/rng.hpp"

namespace roattn::ingest {

using nlohmann::json;

Format format_from_name(const std::string& name) {
    if (name == "funsd") return Format::funsd;
    if (name == "cord") return Format::cord;
    throw std::invalid_argument("unknown annotation format: " + name);
}

namespace {

[[noreturn]] void malformed(const std::string& path, std::size_t record, const std::string& why) {
    throw std::runtime_error("malformed annotation file " + path + ", record " +
                             std::to_string(record) + ": " + why);
}

json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open annotation file: " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed annotation file " + path + ": " + e.what());
    }
}

void finish_document(AnnotatedDocument& out, double width_hint, double height_hint) {
    double max_x = 0.0;
    double max_y = 0.0;
    for (const geom::TextBox& b : out.doc.boxes) {
        max_x = std::max(max_x, b.x1);
        max_y = std::max(max_y, b.y1);
    }
    out.doc.width = width_hint > 0.0 ? width_hint : max_x;
    out.doc.height = height_hint > 0.0 ? height_hint : max_y;
    for (geom::TextBox& b : out.doc.boxes) {
        b.x0 = std::clamp(b.x0, 0.0, out.doc.width);
        b.x1 = std::clamp(b.x1, 0.0, out.doc.width);
        b.y0 = std::clamp(b.y0, 0.0, out.doc.height);
        b.y1 = std::clamp(b.y1, 0.0, out.doc.height);
    }
}

AnnotatedDocument load_funsd(const std::string& path) {
    const json root = parse_file(path);
    if (!root.contains("form") || !root["form"].is_array()) {
        throw std::runtime_error("malformed annotation file " + path + ": missing form list");
    }
    const json& form = root["form"];
    if (form.empty()) {
        throw std::runtime_error("empty document: " + path);
    }

    AnnotatedDocument out;
    int next_id = 0;
    for (std::size_t rec = 0; rec < form.size(); ++rec) {
        const json& entity = form[rec];
        try {
            const std::string label = entity.at("label").get<std::string>();
            const json& words = entity.at("words");
            if (!words.is_array()) {
                malformed(path, rec, "words is not a list");
            }
            for (const json& word : words) {
                const json& box = word.at("box");
                if (!box.is_array() || box.size() != 4) {
                    malformed(path, rec, "word box must have 4 coordinates");
                }
                geom::TextBox tb;
                tb.id = next_id++;
                tb.x0 = box[0].get<double>();
                tb.y0 = box[1].get<double>();
                tb.x1 = box[2].get<double>();
                tb.y1 = box[3].get<double>();
                tb.text = word.value("text", std::string());
                if (!(tb.x0 < tb.x1) || !(tb.y0 < tb.y1)) {
                    malformed(path, rec, "degenerate word box");
                }
                out.doc.boxes.push_back(std::move(tb));
                out.labels.push_back(label);
            }
        } catch (const json::exception& e) {
            malformed(path, rec, e.what());
        }
    }
    if (out.doc.boxes.empty()) {
        throw std::runtime_error("empty document: " + path);
    }
    finish_document(out, 0.0, 0.0);
    return out;
}

AnnotatedDocument load_cord(const std::string& path) {
    const json root = parse_file(path);
    if (!root.contains("valid_line") || !root["valid_line"].is_array()) {
        throw std::runtime_error("malformed annotation file " + path +
                                 ": missing valid_line list");
    }
    const json& lines = root["valid_line"];
    if (lines.empty()) {
        throw std::runtime_error("empty document: " + path);
    }

    double width_hint = 0.0;
    double height_hint = 0.0;
    if (root.contains("meta") && root["meta"].contains("image_size")) {
        const json& size = root["meta"]["image_size"];
        width_hint = size.value("width", 0.0);
        height_hint = size.value("height", 0.0);
    }

    AnnotatedDocument out;
    int next_id = 0;
    for (std::size_t rec = 0; rec < lines.size(); ++rec) {
        const json& line = lines[rec];
        try {
            const std::string label = line.at("category").get<std::string>();
            const json& words = line.at("words");
            if (!words.is_array()) {
                malformed(path, rec, "words is not a list");
            }
            for (const json& word : words) {
                const json& quad = word.at("quad");
                const double xs[4] = {quad.at("x1").get<double>(), quad.at("x2").get<double>(),
                                      quad.at("x3").get<double>(), quad.at("x4").get<double>()};
                const double ys[4] = {quad.at("y1").get<double>(), quad.at("y2").get<double>(),
                                      quad.at("y3").get<double>(), quad.at("y4").get<double>()};
                geom::TextBox tb;
                tb.id = next_id++;
                tb.x0 = *std::min_element(xs, xs + 4);
                tb.x1 = *std::max_element(xs, xs + 4);
                tb.y0 = *std::min_element(ys, ys + 4);
                tb.y1 = *std::max_element(ys, ys + 4);
                tb.text = word.value("text", std::string());
                if (!(tb.x0 < tb.x1) || !(tb.y0 < tb.y1)) {
                    malformed(path, rec, "degenerate word quad");
                }
                out.doc.boxes.push_back(std::move(tb));
                out.labels.push_back(label);
            }
        } catch (const json::exception& e) {
            malformed(path, rec, e.what());
        }
    }
    if (out.doc.boxes.empty()) {
        throw std::runtime_error("empty document: " + path);
    }
    finish_document(out, width_hint, height_hint);
    return out;
}

std::string stem_of(const std::string& path) {
    const std::size_t slash = path.find_last_of("/\\");
    std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    const std::size_t dot = name.find_last_of('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

}  // namespace

AnnotatedDocument load_annotations(const std::string& path, Format format) {
    AnnotatedDocument out =
        format == Format::funsd ? load_funsd(path) : load_cord(path);
    out.name = stem_of(path);
    return out;
}

LayoutKind layout_kind_from_name(const std::string& name) {
    if (name == "single_column") return LayoutKind::single_column;
    if (name == "two_column") return LayoutKind::two_column;
    if (name == "grid_table") return LayoutKind::grid_table;
    if (name == "staggered_columns") return LayoutKind::staggered_columns;
    if (name == "skewed") return LayoutKind::skewed;
    throw std::invalid_argument("unknown layout kind: " + name);
}

const char* layout_kind_name(LayoutKind kind) {
    switch (kind) {
        case LayoutKind::single_column: return "single_column";
        case LayoutKind::two_column: return "two_column";
        case LayoutKind::grid_table: return "grid_table";
        case LayoutKind::staggered_columns: return "staggered_columns";
        case LayoutKind::skewed: return "skewed";
    }
    return "?";
}

namespace {

constexpr double kMargin = 150.0;
constexpr double kRowHeightLo = 28.0;
constexpr double kRowHeightHi = 32.0;
constexpr double kRowGap = 20.0;

struct Builder {
    AnnotatedDocument out;
    int next_id = 0;

    // one row of `cols` word boxes sharing [y0, y0+h); reading order equals
    // emission order
    void emit_row(Rng& rng, double x_start, double y0, double h, int cols) {
        double x = x_start + rng.uniform(0.0, 10.0);
        for (int c = 0; c < cols; ++c) {
            const double w = rng.uniform(55.0, 80.0);
            geom::TextBox tb;
            tb.id = next_id++;
            tb.x0 = x;
            tb.x1 = x + w;
            tb.y0 = y0;
            tb.y1 = y0 + h;
            tb.text = "w" + std::to_string(tb.id);
            out.doc.boxes.push_back(std::move(tb));
            out.labels.push_back("other");
            out.ground_truth_order.push_back(next_id - 1);
            x += w + rng.uniform(8.0, 14.0);
        }
    }
};

void shuffle_boxes(AnnotatedDocument& doc, Rng& rng) {
    for (std::size_t i = doc.doc.boxes.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(doc.doc.boxes[i - 1], doc.doc.boxes[j]);
        std::swap(doc.labels[i - 1], doc.labels[j]);
    }
}

}  // namespace

AnnotatedDocument synthesize_layout(const LayoutSpec& spec) {
    if (spec.rows < 1 || spec.cols < 1) {
        throw std::invalid_argument("rows and cols must be >= 1");
    }
    Rng rng(spec.seed);
    Builder bld;
    const double pitch = kRowHeightHi + kRowGap * spec.gap_scale;
    const double col_gap = 100.0 * spec.gap_scale;

    switch (spec.kind) {
        case LayoutKind::single_column:
        case LayoutKind::skewed: {
            for (int r = 0; r < spec.rows; ++r) {
                const double h = rng.uniform(kRowHeightLo, kRowHeightHi);
                bld.emit_row(rng, kMargin, kMargin + r * pitch, h, spec.cols);
            }
            break;
        }
        case LayoutKind::two_column:
        case LayoutKind::staggered_columns: {
            const int ncols = spec.kind == LayoutKind::two_column ? 2 : std::max(2, spec.cols);
            const int words_per_row = spec.kind == LayoutKind::two_column ? spec.cols : 2;
            const double span = static_cast<double>(words_per_row) * 94.0 + 10.0;
            // staggered pages use tall rows: inter-row gaps stay below
            // gap_min on every axis-aligned projection, so only the central
            // column gaps can split, whatever angle the deskew scan picks
            const bool tall = spec.kind == LayoutKind::staggered_columns;
            const double h_lo = tall ? pitch - 8.0 : kRowHeightLo;
            const double h_hi = tall ? pitch - 4.0 : kRowHeightHi;
            for (int c = 0; c < ncols; ++c) {
                const double x0 = kMargin + c * (span + col_gap);
                // alternating half-pitch phases; a monotone phase ramp would
                // read as genuine page skew
                const double phase = (c % 2) * pitch * 0.5;
                for (int r = 0; r < spec.rows; ++r) {
                    const double h = rng.uniform(h_lo, h_hi);
                    bld.emit_row(rng, x0, kMargin + phase + r * pitch, h, words_per_row);
                }
            }
            break;
        }
        case LayoutKind::grid_table: {
            const double cell_pitch_x = 140.0;
            for (int r = 0; r < spec.rows; ++r) {
                const double h = rng.uniform(kRowHeightLo, kRowHeightHi);
                const double y0 = kMargin + r * pitch;
                for (int c = 0; c < spec.cols; ++c) {
                    const double w = rng.uniform(70.0, 85.0);
                    geom::TextBox tb;
                    tb.id = bld.next_id++;
                    tb.x0 = kMargin + c * cell_pitch_x;
                    tb.x1 = tb.x0 + w;
                    tb.y0 = y0;
                    tb.y1 = y0 + h;
                    tb.text = "c" + std::to_string(tb.id);
                    bld.out.doc.boxes.push_back(std::move(tb));
                    bld.out.labels.push_back("other");
                    bld.out.ground_truth_order.push_back(tb.id);
                }
            }
            break;
        }
    }

    AnnotatedDocument doc = std::move(bld.out);
    double max_x = 0.0;
    double max_y = 0.0;
    for (const geom::TextBox& b : doc.doc.boxes) {
        max_x = std::max(max_x, b.x1);
        max_y = std::max(max_y, b.y1);
    }
    doc.doc.width = max_x + kMargin;
    doc.doc.height = max_y + kMargin;
    doc.name = std::string(layout_kind_name(spec.kind)) + "_" + std::to_string(spec.seed);

    if (spec.kind == LayoutKind::skewed && spec.skew_deg != 0.0) {
        doc.doc = geom::deskew(doc.doc, -spec.skew_deg);
    }

    shuffle_boxes(doc, rng);
    return doc;
}

sim::SimBatch batch_assemble(const std::vector<AnnotatedDocument>& docs,
                             const std::vector<std::vector<int>>& orders,
                             const sim::SimConfig& cfg) {
    if (docs.empty() || docs.size() != orders.size()) {
        throw std::invalid_argument("docs and orders must be non-empty and parallel");
    }
    sim::SimBatch batch;
    batch.batch = static_cast<int>(docs.size());
    batch.visual = cfg.num_visual_tokens;

    int t_b = 0;
    for (const AnnotatedDocument& d : docs) {
        const int n = static_cast<int>(d.doc.boxes.size());
        if (n > cfg.t_max) {
            throw std::invalid_argument("document " + d.name + " exceeds t_max (" +
                                        std::to_string(n) + " boxes)");
        }
        t_b = std::max(t_b, n);
    }
    batch.t_b = t_b;

    const int d_model = cfg.d_model();
    const int L = batch.seq_len();
    batch.embeddings.assign(static_cast<std::size_t>(batch.batch) * L * d_model, 0.0);
    Rng rng(cfg.seed);

    for (std::size_t b = 0; b < docs.size(); ++b) {
        const AnnotatedDocument& d = docs[b];
        const int n = static_cast<int>(d.doc.boxes.size());
        batch.lens.push_back(n);

        std::unordered_map<int, int> rank_of;
        rank_of.reserve(orders[b].size());
        for (std::size_t r = 0; r < orders[b].size(); ++r) {
            if (!rank_of.emplace(orders[b][r], static_cast<int>(r)).second) {
                throw std::invalid_argument("duplicate id in reading order for " + d.name);
            }
        }
        if (rank_of.size() != static_cast<std::size_t>(n)) {
            throw std::invalid_argument("reading order size mismatch for " + d.name);
        }

        std::vector<int> indices(static_cast<std::size_t>(t_b), 0);
        for (int i = 0; i < n; ++i) {
            const auto it = rank_of.find(d.doc.boxes[static_cast<std::size_t>(i)].id);
            if (it == rank_of.end()) {
                throw std::invalid_argument("reading order misses box id for " + d.name);
            }
            indices[static_cast<std::size_t>(i)] = it->second;
        }
        batch.reading_indices.push_back(std::move(indices));

        double* eb = batch.embeddings.data() + b * static_cast<std::size_t>(L) * d_model;
        for (int i = 0; i < L; ++i) {
            const bool padding = i >= n && i < t_b;
            if (padding) {
                continue;
            }
            for (int c = 0; c < d_model; ++c) {
                eb[static_cast<std::size_t>(i) * d_model + c] = rng.gaussian();
            }
        }
    }
    return batch;
}

}  // namespace roattn::ingest
