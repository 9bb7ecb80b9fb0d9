#pragma once

// Dataset ingestion: FUNSD/CORD annotation loading at word granularity,
// synthetic layout generation with known ground-truth reading order, and
// padded batch assembly for the simulator.

#include <cstdint>
#include <string>
#include <vector>

#include "roattn/attention_sim.hpp"
#include "roattn/geometry.hpp"

namespace roattn::ingest {

struct AnnotatedDocument {
    geom::Document doc;
    std::vector<std::string> labels;      // per box, parallel to doc.boxes
    std::vector<int> ground_truth_order;  // empty when unknown
    std::string name;
};

enum class Format { funsd, cord };

Format format_from_name(const std::string& name);

// Word-level boxes with the entity label inherited; quads collapse to
// axis-aligned bounding boxes; file order becomes the id sequence (the raw
// OCR-order baseline). Throws with path and record index on malformed input.
AnnotatedDocument load_annotations(const std::string& path, Format format);

enum class LayoutKind { single_column, two_column, grid_table, staggered_columns, skewed };

LayoutKind layout_kind_from_name(const std::string& name);
const char* layout_kind_name(LayoutKind kind);

struct LayoutSpec {
    LayoutKind kind = LayoutKind::single_column;
    int rows = 5;
    int cols = 3;           // boxes per row (columns of cells for grid_table)
    double gap_scale = 1.0; // scales inter-row/column gaps
    double skew_deg = 0.0;  // used by kind=skewed
    std::uint64_t seed = 0;
};

// Deterministic synthetic page with ground_truth_order encoding human
// reading (row-major inside a column block, column blocks left-to-right).
// kind=skewed applies a rigid rotation after ordering.
AnnotatedDocument synthesize_layout(const LayoutSpec& spec);

// Pads documents to a common textual span, records per-sample valid lengths
// and reading indices (position of each box in its reading order), and
// appends visual tokens with seeded Gaussian embeddings.
// Throws when a document exceeds cfg.t_max (no silent truncation).
sim::SimBatch batch_assemble(const std::vector<AnnotatedDocument>& docs,
                             const std::vector<std::vector<int>>& orders,
                             const sim::SimConfig& cfg);

}  // namespace roattn::ingest
