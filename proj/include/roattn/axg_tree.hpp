#pragma once

// Adaptive-XY-Gap tree: recursive valley-based splitting of a page into an
// ordered hierarchy, with adaptive grouped sorting as the fallback when no
// axis yields a valid split. Produces a global reading order.

#include <vector>

#include "roattn/geometry.hpp"

namespace roattn::axg {

struct ValleyInterval {
    std::size_t start_bin = 0;
    std::size_t end_bin = 0;  // inclusive
    double width_px = 0.0;
};

struct ReadingOrder {
    std::vector<int> order;  // position i = id of the i-th box read
};

// Maximal runs of consecutive bins with counts[k] < tau_valley whose pixel
// width is >= gap_min. Runs touching either histogram boundary are excluded.
std::vector<ValleyInterval> find_valleys(const geom::ProjectionHistogram& hist,
                                         const geom::SplitThresholds& thresholds);

// Fallback ordering: boxes clustered into lines by vertical proximity
// (|cy(a)-cy(b)| < 0.5 * median height, transitive), lines top-to-bottom,
// within a line left-to-right by x0, ties by id.
std::vector<int> ags_sort(const std::vector<geom::TextBox>& boxes);

// Dedupe keeping first occurrence, then append ids missing from `order` in
// ags_sort order of the missing subset. Throws on ids not present in doc.
ReadingOrder repair_order(const std::vector<int>& order, const geom::Document& doc);

// Full recursive ordering: optional global deskew, Y-first valley splitting
// with axis flips, AGS fallback, repaired output.
// Throws on an empty document.
ReadingOrder axg_order(const geom::Document& doc, const geom::AxgParams& params);

}  // namespace roattn::axg
