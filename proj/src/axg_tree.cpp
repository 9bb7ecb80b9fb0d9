#include "roattn/axg_tree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace roattn::axg {

using geom::Axis;
using geom::AxgParams;
using geom::Document;
using geom::ProjectionHistogram;
using geom::SplitThresholds;
using geom::TextBox;

std::vector<ValleyInterval> find_valleys(const ProjectionHistogram& hist,
                                         const SplitThresholds& thresholds) {
    std::vector<ValleyInterval> valleys;
    const std::size_t n = hist.counts.size();
    std::size_t k = 0;
    while (k < n) {
        if (static_cast<double>(hist.counts[k]) < thresholds.tau_valley) {
            const std::size_t start = k;
            while (k < n && static_cast<double>(hist.counts[k]) < thresholds.tau_valley) {
                ++k;
            }
            const std::size_t end = k - 1;
            const double width = static_cast<double>(end - start + 1) * hist.bin_width;
            if (start > 0 && end < n - 1 && width >= thresholds.gap_min) {
                valleys.push_back(ValleyInterval{start, end, width});
            }
        } else {
            ++k;
        }
    }
    return valleys;
}

std::vector<int> ags_sort(const std::vector<TextBox>& boxes) {
    if (boxes.empty()) {
        throw std::invalid_argument("empty region");
    }
    std::vector<double> heights;
    heights.reserve(boxes.size());
    for (const TextBox& b : boxes) {
        heights.push_back(b.height());
    }
    const double line_tol = 0.5 * geom::median(heights);

    std::vector<std::size_t> idx(boxes.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (boxes[a].cy() != boxes[b].cy()) {
            return boxes[a].cy() < boxes[b].cy();
        }
        return boxes[a].id < boxes[b].id;
    });

    // transitive chaining on cy == consecutive-gap clustering in sorted order
    std::vector<std::vector<std::size_t>> lines;
    for (std::size_t pos = 0; pos < idx.size(); ++pos) {
        const bool chained =
            !lines.empty() &&
            boxes[idx[pos]].cy() - boxes[lines.back().back()].cy() < line_tol;
        if (chained) {
            lines.back().push_back(idx[pos]);
        } else {
            lines.push_back({idx[pos]});
        }
    }

    for (auto& line : lines) {
        std::sort(line.begin(), line.end(), [&](std::size_t a, std::size_t b) {
            if (boxes[a].x0 != boxes[b].x0) {
                return boxes[a].x0 < boxes[b].x0;
            }
            return boxes[a].id < boxes[b].id;
        });
    }

    std::vector<int> out;
    out.reserve(boxes.size());
    for (const auto& line : lines) {
        for (std::size_t i : line) {
            out.push_back(boxes[i].id);
        }
    }
    return out;
}

ReadingOrder repair_order(const std::vector<int>& order, const Document& doc) {
    std::unordered_map<int, std::size_t> pos_by_id;
    pos_by_id.reserve(doc.boxes.size());
    for (std::size_t i = 0; i < doc.boxes.size(); ++i) {
        pos_by_id.emplace(doc.boxes[i].id, i);
    }

    ReadingOrder out;
    out.order.reserve(doc.boxes.size());
    std::unordered_set<int> seen;
    seen.reserve(order.size());
    for (int id : order) {
        if (pos_by_id.find(id) == pos_by_id.end()) {
            throw std::invalid_argument("unknown id in reading order: " + std::to_string(id));
        }
        if (seen.insert(id).second) {
            out.order.push_back(id);
        }
    }

    if (out.order.size() < doc.boxes.size()) {
        std::vector<TextBox> missing;
        for (const TextBox& b : doc.boxes) {
            if (seen.find(b.id) == seen.end()) {
                missing.push_back(b);
            }
        }
        for (int id : ags_sort(missing)) {
            out.order.push_back(id);
        }
    }
    return out;
}

namespace {

struct Recurser {
    const std::vector<TextBox>& boxes;
    const AxgParams& params;
    std::size_t max_depth_seen = 0;

    double coord_lo(const TextBox& b, Axis axis) const {
        return axis == Axis::X ? b.x0 : b.y0;
    }
    double coord_hi(const TextBox& b, Axis axis) const {
        return axis == Axis::X ? b.x1 : b.y1;
    }
    double center(const TextBox& b, Axis axis) const {
        return axis == Axis::X ? b.cx() : b.cy();
    }

    std::vector<int> run(const std::vector<std::size_t>& sub, Axis axis, std::size_t depth) {
        max_depth_seen = std::max(max_depth_seen, depth);
        if (depth > 2 * boxes.size()) {
            throw std::logic_error("recursion depth exceeded 2N");
        }
        if (sub.size() <= 1) {
            std::vector<int> out;
            for (std::size_t i : sub) {
                out.push_back(boxes[i].id);
            }
            return out;
        }

        std::vector<TextBox> view;
        view.reserve(sub.size());
        for (std::size_t i : sub) {
            view.push_back(boxes[i]);
        }

        double lo = coord_lo(view[0], axis);
        double hi = coord_hi(view[0], axis);
        for (const TextBox& b : view) {
            lo = std::min(lo, coord_lo(b, axis));
            hi = std::max(hi, coord_hi(b, axis));
        }
        const double extent = hi - lo;
        const double bin_width =
            std::max(1.0, std::ceil(extent / static_cast<double>(params.max_bins)));

        const ProjectionHistogram hist = geom::project_histogram(view, axis, bin_width);
        const SplitThresholds thr = geom::adaptive_thresholds(view, hist, params);
        const std::vector<ValleyInterval> valleys = find_valleys(hist, thr);

        std::vector<std::vector<std::size_t>> groups = split_groups(sub, valleys, hist, axis);

        if (groups.empty()) {  // no valid split
            if (axis == Axis::Y) {
                return run(sub, Axis::X, depth + 1);
            }
            return ags_sort(view);
        }

        // groups are built in ascending cut order; stable sort keeps that
        // order when bounding-box minima tie
        std::stable_sort(groups.begin(), groups.end(),
                         [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
                             return group_min(a, axis) < group_min(b, axis);
                         });

        const Axis next = axis == Axis::Y ? Axis::X : Axis::Y;
        std::vector<int> out;
        out.reserve(sub.size());
        for (const auto& g : groups) {
            std::vector<int> child = run(g, next, depth + 1);
            out.insert(out.end(), child.begin(), child.end());
        }
        return out;
    }

    double group_min(const std::vector<std::size_t>& group, Axis axis) const {
        double m = coord_lo(boxes[group[0]], axis);
        for (std::size_t i : group) {
            m = std::min(m, coord_lo(boxes[i], axis));
        }
        return m;
    }

    // Partition `sub` at each valley's center; boxes are assigned to the side
    // containing their center coordinate. Returns empty when the split is
    // invalid (no valleys, or some group empty / equal to the input).
    std::vector<std::vector<std::size_t>> split_groups(const std::vector<std::size_t>& sub,
                                                       const std::vector<ValleyInterval>& valleys,
                                                       const ProjectionHistogram& hist,
                                                       Axis axis) const {
        if (valleys.empty()) {
            return {};
        }
        std::vector<double> cuts;
        cuts.reserve(valleys.size());
        for (const ValleyInterval& v : valleys) {
            const double mid_bin =
                0.5 * static_cast<double>(v.start_bin + v.end_bin + 1);
            cuts.push_back(hist.origin + hist.bin_width * mid_bin);
        }

        std::vector<std::vector<std::size_t>> groups(cuts.size() + 1);
        for (std::size_t i : sub) {
            const double c = center(boxes[i], axis);
            const std::size_t g =
                static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), c) -
                                         cuts.begin());
            groups[g].push_back(i);
        }
        for (const auto& g : groups) {
            if (g.empty() || g.size() == sub.size()) {
                return {};
            }
        }
        return groups;
    }
};

}  // namespace

ReadingOrder axg_order(const Document& doc, const AxgParams& params) {
    if (doc.boxes.empty()) {
        throw std::invalid_argument("empty document");
    }
    geom::validate(params);

    const Document* working = &doc;
    Document deskewed;
    if (params.deskew_enabled && params.deskew_range_deg > 0.0) {
        const double angle = geom::estimate_skew(doc, params.deskew_range_deg);
        if (angle != 0.0) {
            deskewed = geom::deskew(doc, angle);
            working = &deskewed;
        }
    }

    Recurser rec{working->boxes, params};
    std::vector<std::size_t> all(working->boxes.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        all[i] = i;
    }
    const std::vector<int> raw = rec.run(all, Axis::Y, 0);
    return repair_order(raw, *working);
}

}  // namespace roattn::axg
