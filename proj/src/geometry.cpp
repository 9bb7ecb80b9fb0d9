#include "roattn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace roattn::geom {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSkewStepDeg = 0.25;

double quantile_type7(const std::vector<double>& sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 1) {
        return sorted[0];
    }
    const double pos = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

void validate(const AxgParams& params) {
    if (!(params.gamma > 0.0 && params.gamma <= 1.0)) {
        throw std::invalid_argument("gamma must be in (0, 1]");
    }
    if (params.alpha < 0.0 || params.beta < 0.0) {
        throw std::invalid_argument("alpha and beta must be >= 0");
    }
    if (params.max_bins < 16) {
        throw std::invalid_argument("max_bins must be >= 16");
    }
}

double median(std::vector<double> values) {
    if (values.empty()) {
        throw std::invalid_argument("median of empty list");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) {
        return values[n / 2];
    }
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double interquartile_range(std::vector<double> values) {
    if (values.empty()) {
        throw std::invalid_argument("iqr of empty list");
    }
    std::sort(values.begin(), values.end());
    return quantile_type7(values, 0.75) - quantile_type7(values, 0.25);
}

double estimate_skew(const Document& doc, double range_deg) {
    if (doc.boxes.size() < 2 || range_deg <= 0.0) {
        return 0.0;
    }
    const double cx = 0.5 * doc.width;
    const double cy = 0.5 * doc.height;

    const int half_steps = static_cast<int>(std::lround(range_deg / kSkewStepDeg));
    double best_angle = 0.0;
    double best_var = -1.0;

    for (int s = -half_steps; s <= half_steps; ++s) {
        const double angle = static_cast<double>(s) * kSkewStepDeg;
        const double rad = -angle * kPi / 180.0;
        const double c = std::cos(rad);
        const double sn = std::sin(rad);

        // rotated Y coordinates of box centers
        double ymin = std::numeric_limits<double>::infinity();
        double ymax = -std::numeric_limits<double>::infinity();
        std::vector<double> ys;
        ys.reserve(doc.boxes.size());
        for (const TextBox& b : doc.boxes) {
            const double y = cy + sn * (b.cx() - cx) + c * (b.cy() - cy);
            ys.push_back(y);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
        const std::size_t nbins =
            static_cast<std::size_t>(std::floor(ymax - ymin)) + 1;
        std::vector<int> counts(nbins, 0);
        for (double y : ys) {
            std::size_t k = static_cast<std::size_t>(y - ymin);
            counts[std::min(k, nbins - 1)] += 1;
        }
        double mean = 0.0;
        for (int cnt : counts) {
            mean += cnt;
        }
        mean /= static_cast<double>(nbins);
        double var = 0.0;
        for (int cnt : counts) {
            const double d = static_cast<double>(cnt) - mean;
            var += d * d;
        }
        var /= static_cast<double>(nbins);

        const bool better =
            var > best_var ||
            (var == best_var && std::abs(angle) < std::abs(best_angle));
        if (better) {
            best_var = var;
            best_angle = angle;
        }
    }
    return best_angle;
}

Document deskew(const Document& doc, double angle_deg) {
    if (angle_deg == 0.0) {
        return doc;
    }
    const double cx = 0.5 * doc.width;
    const double cy = 0.5 * doc.height;
    const double rad = -angle_deg * kPi / 180.0;
    const double c = std::cos(rad);
    const double sn = std::sin(rad);

    Document out;
    out.width = doc.width;
    out.height = doc.height;
    out.boxes.reserve(doc.boxes.size());
    for (const TextBox& b : doc.boxes) {
        const double xs[4] = {b.x0, b.x1, b.x1, b.x0};
        const double ys[4] = {b.y0, b.y0, b.y1, b.y1};
        double rx0 = std::numeric_limits<double>::infinity();
        double ry0 = std::numeric_limits<double>::infinity();
        double rx1 = -std::numeric_limits<double>::infinity();
        double ry1 = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < 4; ++i) {
            const double dx = xs[i] - cx;
            const double dy = ys[i] - cy;
            const double rx = cx + c * dx - sn * dy;
            const double ry = cy + sn * dx + c * dy;
            rx0 = std::min(rx0, rx);
            ry0 = std::min(ry0, ry);
            rx1 = std::max(rx1, rx);
            ry1 = std::max(ry1, ry);
        }
        out.boxes.push_back(TextBox{b.id, rx0, ry0, rx1, ry1, b.text});
    }
    return out;
}

ProjectionHistogram project_histogram(const std::vector<TextBox>& boxes, Axis axis,
                                      double bin_width) {
    if (boxes.empty()) {
        throw std::invalid_argument("empty region");
    }
    if (bin_width < 1.0) {
        throw std::invalid_argument("bin_width must be >= 1");
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const TextBox& b : boxes) {
        lo = std::min(lo, axis == Axis::X ? b.x0 : b.y0);
        hi = std::max(hi, axis == Axis::X ? b.x1 : b.y1);
    }

    ProjectionHistogram hist;
    hist.axis = axis;
    hist.bin_width = bin_width;
    hist.origin = lo;
    const std::size_t nbins = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil((hi - lo) / bin_width)));
    hist.counts.assign(nbins, 0);

    for (const TextBox& b : boxes) {
        const double a = (axis == Axis::X ? b.x0 : b.y0) - lo;
        const double z = (axis == Axis::X ? b.x1 : b.y1) - lo;
        // bins [k_lo, k_hi] whose half-open span intersects (a, z)
        auto k_lo = static_cast<std::size_t>(std::max(0.0, std::floor(a / bin_width)));
        auto k_hi = static_cast<std::size_t>(std::max(0.0, std::ceil(z / bin_width) - 1.0));
        k_lo = std::min(k_lo, nbins - 1);
        k_hi = std::min(k_hi, nbins - 1);
        for (std::size_t k = k_lo; k <= k_hi; ++k) {
            hist.counts[k] += 1;
        }
    }
    return hist;
}

SplitThresholds adaptive_thresholds(const std::vector<TextBox>& boxes,
                                    const ProjectionHistogram& hist,
                                    const AxgParams& params) {
    if (boxes.empty()) {
        throw std::invalid_argument("empty region");
    }
    std::vector<double> sizes;
    sizes.reserve(boxes.size());
    for (const TextBox& b : boxes) {
        sizes.push_back(hist.axis == Axis::Y ? b.height() : b.width());
    }

    SplitThresholds thr;
    thr.median_size = median(sizes);
    thr.iqr = interquartile_range(sizes);
    thr.gap_min = params.alpha * thr.median_size + params.beta * thr.iqr;

    std::vector<double> counts(hist.counts.begin(), hist.counts.end());
    thr.tau_valley = params.gamma * median(counts);
    return thr;
}

}  // namespace roattn::geom
