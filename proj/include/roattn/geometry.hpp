#pragma once

// Box primitives, global deskew, projection histograms and the adaptive
// thresholds that drive recursive gap splitting.

#include <string>
#include <vector>

namespace roattn::geom {

struct TextBox {
    int id = 0;
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;
    std::string text;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double cx() const { return 0.5 * (x0 + x1); }
    double cy() const { return 0.5 * (y0 + y1); }
};

struct Document {
    std::vector<TextBox> boxes;
    double width = 0.0;
    double height = 0.0;
};

enum class Axis { X, Y };

struct ProjectionHistogram {
    Axis axis = Axis::Y;
    double bin_width = 1.0;
    double origin = 0.0;  // pixel offset of bin 0
    std::vector<int> counts;

    double bin_start(std::size_t k) const { return origin + bin_width * static_cast<double>(k); }
    double bin_end(std::size_t k) const { return origin + bin_width * static_cast<double>(k + 1); }
};

struct SplitThresholds {
    double gap_min = 0.0;     // pixels
    double tau_valley = 0.0;  // density count
    double median_size = 0.0;
    double iqr = 0.0;
};

struct AxgParams {
    double alpha = 0.5;
    double beta = 0.25;
    double gamma = 0.3;
    int max_bins = 1024;
    bool deskew_enabled = true;
    double deskew_range_deg = 5.0;
};

void validate(const AxgParams& params);

// Angle in [-range_deg, +range_deg] maximizing the variance of the Y
// projection histogram of box centers rotated by -angle. Scans 0.25 degree
// steps; ties prefer the smaller |angle|. Returns 0 for fewer than 2 boxes.
double estimate_skew(const Document& doc, double range_deg);

// Rotates every box by -angle about the page center and re-axis-aligns it as
// the bounding box of the rotated corners. angle == 0 returns the input
// coordinates untouched.
Document deskew(const Document& doc, double angle_deg);

// Indicator histogram: counts[k] = number of boxes whose projected interval
// intersects bin k. Bins span the tight extent of the box set.
// Throws on an empty box list ("empty region").
ProjectionHistogram project_histogram(const std::vector<TextBox>& boxes, Axis axis,
                                      double bin_width);

// Median/IQR of the box sizes on the scan axis (heights for Y, widths for X),
// gap_min = alpha*m + beta*IQR, tau = gamma*median(counts) with zero bins
// included in the median.
SplitThresholds adaptive_thresholds(const std::vector<TextBox>& boxes,
                                    const ProjectionHistogram& hist,
                                    const AxgParams& params);

double median(std::vector<double> values);
double interquartile_range(std::vector<double> values);

}  // namespace roattn::geom
