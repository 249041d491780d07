#include "tas/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tas {

void LabelSequence::validate() const {
    if (labels.size() < 1) {
        throw EmptySequenceError("LabelSequence: needs at least one frame");
    }
    if (num_classes < 1) {
        throw ConfigError("LabelSequence: num_classes must be >= 1");
    }
    for (int t = 0; t < frames(); ++t) {
        if (labels[t] < 0 || labels[t] >= num_classes) {
            throw UnknownLabelError("LabelSequence: label " + std::to_string(labels[t]) +
                                    " at frame " + std::to_string(t) + " outside [0, " +
                                    std::to_string(num_classes) + ")");
        }
    }
}

void ProbabilityMap::validate(double tol) const {
    if (class_probs.cols() != boundary_probs.size()) {
        throw ShapeMismatchError("ProbabilityMap: class_probs has " +
                                 std::to_string(class_probs.cols()) +
                                 " columns but boundary_probs has " +
                                 std::to_string(boundary_probs.size()) + " entries");
    }
    for (int t = 0; t < frames(); ++t) {
        const double s = class_probs.col(t).sum();
        if (std::abs(s - 1.0) > tol) {
            throw ConfigError("ProbabilityMap: column " + std::to_string(t) +
                              " sums to " + std::to_string(s));
        }
        if (boundary_probs[t] < 0.0 || boundary_probs[t] > 1.0) {
            throw ConfigError("ProbabilityMap: boundary probability out of [0,1] at frame " +
                              std::to_string(t));
        }
    }
}

std::vector<Segment> extract_segments(const LabelSequence& seq) {
    seq.validate();
    std::vector<Segment> out;
    int start = 0;
    for (int t = 1; t <= seq.frames(); ++t) {
        if (t == seq.frames() || seq.labels[t] != seq.labels[start]) {
            out.push_back({seq.labels[start], start, t});
            start = t;
        }
    }
    return out;
}

LabelSequence render_labels(const std::vector<Segment>& segments, int num_classes) {
    if (segments.empty()) {
        throw EmptySequenceError("render_labels: empty segment list");
    }
    const int frames = segments.back().end;
    LabelSequence seq;
    seq.num_classes = num_classes;
    seq.labels.resize(frames);
    int expected_start = 0;
    for (const Segment& s : segments) {
        if (s.start != expected_start || s.end <= s.start || s.end > frames) {
            throw ConfigError("render_labels: segments must be contiguous and cover [0, T)");
        }
        seq.labels.segment(s.start, s.length()).setConstant(s.class_id);
        expected_start = s.end;
    }
    seq.validate();
    return seq;
}

BoundaryTarget boundary_targets(const LabelSequence& seq) {
    seq.validate();
    BoundaryTarget target;
    target.mask = BoolArray::Constant(seq.frames(), false);
    for (int t = 1; t < seq.frames(); ++t) {
        target.mask[t] = seq.labels[t] != seq.labels[t - 1];
    }
    return target;
}

RegionMask region_partition(const LabelSequence& seq, int window_w) {
    if (window_w < 0) {
        throw ConfigError("region_partition: window_w must be >= 0");
    }
    const BoundaryTarget target = boundary_targets(seq);
    RegionMask region;
    region.window_w = window_w;
    region.is_boundary_region = BoolArray::Constant(seq.frames(), false);
    for (int tau = 0; tau < seq.frames(); ++tau) {
        if (!target.mask[tau]) continue;
        const int lo = std::max(0, tau - window_w);
        const int hi = std::min(seq.frames() - 1, tau + window_w);
        for (int t = lo; t <= hi; ++t) {
            region.is_boundary_region[t] = true;
        }
    }
    return region;
}

double segment_iou(int a_start, int a_end, int b_start, int b_end) {
    if (a_start >= a_end || b_start >= b_end) {
        throw ConfigError("segment_iou: intervals must be non-empty");
    }
    const int inter = std::max(0, std::min(a_end, b_end) - std::max(a_start, b_start));
    const int uni = (a_end - a_start) + (b_end - b_start) - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double segment_iou(const Segment& a, const Segment& b) {
    return segment_iou(a.start, a.end, b.start, b.end);
}

}  // namespace tas
