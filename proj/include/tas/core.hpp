#pragma once

#include <Eigen/Dense>
#include <vector>

#include "tas/errors.hpp"

namespace tas {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Per-frame ground-truth class indices for one video.
struct LabelSequence {
    IntVector labels;  // length T, each in [0, num_classes)
    int num_classes = 0;

    int frames() const { return static_cast<int>(labels.size()); }
    void validate() const;
};

// Maximal run of consecutive frames sharing one class. Half-open [start, end).
struct Segment {
    int class_id = 0;
    int start = 0;
    int end = 0;

    int length() const { return end - start; }
};

// Class probabilities (softmax per column) plus the extra per-frame
// boundary probability channel (sigmoid output).
struct ProbabilityMap {
    Matrix class_probs;     // C x T, columns sum to 1
    Vector boundary_probs;  // length T, entries in [0, 1]

    int num_classes() const { return static_cast<int>(class_probs.rows()); }
    int frames() const { return static_cast<int>(class_probs.cols()); }
    void validate(double tol = 1e-6) const;
};

// Binary transition mask: b[t] = 1 iff labels[t] != labels[t-1], b[0] = 0.
struct BoundaryTarget {
    BoolArray mask;  // length T

    int frames() const { return static_cast<int>(mask.size()); }
    int count() const { return static_cast<int>(mask.cast<int>().sum()); }
};

// Partition of the temporal axis into boundary / non-boundary regions:
// a frame is in the boundary region iff it lies within +-window_w frames
// of some ground-truth transition.
struct RegionMask {
    BoolArray is_boundary_region;  // length T
    int window_w = 5;

    int frames() const { return static_cast<int>(is_boundary_region.size()); }
    int boundary_count() const {
        return static_cast<int>(is_boundary_region.cast<int>().sum());
    }
};

std::vector<Segment> extract_segments(const LabelSequence& seq);

// Inverse of extract_segments: renders segments back to per-frame labels.
LabelSequence render_labels(const std::vector<Segment>& segments, int num_classes);

BoundaryTarget boundary_targets(const LabelSequence& seq);

RegionMask region_partition(const LabelSequence& seq, int window_w);

// Interval IoU of two half-open frame intervals; class ids are ignored.
double segment_iou(const Segment& a, const Segment& b);
double segment_iou(int a_start, int a_end, int b_start, int b_end);

}  // namespace tas
