#pragma once

#include <vector>

#include "tas/core.hpp"

namespace tas {

enum class Assignment { Decoupled, AllFrames };

struct LossConfig {
    double lambda_b = 0.3;  // boundary-regression weight
    double lambda_s = 0.3;  // segment-shape weight
    int window_w = 5;        // half-width of the boundary region
    int margin_delta = 5;    // frames trimmed from each segment end
    int e_start = 20;        // epoch at which the shape loss activates
    double eps = 1e-8;       // clamp / normalization constant
    Assignment assignment = Assignment::Decoupled;

    // Baseline smoothing term (truncated MSE on consecutive log-probs).
    double tmse_weight = 0.15;
    double tmse_clip = 16.0;

    void validate() const;
};

// Scalar values of the per-sequence objective plus bookkeeping counts.
struct LossBreakdown {
    double l_model = 0.0;
    double l_b = 0.0;
    double l_s = 0.0;
    double l_total = 0.0;
    int n_boundary_frames = 0;
    int n_segments_used = 0;
    int n_segments_skipped = 0;

    bool finite() const;
};

struct BoundaryBceResult {
    double loss = 0.0;
    Vector dlogits;  // length T; gradient w.r.t. boundary logits
    int n_active = 0;
};

struct ShapeLossResult {
    double loss = 0.0;
    Matrix dlogits;  // C x T; gradient w.r.t. class logits
    int n_used = 0;
    int n_skipped = 0;
};

struct ModelLossResult {
    double loss = 0.0;          // cross-entropy + weighted truncated MSE
    double cross_entropy = 0.0;
    double tmse = 0.0;
    Matrix dlogits;  // C x T
};

struct ProposedLossResult {
    double loss = 0.0;  // lambda_b * l_b + lambda_s * l_s (region-restricted)
    double l_b = 0.0;
    double l_s = 0.0;
    Matrix dclass_logits;     // C x T, already weighted by lambda_s
    Vector dboundary_logits;  // length T, already weighted by lambda_b
    int n_boundary_frames = 0;
    int n_segments_used = 0;
    int n_segments_skipped = 0;
};

struct TotalLossResult {
    LossBreakdown breakdown;
    Matrix dclass_logits;     // C x T, gradient of l_total
    Vector dboundary_logits;  // length T, gradient of l_total
};

// Binary cross-entropy over the active frames, averaged by their count.
// Probabilities are clamped to [eps, 1-eps] before the logs; the returned
// gradient is w.r.t. the pre-sigmoid boundary logits. Throws
// ActiveSetEmptyError when the active set has no frames.
BoundaryBceResult boundary_bce(const Vector& boundary_probs, const BoundaryTarget& target,
                               const BoolArray& active, double eps);
// Convenience overload: all frames active.
BoundaryBceResult boundary_bce(const Vector& boundary_probs, const BoundaryTarget& target,
                               double eps);

// (v + eps) / sum(v + eps); defined for any elementwise-nonnegative v.
Vector l1_normalize(const Vector& v, double eps);

// Running sum of a probability vector.
Vector cdf(const Vector& p);

// Squared l2 distance between the cumulative distribution of the
// l1-normalized predicted-class probabilities over each segment interior
// and the uniform CDF, averaged over interior length and over non-skipped
// segments. `active` restricts interiors to frames where it is true;
// pass nullptr to use the plain delta-margin interiors. The gradient is
// w.r.t. the pre-softmax class logits.
ShapeLossResult segment_shape_loss(const Matrix& class_probs,
                                   const std::vector<Segment>& segments, int delta,
                                   const BoolArray* active, double eps);

// Frame-wise cross-entropy plus tmse_weight * truncated MSE of consecutive
// log-probabilities (per-entry squared differences clipped at tmse_clip).
ModelLossResult model_loss(const Matrix& class_probs, const LabelSequence& seq,
                           double tmse_weight, double tmse_clip, double eps);

// lambda_b * L_B + lambda_s * L_S with the configured temporal assignment.
// Under Decoupled, L_B sees only the boundary region and L_S only interior
// frames outside it; under AllFrames both losses see the whole sequence.
// L_S contributes zero (value and gradient) while epoch < e_start.
ProposedLossResult proposed_loss(const ProbabilityMap& prob_map, const LabelSequence& seq,
                                 const LossConfig& cfg, int epoch);

// Full per-sequence objective: model loss plus the proposed auxiliary terms.
TotalLossResult total_loss(const ProbabilityMap& prob_map, const LabelSequence& seq,
                           const LossConfig& cfg, int epoch);

}  // namespace tas
