#include "tas/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tas {

namespace {

double clamp_prob(double p, double eps) { return std::min(std::max(p, eps), 1.0 - eps); }

}  // namespace

void LossConfig::validate() const {
    if (lambda_b < 0.0 || lambda_s < 0.0) {
        throw ConfigError("LossConfig: lambda_b and lambda_s must be >= 0");
    }
    if (window_w < 0) throw ConfigError("LossConfig: window_w must be >= 0");
    if (margin_delta < 0) throw ConfigError("LossConfig: margin_delta must be >= 0");
    if (e_start < 0) throw ConfigError("LossConfig: e_start must be >= 0");
    if (!(eps > 0.0 && eps < 1e-3)) {
        throw ConfigError("LossConfig: eps must lie in (0, 1e-3)");
    }
    if (tmse_weight < 0.0) throw ConfigError("LossConfig: tmse_weight must be >= 0");
    if (tmse_clip <= 0.0) throw ConfigError("LossConfig: tmse_clip must be > 0");
}

bool LossBreakdown::finite() const {
    return std::isfinite(l_model) && std::isfinite(l_b) && std::isfinite(l_s) &&
           std::isfinite(l_total);
}

BoundaryBceResult boundary_bce(const Vector& boundary_probs, const BoundaryTarget& target,
                               const BoolArray& active, double eps) {
    const int frames = static_cast<int>(boundary_probs.size());
    if (target.frames() != frames || static_cast<int>(active.size()) != frames) {
        throw ShapeMismatchError("boundary_bce: probs/target/active lengths disagree (" +
                                 std::to_string(frames) + ", " +
                                 std::to_string(target.frames()) + ", " +
                                 std::to_string(active.size()) + ")");
    }
    BoundaryBceResult res;
    res.dlogits = Vector::Zero(frames);
    for (int t = 0; t < frames; ++t) {
        res.n_active += active[t] ? 1 : 0;
    }
    if (res.n_active == 0) {
        throw ActiveSetEmptyError("boundary_bce: active set is empty");
    }
    const double inv_n = 1.0 / res.n_active;
    double acc = 0.0;
    for (int t = 0; t < frames; ++t) {
        if (!active[t]) continue;
        const double b = target.mask[t] ? 1.0 : 0.0;
        const double p = clamp_prob(boundary_probs[t], eps);
        acc -= b * std::log(p) + (1.0 - b) * std::log(1.0 - p);
        // Gradient of BCE through the sigmoid; the clamp only guards the logs.
        res.dlogits[t] = (boundary_probs[t] - b) * inv_n;
    }
    res.loss = acc * inv_n;
    return res;
}

BoundaryBceResult boundary_bce(const Vector& boundary_probs, const BoundaryTarget& target,
                               double eps) {
    const BoolArray all = BoolArray::Constant(boundary_probs.size(), true);
    return boundary_bce(boundary_probs, target, all, eps);
}

Vector l1_normalize(const Vector& v, double eps) {
    if ((v.array() < 0.0).any()) {
        throw ConfigError("l1_normalize: input must be elementwise nonnegative");
    }
    const Vector shifted = v.array() + eps;
    return shifted / shifted.sum();
}

Vector cdf(const Vector& p) {
    Vector out(p.size());
    double acc = 0.0;
    for (int j = 0; j < p.size(); ++j) {
        acc += p[j];
        out[j] = acc;
    }
    return out;
}

ShapeLossResult segment_shape_loss(const Matrix& class_probs,
                                   const std::vector<Segment>& segments, int delta,
                                   const BoolArray* active, double eps) {
    const int num_classes = static_cast<int>(class_probs.rows());
    const int frames = static_cast<int>(class_probs.cols());
    if (active != nullptr && static_cast<int>(active->size()) != frames) {
        throw ShapeMismatchError("segment_shape_loss: active mask length " +
                                 std::to_string(active->size()) + " != T " +
                                 std::to_string(frames));
    }
    ShapeLossResult res;
    res.dlogits = Matrix::Zero(num_classes, frames);

    struct SegmentGrad {
        int class_id;
        std::vector<int> interior;
        Vector dvalues;  // w.r.t. the raw softmax row values
    };
    double loss_sum = 0.0;
    std::vector<SegmentGrad> grads;

    for (const Segment& seg : segments) {
        if (seg.class_id < 0 || seg.class_id >= num_classes || seg.end > frames) {
            throw ShapeMismatchError("segment_shape_loss: segment outside probability map");
        }
        std::vector<int> interior;
        for (int t = seg.start + delta; t < seg.end - delta; ++t) {
            if (active == nullptr || (*active)[t]) interior.push_back(t);
        }
        const int len = static_cast<int>(interior.size());
        if (len <= 0) {
            res.n_skipped += 1;
            continue;
        }
        res.n_used += 1;

        Vector values(len);
        for (int j = 0; j < len; ++j) values[j] = class_probs(seg.class_id, interior[j]);
        const double denom = values.sum() + len * eps;
        const Vector p_hat = (values.array() + eps) / denom;
        const Vector cum = cdf(p_hat);

        // Squared distance to the uniform CDF (j+1)/L.
        double seg_loss = 0.0;
        Vector diff(len);
        for (int j = 0; j < len; ++j) {
            diff[j] = cum[j] - static_cast<double>(j + 1) / len;
            seg_loss += diff[j] * diff[j];
        }
        loss_sum += seg_loss / len;

        // d(seg_loss)/d p_hat[k] is a suffix sum of 2*diff/L; the
        // l1-normalization Jacobian maps it onto the raw row values.
        Vector g(len);
        double suffix = 0.0;
        for (int j = len - 1; j >= 0; --j) {
            suffix += 2.0 * diff[j] / len;
            g[j] = suffix;
        }
        const double g_dot_p = g.dot(p_hat);
        Vector dvalues = (g.array() - g_dot_p) / denom;
        grads.push_back({seg.class_id, std::move(interior), std::move(dvalues)});
    }

    if (res.n_used == 0) {
        // Every segment skipped: zero loss, zero gradient, counts reported.
        return res;
    }

    const double inv_n = 1.0 / res.n_used;
    res.loss = loss_sum * inv_n;

    // Softmax Jacobian per column: the loss touches only row c of each
    // column, so d/dz_c' = r * y_c * (delta_{c,c'} - y_c').
    for (const SegmentGrad& sg : grads) {
        for (std::size_t j = 0; j < sg.interior.size(); ++j) {
            const int t = sg.interior[j];
            const double r = sg.dvalues[static_cast<int>(j)] * inv_n;
            const double y_c = class_probs(sg.class_id, t);
            for (int c = 0; c < num_classes; ++c) {
                const double indicator = (c == sg.class_id) ? 1.0 : 0.0;
                res.dlogits(c, t) += r * y_c * (indicator - class_probs(c, t));
            }
        }
    }
    return res;
}

ModelLossResult model_loss(const Matrix& class_probs, const LabelSequence& seq,
                           double tmse_weight, double tmse_clip, double eps) {
    const int num_classes = static_cast<int>(class_probs.rows());
    const int frames = static_cast<int>(class_probs.cols());
    if (seq.frames() != frames) {
        throw LengthMismatchError("model_loss: label length " + std::to_string(seq.frames()) +
                                  " != probability map length " + std::to_string(frames));
    }
    if (seq.num_classes != num_classes) {
        throw ShapeMismatchError("model_loss: class count mismatch");
    }

    ModelLossResult res;
    res.dlogits = Matrix::Zero(num_classes, frames);

    // Frame-wise cross-entropy, probabilities clamped before the log.
    double ce = 0.0;
    for (int t = 0; t < frames; ++t) {
        ce -= std::log(clamp_prob(class_probs(seq.labels[t], t), eps));
        res.dlogits.col(t) = class_probs.col(t) / frames;
        res.dlogits(seq.labels[t], t) -= 1.0 / frames;
    }
    res.cross_entropy = ce / frames;

    // Truncated MSE on consecutive log-probabilities. The per-entry squared
    // difference is clipped at tmse_clip; clipped entries carry no gradient.
    if (tmse_weight > 0.0 && frames > 1) {
        Matrix logp(num_classes, frames);
        for (int t = 0; t < frames; ++t) {
            for (int c = 0; c < num_classes; ++c) {
                logp(c, t) = std::log(std::max(class_probs(c, t), eps));
            }
        }
        const double norm = 1.0 / (static_cast<double>(num_classes) * (frames - 1));
        Matrix dlogp = Matrix::Zero(num_classes, frames);
        double acc = 0.0;
        for (int t = 1; t < frames; ++t) {
            for (int c = 0; c < num_classes; ++c) {
                const double d = logp(c, t) - logp(c, t - 1);
                const double sq = d * d;
                if (sq >= tmse_clip) {
                    acc += tmse_clip;
                } else {
                    acc += sq;
                    dlogp(c, t) += 2.0 * d * norm;
                    dlogp(c, t - 1) -= 2.0 * d * norm;
                }
            }
        }
        res.tmse = acc * norm;
        // log-softmax Jacobian: d l_c / d z_c' = delta - p_c'.
        for (int t = 0; t < frames; ++t) {
            const double col_sum = dlogp.col(t).sum();
            res.dlogits.col(t) +=
                tmse_weight * (dlogp.col(t) - col_sum * class_probs.col(t));
        }
    }

    res.loss = res.cross_entropy + tmse_weight * res.tmse;
    return res;
}

ProposedLossResult proposed_loss(const ProbabilityMap& prob_map, const LabelSequence& seq,
                                 const LossConfig& cfg, int epoch) {
    cfg.validate();
    if (epoch < 0) throw ConfigError("proposed_loss: epoch must be >= 0");
    const int frames = seq.frames();
    if (prob_map.frames() != frames) {
        throw LengthMismatchError("proposed_loss: map length " +
                                  std::to_string(prob_map.frames()) + " != labels " +
                                  std::to_string(frames));
    }

    ProposedLossResult res;
    res.dclass_logits = Matrix::Zero(prob_map.num_classes(), frames);
    res.dboundary_logits = Vector::Zero(frames);

    const BoundaryTarget target = boundary_targets(seq);
    const RegionMask region = region_partition(seq, cfg.window_w);
    res.n_boundary_frames = region.boundary_count();

    const bool decoupled = cfg.assignment == Assignment::Decoupled;

    // Boundary-regression term. Under Decoupled an empty boundary region
    // (no transitions) contributes zero.
    if (cfg.lambda_b > 0.0) {
        if (decoupled) {
            if (res.n_boundary_frames > 0) {
                BoundaryBceResult bce = boundary_bce(prob_map.boundary_probs, target,
                                                     region.is_boundary_region, cfg.eps);
                res.l_b = bce.loss;
                res.dboundary_logits = cfg.lambda_b * bce.dlogits;
            }
        } else {
            BoundaryBceResult bce = boundary_bce(prob_map.boundary_probs, target, cfg.eps);
            res.l_b = bce.loss;
            res.dboundary_logits = cfg.lambda_b * bce.dlogits;
            res.n_boundary_frames = bce.n_active;
        }
    }

    // Segment-shape term, activated once epoch reaches e_start.
    if (cfg.lambda_s > 0.0 && epoch >= cfg.e_start) {
        const std::vector<Segment> segments = extract_segments(seq);
        const BoolArray non_boundary = !region.is_boundary_region;
        const BoolArray* active = decoupled ? &non_boundary : nullptr;
        ShapeLossResult shape = segment_shape_loss(prob_map.class_probs, segments,
                                                   cfg.margin_delta, active, cfg.eps);
        res.l_s = shape.loss;
        res.n_segments_used = shape.n_used;
        res.n_segments_skipped = shape.n_skipped;
        res.dclass_logits = cfg.lambda_s * shape.dlogits;
    }

    res.loss = cfg.lambda_b * res.l_b + cfg.lambda_s * res.l_s;
    return res;
}

TotalLossResult total_loss(const ProbabilityMap& prob_map, const LabelSequence& seq,
                           const LossConfig& cfg, int epoch) {
    ModelLossResult model = model_loss(prob_map.class_probs, seq, cfg.tmse_weight,
                                       cfg.tmse_clip, cfg.eps);
    ProposedLossResult aux = proposed_loss(prob_map, seq, cfg, epoch);

    TotalLossResult res;
    res.breakdown.l_model = model.loss;
    res.breakdown.l_b = aux.l_b;
    res.breakdown.l_s = aux.l_s;
    res.breakdown.l_total = model.loss + cfg.lambda_b * aux.l_b + cfg.lambda_s * aux.l_s;
    res.breakdown.n_boundary_frames = aux.n_boundary_frames;
    res.breakdown.n_segments_used = aux.n_segments_used;
    res.breakdown.n_segments_skipped = aux.n_segments_skipped;
    res.dclass_logits = model.dlogits + aux.dclass_logits;
    res.dboundary_logits = aux.dboundary_logits;
    return res;
}

}  // namespace tas
