#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tas/core.hpp"

namespace tas {

struct F1Score {
    double precision = 0.0;  // percent
    double recall = 0.0;     // percent
    double f1 = 0.0;         // percent
    long tp = 0;
    long fp = 0;
    long fn = 0;
};

double frame_accuracy(const LabelSequence& pred, const LabelSequence& gt);

// 100 * (1 - Levenshtein(pred segments, gt segments) / max count),
// unit insert/delete/substitute costs over segment-class sequences.
double edit_score(const LabelSequence& pred, const LabelSequence& gt);

// Greedy one-to-one matching in predicted-segment order: each predicted
// segment takes the not-yet-matched same-class ground-truth segment of
// maximal IoU; it is a TP (and consumes that segment) when the IoU is
// >= tau, otherwise an FP. Unconsumed ground-truth segments are FNs.
F1Score f1_at(const LabelSequence& pred, const LabelSequence& gt, double tau);

inline const std::vector<double>& default_f1_thresholds() {
    static const std::vector<double> taus{0.10, 0.25, 0.50};
    return taus;
}

enum class EditAggregation { PerVideoMean, Pooled };

struct EvalReport {
    double acc = 0.0;
    double edit = 0.0;
    std::vector<double> thresholds;
    std::vector<F1Score> f1;  // pooled counts and percents per threshold

    struct Video {
        std::string id;
        double acc = 0.0;
        double edit = 0.0;
        std::vector<F1Score> f1;
    };
    std::vector<Video> videos;

    std::string to_json() const;
    std::string to_table() const;  // columns F1@{10,25,50}, Edit, Acc
};

// Acc is frame-weighted across the corpus; Edit averages per-video scores
// (or pools distance over max-count when Pooled); F1 pools TP/FP/FN
// before computing precision and recall.
EvalReport evaluate_corpus(
    const std::vector<std::pair<LabelSequence, LabelSequence>>& pairs,
    const std::vector<std::string>* video_ids = nullptr,
    EditAggregation edit_mode = EditAggregation::PerVideoMean,
    const std::vector<double>& thresholds = default_f1_thresholds());

std::string threshold_label(double tau);

}  // namespace tas
