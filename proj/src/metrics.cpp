#include "tas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "tas/errors.hpp"

namespace tas {

namespace {

void check_lengths(const LabelSequence& pred, const LabelSequence& gt, const char* op) {
    if (pred.frames() != gt.frames()) {
        throw LengthMismatchError(std::string(op) + ": prediction has " +
                                  std::to_string(pred.frames()) + " frames, ground truth " +
                                  std::to_string(gt.frames()));
    }
}

long levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = b.size();
    std::vector<long> prev(n + 1), cur(n + 1);
    for (std::size_t j = 0; j <= n; ++j) prev[j] = static_cast<long>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = static_cast<long>(i);
        for (std::size_t j = 1; j <= n; ++j) {
            const long sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

std::vector<int> segment_classes(const LabelSequence& seq) {
    std::vector<int> classes;
    for (const Segment& s : extract_segments(seq)) classes.push_back(s.class_id);
    return classes;
}

struct EditCounts {
    long distance = 0;
    long denom = 0;
};

EditCounts edit_counts(const LabelSequence& pred, const LabelSequence& gt) {
    if (pred.frames() == 0 || gt.frames() == 0) {
        throw EmptySequenceError("edit_score: empty sequence");
    }
    const std::vector<int> a = segment_classes(pred);
    const std::vector<int> b = segment_classes(gt);
    return {levenshtein(a, b),
            static_cast<long>(std::max(a.size(), b.size()))};
}

F1Score from_counts(long tp, long fp, long fn) {
    F1Score s;
    s.tp = tp;
    s.fp = fp;
    s.fn = fn;
    s.precision = (tp + fp > 0) ? 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = (tp + fn > 0) ? 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double pr = s.precision + s.recall;
    s.f1 = (pr > 0.0) ? 2.0 * s.precision * s.recall / pr : 0.0;
    return s;
}

}  // namespace

double frame_accuracy(const LabelSequence& pred, const LabelSequence& gt) {
    check_lengths(pred, gt, "frame_accuracy");
    if (gt.frames() == 0) throw EmptySequenceError("frame_accuracy: empty sequence");
    long correct = 0;
    for (int t = 0; t < gt.frames(); ++t) {
        if (pred.labels[t] == gt.labels[t]) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(gt.frames());
}

double edit_score(const LabelSequence& pred, const LabelSequence& gt) {
    const EditCounts c = edit_counts(pred, gt);
    return 100.0 * (1.0 - static_cast<double>(c.distance) / static_cast<double>(c.denom));
}

F1Score f1_at(const LabelSequence& pred, const LabelSequence& gt, double tau) {
    check_lengths(pred, gt, "f1_at");
    if (tau <= 0.0 || tau > 1.0) {
        throw ConfigError("f1_at: tau must lie in (0, 1], got " + std::to_string(tau));
    }
    const std::vector<Segment> ps = extract_segments(pred);
    const std::vector<Segment> gs = extract_segments(gt);
    std::vector<bool> used(gs.size(), false);
    long tp = 0, fp = 0;
    for (const Segment& p : ps) {
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t j = 0; j < gs.size(); ++j) {
            if (used[j] || gs[j].class_id != p.class_id) continue;
            const double iou = segment_iou(p, gs[j]);
            if (iou > best_iou) {
                best_iou = iou;
                best = static_cast<int>(j);
            }
        }
        if (best >= 0 && best_iou >= tau) {
            ++tp;
            used[best] = true;
        } else {
            ++fp;
        }
    }
    const long fn = static_cast<long>(gs.size()) - tp;
    return from_counts(tp, fp, fn);
}

EvalReport evaluate_corpus(
    const std::vector<std::pair<LabelSequence, LabelSequence>>& pairs,
    const std::vector<std::string>* video_ids, EditAggregation edit_mode,
    const std::vector<double>& thresholds) {
    if (pairs.empty()) throw EmptySequenceError("evaluate_corpus: no videos");
    if (video_ids != nullptr && video_ids->size() != pairs.size()) {
        throw LengthMismatchError("evaluate_corpus: " + std::to_string(video_ids->size()) +
                                  " ids for " + std::to_string(pairs.size()) + " videos");
    }
    EvalReport report;
    report.thresholds = thresholds;
    report.f1.assign(thresholds.size(), F1Score{});

    long correct = 0, total = 0;
    double edit_sum = 0.0;
    long pooled_distance = 0, pooled_denom = 0;
    std::vector<long> tp(thresholds.size(), 0), fp(thresholds.size(), 0),
        fn(thresholds.size(), 0);

    for (std::size_t v = 0; v < pairs.size(); ++v) {
        const std::string id =
            (video_ids != nullptr) ? (*video_ids)[v] : "video_" + std::to_string(v);
        const LabelSequence& pred = pairs[v].first;
        const LabelSequence& gt = pairs[v].second;
        EvalReport::Video video;
        video.id = id;
        try {
            video.acc = frame_accuracy(pred, gt);
            const EditCounts ec = edit_counts(pred, gt);
            video.edit =
                100.0 * (1.0 - static_cast<double>(ec.distance) / static_cast<double>(ec.denom));
            pooled_distance += ec.distance;
            pooled_denom += ec.denom;
            for (std::size_t k = 0; k < thresholds.size(); ++k) {
                const F1Score s = f1_at(pred, gt, thresholds[k]);
                video.f1.push_back(s);
                tp[k] += s.tp;
                fp[k] += s.fp;
                fn[k] += s.fn;
            }
        } catch (const Error& e) {
            throw LengthMismatchError("evaluate_corpus: video " + id + ": " + e.what());
        }
        long video_correct = 0;
        for (int t = 0; t < gt.frames(); ++t) {
            if (pred.labels[t] == gt.labels[t]) ++video_correct;
        }
        correct += video_correct;
        total += gt.frames();
        edit_sum += video.edit;
        report.videos.push_back(std::move(video));
    }

    report.acc = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
    report.edit =
        (edit_mode == EditAggregation::PerVideoMean)
            ? edit_sum / static_cast<double>(pairs.size())
            : 100.0 * (1.0 - static_cast<double>(pooled_distance) / static_cast<double>(pooled_denom));
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
        report.f1[k] = from_counts(tp[k], fp[k], fn[k]);
    }
    return report;
}

std::string threshold_label(double tau) {
    const double pct = 100.0 * tau;
    const long rounded = std::lround(pct);
    if (std::abs(pct - static_cast<double>(rounded)) < 1e-9) {
        return std::to_string(rounded);
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", pct);
    return buf;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["acc"] = acc;
    j["edit"] = edit;
    nlohmann::json f1_obj = nlohmann::json::object();
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
        f1_obj[threshold_label(thresholds[k])] = {{"precision", f1[k].precision},
                                                  {"recall", f1[k].recall},
                                                  {"f1", f1[k].f1},
                                                  {"tp", f1[k].tp},
                                                  {"fp", f1[k].fp},
                                                  {"fn", f1[k].fn}};
    }
    j["f1"] = std::move(f1_obj);
    nlohmann::json vids = nlohmann::json::array();
    for (const Video& v : videos) {
        nlohmann::json jv;
        jv["id"] = v.id;
        jv["acc"] = v.acc;
        jv["edit"] = v.edit;
        nlohmann::json vf1 = nlohmann::json::object();
        for (std::size_t k = 0; k < thresholds.size() && k < v.f1.size(); ++k) {
            vf1[threshold_label(thresholds[k])] = {{"precision", v.f1[k].precision},
                                                   {"recall", v.f1[k].recall},
                                                   {"f1", v.f1[k].f1},
                                                   {"tp", v.f1[k].tp},
                                                   {"fp", v.f1[k].fp},
                                                   {"fn", v.f1[k].fn}};
        }
        jv["f1"] = std::move(vf1);
        vids.push_back(std::move(jv));
    }
    j["videos"] = std::move(vids);
    return j.dump(2);
}

std::string EvalReport::to_table() const {
    std::ostringstream out;
    char buf[64];
    for (double tau : thresholds) {
        std::snprintf(buf, sizeof(buf), "%-9s", ("F1@" + threshold_label(tau)).c_str());
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-9s%s\n", "Edit", "Acc");
    out << buf;
    for (const F1Score& s : f1) {
        std::snprintf(buf, sizeof(buf), "%-9.2f", s.f1);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-9.2f%.2f\n", edit, acc);
    out << buf;
    return out.str();
}

}  // namespace tas
