#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <json.hpp>

#include "tas/metrics.hpp"

namespace {

tas::LabelSequence make_seq(std::initializer_list<int> labels, int num_classes) {
    tas::LabelSequence seq;
    seq.labels.resize(static_cast<Eigen::Index>(labels.size()));
    Eigen::Index i = 0;
    for (int v : labels) seq.labels[i++] = v;
    seq.num_classes = num_classes;
    return seq;
}

tas::LabelSequence random_seq_of(std::mt19937_64& rng, int frames, int num_classes) {
    std::uniform_int_distribution<int> cls_dist(0, num_classes - 1);
    std::uniform_int_distribution<int> run_dist(1, 20);
    tas::LabelSequence seq;
    seq.num_classes = num_classes;
    seq.labels.resize(frames);
    Eigen::Index t = 0;
    while (t < seq.labels.size()) {
        const int c = cls_dist(rng);
        for (int i = run_dist(rng); i > 0 && t < seq.labels.size(); --i) {
            seq.labels[t++] = c;
        }
    }
    return seq;
}

std::pair<tas::LabelSequence, tas::LabelSequence> random_pair(std::mt19937_64& rng,
                                                              int max_frames,
                                                              int num_classes) {
    std::uniform_int_distribution<int> len_dist(1, max_frames);
    const int frames = len_dist(rng);
    return {random_seq_of(rng, frames, num_classes),
            random_seq_of(rng, frames, num_classes)};
}

// Deliberately naive re-implementations, structured differently from the
// library code, used as an independent oracle.
namespace naive {

double accuracy(const tas::LabelSequence& pred, const tas::LabelSequence& gt) {
    int hit = 0;
    for (int t = 0; t < gt.frames(); ++t) {
        if (pred.labels[t] == gt.labels[t]) ++hit;
    }
    return 100.0 * hit / gt.frames();
}

std::vector<int> classes_of(const tas::LabelSequence& seq) {
    std::vector<int> out;
    for (int t = 0; t < seq.frames(); ++t) {
        if (out.empty() || out.back() != seq.labels[t]) out.push_back(seq.labels[t]);
    }
    return out;
}

double edit(const tas::LabelSequence& pred, const tas::LabelSequence& gt) {
    const auto a = classes_of(pred);
    const auto b = classes_of(gt);
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
    for (std::size_t i = 0; i <= n; ++i) dp[i][0] = static_cast<int>(i);
    for (std::size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const int sub = dp[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            dp[i][j] = std::min({dp[i - 1][j] + 1, dp[i][j - 1] + 1, sub});
        }
    }
    const double denom = static_cast<double>(std::max(n, m));
    return 100.0 * (1.0 - dp[n][m] / denom);
}

struct Counts {
    int tp = 0, fp = 0, fn = 0;
};

Counts f1_counts(const tas::LabelSequence& pred, const tas::LabelSequence& gt,
                 double tau) {
    const auto ps = tas::extract_segments(pred);
    const auto gs = tas::extract_segments(gt);
    std::vector<bool> taken(gs.size(), false);
    Counts counts;
    for (const auto& p : ps) {
        double best_iou = -1.0;
        int best = -1;
        for (std::size_t g = 0; g < gs.size(); ++g) {
            if (taken[g] || gs[g].class_id != p.class_id) continue;
            const double iou = tas::segment_iou(p, gs[g]);
            if (iou > best_iou) {
                best_iou = iou;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0 && best_iou >= tau) {
            ++counts.tp;
            taken[best] = true;
        } else {
            ++counts.fp;
        }
    }
    counts.fn = static_cast<int>(gs.size()) - counts.tp;
    return counts;
}

double f1_percent(const Counts& c) {
    const double precision = c.tp + c.fp > 0 ? double(c.tp) / (c.tp + c.fp) : 0.0;
    const double recall = c.tp + c.fn > 0 ? double(c.tp) / (c.tp + c.fn) : 0.0;
    if (precision + recall == 0.0) return 0.0;
    return 100.0 * 2.0 * precision * recall / (precision + recall);
}

}  // namespace naive

}  // namespace

TEST_CASE("frame_accuracy fixtures") {
    const auto a = make_seq({0, 0, 1}, 2);
    CHECK(tas::frame_accuracy(a, a) == doctest::Approx(100.0));
    const auto b = make_seq({0, 1, 1}, 2);
    CHECK(tas::frame_accuracy(a, b) == doctest::Approx(100.0 * 2 / 3));
    const auto c = make_seq({1, 1, 0}, 2);
    CHECK(tas::frame_accuracy(a, c) == doctest::Approx(0.0));
    CHECK_THROWS_AS(tas::frame_accuracy(a, make_seq({0, 1}, 2)), tas::LengthMismatchError);
}

TEST_CASE("edit_score fixtures") {
    const auto gt = make_seq({0, 0, 1, 1, 2, 2}, 4);
    CHECK(tas::edit_score(gt, gt) == doctest::Approx(100.0));

    // predicted classes (A, X, B, C) vs ground truth (A, B, C)
    const auto pred = make_seq({0, 0, 3, 1, 1, 2}, 4);
    CHECK(tas::edit_score(pred, gt) == doctest::Approx(75.0));

    const auto gt5 = make_seq({0, 1, 2, 3, 4}, 5);
    const auto collapsed = make_seq({0, 0, 0, 0, 0}, 5);
    CHECK(tas::edit_score(collapsed, gt5) == doctest::Approx(20.0));
}

TEST_CASE("f1_at fixtures") {
    const auto gt = make_seq({0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 2);
    const auto pred = make_seq({0, 0, 0, 0, 0, 0, 1, 1, 1, 1}, 2);

    auto perfect = tas::f1_at(gt, gt, 0.5);
    CHECK(perfect.precision == doctest::Approx(100.0));
    CHECK(perfect.recall == doctest::Approx(100.0));
    CHECK(perfect.f1 == doctest::Approx(100.0));

    auto r = tas::f1_at(pred, gt, 0.5);
    CHECK(r.tp == 1);
    CHECK(r.fp == 1);
    CHECK(r.fn == 0);
    CHECK(r.precision == doctest::Approx(50.0));
    CHECK(r.recall == doctest::Approx(100.0));
    CHECK(r.f1 == doctest::Approx(100.0 * 2 / 3));

    r = tas::f1_at(pred, gt, 0.7);
    CHECK(r.tp == 0);
    CHECK(r.fp == 2);
    CHECK(r.fn == 1);
    CHECK(r.f1 == doctest::Approx(0.0));

    CHECK_THROWS_AS(tas::f1_at(pred, gt, 0.0), tas::ConfigError);
    CHECK_THROWS_AS(tas::f1_at(pred, gt, 1.5), tas::ConfigError);
}

TEST_CASE("metrics agree with the naive oracle on random pairs") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const int C = 2 + trial % 7;
        const auto [pred, gt] = random_pair(rng, 200, C);

        CHECK(tas::frame_accuracy(pred, gt) ==
              doctest::Approx(naive::accuracy(pred, gt)).epsilon(1e-11));
        CHECK(tas::edit_score(pred, gt) ==
              doctest::Approx(naive::edit(pred, gt)).epsilon(1e-11));

        double previous = 101.0;
        for (double tau : {0.1, 0.25, 0.5, 0.75, 1.0}) {
            const auto lib = tas::f1_at(pred, gt, tau);
            const auto counts = naive::f1_counts(pred, gt, tau);
            CHECK(lib.tp == counts.tp);
            CHECK(lib.fp == counts.fp);
            CHECK(lib.fn == counts.fn);
            CHECK(lib.f1 == doctest::Approx(naive::f1_percent(counts)).epsilon(1e-11));
            CHECK(lib.f1 <= previous + 1e-9);
            previous = lib.f1;
        }
    }
}

TEST_CASE("edit and f1 are relabeling invariant") {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        const int C = 5;
        const auto [pred, gt] = random_pair(rng, 120, C);

        std::vector<int> perm = {2, 0, 4, 1, 3};
        auto relabel = [&](const tas::LabelSequence& seq) {
            tas::LabelSequence out = seq;
            for (Eigen::Index t = 0; t < out.labels.size(); ++t) {
                out.labels[t] = perm[out.labels[t]];
            }
            return out;
        };
        const auto gt2 = relabel(gt);
        const auto pred2 = relabel(pred);
        CHECK(tas::edit_score(pred, gt) == doctest::Approx(tas::edit_score(pred2, gt2)));
        const auto before = tas::f1_at(pred, gt, 0.25);
        const auto after = tas::f1_at(pred2, gt2, 0.25);
        CHECK(before.f1 == doctest::Approx(after.f1));
        CHECK(before.tp == after.tp);
    }
}

TEST_CASE("metrics depend only on the segmentation") {
    std::mt19937_64 rng(77);
    const auto [pred, gt] = random_pair(rng, 150, 4);
    const auto round_trip = tas::render_labels(tas::extract_segments(pred), 4);
    CHECK(tas::edit_score(pred, gt) == tas::edit_score(round_trip, gt));
    CHECK(tas::f1_at(pred, gt, 0.5).f1 == tas::f1_at(round_trip, gt, 0.5).f1);
    CHECK(tas::frame_accuracy(pred, gt) == tas::frame_accuracy(round_trip, gt));
}

TEST_CASE("evaluate_corpus aggregates acc by frames, edit per video, f1 pooled") {
    const auto gt1 = make_seq({0, 0, 1, 1}, 2);
    const auto gt2 = make_seq({1, 1, 0, 0}, 2);
    const auto wrong2 = make_seq({0, 0, 1, 1}, 2);

    std::vector<std::pair<tas::LabelSequence, tas::LabelSequence>> pairs = {
        {gt1, gt1}, {wrong2, gt2}};
    const auto report = tas::evaluate_corpus(pairs, nullptr,
                                             tas::EditAggregation::PerVideoMean,
                                             tas::default_f1_thresholds());
    CHECK(report.acc == doctest::Approx(50.0));
    CHECK(report.videos.size() == 2);

    // pooled counts: video 1 has 2 TPs; video 2 has 0 TP, 2 FP, 2 FN
    const auto& f1 = report.f1.at(0);
    CHECK(f1.tp == 2);
    CHECK(f1.fp == 2);
    CHECK(f1.fn == 2);
    CHECK(f1.precision == doctest::Approx(50.0));
    CHECK(f1.recall == doctest::Approx(50.0));

    CHECK(report.edit == doctest::Approx((100.0 + 0.0) / 2.0));

    // modes diverge when videos have unequal segment counts
    const auto gt4 = make_seq({0, 1, 2, 3}, 4);
    const auto flat = make_seq({0, 0, 0, 0}, 4);
    std::vector<std::pair<tas::LabelSequence, tas::LabelSequence>> mixed = {
        {gt1, gt1}, {flat, gt4}};
    const auto per_video = tas::evaluate_corpus(mixed, nullptr,
                                                tas::EditAggregation::PerVideoMean,
                                                tas::default_f1_thresholds());
    const auto pooled = tas::evaluate_corpus(mixed, nullptr,
                                             tas::EditAggregation::Pooled,
                                             tas::default_f1_thresholds());
    CHECK(per_video.edit == doctest::Approx((100.0 + 25.0) / 2.0));
    CHECK(pooled.edit == doctest::Approx(100.0 * (1.0 - 3.0 / 6.0)));

    CHECK_THROWS_AS(
        tas::evaluate_corpus({}, nullptr, tas::EditAggregation::PerVideoMean,
                             tas::default_f1_thresholds()),
        tas::EmptySequenceError);
}

TEST_CASE("report serialization carries per-video rows and table formatting") {
    const auto gt = make_seq({0, 0, 1, 1, 2, 2}, 3);
    std::vector<std::pair<tas::LabelSequence, tas::LabelSequence>> pairs = {{gt, gt}};
    std::vector<std::string> ids = {"video_a"};
    const auto report = tas::evaluate_corpus(pairs, &ids,
                                             tas::EditAggregation::PerVideoMean,
                                             tas::default_f1_thresholds());
    const auto j = nlohmann::json::parse(report.to_json());
    CHECK(j["videos"][0]["id"] == "video_a");
    CHECK(j["acc"].get<double>() == doctest::Approx(100.0));
    CHECK(j["f1"]["10"]["f1"].get<double>() == doctest::Approx(100.0));
    const std::string table = report.to_table();
    CHECK(table.find("F1@10") != std::string::npos);
    CHECK(table.find("Edit") != std::string::npos);
    CHECK(table.find("100.00") != std::string::npos);
}
