#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "tas/core.hpp"
#include "tas/losses.hpp"

namespace {

tas::LabelSequence make_seq(std::initializer_list<int> labels, int num_classes) {
    tas::LabelSequence seq;
    seq.labels.resize(static_cast<Eigen::Index>(labels.size()));
    Eigen::Index i = 0;
    for (int v : labels) seq.labels[i++] = v;
    seq.num_classes = num_classes;
    return seq;
}

tas::Matrix softmax_cols(const tas::Matrix& z) {
    tas::Matrix p = z;
    for (int t = 0; t < p.cols(); ++t) {
        tas::Vector col = p.col(t);
        col.array() -= col.maxCoeff();
        col = col.array().exp();
        p.col(t) = col / col.sum();
    }
    return p;
}

tas::Vector sigmoid(const tas::Vector& z) {
    return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

tas::LabelSequence random_labels(std::mt19937_64& rng, int frames, int num_classes,
                                 int min_len) {
    tas::LabelSequence seq;
    seq.num_classes = num_classes;
    seq.labels.resize(frames);
    std::uniform_int_distribution<int> cls(0, num_classes - 1);
    std::uniform_int_distribution<int> len(min_len, 2 * min_len);
    int t = 0;
    int prev = -1;
    while (t < frames) {
        int c = cls(rng);
        while (c == prev) c = cls(rng);
        const int run = std::min(len(rng), frames - t);
        for (int i = 0; i < run; ++i) seq.labels[t + i] = c;
        t += run;
        prev = c;
    }
    return seq;
}

}  // namespace

TEST_CASE("boundary_bce fixture over a masked active set") {
    tas::Vector probs(4);
    probs << 0.9, 0.2, 0.7, 0.1;
    const auto seq = make_seq({0, 0, 1, 1}, 2);
    const auto target = tas::boundary_targets(seq);
    const auto region = tas::region_partition(seq, 1);
    const auto res = tas::boundary_bce(probs, target, region.is_boundary_region, 1e-8);

    const double expected = -(std::log(0.8) + std::log(0.7) + std::log(0.9)) / 3.0;
    CHECK(res.loss == doctest::Approx(expected).epsilon(1e-12));
    CHECK(res.loss == doctest::Approx(0.2284).epsilon(1e-3));
    CHECK(res.n_active == 3);
    CHECK(res.dlogits[0] == 0.0);
    CHECK(res.dlogits[1] == doctest::Approx(0.2 / 3.0));
    CHECK(res.dlogits[2] == doctest::Approx(-0.3 / 3.0));
    CHECK(res.dlogits[3] == doctest::Approx(0.1 / 3.0));
}

TEST_CASE("boundary_bce on uniform 0.5 equals ln 2") {
    const auto seq = make_seq({0, 0, 0, 1, 1, 1, 2, 2}, 3);
    const auto target = tas::boundary_targets(seq);
    const tas::Vector probs = tas::Vector::Constant(8, 0.5);
    const auto res = tas::boundary_bce(probs, target, 1e-8);
    CHECK(std::abs(res.loss - std::log(2.0)) < 1e-10);
    CHECK(res.n_active == 8);
}

TEST_CASE("boundary_bce near-perfect prediction gives near-zero loss") {
    const auto seq = make_seq({0, 0, 1, 1}, 2);
    const auto target = tas::boundary_targets(seq);
    tas::Vector probs(4);
    for (int t = 0; t < 4; ++t) probs[t] = target.mask[t] ? 1.0 : 0.0;
    const auto res = tas::boundary_bce(probs, target, 1e-8);
    CHECK(res.loss >= 0.0);
    CHECK(res.loss < 1e-7);
}

TEST_CASE("boundary_bce throws on an empty active set") {
    const auto seq = make_seq({0, 0, 0, 0}, 1);
    const auto target = tas::boundary_targets(seq);
    const tas::Vector probs = tas::Vector::Constant(4, 0.5);
    const tas::BoolArray none = tas::BoolArray::Constant(4, false);
    CHECK_THROWS_AS(tas::boundary_bce(probs, target, none, 1e-8),
                    tas::ActiveSetEmptyError);
}

TEST_CASE("boundary_bce gradient matches finite differences") {
    std::mt19937_64 rng(123);
    std::normal_distribution<double> gauss(0.0, 1.5);
    for (int trial = 0; trial < 5; ++trial) {
        const auto seq = random_labels(rng, 60, 3, 6);
        const auto target = tas::boundary_targets(seq);
        const auto region = tas::region_partition(seq, 5);
        tas::Vector logits(60);
        for (int t = 0; t < 60; ++t) logits[t] = gauss(rng);

        const auto res =
            tas::boundary_bce(sigmoid(logits), target, region.is_boundary_region, 1e-8);
        const double h = 1e-5;
        for (int t = 0; t < 60; ++t) {
            tas::Vector lo = logits, hi = logits;
            lo[t] -= h;
            hi[t] += h;
            const double f_lo =
                tas::boundary_bce(sigmoid(lo), target, region.is_boundary_region, 1e-8).loss;
            const double f_hi =
                tas::boundary_bce(sigmoid(hi), target, region.is_boundary_region, 1e-8).loss;
            const double numeric = (f_hi - f_lo) / (2.0 * h);
            CHECK(std::abs(res.dlogits[t] - numeric) /
                      std::max(1.0, std::abs(numeric)) <
                  1e-6);
        }
    }
}

TEST_CASE("l1_normalize handles uniform, peaked, and all-zero inputs") {
    tas::Vector v(4);
    v << 1, 1, 1, 1;
    tas::Vector p = tas::l1_normalize(v, 1e-8);
    for (int i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);

    v << 2, 0, 0, 0;
    p = tas::l1_normalize(v, 1e-8);
    CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(p[1] < 1e-8);

    tas::Vector z = tas::Vector::Zero(2);
    p = tas::l1_normalize(z, 1e-8);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));
}

TEST_CASE("cdf running sums") {
    tas::Vector p(4);
    p << 0.25, 0.25, 0.25, 0.25;
    tas::Vector c = tas::cdf(p);
    CHECK(c[0] == doctest::Approx(0.25));
    CHECK(c[1] == doctest::Approx(0.5));
    CHECK(c[2] == doctest::Approx(0.75));
    CHECK(c[3] == doctest::Approx(1.0));

    tas::Vector one(1);
    one << 1.0;
    CHECK(tas::cdf(one)[0] == doctest::Approx(1.0));

    p << 0.4, 0.1, 0.1, 0.4;
    c = tas::cdf(p);
    CHECK(c[0] == doctest::Approx(0.4));
    CHECK(c[1] == doctest::Approx(0.5));
    CHECK(c[2] == doctest::Approx(0.6));
    CHECK(c[3] == doctest::Approx(1.0));
    for (int i = 1; i < 4; ++i) CHECK(c[i] >= c[i - 1]);
}

TEST_CASE("segment_shape_loss is zero on uniform interiors") {
    const int C = 4, T = 60;
    const tas::Matrix probs = tas::Matrix::Constant(C, T, 1.0 / C);
    std::mt19937_64 rng(5);
    const auto seq = random_labels(rng, T, C, 15);
    const auto segs = tas::extract_segments(seq);
    const auto res = tas::segment_shape_loss(probs, segs, 5, nullptr, 1e-8);
    CHECK(std::abs(res.loss) <= 1e-12);
    CHECK(res.n_used >= 1);
    CHECK(res.dlogits.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("segment_shape_loss matches the hand-computed four-frame fixture") {
    const int C = 2, T = 14;
    tas::Matrix probs(C, T);
    probs.row(0).setConstant(0.5);
    const double interior[4] = {0.4, 0.1, 0.1, 0.4};
    for (int j = 0; j < 4; ++j) probs(0, 5 + j) = interior[j];
    probs.row(1) = tas::Matrix::Constant(1, T, 1.0) - probs.row(0);

    std::vector<tas::Segment> segs = {{0, 0, 14}};
    const auto res = tas::segment_shape_loss(probs, segs, 5, nullptr, 1e-12);
    CHECK(std::abs(res.loss - 0.01125) < 1e-10);
    CHECK(res.n_used == 1);
    CHECK(res.n_skipped == 0);
}

TEST_CASE("segment_shape_loss skips short segments and counts them") {
    const int C = 2, T = 40;
    const tas::Matrix probs = tas::Matrix::Constant(C, T, 0.5);
    std::vector<tas::Segment> segs = {{0, 0, 10}, {1, 10, 40}};
    auto res = tas::segment_shape_loss(probs, segs, 5, nullptr, 1e-8);
    CHECK(res.n_used == 1);
    CHECK(res.n_skipped == 1);

    segs = {{0, 0, 10}, {1, 10, 20}};
    res = tas::segment_shape_loss(probs, segs, 5, nullptr, 1e-8);
    CHECK(res.n_used == 0);
    CHECK(res.n_skipped == 2);
    CHECK(res.loss == 0.0);
    CHECK(res.dlogits.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("segment_shape_loss is nonnegative and scale invariant") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto seq = random_labels(rng, 80, 3, 14);
        const auto segs = tas::extract_segments(seq);
        tas::Matrix logits(3, 80);
        for (int i = 0; i < logits.size(); ++i) logits.data()[i] = gauss(rng);
        const tas::Matrix probs = softmax_cols(logits);
        const auto res = tas::segment_shape_loss(probs, segs, 5, nullptr, 1e-8);
        CHECK(res.loss >= 0.0);

        tas::Matrix scaled = probs;
        const auto& s0 = segs.front();
        if (s0.length() > 10) {
            scaled.block(s0.class_id, s0.start + 5, 1, s0.length() - 10) *= 3.0;
            const auto res2 = tas::segment_shape_loss(scaled, segs, 5, nullptr, 1e-8);
            CHECK(std::abs(res2.loss - res.loss) < 1e-6);
        }
    }
}

TEST_CASE("segment_shape_loss gradient is zero outside interiors and matches FD") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> gauss(0.0, 1.2);
    const int C = 3, T = 48;
    const auto seq = random_labels(rng, T, C, 14);
    const auto segs = tas::extract_segments(seq);
    tas::Matrix logits(C, T);
    for (int i = 0; i < logits.size(); ++i) logits.data()[i] = gauss(rng);

    const auto res = tas::segment_shape_loss(softmax_cols(logits), segs, 5, nullptr, 1e-8);

    tas::BoolArray interior = tas::BoolArray::Constant(T, false);
    for (const auto& s : segs) {
        for (int t = s.start + 5; t < s.end - 5; ++t) interior[t] = true;
    }
    for (int t = 0; t < T; ++t) {
        if (!interior[t]) {
            CHECK(res.dlogits.col(t).cwiseAbs().maxCoeff() == 0.0);
        }
    }

    const double h = 1e-5;
    for (int i = 0; i < logits.size(); ++i) {
        tas::Matrix lo = logits, hi = logits;
        lo.data()[i] -= h;
        hi.data()[i] += h;
        const double f_lo =
            tas::segment_shape_loss(softmax_cols(lo), segs, 5, nullptr, 1e-8).loss;
        const double f_hi =
            tas::segment_shape_loss(softmax_cols(hi), segs, 5, nullptr, 1e-8).loss;
        const double numeric = (f_hi - f_lo) / (2.0 * h);
        CHECK(std::abs(res.dlogits.data()[i] - numeric) /
                  std::max(1.0, std::abs(numeric)) <
              1e-5);
    }
}

TEST_CASE("model_loss cross-entropy fixtures") {
    tas::Matrix probs(2, 2);
    probs << 0.9, 0.2, 0.1, 0.8;
    const auto seq = make_seq({0, 1}, 2);
    const auto res = tas::model_loss(probs, seq, 0.0, 16.0, 1e-8);
    const double expected = -(std::log(0.9) + std::log(0.8)) / 2.0;
    CHECK(res.cross_entropy == doctest::Approx(expected).epsilon(1e-12));
    CHECK(res.cross_entropy == doctest::Approx(0.1643).epsilon(1e-3));
    CHECK(res.tmse == 0.0);
    CHECK(res.loss == doctest::Approx(res.cross_entropy));

    const int C = 5, T = 30;
    const tas::Matrix uniform = tas::Matrix::Constant(C, T, 1.0 / C);
    std::mt19937_64 rng(2);
    const auto seq2 = random_labels(rng, T, C, 5);
    const auto res2 = tas::model_loss(uniform, seq2, 0.0, 16.0, 1e-8);
    CHECK(res2.cross_entropy == doctest::Approx(std::log(double(C))).epsilon(1e-10));

    tas::Matrix onehot = tas::Matrix::Zero(C, T);
    for (int t = 0; t < T; ++t) onehot(seq2.labels[t], t) = 1.0;
    const auto res3 = tas::model_loss(onehot, seq2, 0.0, 16.0, 1e-8);
    CHECK(res3.cross_entropy < 1e-6);
}

TEST_CASE("model_loss combines cross-entropy and truncated smoothing") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> gauss(0.0, 2.0);
    const int C = 4, T = 36;
    const auto seq = random_labels(rng, T, C, 6);
    tas::Matrix logits(C, T);
    for (int i = 0; i < logits.size(); ++i) logits.data()[i] = gauss(rng);
    const tas::Matrix probs = softmax_cols(logits);

    const auto plain = tas::model_loss(probs, seq, 0.0, 16.0, 1e-8);
    const auto smoothed = tas::model_loss(probs, seq, 0.15, 16.0, 1e-8);
    CHECK(smoothed.cross_entropy == doctest::Approx(plain.cross_entropy));
    CHECK(smoothed.tmse >= 0.0);
    CHECK(smoothed.loss ==
          doctest::Approx(smoothed.cross_entropy + 0.15 * smoothed.tmse).epsilon(1e-12));
}

TEST_CASE("model_loss gradient matches finite differences") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int C = 3, T = 24;
    const auto seq = random_labels(rng, T, C, 4);
    tas::Matrix logits(C, T);
    for (int i = 0; i < logits.size(); ++i) logits.data()[i] = gauss(rng);

    const auto res = tas::model_loss(softmax_cols(logits), seq, 0.15, 16.0, 1e-8);
    const double h = 1e-5;
    for (int i = 0; i < logits.size(); ++i) {
        tas::Matrix lo = logits, hi = logits;
        lo.data()[i] -= h;
        hi.data()[i] += h;
        const double f_lo = tas::model_loss(softmax_cols(lo), seq, 0.15, 16.0, 1e-8).loss;
        const double f_hi = tas::model_loss(softmax_cols(hi), seq, 0.15, 16.0, 1e-8).loss;
        const double numeric = (f_hi - f_lo) / (2.0 * h);
        CHECK(std::abs(res.dlogits.data()[i] - numeric) /
                  std::max(1.0, std::abs(numeric)) <
              1e-5);
    }
}

TEST_CASE("proposed_loss honors warm-up and zero weights") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int C = 3, T = 64;
    const auto seq = random_labels(rng, T, C, 14);
    tas::Matrix logits(C, T);
    for (int i = 0; i < logits.size(); ++i) logits.data()[i] = gauss(rng);
    tas::Vector blogits(T);
    for (int t = 0; t < T; ++t) blogits[t] = gauss(rng);

    tas::ProbabilityMap pm;
    pm.class_probs = softmax_cols(logits);
    pm.boundary_probs = sigmoid(blogits);

    tas::LossConfig cfg;
    cfg.lambda_b = 0.5;
    cfg.lambda_s = 0.25;
    cfg.e_start = 20;

    const auto before = tas::proposed_loss(pm, seq, cfg, 19);
    CHECK(before.l_s == 0.0);
    CHECK(before.dclass_logits.cwiseAbs().maxCoeff() == 0.0);
    CHECK(before.l_b > 0.0);

    const auto after = tas::proposed_loss(pm, seq, cfg, 20);
    CHECK(after.l_s > 0.0);
    CHECK(after.l_b == doctest::Approx(before.l_b));

    tas::LossConfig off = cfg;
    off.lambda_b = 0.0;
    off.lambda_s = 0.0;
    const auto zero = tas::proposed_loss(pm, seq, off, 50);
    CHECK(zero.loss == 0.0);
    CHECK(zero.l_b == 0.0);
    CHECK(zero.l_s == 0.0);
    CHECK(zero.dclass_logits.cwiseAbs().maxCoeff() == 0.0);
    CHECK(zero.dboundary_logits.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("proposed_loss decoupled vs allframes on a constant sequence") {
    const int C = 2, T = 30;
    tas::LabelSequence constant;
    constant.num_classes = C;
    constant.labels = tas::IntVector::Zero(T);

    tas::ProbabilityMap pm;
    pm.class_probs = tas::Matrix::Constant(C, T, 0.5);
    pm.boundary_probs = tas::Vector::Constant(T, 0.3);

    tas::LossConfig cfg;
    cfg.lambda_b = 1.0;
    cfg.lambda_s = 0.0;

    cfg.assignment = tas::Assignment::Decoupled;
    const auto dec = tas::proposed_loss(pm, constant, cfg, 30);
    CHECK(dec.l_b == 0.0);
    CHECK(dec.n_boundary_frames == 0);
    CHECK(dec.dboundary_logits.cwiseAbs().maxCoeff() == 0.0);

    cfg.assignment = tas::Assignment::AllFrames;
    const auto all = tas::proposed_loss(pm, constant, cfg, 30);
    const auto target = tas::boundary_targets(constant);
    const auto plain = tas::boundary_bce(pm.boundary_probs, target, cfg.eps);
    CHECK(all.l_b == doctest::Approx(plain.loss));
    CHECK(all.n_boundary_frames == T);
}

TEST_CASE("decoupled gradients vanish on the opposite region") {
    std::mt19937_64 rng(55);
    std::normal_distribution<double> gauss(0.0, 1.3);
    tas::LossConfig cfg;
    cfg.lambda_b = 0.7;
    cfg.lambda_s = 0.4;
    cfg.e_start = 0;
    cfg.window_w = 5;
    cfg.margin_delta = 5;

    for (int trial = 0; trial < 25; ++trial) {
        const int T = 40 + trial * 3;
        const auto seq = random_labels(rng, T, 4, 13);
        tas::Matrix logits(4, T);
        for (int i = 0; i < logits.size(); ++i) logits.data()[i] = gauss(rng);
        tas::Vector blogits(T);
        for (int t = 0; t < T; ++t) blogits[t] = gauss(rng);

        tas::ProbabilityMap pm;
        pm.class_probs = softmax_cols(logits);
        pm.boundary_probs = sigmoid(blogits);

        const auto res = tas::proposed_loss(pm, seq, cfg, 10);
        const auto region = tas::region_partition(seq, cfg.window_w);
        for (int t = 0; t < T; ++t) {
            if (region.is_boundary_region[t]) {
                CHECK(res.dclass_logits.col(t).cwiseAbs().maxCoeff() == 0.0);
            } else {
                CHECK(res.dboundary_logits[t] == 0.0);
            }
        }
    }
}

TEST_CASE("total_loss is additive in its parts") {
    std::mt19937_64 rng(91);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int C = 3, T = 70;
        const auto seq = random_labels(rng, T, C, 14);
        tas::Matrix logits(C, T);
        for (int i = 0; i < logits.size(); ++i) logits.data()[i] = gauss(rng);
        tas::Vector blogits(T);
        for (int t = 0; t < T; ++t) blogits[t] = gauss(rng);

        tas::ProbabilityMap pm;
        pm.class_probs = softmax_cols(logits);
        pm.boundary_probs = sigmoid(blogits);

        tas::LossConfig cfg;
        cfg.lambda_b = 0.31;
        cfg.lambda_s = 0.17;
        cfg.e_start = 0;

        const auto total = tas::total_loss(pm, seq, cfg, 5);
        const auto model =
            tas::model_loss(pm.class_probs, seq, cfg.tmse_weight, cfg.tmse_clip, cfg.eps);
        const auto aux = tas::proposed_loss(pm, seq, cfg, 5);

        CHECK(std::abs(total.breakdown.l_total -
                       (model.loss + cfg.lambda_b * aux.l_b + cfg.lambda_s * aux.l_s)) <
              1e-10);
        CHECK(total.breakdown.l_model == doctest::Approx(model.loss));
        CHECK(total.breakdown.l_b == doctest::Approx(aux.l_b));
        CHECK(total.breakdown.l_s == doctest::Approx(aux.l_s));
        CHECK(total.breakdown.finite());

        const tas::Matrix dsum = model.dlogits + aux.dclass_logits;
        CHECK((total.dclass_logits - dsum).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((total.dboundary_logits - aux.dboundary_logits).cwiseAbs().maxCoeff() <
              1e-12);
    }
}

TEST_CASE("loss config validation") {
    tas::LossConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.lambda_b = -1.0;
    CHECK_THROWS_AS(cfg.validate(), tas::ConfigError);
    cfg = {};
    cfg.eps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), tas::ConfigError);
    cfg = {};
    cfg.eps = 1e-2;
    CHECK_THROWS_AS(cfg.validate(), tas::ConfigError);
    cfg = {};
    cfg.window_w = -1;
    CHECK_THROWS_AS(cfg.validate(), tas::ConfigError);
}
