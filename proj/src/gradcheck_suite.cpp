#include "tas/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "tas/autodiff.hpp"
#include "tas/errors.hpp"
#include "tas/model.hpp"

namespace tas {

bool SuiteReport::all_passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const SuiteCheck& c) { return c.passed; });
}

const SuiteCheck* SuiteReport::worst_check() const {
    const SuiteCheck* worst = nullptr;
    for (const SuiteCheck& c : checks) {
        if (worst == nullptr || c.max_rel_err > worst->max_rel_err) worst = &c;
    }
    return worst;
}

std::string SuiteReport::to_text() const {
    std::ostringstream out;
    char buf[160];
    for (const SuiteCheck& c : checks) {
        std::snprintf(buf, sizeof(buf), "%-32s max_rel_err %.3e  (%d coords)  %s\n",
                      c.name.c_str(), c.max_rel_err, c.n_checked,
                      c.passed ? "PASS" : "FAIL");
        out << buf;
        if (!c.passed && !c.worst.empty()) out << "  worst: " << c.worst << "\n";
    }
    std::snprintf(buf, sizeof(buf), "tolerance %.1e: %s\n", tolerance,
                  all_passed() ? "all checks passed" : "CHECKS FAILED");
    out << buf;
    return out.str();
}

namespace {

Vector flatten(const Matrix& m) {
    return Eigen::Map<const Vector>(m.data(), m.size());
}

Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Matrix softmax_cols(const Matrix& z) {
    Matrix out(z.rows(), z.cols());
    for (Eigen::Index t = 0; t < z.cols(); ++t) {
        const Vector e = (z.col(t).array() - z.col(t).maxCoeff()).exp();
        out.col(t) = e / e.sum();
    }
    return out;
}

Vector sigmoid_vec(const Vector& z) {
    return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

// Random segmentation with every run at least min_len frames and at least
// two segments, no self transitions.
LabelSequence random_labels(std::mt19937_64& rng, int frames, int num_classes,
                            int min_len) {
    std::vector<int> lengths;
    int remaining = frames;
    std::uniform_int_distribution<int> len_dist(min_len, 2 * min_len);
    while (remaining >= 2 * min_len) {
        int len = std::min(len_dist(rng), remaining - min_len);
        lengths.push_back(len);
        remaining -= len;
    }
    lengths.push_back(remaining);
    if (lengths.size() < 2) {  // frames < 2 * min_len: split in half
        lengths.assign({frames / 2, frames - frames / 2});
    }

    LabelSequence seq;
    seq.num_classes = num_classes;
    seq.labels.resize(frames);
    std::uniform_int_distribution<int> first(0, num_classes - 1);
    std::uniform_int_distribution<int> other(0, num_classes - 2);
    int prev = first(rng);
    int cursor = 0;
    for (int len : lengths) {
        for (int k = 0; k < len; ++k) seq.labels[cursor++] = prev;
        int next = other(rng);
        if (next >= prev) ++next;
        prev = next;
    }
    seq.validate();
    return seq;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> unit(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = unit(rng);
    return m;
}

void fold_report(SuiteCheck& check, const FdReport& report, double tolerance) {
    check.n_checked += report.n_checked;
    if (report.max_rel_err > check.max_rel_err) {
        check.max_rel_err = report.max_rel_err;
        std::ostringstream w;
        w << "coordinate " << report.worst_coord << ": analytic " << report.worst_analytic
          << " vs numeric " << report.worst_numeric;
        check.worst = w.str();
    }
    check.passed = check.passed && report.passed(tolerance);
}

SuiteCheck make_check(std::string name) {
    SuiteCheck check;
    check.name = std::move(name);
    return check;
}

ProbabilityMap map_from_stacked(const Matrix& stacked) {
    ProbabilityMap map;
    const Eigen::Index c = stacked.rows() - 1;
    map.class_probs = softmax_cols(stacked.topRows(c));
    map.boundary_probs = sigmoid_vec(stacked.row(c).transpose());
    return map;
}

}  // namespace

SuiteReport run_gradcheck_suite(const SuiteOptions& opts) {
    SuiteReport report;
    report.tolerance = opts.tolerance;
    std::mt19937_64 rng(opts.seed);
    const double eps = opts.loss.eps;

    const int frames = 240;
    const int classes = 5;

    SuiteCheck bce_all = make_check("boundary_bce/allframes");
    SuiteCheck bce_region = make_check("boundary_bce/decoupled");
    SuiteCheck shape_plain = make_check("segment_shape/interior");
    SuiteCheck shape_masked = make_check("segment_shape/non_boundary");
    SuiteCheck model = make_check("model_loss/ce_tmse");
    SuiteCheck total_strong = make_check("total_loss/strong_aux");
    SuiteCheck total_default = make_check("total_loss/defaults");
    SuiteCheck warmup = make_check("warmup/ls_zero_before_estart");

    for (int input = 0; input < opts.n_inputs; ++input) {
        const LabelSequence seq = random_labels(rng, frames, classes, 13);
        const BoundaryTarget target = boundary_targets(seq);
        const RegionMask region = region_partition(seq, opts.loss.window_w);
        const std::vector<Segment> segments = extract_segments(seq);

        {
            const Vector z = flatten(random_matrix(rng, frames, 1));
            const auto f = [&](const Vector& x) {
                return boundary_bce(sigmoid_vec(x), target, eps).loss;
            };
            const Vector analytic = boundary_bce(sigmoid_vec(z), target, eps).dlogits;
            fold_report(bce_all,
                        finite_difference_report(f, z, analytic, opts.h,
                                                 opts.coords_per_input, rng),
                        opts.tolerance);
        }
        {
            const Vector z = flatten(random_matrix(rng, frames, 1));
            const BoolArray& active = region.is_boundary_region;
            const auto f = [&](const Vector& x) {
                return boundary_bce(sigmoid_vec(x), target, active, eps).loss;
            };
            const Vector analytic = boundary_bce(sigmoid_vec(z), target, active, eps).dlogits;
            fold_report(bce_region,
                        finite_difference_report(f, z, analytic, opts.h,
                                                 opts.coords_per_input, rng),
                        opts.tolerance);
        }
        {
            const Matrix z = random_matrix(rng, classes, frames);
            const auto f = [&](const Vector& x) {
                return segment_shape_loss(softmax_cols(unflatten(x, classes, frames)),
                                          segments, opts.loss.margin_delta, nullptr, eps)
                    .loss;
            };
            const Matrix analytic = segment_shape_loss(softmax_cols(z), segments,
                                                       opts.loss.margin_delta, nullptr, eps)
                                        .dlogits;
            fold_report(shape_plain,
                        finite_difference_report(f, flatten(z), flatten(analytic), opts.h,
                                                 opts.coords_per_input, rng),
                        opts.tolerance);
        }
        {
            const Matrix z = random_matrix(rng, classes, frames);
            const BoolArray active = !region.is_boundary_region;
            const auto f = [&](const Vector& x) {
                return segment_shape_loss(softmax_cols(unflatten(x, classes, frames)),
                                          segments, opts.loss.margin_delta, &active, eps)
                    .loss;
            };
            const Matrix analytic = segment_shape_loss(softmax_cols(z), segments,
                                                       opts.loss.margin_delta, &active, eps)
                                        .dlogits;
            fold_report(shape_masked,
                        finite_difference_report(f, flatten(z), flatten(analytic), opts.h,
                                                 opts.coords_per_input, rng),
                        opts.tolerance);
        }
        {
            const Matrix z = random_matrix(rng, classes, frames);
            const auto f = [&](const Vector& x) {
                return model_loss(softmax_cols(unflatten(x, classes, frames)), seq,
                                  opts.loss.tmse_weight, opts.loss.tmse_clip, eps)
                    .loss;
            };
            const Matrix analytic = model_loss(softmax_cols(z), seq, opts.loss.tmse_weight,
                                               opts.loss.tmse_clip, eps)
                                        .dlogits;
            fold_report(model,
                        finite_difference_report(f, flatten(z), flatten(analytic), opts.h,
                                                 opts.coords_per_input, rng),
                        opts.tolerance);
        }

        const auto check_total = [&](SuiteCheck& check, const LossConfig& cfg, int epoch) {
            const Matrix z = random_matrix(rng, classes + 1, frames);
            const auto f = [&](const Vector& x) {
                const Matrix stacked = unflatten(x, classes + 1, frames);
                return total_loss(map_from_stacked(stacked), seq, cfg, epoch)
                    .breakdown.l_total;
            };
            const TotalLossResult res =
                total_loss(map_from_stacked(z), seq, cfg, epoch);
            Matrix analytic(classes + 1, frames);
            analytic.topRows(classes) = res.dclass_logits;
            analytic.row(classes) = res.dboundary_logits.transpose();
            fold_report(check,
                        finite_difference_report(f, flatten(z), flatten(analytic), opts.h,
                                                 opts.coords_per_input, rng),
                        opts.tolerance);
        };
        {
            LossConfig strong = opts.loss;
            strong.lambda_b = 0.3;
            strong.lambda_s = 0.25;
            strong.e_start = 0;
            check_total(total_strong, strong, 0);
        }
        check_total(total_default, opts.loss, std::max(opts.loss.e_start, 0));

        {
            LossConfig warm = opts.loss;
            warm.lambda_s = std::max(warm.lambda_s, 1e-3);
            warm.e_start = std::max(warm.e_start, 1);
            const Matrix z = random_matrix(rng, classes + 1, frames);
            const ProposedLossResult res =
                proposed_loss(map_from_stacked(z), seq, warm, warm.e_start - 1);
            const double worst =
                std::max(res.dclass_logits.cwiseAbs().maxCoeff(), std::abs(res.l_s));
            warmup.n_checked += static_cast<int>(res.dclass_logits.size());
            if (worst > warmup.max_rel_err) {
                warmup.max_rel_err = worst;
                warmup.worst = "shape-loss contribution before e_start";
            }
            warmup.passed = warmup.passed && worst == 0.0;
        }
    }

    report.checks = {bce_all, bce_region, shape_plain, shape_masked,
                     model,   total_strong, total_default, warmup};

    if (!opts.include_backbone) return report;

    BackboneConfig tiny;
    tiny.num_stages = 1;
    tiny.layers_per_stage = 3;
    tiny.hidden_width = 8;
    tiny.num_classes = 3;
    tiny.input_dim = 4;

    LossConfig tiny_loss = opts.loss;
    tiny_loss.window_w = 2;
    tiny_loss.margin_delta = 2;
    tiny_loss.lambda_b = 0.3;
    tiny_loss.lambda_s = 0.3;
    tiny_loss.e_start = 0;

    std::vector<SuiteCheck> block_checks;
    for (int input = 0; input < opts.n_inputs; ++input) {
        const int t = 24;
        tiny.seed = rng();
        const Parameters params = init_parameters(tiny);
        const Matrix features = random_matrix(rng, tiny.input_dim, t);
        const LabelSequence seq = random_labels(rng, t, tiny.num_classes, 8);

        const auto objective = [&](const Parameters& p) {
            ad::Tape tape;
            const ForwardResult fwd = forward(tape, p, features);
            double loss = 0.0;
            for (const StageForward& stage : fwd.stages) {
                loss += total_loss(stage.map, seq, tiny_loss, 0).breakdown.l_total;
            }
            return loss;
        };

        ad::Tape tape;
        const ForwardResult fwd = forward(tape, params, features);
        for (const StageForward& stage : fwd.stages) {
            const TotalLossResult r = total_loss(stage.map, seq, tiny_loss, 0);
            Matrix seed(tiny.num_classes + 1, t);
            seed.topRows(tiny.num_classes) = r.dclass_logits;
            seed.row(tiny.num_classes) = r.dboundary_logits.transpose();
            tape.seed(stage.raw_logits, seed);
        }
        tape.backward();

        std::vector<std::string> names;
        std::vector<Matrix> values, grads;
        std::size_t bi = 0;
        params.for_each_block([&](const std::string& name, const Matrix& block) {
            names.push_back(name);
            values.push_back(block);
            grads.push_back(tape.grad(fwd.param_blocks[bi]));
            ++bi;
        });
        if (block_checks.empty()) {
            for (const std::string& name : names) {
                block_checks.push_back(make_check("backbone/" + name));
            }
        }

        for (std::size_t b = 0; b < names.size(); ++b) {
            const auto f = [&](const Vector& x) {
                Parameters probe = params;
                std::size_t k = 0;
                probe.for_each_block([&](const std::string&, Matrix& block) {
                    if (k == b) {
                        block = unflatten(x, block.rows(), block.cols());
                    }
                    ++k;
                });
                return objective(probe);
            };
            fold_report(block_checks[b],
                        finite_difference_report(f, flatten(values[b]), flatten(grads[b]),
                                                 opts.h, opts.coords_per_input, rng),
                        opts.tolerance);
        }
    }
    report.checks.insert(report.checks.end(), block_checks.begin(), block_checks.end());
    return report;
}

}  // namespace tas
