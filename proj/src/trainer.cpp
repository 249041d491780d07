#include "tas/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tas/autodiff.hpp"
#include "tas/config.hpp"
#include "tas/errors.hpp"

namespace tas {

void OptimizerConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("optimizer: learning_rate must be > 0");
    if (kind == OptimizerKind::Adam) {
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
            throw ConfigError("optimizer: betas must lie in [0, 1)");
        }
        if (eps <= 0.0) throw ConfigError("optimizer: eps must be > 0");
    }
}

void TrainConfig::validate() const {
    loss.validate();
    backbone.validate();
    optimizer.validate();
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (eval_every < 0) throw ConfigError("train: eval_every must be >= 0");
}

void OptimizerState::init(const Parameters& params) {
    m.clear();
    v.clear();
    params.for_each_block([this](const std::string&, const Matrix& block) {
        m.push_back(Matrix::Zero(block.rows(), block.cols()));
        v.push_back(Matrix::Zero(block.rows(), block.cols()));
    });
    step_count = 0;
}

void OptimizerState::apply(Parameters& params, const std::vector<Matrix>& grads) {
    if (grads.size() != m.size()) {
        throw ShapeMismatchError("optimizer: got " + std::to_string(grads.size()) +
                                 " gradient blocks for " + std::to_string(m.size()) +
                                 " parameter blocks");
    }
    ++step_count;
    std::size_t i = 0;
    if (cfg.kind == OptimizerKind::Sgd) {
        params.for_each_block([&](const std::string&, Matrix& block) {
            block -= cfg.learning_rate * grads[i];
            ++i;
        });
        return;
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count));
    params.for_each_block([&](const std::string&, Matrix& block) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i].cwiseProduct(grads[i]);
        block.array() -= cfg.learning_rate * (m[i].array() / bc1) /
                         ((v[i].array() / bc2).sqrt() + cfg.eps);
        ++i;
    });
}

namespace {

struct VideoWork {
    LossBreakdown breakdown;
    std::vector<Matrix> grads;
    std::string error;
};

VideoWork process_video(const Parameters& params, const Video& video,
                        const LossConfig& loss_cfg, int epoch) {
    VideoWork work;
    ad::Tape tape;
    const ForwardResult fwd = forward(tape, params, video.features);
    const int c = params.config.num_classes;
    const int frames = static_cast<int>(video.features.cols());

    for (const StageForward& stage : fwd.stages) {
        const TotalLossResult r = total_loss(stage.map, video.labels, loss_cfg, epoch);
        work.breakdown.l_model += r.breakdown.l_model;
        work.breakdown.l_b += r.breakdown.l_b;
        work.breakdown.l_s += r.breakdown.l_s;
        work.breakdown.l_total += r.breakdown.l_total;
        work.breakdown.n_boundary_frames = r.breakdown.n_boundary_frames;
        work.breakdown.n_segments_used = r.breakdown.n_segments_used;
        work.breakdown.n_segments_skipped = r.breakdown.n_segments_skipped;

        Matrix seed(c + 1, frames);
        seed.topRows(c) = r.dclass_logits;
        seed.row(c) = r.dboundary_logits.transpose();
        tape.seed(stage.raw_logits, seed);
    }
    tape.backward();

    work.grads.reserve(fwd.param_blocks.size());
    bool grads_finite = true;
    for (const ad::Var& block : fwd.param_blocks) {
        work.grads.push_back(tape.grad(block));
        grads_finite = grads_finite && work.grads.back().allFinite();
    }
    if (!work.breakdown.finite() || !grads_finite) {
        std::ostringstream msg;
        msg << "non-finite loss at video " << video.id << ": l_model="
            << work.breakdown.l_model << " l_b=" << work.breakdown.l_b
            << " l_s=" << work.breakdown.l_s << " l_total=" << work.breakdown.l_total
            << " boundary_frames=" << work.breakdown.n_boundary_frames
            << " segments_used=" << work.breakdown.n_segments_used
            << " segments_skipped=" << work.breakdown.n_segments_skipped;
        work.error = msg.str();
    }
    return work;
}

void run_indexed(int count, int jobs, const std::function<void(int)>& body) {
    if (jobs <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            body(i);
        }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min(jobs, count);
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
}

}  // namespace

EvalReport evaluate_params(const Parameters& params, const std::vector<Video>& videos) {
    std::vector<std::pair<LabelSequence, LabelSequence>> pairs;
    std::vector<std::string> ids;
    for (const Video& video : videos) {
        ad::Tape tape;
        const ForwardResult fwd = forward(tape, params, video.features);
        pairs.emplace_back(predict(fwd.final_map()).labels, video.labels);
        ids.push_back(video.id);
    }
    return evaluate_corpus(pairs, &ids);
}

TrainResult train(const Corpus& corpus, const TrainConfig& cfg,
                  const EpochObserver& on_epoch_end, int jobs) {
    cfg.validate();
    if (corpus.train.empty()) throw EmptySequenceError("train: empty train split");
    if (cfg.backbone.num_classes != corpus.num_classes) {
        throw ShapeMismatchError("train: backbone expects " +
                                 std::to_string(cfg.backbone.num_classes) +
                                 " classes, corpus has " +
                                 std::to_string(corpus.num_classes));
    }
    if (cfg.backbone.input_dim != corpus.feature_dim) {
        throw ShapeMismatchError("train: backbone expects input_dim " +
                                 std::to_string(cfg.backbone.input_dim) +
                                 ", corpus features have " +
                                 std::to_string(corpus.feature_dim));
    }
    if (cfg.loss.e_start > cfg.epochs) {
        std::cerr << "warning: e_start " << cfg.loss.e_start << " > epochs " << cfg.epochs
                  << "; the shape loss never activates\n";
    }

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result;
    result.params = init_parameters(cfg.backbone);
    OptimizerState opt;
    opt.cfg = cfg.optimizer;
    opt.init(result.params);

    std::mt19937_64 shuffle_rng(cfg.seed);
    const int n = static_cast<int>(corpus.train.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochStats stats;
        for (int base = 0; base < n; base += cfg.batch) {
            const int batch_n = std::min(cfg.batch, n - base);
            std::vector<VideoWork> slots(static_cast<std::size_t>(batch_n));
            run_indexed(batch_n, jobs, [&](int i) {
                const Video& video = corpus.train[static_cast<std::size_t>(order[base + i])];
                try {
                    slots[static_cast<std::size_t>(i)] =
                        process_video(result.params, video, cfg.loss, epoch);
                } catch (const Error& e) {
                    slots[static_cast<std::size_t>(i)].error = e.what();
                }
            });

            std::vector<Matrix> batch_grads;
            for (int i = 0; i < batch_n; ++i) {
                VideoWork& work = slots[static_cast<std::size_t>(i)];
                const Video& video = corpus.train[static_cast<std::size_t>(order[base + i])];
                if (!work.error.empty()) {
                    throw NonFiniteLossError("epoch " + std::to_string(epoch) + ": " +
                                                 work.error,
                                             epoch, video.id);
                }
                if (batch_grads.empty()) {
                    batch_grads = std::move(work.grads);
                } else {
                    for (std::size_t b = 0; b < batch_grads.size(); ++b) {
                        batch_grads[b] += work.grads[b];
                    }
                }
                stats.l_model += work.breakdown.l_model;
                stats.l_b += work.breakdown.l_b;
                stats.l_s += work.breakdown.l_s;
                stats.l_total += work.breakdown.l_total;
            }
            opt.apply(result.params, batch_grads);
        }
        stats.l_model /= n;
        stats.l_b /= n;
        stats.l_s /= n;
        stats.l_total /= n;
        result.log.epochs.push_back(stats);

        if (on_epoch_end) on_epoch_end(epoch, result.params);

        const bool last = (epoch == cfg.epochs - 1);
        const bool scheduled = cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0;
        if (!corpus.test.empty() && (last || scheduled)) {
            RunLog::EvalPoint point;
            point.epoch = epoch;
            point.report = evaluate_params(result.params, corpus.test);
            if (last) result.log.final_report = point.report;
            result.log.evals.push_back(std::move(point));
        }
    }

    result.log.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

namespace {

nlohmann::json eval_summary_json(const EvalReport& report) {
    nlohmann::json f1 = nlohmann::json::object();
    for (std::size_t k = 0; k < report.thresholds.size(); ++k) {
        f1[threshold_label(report.thresholds[k])] = report.f1[k].f1;
    }
    return {{"acc", report.acc}, {"edit", report.edit}, {"f1", std::move(f1)}};
}

nlohmann::json parse_echo(const std::string& echo) {
    if (echo.empty()) return nullptr;
    try {
        return nlohmann::json::parse(echo);
    } catch (const nlohmann::json::exception&) {
        return echo;
    }
}

}  // namespace

std::string RunLog::to_json() const {
    nlohmann::json j;
    j["config"] = parse_echo(config_echo);
    nlohmann::json ep = nlohmann::json::array();
    for (std::size_t e = 0; e < epochs.size(); ++e) {
        ep.push_back({{"epoch", e},
                      {"l_model", epochs[e].l_model},
                      {"l_b", epochs[e].l_b},
                      {"l_s", epochs[e].l_s},
                      {"l_total", epochs[e].l_total}});
    }
    j["epochs"] = std::move(ep);
    nlohmann::json ev = nlohmann::json::array();
    for (const EvalPoint& point : evals) {
        nlohmann::json entry = eval_summary_json(point.report);
        entry["epoch"] = point.epoch;
        ev.push_back(std::move(entry));
    }
    j["evals"] = std::move(ev);
    j["final"] = nlohmann::json::parse(final_report.to_json());
    return j.dump(2);
}

std::string RunLog::metrics_csv() const {
    std::ostringstream out;
    out << "epoch";
    const std::vector<double>& taus =
        evals.empty() ? default_f1_thresholds() : evals.front().report.thresholds;
    for (double tau : taus) out << ",f1_" << threshold_label(tau);
    out << ",edit,acc\n";
    char buf[64];
    for (const EvalPoint& point : evals) {
        out << point.epoch;
        for (const F1Score& s : point.report.f1) {
            const double v = s.f1;
            std::snprintf(buf, sizeof(buf), ",%.4f", v);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.4f,%.4f", point.report.edit, point.report.acc);
        out << buf << "\n";
    }
    return out.str();
}

std::vector<ArmSpec> parse_arms(const std::string& arms_csv, const TrainConfig& base) {
    std::vector<ArmSpec> arms;
    std::istringstream ss(arms_csv);
    std::string token;
    bool estart_grid = false;
    while (std::getline(ss, token, ',')) {
        while (!token.empty() && token.front() == ' ') token.erase(token.begin());
        while (!token.empty() && token.back() == ' ') token.pop_back();
        if (token.empty()) continue;

        const bool bare_int =
            !token.empty() && std::all_of(token.begin(), token.end(),
                                          [](char ch) { return ch >= '0' && ch <= '9'; });
        if (estart_grid && bare_int) {
            ArmSpec arm{"estart=" + token, base};
            arm.config.loss.e_start = std::stoi(token);
            arms.push_back(std::move(arm));
            continue;
        }
        estart_grid = false;

        if (token == "baseline") {
            ArmSpec arm{token, base};
            arm.config.loss.lambda_b = 0.0;
            arm.config.loss.lambda_s = 0.0;
            arms.push_back(std::move(arm));
        } else if (token == "+LB") {
            ArmSpec arm{token, base};
            arm.config.loss.lambda_s = 0.0;
            arms.push_back(std::move(arm));
        } else if (token == "+LS") {
            ArmSpec arm{token, base};
            arm.config.loss.lambda_b = 0.0;
            arms.push_back(std::move(arm));
        } else if (token == "+both") {
            arms.push_back({token, base});
        } else if (token == "allframes") {
            ArmSpec arm{token, base};
            arm.config.loss.assignment = Assignment::AllFrames;
            arms.push_back(std::move(arm));
        } else if (token == "decoupled") {
            ArmSpec arm{token, base};
            arm.config.loss.assignment = Assignment::Decoupled;
            arms.push_back(std::move(arm));
        } else if (token.rfind("estart:", 0) == 0) {
            const std::string first = token.substr(7);
            if (first.empty() ||
                !std::all_of(first.begin(), first.end(),
                             [](char ch) { return ch >= '0' && ch <= '9'; })) {
                throw UnknownArmError("bad estart grid value: " + token);
            }
            ArmSpec arm{"estart=" + first, base};
            arm.config.loss.e_start = std::stoi(first);
            arms.push_back(std::move(arm));
            estart_grid = true;
        } else {
            throw UnknownArmError("unknown arm: " + token);
        }
    }
    if (arms.empty()) throw UnknownArmError("no arms given");
    return arms;
}

namespace {

void aggregate_arm(ArmResult& arm, std::size_t n_thresholds) {
    arm.f1_mean.assign(n_thresholds, 0.0);
    arm.f1_sd.assign(n_thresholds, 0.0);
    arm.edit_mean = arm.edit_sd = arm.acc_mean = arm.acc_sd = 0.0;
    arm.n_ok = 0;
    for (const ArmRun& run : arm.runs) {
        if (!run.error.empty()) continue;
        ++arm.n_ok;
        arm.acc_mean += run.acc;
        arm.edit_mean += run.edit;
        for (std::size_t k = 0; k < n_thresholds; ++k) arm.f1_mean[k] += run.f1[k];
    }
    if (arm.n_ok == 0) {
        for (const ArmRun& run : arm.runs) {
            if (!run.error.empty()) {
                arm.error = run.error;
                break;
            }
        }
        return;
    }
    arm.acc_mean /= arm.n_ok;
    arm.edit_mean /= arm.n_ok;
    for (double& v : arm.f1_mean) v /= arm.n_ok;
    if (arm.n_ok > 1) {
        double acc_ss = 0.0, edit_ss = 0.0;
        std::vector<double> f1_ss(n_thresholds, 0.0);
        for (const ArmRun& run : arm.runs) {
            if (!run.error.empty()) continue;
            acc_ss += (run.acc - arm.acc_mean) * (run.acc - arm.acc_mean);
            edit_ss += (run.edit - arm.edit_mean) * (run.edit - arm.edit_mean);
            for (std::size_t k = 0; k < n_thresholds; ++k) {
                f1_ss[k] += (run.f1[k] - arm.f1_mean[k]) * (run.f1[k] - arm.f1_mean[k]);
            }
        }
        arm.acc_sd = std::sqrt(acc_ss / (arm.n_ok - 1));
        arm.edit_sd = std::sqrt(edit_ss / (arm.n_ok - 1));
        for (std::size_t k = 0; k < n_thresholds; ++k) {
            arm.f1_sd[k] = std::sqrt(f1_ss[k] / (arm.n_ok - 1));
        }
    }
}

}  // namespace

AblationTable ablate(const Corpus& corpus, const std::vector<ArmSpec>& arms,
                     const std::vector<std::uint64_t>& seeds, int jobs) {
    if (arms.empty()) throw UnknownArmError("ablate: no arms");
    if (seeds.empty()) throw ConfigError("ablate: no seeds");

    AblationTable table;
    table.thresholds = default_f1_thresholds();

    struct Job {
        std::size_t arm;
        std::size_t seed;
    };
    std::vector<Job> grid;
    for (std::size_t a = 0; a < arms.size(); ++a) {
        for (std::size_t s = 0; s < seeds.size(); ++s) grid.push_back({a, s});
    }
    std::vector<ArmRun> results(grid.size());

    run_indexed(static_cast<int>(grid.size()), jobs, [&](int g) {
        const Job& job = grid[static_cast<std::size_t>(g)];
        TrainConfig cfg = arms[job.arm].config;
        cfg.seed = seeds[job.seed];
        cfg.backbone.seed = seeds[job.seed];
        ArmRun run;
        run.seed = seeds[job.seed];
        try {
            const TrainResult res = train(corpus, cfg, {}, 1);
            run.acc = res.log.final_report.acc;
            run.edit = res.log.final_report.edit;
            for (const F1Score& s : res.log.final_report.f1) run.f1.push_back(s.f1);
        } catch (const std::exception& e) {
            run.error = e.what();
            run.f1.assign(table.thresholds.size(), 0.0);
        }
        results[static_cast<std::size_t>(g)] = std::move(run);
    });

    for (std::size_t a = 0; a < arms.size(); ++a) {
        ArmResult arm;
        arm.name = arms[a].name;
        arm.config = arms[a].config;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            arm.runs.push_back(results[a * seeds.size() + s]);
        }
        aggregate_arm(arm, table.thresholds.size());
        table.arms.push_back(std::move(arm));
    }
    return table;
}

std::string AblationTable::to_json() const {
    nlohmann::json j;
    j["thresholds"] = thresholds;
    nlohmann::json rows = nlohmann::json::array();
    for (const ArmResult& arm : arms) {
        nlohmann::json row;
        row["name"] = arm.name;
        row["config"] = train_to_json(arm.config);
        nlohmann::json runs = nlohmann::json::array();
        for (const ArmRun& run : arm.runs) {
            nlohmann::json r = {{"seed", run.seed},
                                {"acc", run.acc},
                                {"edit", run.edit},
                                {"f1", run.f1}};
            if (!run.error.empty()) r["error"] = run.error;
            runs.push_back(std::move(r));
        }
        row["runs"] = std::move(runs);
        row["n_ok"] = arm.n_ok;
        row["mean"] = {{"acc", arm.acc_mean}, {"edit", arm.edit_mean}, {"f1", arm.f1_mean}};
        row["sd"] = {{"acc", arm.acc_sd}, {"edit", arm.edit_sd}, {"f1", arm.f1_sd}};
        if (!arm.error.empty()) row["error"] = arm.error;
        rows.push_back(std::move(row));
    }
    j["arms"] = std::move(rows);
    return j.dump(2);
}

std::string AblationTable::to_csv() const {
    std::ostringstream out;
    out << "arm,n";
    for (double tau : thresholds) {
        const std::string label = threshold_label(tau);
        out << ",f1_" << label << "_mean,f1_" << label << "_sd";
    }
    out << ",edit_mean,edit_sd,acc_mean,acc_sd\n";
    char buf[64];
    for (const ArmResult& arm : arms) {
        out << arm.name << ',' << arm.n_ok;
        for (std::size_t k = 0; k < thresholds.size(); ++k) {
            std::snprintf(buf, sizeof(buf), ",%.4f,%.4f", arm.f1_mean[k], arm.f1_sd[k]);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.4f,%.4f,%.4f,%.4f", arm.edit_mean, arm.edit_sd,
                      arm.acc_mean, arm.acc_sd);
        out << buf << "\n";
    }
    return out.str();
}

std::string AblationTable::to_table() const {
    std::ostringstream out;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-12s", "arm");
    out << buf;
    for (double tau : thresholds) {
        std::snprintf(buf, sizeof(buf), "%-16s", ("F1@" + threshold_label(tau)).c_str());
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-16s%-16s\n", "Edit", "Acc");
    out << buf;
    for (const ArmResult& arm : arms) {
        std::snprintf(buf, sizeof(buf), "%-12s", arm.name.c_str());
        out << buf;
        if (!arm.error.empty() && arm.n_ok == 0) {
            out << "failed: " << arm.error << "\n";
            continue;
        }
        for (std::size_t k = 0; k < thresholds.size(); ++k) {
            std::snprintf(buf, sizeof(buf), "%6.2f +- %-6.2f ", arm.f1_mean[k], arm.f1_sd[k]);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "%6.2f +- %-6.2f %6.2f +- %-6.2f\n", arm.edit_mean,
                      arm.edit_sd, arm.acc_mean, arm.acc_sd);
        out << buf;
    }
    return out.str();
}

}  // namespace tas
