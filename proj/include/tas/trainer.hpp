#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tas/data.hpp"
#include "tas/losses.hpp"
#include "tas/metrics.hpp"
#include "tas/model.hpp"

namespace tas {

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

struct TrainConfig {
    LossConfig loss;
    BackboneConfig backbone;
    OptimizerConfig optimizer;
    int epochs = 50;
    int batch = 1;  // videos per optimizer step
    std::uint64_t seed = 1;
    int eval_every = 10;  // 0: evaluate only after the final epoch

    void validate() const;
};

// Per-video means of the stage-summed loss terms for one epoch.
struct EpochStats {
    double l_model = 0.0;
    double l_b = 0.0;
    double l_s = 0.0;
    double l_total = 0.0;
};

struct RunLog {
    std::vector<EpochStats> epochs;  // exactly TrainConfig::epochs entries

    struct EvalPoint {
        int epoch = 0;
        EvalReport report;
    };
    std::vector<EvalPoint> evals;
    EvalReport final_report;

    // Diagnostics for stdout only; kept out of to_json() so re-runs stay
    // bit-identical.
    double wall_clock_seconds = 0.0;

    std::string config_echo;  // resolved config JSON, embedded verbatim

    std::string to_json() const;
    std::string metrics_csv() const;  // epoch, F1@{10,25,50}, Edit, Acc
};

struct TrainResult {
    Parameters params;
    RunLog log;
};

// Called after each epoch's optimizer updates (checkpoint snapshots etc.).
using EpochObserver = std::function<void(int epoch, const Parameters&)>;

// Seeded loop: per epoch, shuffle the train split, then per batch compute
// the stage-summed objective and gradients for each video (in parallel up
// to `jobs`), reduce gradients in video order, and apply one optimizer
// step. Deterministic in (corpus, cfg) regardless of `jobs`.
TrainResult train(const Corpus& corpus, const TrainConfig& cfg,
                  const EpochObserver& on_epoch_end = {}, int jobs = 1);

EvalReport evaluate_params(const Parameters& params, const std::vector<Video>& videos);

// Exposed for unit tests of the update formulas.
struct OptimizerState {
    OptimizerConfig cfg;
    std::vector<Matrix> m, v;
    long step_count = 0;

    void init(const Parameters& params);
    void apply(Parameters& params, const std::vector<Matrix>& grads);
};

struct ArmSpec {
    std::string name;
    TrainConfig config;
};

// Comma-separated arm list: baseline, +LB, +LS, +both, estart:<grid>,
// allframes, decoupled. After an estart:<int> token, further bare-integer
// tokens extend the grid. Throws UnknownArmError otherwise.
std::vector<ArmSpec> parse_arms(const std::string& arms_csv, const TrainConfig& base);

struct ArmRun {
    std::uint64_t seed = 0;
    double acc = 0.0;
    double edit = 0.0;
    std::vector<double> f1;
    std::string error;  // non-empty when this run failed
};

struct ArmResult {
    std::string name;
    TrainConfig config;  // resolved arm config; per-run seeds override its seed
    std::vector<ArmRun> runs;
    int n_ok = 0;
    std::vector<double> f1_mean, f1_sd;
    double edit_mean = 0.0, edit_sd = 0.0;
    double acc_mean = 0.0, acc_sd = 0.0;
    std::string error;  // set when every run failed
};

struct AblationTable {
    std::vector<double> thresholds;
    std::vector<ArmResult> arms;

    std::string to_json() const;
    std::string to_csv() const;
    std::string to_table() const;  // mean +/- sd rows in arm order
};

// Trains every arm x seed pair (parallel up to `jobs`), evaluates on the
// test split, and aggregates mean and sample standard deviation per arm.
// A failing run is recorded without aborting the other arms.
AblationTable ablate(const Corpus& corpus, const std::vector<ArmSpec>& arms,
                     const std::vector<std::uint64_t>& seeds, int jobs = 1);

}  // namespace tas
