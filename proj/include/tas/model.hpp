#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tas/autodiff.hpp"
#include "tas/core.hpp"

namespace tas {

struct BackboneConfig {
    int num_stages = 2;
    int layers_per_stage = 6;  // dilation of layer l is 2^l
    int hidden_width = 32;
    int num_classes = 0;
    int input_dim = 0;
    std::uint64_t seed = 0;

    void validate() const;
};

constexpr int kConvTaps = 3;

// One refinement stage. The input projection maps the stage input (raw
// features for stage 0, the previous stage's class probabilities after)
// to the hidden width; each layer is a dilated residual block; the head
// emits C class logits plus one boundary logit.
struct StageParameters {
    Matrix in_w, in_b;
    std::vector<Matrix> conv;
    std::vector<Matrix> point_w, point_b;
    Matrix head_w, head_b;
};

struct Parameters {
    BackboneConfig config;
    std::vector<StageParameters> stages;

    // Visits every block in a fixed order; optimizer state and checkpoint
    // layout both key off this order.
    template <typename F>
    void for_each_block(F&& f) {
        for (std::size_t s = 0; s < stages.size(); ++s) {
            StageParameters& st = stages[s];
            const std::string p = "stage" + std::to_string(s) + ".";
            f(p + "in.w", st.in_w);
            f(p + "in.b", st.in_b);
            for (std::size_t l = 0; l < st.conv.size(); ++l) {
                const std::string lp = p + "layer" + std::to_string(l) + ".";
                f(lp + "conv", st.conv[l]);
                f(lp + "point.w", st.point_w[l]);
                f(lp + "point.b", st.point_b[l]);
            }
            f(p + "head.w", st.head_w);
            f(p + "head.b", st.head_b);
        }
    }

    template <typename F>
    void for_each_block(F&& f) const {
        const_cast<Parameters*>(this)->for_each_block(
            [&f](const std::string& name, Matrix& block) {
                f(name, static_cast<const Matrix&>(block));
            });
    }

    std::size_t scalar_count() const;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases,
// deterministic in config.seed.
Parameters init_parameters(const BackboneConfig& config);

struct StageForward {
    ad::Var raw_logits;   // (C+1) x T
    ad::Var class_probs;  // C x T, stays on tape so refinement gradients flow
    ProbabilityMap map;
};

struct ForwardResult {
    std::vector<ad::Var> param_blocks;  // leaves, in for_each_block order
    std::vector<StageForward> stages;

    const ProbabilityMap& final_map() const { return stages.back().map; }
};

ForwardResult forward(ad::Tape& tape, const Parameters& params, const Matrix& features);

struct Prediction {
    LabelSequence labels;
    Vector boundary_probs;
};

// Per-frame argmax over class rows; ties break toward the lower index.
Prediction predict(const ProbabilityMap& map);

void save_checkpoint(const std::string& path, const Parameters& params);
Parameters load_checkpoint(const std::string& path);

}  // namespace tas
