#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tas/core.hpp"

namespace tas {

struct Video {
    std::string id;
    Matrix features;  // D x T
    LabelSequence labels;
};

struct Corpus {
    int num_classes = 0;
    int feature_dim = 0;
    std::vector<std::string> class_names;
    std::vector<Video> train;
    std::vector<Video> test;
};

// Segments shorter than this get skipped by the shape loss at the default
// margin (2 * 5 + 2), so the generator never emits them.
constexpr int kMinSegmentFrames = 12;

struct SynthConfig {
    int num_classes = 6;
    int num_videos = 75;
    int min_frames = 270;
    int max_frames = 330;
    int min_segments = 6;
    int max_segments = 10;
    int feature_dim = 16;
    double base_noise = 1.6;
    double boundary_noise_boost = 6.0;
    int boundary_jitter = 6;
    // Distractor bursts: short runs deep inside a segment whose features
    // read as another class, the classic over-segmentation trap. Bursts use
    // a separate per-video stream, so changing them never changes the
    // labels or the surrounding features.
    int distractor_bursts = 3;
    int distractor_len = 2;
    double distractor_mix = 0.9;  // distractor prototype weight inside a burst
    std::uint64_t seed = 7;

    void validate() const;
};

// 80/20 split by video, train first.
constexpr int num_trainable(int num_videos) { return num_videos * 4 / 5; }

// Labels follow a no-self-transition Markov chain; features are a class
// prototype plus Gaussian noise, with the noise scaled up near each
// transition so boundaries stay ambiguous. Videos split 80/20 in
// generation order.
Corpus generate(const SynthConfig& cfg);

// Directory layout: groundTruth/<id>.txt (one label token per line),
// features/<id>.bin or .csv, classes.txt ("<index> <name>" lines),
// splits/train.txt + splits/test.txt (one stem per line). The .bin
// format is a one-line JSON header {"rows","cols"} followed by raw
// little-endian float32 values, row-major; .csv holds T lines of D
// comma-separated values.
Corpus load_dataset(const std::string& root);
void save_corpus(const std::string& root, const Corpus& corpus);

// Prediction files mirror the ground-truth format.
void save_labels(const std::string& path, const LabelSequence& labels,
                 const std::vector<std::string>& class_names);
LabelSequence load_labels(const std::string& path,
                          const std::vector<std::string>& class_names);

}  // namespace tas
