#include "tas/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tas/errors.hpp"

namespace fs = std::filesystem;

namespace tas {

void SynthConfig::validate() const {
    if (num_classes < 2) throw ConfigError("synth: num_classes must be >= 2");
    if (num_videos < 2) throw ConfigError("synth: num_videos must be >= 2");
    if (feature_dim < 1) throw ConfigError("synth: feature_dim must be >= 1");
    if (min_frames < 1 || min_frames > max_frames) {
        throw ConfigError("synth: frame range is empty");
    }
    if (min_segments < 1 || min_segments > max_segments) {
        throw ConfigError("synth: segment range is empty");
    }
    if (base_noise <= 0.0) throw ConfigError("synth: base_noise must be > 0");
    if (boundary_noise_boost < 1.0) {
        throw ConfigError("synth: boundary_noise_boost must be >= 1");
    }
    if (boundary_jitter < 0) throw ConfigError("synth: boundary_jitter must be >= 0");
    if (distractor_bursts < 0) throw ConfigError("synth: distractor_bursts must be >= 0");
    if (distractor_len < 1) throw ConfigError("synth: distractor_len must be >= 1");
    if (distractor_mix < 0.0 || distractor_mix > 1.0) {
        throw ConfigError("synth: distractor_mix must be in [0, 1]");
    }
    if (max_segments * kMinSegmentFrames > min_frames) {
        throw ConfigError("synth: max_segments * " + std::to_string(kMinSegmentFrames) +
                          " exceeds min_frames; segments could fall below the minimum span");
    }
}

namespace {

std::string video_stem(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth_%04d", index);
    return buf;
}

}  // namespace

Corpus generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);

    Matrix prototypes(cfg.feature_dim, cfg.num_classes);
    {
        std::normal_distribution<double> unit(0.0, 1.0);
        for (Eigen::Index i = 0; i < prototypes.size(); ++i) {
            prototypes.data()[i] = unit(rng);
        }
    }

    Corpus corpus;
    corpus.num_classes = cfg.num_classes;
    corpus.feature_dim = cfg.feature_dim;
    for (int c = 0; c < cfg.num_classes; ++c) {
        corpus.class_names.push_back("action_" + std::to_string(c));
    }

    const int num_train = num_trainable(cfg.num_videos);
    for (int v = 0; v < cfg.num_videos; ++v) {
        std::uniform_int_distribution<int> frames_dist(cfg.min_frames, cfg.max_frames);
        std::uniform_int_distribution<int> segs_dist(cfg.min_segments, cfg.max_segments);
        const int frames = frames_dist(rng);
        const int num_segments = segs_dist(rng);

        std::vector<int> lengths(num_segments, kMinSegmentFrames);
        std::uniform_int_distribution<int> seg_pick(0, num_segments - 1);
        for (int extra = frames - num_segments * kMinSegmentFrames; extra > 0; --extra) {
            ++lengths[seg_pick(rng)];
        }

        std::vector<int> classes(num_segments);
        std::uniform_int_distribution<int> first_class(0, cfg.num_classes - 1);
        classes[0] = first_class(rng);
        std::uniform_int_distribution<int> next_class(0, cfg.num_classes - 2);
        for (int i = 1; i < num_segments; ++i) {
            int c = next_class(rng);
            if (c >= classes[i - 1]) ++c;
            classes[i] = c;
        }

        Video video;
        video.id = video_stem(v);
        video.labels.num_classes = cfg.num_classes;
        video.labels.labels.resize(frames);
        int cursor = 0;
        for (int i = 0; i < num_segments; ++i) {
            for (int k = 0; k < lengths[i]; ++k) video.labels.labels[cursor++] = classes[i];
        }
        video.labels.validate();

        std::vector<int> transitions;
        for (int t = 1; t < frames; ++t) {
            if (video.labels.labels[t] != video.labels.labels[t - 1]) {
                transitions.push_back(t);
            }
        }
        std::vector<double> sigma(frames, cfg.base_noise);
        for (int tau : transitions) {
            const int lo = std::max(0, tau - cfg.boundary_jitter);
            const int hi = std::min(frames - 1, tau + cfg.boundary_jitter);
            for (int t = lo; t <= hi; ++t) {
                sigma[t] = cfg.base_noise * cfg.boundary_noise_boost;
            }
        }

        video.features.resize(cfg.feature_dim, frames);
        std::normal_distribution<double> unit(0.0, 1.0);
        for (int t = 0; t < frames; ++t) {
            const int c = video.labels.labels[t];
            for (int d = 0; d < cfg.feature_dim; ++d) {
                video.features(d, t) = prototypes(d, c) + sigma[t] * unit(rng);
            }
        }

        if (cfg.distractor_bursts > 0) {
            // Own stream per video keeps labels and non-burst features
            // independent of the burst settings.
            std::mt19937_64 brng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (v + 1)));
            std::normal_distribution<double> bunit(0.0, 1.0);
            const int margin = cfg.boundary_jitter + 6;
            std::vector<Segment> eligible;
            for (const Segment& s : extract_segments(video.labels)) {
                if (s.length() >= 2 * margin + cfg.distractor_len) eligible.push_back(s);
            }
            if (!eligible.empty()) {
                std::uniform_int_distribution<int> seg_dist(
                    0, static_cast<int>(eligible.size()) - 1);
                std::uniform_int_distribution<int> class_dist(0, cfg.num_classes - 2);
                for (int g = 0; g < cfg.distractor_bursts; ++g) {
                    const Segment& s = eligible[static_cast<std::size_t>(seg_dist(brng))];
                    std::uniform_int_distribution<int> pos(
                        s.start + margin, s.end - margin - cfg.distractor_len);
                    const int t0 = pos(brng);
                    int d_cls = class_dist(brng);
                    if (d_cls >= s.class_id) ++d_cls;
                    for (int t = t0; t < t0 + cfg.distractor_len; ++t) {
                        for (int d = 0; d < cfg.feature_dim; ++d) {
                            video.features(d, t) =
                                cfg.distractor_mix * prototypes(d, d_cls) +
                                (1.0 - cfg.distractor_mix) * prototypes(d, s.class_id) +
                                cfg.base_noise * bunit(brng);
                        }
                    }
                }
            }
        }

        if (v < num_train) {
            corpus.train.push_back(std::move(video));
        } else {
            corpus.test.push_back(std::move(video));
        }
    }
    return corpus;
}

namespace {

std::map<std::string, int> read_classes(const fs::path& path,
                                        std::vector<std::string>* names) {
    std::ifstream in(path);
    if (!in) throw MissingFileError("missing classes file: " + path.string());
    std::map<std::string, int> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        int id = 0;
        std::string name;
        if (!(ss >> id >> name)) {
            throw ConfigError("malformed classes line: " + line);
        }
        if (id != static_cast<int>(names->size())) {
            throw ConfigError("classes file indices must be 0..C-1 in order, got " + line);
        }
        names->push_back(name);
        ids[name] = id;
    }
    if (ids.empty()) throw ConfigError("classes file is empty: " + path.string());
    return ids;
}

std::vector<std::string> read_split(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFileError("missing split file: " + path.string());
    std::vector<std::string> stems;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) stems.push_back(line);
    }
    return stems;
}

LabelSequence read_labels_stream(std::istream& in, const std::string& what,
                                 const std::map<std::string, int>& class_ids) {
    std::vector<int> ids;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        const auto it = class_ids.find(line);
        if (it == class_ids.end()) {
            throw UnknownLabelError("unknown label '" + line + "' in " + what);
        }
        ids.push_back(it->second);
    }
    if (ids.empty()) throw EmptySequenceError("no labels in " + what);
    LabelSequence seq;
    seq.num_classes = static_cast<int>(class_ids.size());
    seq.labels = Eigen::Map<const IntVector>(ids.data(), static_cast<Eigen::Index>(ids.size()));
    return seq;
}

Matrix read_features_bin(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError("missing features file: " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line)) {
        throw ConfigError("features file has no header: " + path.string());
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad features header in " + path.string() + ": " + e.what());
    }
    const Eigen::Index rows = header.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = header.at("cols").get<Eigen::Index>();
    if (rows < 1 || cols < 1) {
        throw ConfigError("features header declares empty matrix: " + path.string());
    }
    std::vector<float> raw(static_cast<std::size_t>(rows * cols));
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(raw.size() * sizeof(float))) {
        throw ConfigError("features file truncated: " + path.string());
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = static_cast<double>(raw[static_cast<std::size_t>(r * cols + c)]);
        }
    }
    return m;
}

Matrix read_features_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFileError("missing features file: " + path.string());
    std::vector<std::vector<double>> frames;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            row.push_back(std::stod(cell));
        }
        if (!frames.empty() && row.size() != frames.front().size()) {
            throw ConfigError("ragged csv row in " + path.string());
        }
        frames.push_back(std::move(row));
    }
    if (frames.empty()) throw ConfigError("empty features csv: " + path.string());
    Matrix m(static_cast<Eigen::Index>(frames.front().size()),
             static_cast<Eigen::Index>(frames.size()));
    for (std::size_t t = 0; t < frames.size(); ++t) {
        for (std::size_t d = 0; d < frames[t].size(); ++d) {
            m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(t)) = frames[t][d];
        }
    }
    return m;
}

Video load_video(const fs::path& root, const std::string& stem,
                 const std::map<std::string, int>& class_ids) {
    Video video;
    video.id = stem;

    const fs::path label_path = root / "groundTruth" / (stem + ".txt");
    std::ifstream label_in(label_path);
    if (!label_in) throw MissingFileError("missing labels file: " + label_path.string());
    video.labels = read_labels_stream(label_in, label_path.string(), class_ids);

    const fs::path bin_path = root / "features" / (stem + ".bin");
    const fs::path csv_path = root / "features" / (stem + ".csv");
    if (fs::exists(bin_path)) {
        video.features = read_features_bin(bin_path);
    } else if (fs::exists(csv_path)) {
        video.features = read_features_csv(csv_path);
    } else {
        throw MissingFileError("no features for video " + stem + " under " +
                               (root / "features").string());
    }

    if (video.features.cols() != video.labels.frames()) {
        throw LengthMismatchError("video " + stem + ": features have " +
                                  std::to_string(video.features.cols()) +
                                  " frames, labels have " +
                                  std::to_string(video.labels.frames()));
    }
    return video;
}

}  // namespace

Corpus load_dataset(const std::string& root_str) {
    const fs::path root(root_str);
    if (!fs::is_directory(root)) {
        throw MissingFileError("dataset root is not a directory: " + root_str);
    }
    Corpus corpus;
    const auto class_ids = read_classes(root / "classes.txt", &corpus.class_names);
    corpus.num_classes = static_cast<int>(corpus.class_names.size());

    for (const std::string& stem : read_split(root / "splits" / "train.txt")) {
        corpus.train.push_back(load_video(root, stem, class_ids));
    }
    for (const std::string& stem : read_split(root / "splits" / "test.txt")) {
        corpus.test.push_back(load_video(root, stem, class_ids));
    }
    if (corpus.train.empty() && corpus.test.empty()) {
        throw ConfigError("dataset has no videos: " + root_str);
    }
    const Video& first = corpus.train.empty() ? corpus.test.front() : corpus.train.front();
    corpus.feature_dim = static_cast<int>(first.features.rows());
    for (const auto* split : {&corpus.train, &corpus.test}) {
        for (const Video& v : *split) {
            if (v.features.rows() != corpus.feature_dim) {
                throw ShapeMismatchError("video " + v.id + " has feature dim " +
                                         std::to_string(v.features.rows()) +
                                         ", expected " + std::to_string(corpus.feature_dim));
            }
        }
    }
    return corpus;
}

void save_labels(const std::string& path, const LabelSequence& labels,
                 const std::vector<std::string>& class_names) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw MissingFileError("cannot write labels: " + path);
    for (int label : labels.labels) {
        if (label < 0 || label >= static_cast<int>(class_names.size())) {
            throw UnknownLabelError("label id " + std::to_string(label) +
                                    " outside class table");
        }
        out << class_names[static_cast<std::size_t>(label)] << '\n';
    }
    if (!out) throw Error("short write: " + path);
}

LabelSequence load_labels(const std::string& path,
                          const std::vector<std::string>& class_names) {
    std::map<std::string, int> ids;
    for (std::size_t i = 0; i < class_names.size(); ++i) {
        ids[class_names[i]] = static_cast<int>(i);
    }
    std::ifstream in(path);
    if (!in) throw MissingFileError("missing labels file: " + path);
    return read_labels_stream(in, path, ids);
}

namespace {

void write_features_bin(const fs::path& path, const Matrix& features) {
    nlohmann::json header;
    header["rows"] = features.rows();
    header["cols"] = features.cols();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw MissingFileError("cannot write features: " + path.string());
    out << header.dump() << '\n';
    std::vector<float> raw(static_cast<std::size_t>(features.size()));
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        for (Eigen::Index c = 0; c < features.cols(); ++c) {
            raw[static_cast<std::size_t>(r * features.cols() + c)] =
                static_cast<float>(features(r, c));
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!out) throw Error("short write: " + path.string());
}

}  // namespace

void save_corpus(const std::string& root_str, const Corpus& corpus) {
    const fs::path root(root_str);
    fs::create_directories(root / "groundTruth");
    fs::create_directories(root / "features");
    fs::create_directories(root / "splits");

    {
        std::ofstream out(root / "classes.txt", std::ios::trunc);
        if (!out) throw MissingFileError("cannot write classes.txt under " + root_str);
        for (std::size_t i = 0; i < corpus.class_names.size(); ++i) {
            out << i << ' ' << corpus.class_names[i] << '\n';
        }
    }
    const std::pair<const char*, const std::vector<Video>*> splits[] = {
        {"train.txt", &corpus.train}, {"test.txt", &corpus.test}};
    for (const auto& [split, videos] : splits) {
        std::ofstream out(root / "splits" / split, std::ios::trunc);
        if (!out) throw MissingFileError("cannot write split file under " + root_str);
        for (const Video& v : *videos) out << v.id << '\n';
    }
    for (const auto* split : {&corpus.train, &corpus.test}) {
        for (const Video& v : *split) {
            save_labels((root / "groundTruth" / (v.id + ".txt")).string(), v.labels,
                        corpus.class_names);
            write_features_bin(root / "features" / (v.id + ".bin"), v.features);
        }
    }
}

}  // namespace tas
