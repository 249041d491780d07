#include "tas/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "tas/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace tas {

void BackboneConfig::validate() const {
    if (num_stages < 1) throw ConfigError("backbone: num_stages must be >= 1");
    if (layers_per_stage < 1) throw ConfigError("backbone: layers_per_stage must be >= 1");
    if (hidden_width < 1) throw ConfigError("backbone: hidden_width must be >= 1");
    if (num_classes < 1) throw ConfigError("backbone: num_classes must be >= 1");
    if (input_dim < 1) throw ConfigError("backbone: input_dim must be >= 1");
}

std::size_t Parameters::scalar_count() const {
    std::size_t n = 0;
    for_each_block([&n](const std::string&, const Matrix& block) {
        n += static_cast<std::size_t>(block.size());
    });
    return n;
}

namespace {

Parameters allocate(const BackboneConfig& config) {
    config.validate();
    const int h = config.hidden_width;
    const int c = config.num_classes;
    Parameters params;
    params.config = config;
    params.stages.resize(config.num_stages);
    for (int s = 0; s < config.num_stages; ++s) {
        StageParameters& st = params.stages[s];
        const int in_dim = (s == 0) ? config.input_dim : c;
        st.in_w.resize(h, in_dim);
        st.in_b.resize(h, 1);
        st.conv.resize(config.layers_per_stage);
        st.point_w.resize(config.layers_per_stage);
        st.point_b.resize(config.layers_per_stage);
        for (int l = 0; l < config.layers_per_stage; ++l) {
            st.conv[l].resize(h, h * kConvTaps);
            st.point_w[l].resize(h, h);
            st.point_b[l].resize(h, 1);
        }
        st.head_w.resize(c + 1, h);
        st.head_b.resize(c + 1, 1);
    }
    return params;
}

bool is_bias(const std::string& name) {
    return name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
}

}  // namespace

Parameters init_parameters(const BackboneConfig& config) {
    Parameters params = allocate(config);
    std::mt19937_64 rng(config.seed);
    params.for_each_block([&rng](const std::string& name, Matrix& block) {
        if (is_bias(name)) {
            block.setZero();
            return;
        }
        const double limit = 1.0 / std::sqrt(static_cast<double>(block.cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index i = 0; i < block.size(); ++i) {
            block.data()[i] = dist(rng);
        }
    });
    return params;
}

ForwardResult forward(ad::Tape& tape, const Parameters& params, const Matrix& features) {
    const BackboneConfig& cfg = params.config;
    cfg.validate();
    if (features.rows() != cfg.input_dim) {
        throw ShapeMismatchError("forward: features have " +
                                 std::to_string(features.rows()) +
                                 " rows, config expects " + std::to_string(cfg.input_dim));
    }
    if (features.cols() < 1) {
        throw EmptySequenceError("forward: zero-length feature sequence");
    }
    const int c = cfg.num_classes;

    ForwardResult res;
    std::vector<ad::Var> blocks;
    params.for_each_block([&](const std::string&, const Matrix& block) {
        blocks.push_back(tape.leaf(block));
    });
    res.param_blocks = blocks;

    std::vector<int> class_rows(c);
    for (int i = 0; i < c; ++i) class_rows[i] = i;

    ad::Var stage_input = tape.leaf(features);
    std::size_t b = 0;
    for (int s = 0; s < cfg.num_stages; ++s) {
        const ad::Var in_w = blocks[b++];
        const ad::Var in_b = blocks[b++];
        ad::Var x = ad::pointwise_conv(stage_input, in_w, in_b);
        for (int l = 0; l < cfg.layers_per_stage; ++l) {
            const ad::Var kernel = blocks[b++];
            const ad::Var point_w = blocks[b++];
            const ad::Var point_b = blocks[b++];
            const ad::Var hidden =
                ad::relu(ad::conv1d_dilated(x, kernel, 1 << l));
            x = ad::add(x, ad::pointwise_conv(hidden, point_w, point_b));
        }
        const ad::Var head_w = blocks[b++];
        const ad::Var head_b = blocks[b++];
        const ad::Var raw = ad::pointwise_conv(x, head_w, head_b);
        const ad::Var class_probs =
            ad::softmax_columns(ad::gather_rows(raw, class_rows));

        StageForward sf;
        sf.raw_logits = raw;
        sf.class_probs = class_probs;
        sf.map.class_probs = tape.value(class_probs);
        sf.map.boundary_probs =
            (1.0 / (1.0 + (-tape.value(raw).row(c).transpose().array()).exp()))
                .matrix();
        sf.map.validate();
        res.stages.push_back(std::move(sf));

        stage_input = class_probs;
    }
    return res;
}

Prediction predict(const ProbabilityMap& map) {
    map.validate();
    const int c = static_cast<int>(map.class_probs.rows());
    const int t = static_cast<int>(map.class_probs.cols());
    Prediction pred;
    pred.labels.num_classes = c;
    pred.labels.labels.resize(t);
    for (int j = 0; j < t; ++j) {
        int best = 0;
        double best_val = map.class_probs(0, j);
        for (int i = 1; i < c; ++i) {
            if (map.class_probs(i, j) > best_val) {
                best_val = map.class_probs(i, j);
                best = i;
            }
        }
        pred.labels.labels[j] = best;
    }
    pred.boundary_probs = map.boundary_probs;
    return pred;
}

void save_checkpoint(const std::string& path, const Parameters& params) {
    nlohmann::json header;
    header["schema_version"] = 1;
    header["backbone"] = {
        {"num_stages", params.config.num_stages},
        {"layers_per_stage", params.config.layers_per_stage},
        {"hidden_width", params.config.hidden_width},
        {"num_classes", params.config.num_classes},
        {"input_dim", params.config.input_dim},
        {"seed", params.config.seed},
    };
    nlohmann::json blocks = nlohmann::json::array();
    params.for_each_block([&blocks](const std::string& name, const Matrix& block) {
        blocks.push_back({{"name", name},
                          {"rows", block.rows()},
                          {"cols", block.cols()}});
    });
    header["blocks"] = std::move(blocks);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw MissingFileError("cannot open checkpoint for writing: " + path);
    out << header.dump() << '\n';
    params.for_each_block([&out](const std::string&, const Matrix& block) {
        out.write(reinterpret_cast<const char*>(block.data()),
                  static_cast<std::streamsize>(block.size() * sizeof(double)));
    });
    out.flush();
    if (!out) throw Error("short write while saving checkpoint: " + path);
}

Parameters load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError("cannot open checkpoint: " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) {
        throw ConfigError("checkpoint has no header line: " + path);
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    if (!header.contains("schema_version") || header["schema_version"].get<int>() != 1) {
        throw ConfigError("checkpoint schema_version mismatch");
    }
    const auto& bc = header.at("backbone");
    BackboneConfig config;
    config.num_stages = bc.at("num_stages").get<int>();
    config.layers_per_stage = bc.at("layers_per_stage").get<int>();
    config.hidden_width = bc.at("hidden_width").get<int>();
    config.num_classes = bc.at("num_classes").get<int>();
    config.input_dim = bc.at("input_dim").get<int>();
    config.seed = bc.at("seed").get<std::uint64_t>();

    Parameters params = allocate(config);
    const auto& blocks = header.at("blocks");
    std::size_t i = 0;
    params.for_each_block([&](const std::string& name, Matrix& block) {
        if (i >= blocks.size()) {
            throw ConfigError("checkpoint header lists too few blocks");
        }
        const auto& entry = blocks[i++];
        if (entry.at("name").get<std::string>() != name ||
            entry.at("rows").get<Eigen::Index>() != block.rows() ||
            entry.at("cols").get<Eigen::Index>() != block.cols()) {
            throw ConfigError("checkpoint block mismatch at " + name);
        }
        in.read(reinterpret_cast<char*>(block.data()),
                static_cast<std::streamsize>(block.size() * sizeof(double)));
        if (in.gcount() !=
            static_cast<std::streamsize>(block.size() * sizeof(double))) {
            throw ConfigError("checkpoint truncated at block " + name);
        }
        if (!block.allFinite()) {
            throw ConfigError("checkpoint block " + name + " holds non-finite values");
        }
    });
    if (i != blocks.size()) {
        throw ConfigError("checkpoint header lists extra blocks");
    }
    return params;
}

}  // namespace tas
