#include "tas/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "tas/errors.hpp"

namespace tas {

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                         const std::string& path) {
    if (!j.is_object()) {
        throw ConfigError(path + " must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (known.find(key) == known.end()) {
            throw ConfigError("unknown config key: " + path + "." + key);
        }
    }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& path) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("bad value for config key: " + path + "." + key);
    }
}

}  // namespace

nlohmann::json synth_to_json(const SynthConfig& cfg) {
    return {
        {"num_classes", cfg.num_classes},
        {"num_videos", cfg.num_videos},
        {"min_frames", cfg.min_frames},
        {"max_frames", cfg.max_frames},
        {"min_segments", cfg.min_segments},
        {"max_segments", cfg.max_segments},
        {"feature_dim", cfg.feature_dim},
        {"base_noise", cfg.base_noise},
        {"boundary_noise_boost", cfg.boundary_noise_boost},
        {"boundary_jitter", cfg.boundary_jitter},
        {"distractor_bursts", cfg.distractor_bursts},
        {"distractor_len", cfg.distractor_len},
        {"distractor_mix", cfg.distractor_mix},
        {"seed", cfg.seed},
    };
}

SynthConfig synth_from_json(const nlohmann::json& j, const std::string& path) {
    reject_unknown_keys(j,
                        {"num_classes", "num_videos", "min_frames", "max_frames",
                         "min_segments", "max_segments", "feature_dim", "base_noise",
                         "boundary_noise_boost", "boundary_jitter", "distractor_bursts",
                         "distractor_len", "distractor_mix", "seed"},
                        path);
    SynthConfig cfg;
    read_field(j, "num_classes", cfg.num_classes, path);
    read_field(j, "num_videos", cfg.num_videos, path);
    read_field(j, "min_frames", cfg.min_frames, path);
    read_field(j, "max_frames", cfg.max_frames, path);
    read_field(j, "min_segments", cfg.min_segments, path);
    read_field(j, "max_segments", cfg.max_segments, path);
    read_field(j, "feature_dim", cfg.feature_dim, path);
    read_field(j, "base_noise", cfg.base_noise, path);
    read_field(j, "boundary_noise_boost", cfg.boundary_noise_boost, path);
    read_field(j, "boundary_jitter", cfg.boundary_jitter, path);
    read_field(j, "distractor_bursts", cfg.distractor_bursts, path);
    read_field(j, "distractor_len", cfg.distractor_len, path);
    read_field(j, "distractor_mix", cfg.distractor_mix, path);
    read_field(j, "seed", cfg.seed, path);
    return cfg;
}

namespace {

nlohmann::json loss_to_json(const LossConfig& cfg) {
    return {
        {"lambda_B", cfg.lambda_b},
        {"lambda_S", cfg.lambda_s},
        {"window_w", cfg.window_w},
        {"margin_delta", cfg.margin_delta},
        {"e_start", cfg.e_start},
        {"eps", cfg.eps},
        {"assignment", cfg.assignment == Assignment::Decoupled ? "decoupled" : "allframes"},
        {"tmse_weight", cfg.tmse_weight},
        {"tmse_clip", cfg.tmse_clip},
    };
}

LossConfig loss_from_json(const nlohmann::json& j, const std::string& path) {
    reject_unknown_keys(j,
                        {"lambda_B", "lambda_S", "window_w", "margin_delta", "e_start",
                         "eps", "assignment", "tmse_weight", "tmse_clip"},
                        path);
    LossConfig cfg;
    read_field(j, "lambda_B", cfg.lambda_b, path);
    read_field(j, "lambda_S", cfg.lambda_s, path);
    read_field(j, "window_w", cfg.window_w, path);
    read_field(j, "margin_delta", cfg.margin_delta, path);
    read_field(j, "e_start", cfg.e_start, path);
    read_field(j, "eps", cfg.eps, path);
    if (j.contains("assignment")) {
        const std::string a = j.at("assignment").get<std::string>();
        if (a == "decoupled") {
            cfg.assignment = Assignment::Decoupled;
        } else if (a == "allframes") {
            cfg.assignment = Assignment::AllFrames;
        } else {
            throw ConfigError("bad value for config key: " + path +
                              ".assignment (want decoupled or allframes)");
        }
    }
    read_field(j, "tmse_weight", cfg.tmse_weight, path);
    read_field(j, "tmse_clip", cfg.tmse_clip, path);
    return cfg;
}

nlohmann::json backbone_to_json(const BackboneConfig& cfg) {
    return {
        {"num_stages", cfg.num_stages},
        {"layers_per_stage", cfg.layers_per_stage},
        {"hidden_width", cfg.hidden_width},
        {"num_classes", cfg.num_classes},
        {"input_dim", cfg.input_dim},
        {"seed", cfg.seed},
    };
}

BackboneConfig backbone_from_json(const nlohmann::json& j, const std::string& path) {
    reject_unknown_keys(j,
                        {"num_stages", "layers_per_stage", "hidden_width", "num_classes",
                         "input_dim", "seed"},
                        path);
    BackboneConfig cfg;
    read_field(j, "num_stages", cfg.num_stages, path);
    read_field(j, "layers_per_stage", cfg.layers_per_stage, path);
    read_field(j, "hidden_width", cfg.hidden_width, path);
    read_field(j, "num_classes", cfg.num_classes, path);
    read_field(j, "input_dim", cfg.input_dim, path);
    read_field(j, "seed", cfg.seed, path);
    return cfg;
}

nlohmann::json optimizer_to_json(const OptimizerConfig& cfg) {
    return {
        {"kind", cfg.kind == OptimizerKind::Adam ? "adam" : "sgd"},
        {"learning_rate", cfg.learning_rate},
        {"beta1", cfg.beta1},
        {"beta2", cfg.beta2},
        {"eps", cfg.eps},
    };
}

OptimizerConfig optimizer_from_json(const nlohmann::json& j, const std::string& path) {
    reject_unknown_keys(j, {"kind", "learning_rate", "beta1", "beta2", "eps"}, path);
    OptimizerConfig cfg;
    if (j.contains("kind")) {
        const std::string k = j.at("kind").get<std::string>();
        if (k == "adam") {
            cfg.kind = OptimizerKind::Adam;
        } else if (k == "sgd") {
            cfg.kind = OptimizerKind::Sgd;
        } else {
            throw ConfigError("bad value for config key: " + path + ".kind (want adam or sgd)");
        }
    }
    read_field(j, "learning_rate", cfg.learning_rate, path);
    read_field(j, "beta1", cfg.beta1, path);
    read_field(j, "beta2", cfg.beta2, path);
    read_field(j, "eps", cfg.eps, path);
    return cfg;
}

}  // namespace

nlohmann::json train_to_json(const TrainConfig& cfg) {
    return {
        {"loss", loss_to_json(cfg.loss)},
        {"backbone", backbone_to_json(cfg.backbone)},
        {"optimizer", optimizer_to_json(cfg.optimizer)},
        {"epochs", cfg.epochs},
        {"batch", cfg.batch},
        {"seed", cfg.seed},
        {"eval_every", cfg.eval_every},
    };
}

TrainConfig train_from_json(const nlohmann::json& j, const std::string& path) {
    reject_unknown_keys(
        j, {"loss", "backbone", "optimizer", "epochs", "batch", "seed", "eval_every"}, path);
    TrainConfig cfg;
    if (j.contains("loss")) cfg.loss = loss_from_json(j.at("loss"), path + ".loss");
    if (j.contains("backbone")) {
        cfg.backbone = backbone_from_json(j.at("backbone"), path + ".backbone");
    }
    if (j.contains("optimizer")) {
        cfg.optimizer = optimizer_from_json(j.at("optimizer"), path + ".optimizer");
    }
    read_field(j, "epochs", cfg.epochs, path);
    read_field(j, "batch", cfg.batch, path);
    read_field(j, "seed", cfg.seed, path);
    read_field(j, "eval_every", cfg.eval_every, path);
    return cfg;
}

nlohmann::json cli_config_to_json(const CliConfig& cfg) {
    return {
        {"schema_version", cfg.schema_version},
        {"synth", synth_to_json(cfg.synth)},
        {"train", train_to_json(cfg.train)},
        {"out", cfg.out},
    };
}

CliConfig cli_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j, {"schema_version", "synth", "train", "out"}, "config");
    CliConfig cfg;
    read_field(j, "schema_version", cfg.schema_version, "config");
    if (cfg.schema_version != 1) {
        throw ConfigError("unsupported config schema_version: " +
                          std::to_string(cfg.schema_version));
    }
    if (j.contains("synth")) cfg.synth = synth_from_json(j.at("synth"), "synth");
    if (j.contains("train")) cfg.train = train_from_json(j.at("train"), "train");
    read_field(j, "out", cfg.out, "config");
    return cfg;
}

CliConfig load_cli_config(const std::string& config_path) {
    std::ifstream in(config_path);
    if (!in) throw MissingFileError("cannot open config: " + config_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return cli_config_from_json(j);
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must look like path.to.key=value, got: " + assignment);
    }
    const std::string key_path = assignment.substr(0, eq);
    const std::string value_text = assignment.substr(eq + 1);

    nlohmann::json value;
    try {
        value = nlohmann::json::parse(value_text);
    } catch (const nlohmann::json::exception&) {
        value = value_text;  // bare words become strings
    }

    nlohmann::json* node = &doc;
    std::istringstream ss(key_path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) {
        if (part.empty()) {
            throw ConfigError("override path has an empty component: " + key_path);
        }
        parts.push_back(part);
    }
    // shorthand: loss.*, backbone.*, optimizer.*, epochs=... address the train section
    static const char* kTrainKeys[] = {"loss",  "backbone", "optimizer", "epochs",
                                       "batch", "seed",     "eval_every"};
    for (const char* key : kTrainKeys) {
        if (parts.front() == key) {
            parts.insert(parts.begin(), "train");
            break;
        }
    }
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        node = &(*node)[parts[i]];
        if (!node->is_object() && !node->is_null()) {
            throw ConfigError("override path crosses a non-object: " + key_path);
        }
    }
    (*node)[parts.back()] = std::move(value);
}

std::uint64_t fnv1a(const std::string& data) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::string config_hash(const nlohmann::json& j) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

}  // namespace tas
