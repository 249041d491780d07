#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "tas/data.hpp"
#include "tas/trainer.hpp"

namespace tas {

// Top-level config document. Unknown keys are rejected with the offending
// dotted path; missing keys fall back to the defaults baked into the
// structs.
struct CliConfig {
    int schema_version = 1;
    SynthConfig synth;
    TrainConfig train;
    std::string out;  // default output directory, overridable on the CLI
};

nlohmann::json synth_to_json(const SynthConfig& cfg);
SynthConfig synth_from_json(const nlohmann::json& j, const std::string& path = "synth");

nlohmann::json train_to_json(const TrainConfig& cfg);
TrainConfig train_from_json(const nlohmann::json& j, const std::string& path = "train");

nlohmann::json cli_config_to_json(const CliConfig& cfg);
CliConfig cli_config_from_json(const nlohmann::json& j);
CliConfig load_cli_config(const std::string& config_path);

// Applies one "dotted.path=value" override to a JSON document. The value
// text is parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// FNV-1a over the compact dump; stable fingerprint for manifests.
std::uint64_t fnv1a(const std::string& data);
std::string config_hash(const nlohmann::json& j);

}  // namespace tas
