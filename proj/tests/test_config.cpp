#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "tas/config.hpp"
#include "tas/errors.hpp"

using nlohmann::json;
using namespace tas;

namespace {

// checks that `fn` throws E and that the message contains `needle`
template <typename E, typename Fn>
void check_throws_with(Fn&& fn, const std::string& needle) {
    bool threw = false;
    try {
        fn();
    } catch (const E& e) {
        threw = true;
        CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
    CHECK(threw);
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("tas_config_test_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("default config round-trips through json unchanged") {
    CliConfig defaults;
    const json a = cli_config_to_json(defaults);
    const json b = cli_config_to_json(cli_config_from_json(a));
    CHECK(a == b);

    CHECK(a.at("schema_version") == 1);
    CHECK(a.at("train").at("loss").at("assignment") == "decoupled");
    CHECK(a.at("train").at("optimizer").at("kind") == "adam");
    CHECK(a.at("train").at("loss").contains("lambda_B"));
    CHECK(a.at("train").at("loss").contains("lambda_S"));
}

TEST_CASE("empty document yields pure defaults") {
    const CliConfig parsed = cli_config_from_json(json::object());
    const CliConfig defaults;
    CHECK(cli_config_to_json(parsed) == cli_config_to_json(defaults));
}

TEST_CASE("unknown keys are rejected with the dotted path") {
    check_throws_with<ConfigError>(
        [] { cli_config_from_json(json{{"bogus", 1}}); }, "config.bogus");
    check_throws_with<ConfigError>(
        [] { cli_config_from_json(json{{"synth", {{"noise", 1.0}}}}); }, "synth.noise");
    check_throws_with<ConfigError>(
        [] {
            cli_config_from_json(json{{"train", {{"loss", {{"lambda_X", 1.0}}}}}});
        },
        "train.loss.lambda_X");
    check_throws_with<ConfigError>(
        [] {
            cli_config_from_json(json{{"train", {{"backbone", {{"stages", 2}}}}}});
        },
        "train.backbone.stages");
    check_throws_with<ConfigError>(
        [] {
            cli_config_from_json(json{{"train", {{"optimizer", {{"momentum", 0.9}}}}}});
        },
        "train.optimizer.momentum");
}

TEST_CASE("wrong value types are rejected with the dotted path") {
    check_throws_with<ConfigError>(
        [] { cli_config_from_json(json{{"synth", {{"num_classes", "six"}}}}); },
        "synth.num_classes");
    check_throws_with<ConfigError>(
        [] {
            cli_config_from_json(json{{"train", {{"epochs", json::array()}}}});
        },
        "train.epochs");
}

TEST_CASE("enum-like fields accept only their spellings") {
    json doc = {{"train", {{"loss", {{"assignment", "decoupled"}}}}}};
    CHECK(cli_config_from_json(doc).train.loss.assignment == Assignment::Decoupled);
    doc["train"]["loss"]["assignment"] = "allframes";
    CHECK(cli_config_from_json(doc).train.loss.assignment == Assignment::AllFrames);
    doc["train"]["loss"]["assignment"] = "mixed";
    check_throws_with<ConfigError>([&] { cli_config_from_json(doc); },
                                   "train.loss.assignment");

    json opt = {{"train", {{"optimizer", {{"kind", "sgd"}}}}}};
    CHECK(cli_config_from_json(opt).train.optimizer.kind == OptimizerKind::Sgd);
    opt["train"]["optimizer"]["kind"] = "rmsprop";
    check_throws_with<ConfigError>([&] { cli_config_from_json(opt); },
                                   "train.optimizer.kind");
}

TEST_CASE("schema_version must be 1") {
    check_throws_with<ConfigError>(
        [] { cli_config_from_json(json{{"schema_version", 2}}); }, "schema_version");
    CHECK(cli_config_from_json(json{{"schema_version", 1}}).schema_version == 1);
}

TEST_CASE("partial documents keep defaults for everything else") {
    const json doc = {{"synth", {{"num_classes", 9}, {"base_noise", 0.25}}},
                      {"train", {{"epochs", 3}}}};
    const CliConfig cfg = cli_config_from_json(doc);
    CHECK(cfg.synth.num_classes == 9);
    CHECK(cfg.synth.base_noise == doctest::Approx(0.25));
    CHECK(cfg.train.epochs == 3);

    const SynthConfig synth_defaults;
    CHECK(cfg.synth.num_videos == synth_defaults.num_videos);
    const TrainConfig train_defaults;
    CHECK(cfg.train.seed == train_defaults.seed);
    CHECK(cfg.train.loss.lambda_b == train_defaults.loss.lambda_b);
}

TEST_CASE("apply_override writes typed values at dotted paths") {
    json doc = cli_config_to_json(CliConfig{});

    apply_override(doc, "synth.num_classes=9");
    CHECK(doc["synth"]["num_classes"] == 9);

    apply_override(doc, "synth.base_noise=2.5");
    CHECK(doc["synth"]["base_noise"] == 2.5);

    apply_override(doc, "train.loss.lambda_S=0.2");
    CHECK(doc["train"]["loss"]["lambda_S"] == 0.2);

    // bare words that are not valid JSON become strings
    apply_override(doc, "out=runs/foo");
    CHECK(doc["out"] == "runs/foo");

    // the document still parses back into a config
    const CliConfig cfg = cli_config_from_json(doc);
    CHECK(cfg.synth.num_classes == 9);
    CHECK(cfg.train.loss.lambda_s == doctest::Approx(0.2));
    CHECK(cfg.out == "runs/foo");
}

TEST_CASE("train-section shorthand omits the leading train.") {
    json doc = cli_config_to_json(CliConfig{});

    apply_override(doc, "loss.lambda_B=0.5");
    CHECK(doc["train"]["loss"]["lambda_B"] == 0.5);

    apply_override(doc, "backbone.num_stages=1");
    CHECK(doc["train"]["backbone"]["num_stages"] == 1);

    apply_override(doc, "optimizer.learning_rate=0.01");
    CHECK(doc["train"]["optimizer"]["learning_rate"] == 0.01);

    apply_override(doc, "epochs=7");
    CHECK(doc["train"]["epochs"] == 7);

    apply_override(doc, "seed=42");
    CHECK(doc["train"]["seed"] == 42);

    // synth keys are never redirected
    apply_override(doc, "synth.seed=13");
    CHECK(doc["synth"]["seed"] == 13);
    CHECK(doc["train"]["seed"] == 42);
}

TEST_CASE("malformed overrides are rejected") {
    json doc = cli_config_to_json(CliConfig{});
    check_throws_with<ConfigError>([&] { apply_override(doc, "no_equals_here"); },
                                   "path.to.key=value");
    check_throws_with<ConfigError>([&] { apply_override(doc, "=5"); },
                                   "path.to.key=value");
    check_throws_with<ConfigError>([&] { apply_override(doc, "synth..x=1"); },
                                   "empty component");
    check_throws_with<ConfigError>(
        [&] { apply_override(doc, "schema_version.x=1"); }, "non-object");
}

TEST_CASE("overrides that invent keys fail validation afterwards") {
    json doc = cli_config_to_json(CliConfig{});
    apply_override(doc, "synth.bogus=1");
    check_throws_with<ConfigError>([&] { cli_config_from_json(doc); }, "synth.bogus");
}

TEST_CASE("config_hash is stable and sensitive") {
    const json a = cli_config_to_json(CliConfig{});
    const std::string h1 = config_hash(a);
    const std::string h2 = config_hash(a);
    CHECK(h1 == h2);
    CHECK(h1.size() == 16);
    CHECK(h1.find_first_not_of("0123456789abcdef") == std::string::npos);

    json b = a;
    apply_override(b, "train.seed=12345");
    CHECK(config_hash(b) != h1);
}

TEST_CASE("fnv1a matches the published 64-bit reference vectors") {
    CHECK(fnv1a("") == 14695981039346656037ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("load_cli_config reads files and reports failures") {
    TempDir tmp;
    const std::string good = (tmp.path / "good.json").string();
    {
        std::ofstream out(good);
        out << R"({"train": {"epochs": 2}})";
    }
    CHECK(load_cli_config(good).train.epochs == 2);

    check_throws_with<MissingFileError>(
        [&] { load_cli_config((tmp.path / "absent.json").string()); }, "absent.json");

    const std::string bad = (tmp.path / "bad.json").string();
    {
        std::ofstream out(bad);
        out << "{not json";
    }
    check_throws_with<ConfigError>([&] { load_cli_config(bad); }, "not valid JSON");
}
