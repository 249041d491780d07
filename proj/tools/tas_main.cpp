#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tas/config.hpp"
#include "tas/data.hpp"
#include "tas/errors.hpp"
#include "tas/gradcheck_suite.hpp"
#include "tas/metrics.hpp"
#include "tas/model.hpp"
#include "tas/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config file");
    cmd->add_option("--set", opts.sets,
                    "dotted-path override, e.g. --set train.loss.lambda_b=0");
}

tas::CliConfig resolve_config(const CommonOpts& opts, nlohmann::json* resolved) {
    nlohmann::json doc = nlohmann::json::object();
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) throw tas::MissingFileError("cannot open config: " + opts.config_path);
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw tas::ConfigError("config is not valid JSON: " + std::string(e.what()));
        }
    }
    for (const std::string& assignment : opts.sets) {
        tas::apply_override(doc, assignment);
    }
    tas::CliConfig cfg = tas::cli_config_from_json(doc);
    if (resolved != nullptr) *resolved = tas::cli_config_to_json(cfg);
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw tas::MissingFileError("cannot write " + path.string());
    out << text;
    if (!out) throw tas::Error("short write: " + path.string());
}

std::string pick_out(const std::string& flag_value, const std::string& config_value,
                     const std::string& fallback) {
    if (!flag_value.empty()) return flag_value;
    if (!config_value.empty()) return config_value;
    return fallback;
}

void adopt_corpus_dims(tas::TrainConfig& cfg, const tas::Corpus& corpus) {
    if (cfg.backbone.num_classes == 0) {
        cfg.backbone.num_classes = corpus.num_classes;
    } else if (cfg.backbone.num_classes != corpus.num_classes) {
        throw tas::ConfigError("train.backbone.num_classes is " +
                               std::to_string(cfg.backbone.num_classes) +
                               " but the corpus has " + std::to_string(corpus.num_classes) +
                               " classes");
    }
    if (cfg.backbone.input_dim == 0) {
        cfg.backbone.input_dim = corpus.feature_dim;
    } else if (cfg.backbone.input_dim != corpus.feature_dim) {
        throw tas::ConfigError("train.backbone.input_dim is " +
                               std::to_string(cfg.backbone.input_dim) +
                               " but corpus features have dim " +
                               std::to_string(corpus.feature_dim));
    }
}

int cmd_gen_data(const CommonOpts& common, const std::string& out_flag) {
    nlohmann::json resolved;
    const tas::CliConfig cfg = resolve_config(common, &resolved);
    const std::string out = pick_out(out_flag, cfg.out, "data");

    const tas::Corpus corpus = tas::generate(cfg.synth);
    tas::save_corpus(out, corpus);

    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["seed"] = cfg.synth.seed;
    manifest["config_hash"] = tas::config_hash(resolved);
    manifest["config"] = resolved;
    manifest["num_classes"] = corpus.num_classes;
    manifest["feature_dim"] = corpus.feature_dim;
    manifest["num_train"] = corpus.train.size();
    manifest["num_test"] = corpus.test.size();
    write_text(fs::path(out) / "manifest.json", manifest.dump(2) + "\n");

    std::cout << "wrote " << corpus.train.size() << " train / " << corpus.test.size()
              << " test videos to " << out << " (config hash "
              << tas::config_hash(resolved) << ")\n";
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& data_dir,
              const std::string& out_flag, std::uint64_t seed_flag, bool seed_given,
              int jobs) {
    tas::CliConfig cfg = resolve_config(common, nullptr);
    const tas::Corpus corpus = tas::load_dataset(data_dir);
    adopt_corpus_dims(cfg.train, corpus);
    if (seed_given) {
        cfg.train.seed = seed_flag;
        cfg.train.backbone.seed = seed_flag;
    }
    const nlohmann::json resolved = tas::cli_config_to_json(cfg);
    const std::string out = pick_out(out_flag, cfg.out, "run");
    fs::create_directories(out);

    tas::TrainResult result = tas::train(corpus, cfg.train, {}, jobs);
    result.log.config_echo = resolved.dump();

    write_text(fs::path(out) / "config.json", resolved.dump(2) + "\n");
    tas::save_checkpoint((fs::path(out) / "checkpoint.bin").string(), result.params);
    write_text(fs::path(out) / "runlog.json", result.log.to_json() + "\n");
    write_text(fs::path(out) / "metrics.csv", result.log.metrics_csv());

    if (!corpus.test.empty()) {
        fs::create_directories(fs::path(out) / "predictions");
        for (const tas::Video& video : corpus.test) {
            tas::ad::Tape tape;
            const tas::ForwardResult fwd = tas::forward(tape, result.params, video.features);
            tas::save_labels((fs::path(out) / "predictions" / (video.id + ".txt")).string(),
                             tas::predict(fwd.final_map()).labels, corpus.class_names);
        }
        std::cout << result.log.final_report.to_table();
    }
    std::cout << "wall clock seconds: " << result.log.wall_clock_seconds << "\n";
    std::cout << "artifacts in " << out << "\n";
    return 0;
}

std::vector<std::string> txt_stems(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw tas::MissingFileError("not a directory: " + dir.string());
    }
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".txt") {
            stems.push_back(entry.path().stem().string());
        }
    }
    std::sort(stems.begin(), stems.end());
    return stems;
}

std::vector<std::string> read_tokens(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw tas::MissingFileError("cannot open " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) tokens.push_back(line);
    }
    return tokens;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& classes_path, const std::string& out_path) {
    const std::vector<std::string> pred_stems = txt_stems(pred_dir);
    const std::vector<std::string> gt_stems = txt_stems(gt_dir);
    if (pred_stems != gt_stems) {
        std::vector<std::string> missing, extra;
        std::set_difference(gt_stems.begin(), gt_stems.end(), pred_stems.begin(),
                            pred_stems.end(), std::back_inserter(missing));
        std::set_difference(pred_stems.begin(), pred_stems.end(), gt_stems.begin(),
                            gt_stems.end(), std::back_inserter(extra));
        std::cerr << "prediction/ground-truth stems disagree\n";
        if (!missing.empty()) {
            std::cerr << "missing predictions:";
            for (const std::string& s : missing) std::cerr << ' ' << s;
            std::cerr << "\n";
        }
        if (!extra.empty()) {
            std::cerr << "extra predictions:";
            for (const std::string& s : extra) std::cerr << ' ' << s;
            std::cerr << "\n";
        }
        return 4;
    }
    if (gt_stems.empty()) {
        std::cerr << "no .txt files under " << gt_dir << "\n";
        return 4;
    }

    std::vector<std::string> class_names;
    if (!classes_path.empty()) {
        std::ifstream in(classes_path);
        if (!in) throw tas::MissingFileError("cannot open classes file: " + classes_path);
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream ss(line);
            int id = 0;
            std::string name;
            if (ss >> id >> name) class_names.push_back(name);
        }
    } else {
        std::set<std::string> tokens;
        for (const std::string& stem : gt_stems) {
            for (const std::string& tok : read_tokens(fs::path(gt_dir) / (stem + ".txt"))) {
                tokens.insert(tok);
            }
            for (const std::string& tok : read_tokens(fs::path(pred_dir) / (stem + ".txt"))) {
                tokens.insert(tok);
            }
        }
        class_names.assign(tokens.begin(), tokens.end());
    }

    std::vector<std::pair<tas::LabelSequence, tas::LabelSequence>> pairs;
    for (const std::string& stem : gt_stems) {
        pairs.emplace_back(
            tas::load_labels((fs::path(pred_dir) / (stem + ".txt")).string(), class_names),
            tas::load_labels((fs::path(gt_dir) / (stem + ".txt")).string(), class_names));
    }
    const tas::EvalReport report = tas::evaluate_corpus(pairs, &gt_stems);
    std::cout << report.to_table();
    write_text(out_path, report.to_json() + "\n");
    return 0;
}

int cmd_gradcheck(const CommonOpts& common, tas::SuiteOptions opts, bool skip_backbone) {
    if (!common.config_path.empty() || !common.sets.empty()) {
        const tas::CliConfig cfg = resolve_config(common, nullptr);
        opts.loss = cfg.train.loss;
    }
    opts.include_backbone = !skip_backbone;
    const tas::SuiteReport report = tas::run_gradcheck_suite(opts);
    std::cout << report.to_text();
    if (!report.all_passed()) {
        const tas::SuiteCheck* worst = report.worst_check();
        if (worst != nullptr) {
            std::cerr << "worst failure: " << worst->name << " max_rel_err "
                      << worst->max_rel_err << " at " << worst->worst << "\n";
        }
        return 5;
    }
    return 0;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::istringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        try {
            seeds.push_back(std::stoull(token));
        } catch (const std::exception&) {
            throw tas::ConfigError("bad seed: " + token);
        }
    }
    if (seeds.empty()) throw tas::ConfigError("no seeds given");
    return seeds;
}

int cmd_ablate(const CommonOpts& common, const std::string& data_dir,
               const std::string& arms_csv, const std::string& seeds_csv,
               const std::string& out_flag, int jobs) {
    tas::CliConfig cfg = resolve_config(common, nullptr);
    const tas::Corpus corpus =
        data_dir.empty() ? tas::generate(cfg.synth) : tas::load_dataset(data_dir);
    adopt_corpus_dims(cfg.train, corpus);
    const nlohmann::json resolved = tas::cli_config_to_json(cfg);

    const std::vector<tas::ArmSpec> arms = tas::parse_arms(arms_csv, cfg.train);
    const std::vector<std::uint64_t> seeds = parse_seeds(seeds_csv);
    const std::string out = pick_out(out_flag, cfg.out, "ablation");
    fs::create_directories(out);

    const tas::AblationTable table = tas::ablate(corpus, arms, seeds, jobs);

    nlohmann::json doc = nlohmann::json::parse(table.to_json());
    doc["config"] = resolved;
    doc["seeds"] = seeds;
    doc["data"] = data_dir;  // empty: corpus generated from config.synth
    write_text(fs::path(out) / "ablation.json", doc.dump(2) + "\n");
    write_text(fs::path(out) / "ablation.csv", table.to_csv());

    std::cout << table.to_table();
    std::cout << "artifacts in " << out << "\n";
    for (const tas::ArmResult& arm : table.arms) {
        if (!arm.error.empty()) {
            std::cerr << "arm " << arm.name << " failed: " << arm.error << "\n";
        }
    }
    return 0;
}

int dispatch(const std::function<int()>& handler) {
    try {
        return handler();
    } catch (const tas::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const tas::NonFiniteLossError& e) {
        std::cerr << "training aborted: " << e.what() << "\n";
        return 3;
    } catch (const tas::CheckFailedError& e) {
        std::cerr << "gradient check failed: " << e.what() << "\n";
        return 5;
    } catch (const tas::UnknownArmError& e) {
        std::cerr << "ablation error: " << e.what() << "\n";
        return 6;
    } catch (const tas::MissingFileError& e) {
        std::cerr << "missing file: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal action segmentation toolkit"};
    app.require_subcommand(1);

    CommonOpts gen_common;
    std::string gen_out;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    add_common(gen, gen_common);
    gen->add_option("--out", gen_out, "output directory (default: data)");

    CommonOpts train_common;
    std::string train_data, train_out;
    std::uint64_t train_seed = 0;
    int train_jobs = 1;
    CLI::App* train = app.add_subcommand("train", "train on a corpus directory");
    add_common(train, train_common);
    train->add_option("--data", train_data, "corpus directory")->required();
    train->add_option("--out", train_out, "output directory (default: run)");
    CLI::Option* seed_opt =
        train->add_option("--seed", train_seed, "sets train.seed and train.backbone.seed");
    train->add_option("--jobs", train_jobs, "worker threads for batch gradients");

    std::string eval_pred, eval_gt, eval_classes, eval_out = "eval_report.json";
    CLI::App* eval = app.add_subcommand("eval", "score predictions against ground truth");
    eval->add_option("--pred-dir", eval_pred, "directory of predicted label files")
        ->required();
    eval->add_option("--gt-dir", eval_gt, "directory of ground-truth label files")
        ->required();
    eval->add_option("--classes", eval_classes, "classes.txt (default: derive from files)");
    eval->add_option("--out", eval_out, "report JSON path");

    CommonOpts gc_common;
    tas::SuiteOptions gc_opts;
    bool gc_skip_backbone = false;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    add_common(gradcheck, gc_common);
    gradcheck->add_option("--inputs", gc_opts.n_inputs, "random inputs per check");
    gradcheck->add_option("--coords", gc_opts.coords_per_input, "coordinates per input");
    gradcheck->add_option("--tol", gc_opts.tolerance, "relative error tolerance");
    gradcheck->add_option("--step", gc_opts.h, "finite-difference step");
    gradcheck->add_option("--seed", gc_opts.seed, "rng seed");
    gradcheck->add_flag("--skip-backbone", gc_skip_backbone, "loss-level checks only");

    CommonOpts ablate_common;
    std::string ablate_data, ablate_arms, ablate_seeds = "1,2,3,4,5", ablate_out;
    int ablate_jobs = 1;
    CLI::App* ablate = app.add_subcommand("ablate", "train and compare config arms");
    add_common(ablate, ablate_common);
    ablate->add_option("--data", ablate_data,
                       "corpus directory (default: generate from config.synth)");
    ablate->add_option("--arms", ablate_arms, "comma-separated arm list")->required();
    ablate->add_option("--seeds", ablate_seeds, "comma-separated seeds");
    ablate->add_option("--out", ablate_out, "output directory (default: ablation)");
    ablate->add_option("--jobs", ablate_jobs, "parallel training runs");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        return dispatch([&] { return cmd_gen_data(gen_common, gen_out); });
    }
    if (train->parsed()) {
        return dispatch([&] {
            return cmd_train(train_common, train_data, train_out, train_seed,
                             seed_opt->count() > 0, train_jobs);
        });
    }
    if (eval->parsed()) {
        return dispatch([&] { return cmd_eval(eval_pred, eval_gt, eval_classes, eval_out); });
    }
    if (gradcheck->parsed()) {
        return dispatch([&] { return cmd_gradcheck(gc_common, gc_opts, gc_skip_backbone); });
    }
    if (ablate->parsed()) {
        return dispatch([&] {
            return cmd_ablate(ablate_common, ablate_data, ablate_arms, ablate_seeds,
                              ablate_out, ablate_jobs);
        });
    }
    return 0;
}
