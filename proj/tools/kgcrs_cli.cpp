// Command-line entry point: train, eval, build-trees, ablate, sweep, selftest.
// Exit codes: 0 success, 1 run failure, 2 usage or configuration error.

#include "kgcrs/checks/selftest.hpp"
#include "kgcrs/config.hpp"
#include "kgcrs/crs_model.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/eval.hpp"
#include "kgcrs/ktree.hpp"
#include "kgcrs/training.hpp"
#include "kgcrs/util.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kgcrs;

namespace {

constexpr int kUsage = 2;
constexpr int kFailure = 1;

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
    auto* opt = cmd->add_option("--config", c.config, "Run configuration (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--out", c.out, "Output directory (defaults to paths.output_dir)");
    cmd->add_option("--seed", c.seed, "Overrides seeds.init");
}

RunConfig load_config(const Common& c) {
    if (!fs::is_regular_file(c.config)) throw ConfigError("config file not found: " + c.config);
    RunConfig cfg = RunConfig::load(c.config);
    if (c.seed) cfg.seeds.init = *c.seed;
    if (!c.out.empty()) cfg.paths.output_dir = c.out;
    cfg.validate();
    return cfg;
}

std::string join_lines(const std::vector<json>& records) {
    std::string s;
    for (const auto& r : records) s += r.dump() + "\n";
    return s;
}

void write_json(const fs::path& path, const json& j) { write_file(path.string(), j.dump(2) + "\n"); }

int cmd_train(const RunConfig& cfg) {
    const auto data = load_dataset(cfg);
    CrsModel model(cfg, data.graph, build_vocabulary(data));
    const auto train = model.prepare_all(data.train);
    const auto valid = model.prepare_all(data.valid);
    const auto test = model.prepare_all(data.test);
    std::vector<json> log;
    log.push_back({{"event", "config"}, {"config", cfg.to_json()}, {"input_hash", data.input_hash}});
    prepare_backbone(model, data, train, nullptr, &log);
    auto report = train_two_stage(model, train, valid);
    log.insert(log.end(), report.log.begin(), report.log.end());

    const fs::path out = cfg.paths.output_dir;
    fs::create_directories(out);
    model.save((out / "checkpoint").string());
    write_file((out / "train_log.jsonl").string(), join_lines(log));
    auto metrics = evaluate(model, test, cfg.task, "test");
    metrics.input_hash = data.input_hash;
    write_file((out / "report.json").string(), metrics.dump());
    std::cout << metrics.dump();
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& split) {
    const auto data = load_dataset(cfg);
    auto vocab = CrsModel::load_vocab(checkpoint);
    CrsModel model(cfg, data.graph, std::move(vocab));
    model.load_groups(checkpoint, kAllGroups);
    const std::vector<Example>* examples = nullptr;
    if (split == "train") {
        examples = &data.train;
    } else if (split == "valid") {
        examples = &data.valid;
    } else if (split == "test") {
        examples = &data.test;
    } else {
        throw ConfigError("--split must be train, valid or test");
    }
    auto metrics = evaluate(model, model.prepare_all(*examples), cfg.task, split);
    metrics.input_hash = data.input_hash;
    const fs::path out = cfg.paths.output_dir;
    fs::create_directories(out);
    write_file((out / ("eval_" + split + ".json")).string(), metrics.dump());
    std::cout << metrics.dump();
    return 0;
}

int cmd_build_trees(const RunConfig& cfg, const std::string& checkpoint) {
    const auto data = load_dataset(cfg);
    Vocabulary vocab = checkpoint.empty() ? build_vocabulary(data) : CrsModel::load_vocab(checkpoint);
    CrsModel model(cfg, data.graph, std::move(vocab));
    if (!checkpoint.empty()) model.load_groups(checkpoint, kAllGroups);
    const ag::Var g = model.frozen_graph_embeddings();
    VariantConfig v;
    v.user = false;
    v.align = false;
    std::string lines;
    std::size_t count = 0;
    for (const auto* split : {&data.train, &data.valid, &data.test}) {
        for (const auto& ex : *split) {
            NoGradGuard guard(model.params());
            const auto prepared = model.prepare(ex);
            const auto k = model.knowledge(prepared, g, v);
            json trees = json::array();
            for (std::size_t i = 0; i < k.serialized.size(); ++i) {
                trees.push_back({{"root", prepared.entities[i]}, {"text", k.serialized[i].text}});
            }
            lines += json{{"example", ex.id}, {"trees", trees}}.dump() + "\n";
            ++count;
        }
    }
    const fs::path out = cfg.paths.output_dir;
    fs::create_directories(out);
    write_file((out / "trees.jsonl").string(), lines);
    const std::string key = sha1_hex(data.input_hash + "|" + std::to_string(cfg.tree.depth) + "|" +
                                     std::to_string(cfg.tree.degree) + "|" + cfg.tree.sim_source + "|" +
                                     model.params().hash(Group::user) + model.params().hash(Group::tree));
    write_json(out / "trees_manifest.json", {{"cache_key", key},
                                             {"examples", count},
                                             {"input_hash", data.input_hash},
                                             {"checkpoint", checkpoint},
                                             {"config", cfg.to_json()}});
    std::cout << "wrote " << count << " tree sets, cache key " << key << "\n";
    return 0;
}

std::vector<std::uint64_t> seed_list(int n, std::uint64_t first) {
    if (n < 1) throw ConfigError("--seeds must be at least 1");
    std::vector<std::uint64_t> s;
    for (int i = 0; i < n; ++i) s.push_back(first + static_cast<std::uint64_t>(i));
    return s;
}

int cmd_ablate(const RunConfig& cfg, int seeds) {
    const auto data = load_dataset(cfg);
    const auto rep = run_ablation(cfg, data, seed_list(seeds, cfg.seeds.init));
    const fs::path out = cfg.paths.output_dir;
    fs::create_directories(out);
    write_json(out / "ablation.json", rep.to_json());
    write_file((out / "ablation.tsv").string(), rep.to_tsv());
    std::cout << rep.to_tsv();
    return 0;
}

std::vector<double> parse_values(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("--values: '" + item + "' is not a number");
        }
    }
    if (v.empty()) throw ConfigError("--values is empty");
    return v;
}

int cmd_sweep(const RunConfig& cfg, const std::string& axis, const std::string& values) {
    const auto vals = parse_values(values);
    const auto data = load_dataset(cfg);
    const auto rep = run_sweep(cfg, data, axis, vals);
    const fs::path out = cfg.paths.output_dir;
    fs::create_directories(out);
    write_json(out / ("sweep_" + axis + ".json"), rep.to_json());
    write_file((out / ("sweep_" + axis + ".tsv")).string(), rep.to_tsv());
    std::cout << rep.to_tsv();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge-tree prompted conversational recommender"};
    app.require_subcommand(1);

    Common train_c, eval_c, trees_c, ablate_c, sweep_c;
    auto* train = app.add_subcommand("train", "Two-stage training, checkpoint and test report");
    add_common(train, train_c);
    std::string task;
    train->add_option("--task", task, "rec or conv (overrides the config)")->check(CLI::IsMember({"rec", "conv"}));

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_common(eval, eval_c);
    std::string eval_ckpt, split = "test", eval_task;
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required();
    eval->add_option("--split", split, "train, valid or test");
    eval->add_option("--task", eval_task, "rec or conv")->check(CLI::IsMember({"rec", "conv"}));

    auto* trees = app.add_subcommand("build-trees", "Build and serialise knowledge trees for every example");
    add_common(trees, trees_c);
    std::string trees_ckpt;
    trees->add_option("--checkpoint", trees_ckpt, "Checkpoint whose graph encoder ranks neighbours");

    auto* ablate = app.add_subcommand("ablate", "Train every ablation variant over several seeds");
    add_common(ablate, ablate_c);
    int seeds = 5;
    ablate->add_option("--seeds", seeds, "Number of seeds, starting at seeds.init");

    auto* sweep = app.add_subcommand("sweep", "Sweep one hyperparameter");
    add_common(sweep, sweep_c);
    std::string axis, values;
    sweep->add_option("--axis", axis, "tree_depth, tree_degree, alpha or beta")->required();
    sweep->add_option("--values", values, "Comma-separated values")->required();

    auto* selftest = app.add_subcommand("selftest", "Quick internal consistency checks");
    std::uint64_t selftest_seed = 1;
    selftest->add_option("--seed", selftest_seed, "Seed for the randomised checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    auto with_task = [](RunConfig cfg, const std::string& t) {
        if (!t.empty()) cfg.task = task_from_string(t);
        return cfg;
    };
    try {
        if (*selftest) return checks::run_selftest(std::cout, selftest_seed) ? 0 : kFailure;
        std::optional<RunConfig> cfg;
        try {
            if (*train) cfg = with_task(load_config(train_c), task);
            if (*eval) cfg = with_task(load_config(eval_c), eval_task);
            if (*trees) cfg = load_config(trees_c);
            if (*ablate) cfg = load_config(ablate_c);
            if (*sweep) {
                cfg = load_config(sweep_c);
                apply_axis(*cfg, axis, parse_values(values).front());
            }
        } catch (const ConfigError& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return kUsage;
        }
        if (*train) return cmd_train(*cfg);
        if (*eval) return cmd_eval(*cfg, eval_ckpt, split);
        if (*trees) return cmd_build_trees(*cfg, trees_ckpt);
        if (*ablate) {
            if (seeds < 1) {
                std::cerr << "config error: --seeds must be at least 1\n";
                return kUsage;
            }
            return cmd_ablate(*cfg, seeds);
        }
        if (*sweep) return cmd_sweep(*cfg, axis, values);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kUsage;
}
