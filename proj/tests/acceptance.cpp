// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Criteria can be selected by number on the
// command line (e.g. `acceptance 1 3 10`).

#include "kgcrs/checks/gradcheck.hpp"
#include "kgcrs/checks/oracles.hpp"
#include "kgcrs/checks/synthetic.hpp"
#include "kgcrs/crs_model.hpp"
#include "kgcrs/eval.hpp"
#include "kgcrs/ktree.hpp"
#include "kgcrs/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

using namespace kgcrs;
using namespace kgcrs::checks;

namespace {

const std::string kSource = KGCRS_SOURCE_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x, int precision = 4) {
    std::ostringstream os;
    os << std::setprecision(precision) << x;
    return os.str();
}

RunConfig load_cfg(const std::string& name) { return RunConfig::load(kSource + "/configs/" + name); }

// Criterion 1
Outcome metric_oracles() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        const int n = 1 + static_cast<int>(rng.below(120));
        const bool ties = t % 3 == 0;
        Eigen::RowVectorXd s(n);
        std::vector<double> sv;
        for (int i = 0; i < n; ++i) {
            s(i) = ties ? static_cast<double>(rng.below(4)) : rng.normal();
            sv.push_back(s(i));
        }
        std::vector<int> gold;
        for (int i = 0; i < n; ++i) {
            if (rng.below(6) == 0) gold.push_back(i);
        }
        if (gold.empty()) gold.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
        const auto ranked = rank_items(s);
        for (int k : {10, 50}) {
            worst = std::max(worst, std::abs(recall_at_k(ranked, gold, k) - brute_recall(sv, gold, k)));
            worst = std::max(worst, std::abs(ndcg_at_k(ranked, gold, k) - brute_ndcg(sv, gold, k)));
            worst = std::max(worst, std::abs(mrr_at_k(ranked, gold, k) - brute_mrr(sv, gold, k)));
        }
    }
    const std::vector<std::string> vocab{"a", "b", "c", "d", "E", "f"};
    for (int t = 0; t < 200; ++t) {
        std::vector<std::string> responses;
        const int m = 1 + static_cast<int>(rng.below(6));
        for (int r = 0; r < m; ++r) {
            std::string text;
            const int len = static_cast<int>(rng.below(9));
            for (int w = 0; w < len; ++w) text += (w ? " " : "") + vocab[rng.below(vocab.size())];
            responses.push_back(text);
        }
        for (int n : {2, 3, 4}) {
            worst = std::max(worst, std::abs(distinct_n(responses, n) - brute_distinct(responses, n)));
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-9 && secs < 10.0, "max abs diff " + fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

std::set<TreePath> paths_of(const KnowledgeTree& t) {
    std::set<TreePath> out;
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
        TreePath p;
        for (int at = static_cast<int>(i); at >= 0; at = t.nodes[static_cast<std::size_t>(at)].parent) {
            const auto& n = t.nodes[static_cast<std::size_t>(at)];
            p.insert(p.begin(), n.entity);
            if (n.parent >= 0) p.insert(p.begin(), n.relation);
        }
        out.insert(p);
    }
    return out;
}

Eigen::MatrixXd random_embeddings(Rng& rng, int n, int d, bool ties) {
    Eigen::MatrixXd e(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) e(i, j) = ties ? static_cast<double>(rng.below(3)) - 1.0 : rng.normal();
    }
    return e;
}

// Criterion 2
Outcome tree_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(202);
    int cases = 0;
    int mismatches = 0;
    for (int t = 0; t < 100; ++t) {
        const int n = 2 + static_cast<int>(rng.below(49));
        const int rels = 1 + static_cast<int>(rng.below(4));
        const auto g = random_graph(rng, n, rels, n + static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * n))),
                                    t % 5 != 0);
        const auto emb = random_embeddings(rng, n, 6, t % 4 == 0);
        const Eigen::RowVectorXd ctx = random_embeddings(rng, 1, 6, false);
        const auto root = static_cast<EntityId>(rng.below(static_cast<std::uint64_t>(n)));
        for (int depth : {1, 2}) {
            for (int degree : {1, 3, 5}) {
                ++cases;
                const auto built = build_tree(g, emb, ctx, root, depth, degree);
                if (paths_of(built) != exhaustive_tree(g, emb, ctx, root, depth, degree)) ++mismatches;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < 30.0,
            std::to_string(cases - mismatches) + "/" + std::to_string(cases) + " equal, " + fmt(secs, 3) + " s"};
}

// Criterion 3
Outcome round_trip() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(303);
    int ok = 0;
    for (int t = 0; t < 100; ++t) {
        const int n = 2 + static_cast<int>(rng.below(40));
        const auto g = random_graph(rng, n, 1 + static_cast<int>(rng.below(4)), 2 * n, t % 3 != 0);
        const auto emb = random_embeddings(rng, n, 5, false);
        const Eigen::RowVectorXd ctx = random_embeddings(rng, 1, 5, false);
        const auto tree = build_tree(g, emb, ctx, static_cast<EntityId>(rng.below(static_cast<std::uint64_t>(n))),
                                     static_cast<int>(rng.below(4)), 1 + static_cast<int>(rng.below(4)));
        try {
            if (isomorphic(parse_tree(serialize_tree(tree, g).text, g), tree)) ++ok;
        } catch (const std::exception&) {
        }
    }
    const double secs = seconds_since(t0);
    return {ok == 100 && secs < 5.0, std::to_string(ok) + "/100 isomorphic, " + fmt(secs, 3) + " s"};
}

struct GradFixture {
    std::string dir;
    Dataset data;
    std::unique_ptr<CrsModel> model;
    std::vector<PreparedExample> train;

    explicit GradFixture(std::uint64_t seed) {
        dir = fresh_temp_dir("grad");
        const auto world = make_world(seed);
        write_fixture(dir, world, make_dialogues(world, 20, seed + 1), "c.jsonl");
        auto cfg = tiny_config(dir, "c.jsonl");
        cfg.seeds.init = seed;
        data = load_dataset(cfg);
        model = std::make_unique<CrsModel>(cfg, data.graph, build_vocabulary(data));
        train = model->prepare_all(data.train);
    }
    ~GradFixture() { std::filesystem::remove_all(dir); }

    std::vector<const PreparedExample*> batch(std::size_t size) const {
        std::vector<const PreparedExample*> b;
        for (const auto& ex : train) {
            if (!ex.targets.empty() && b.size() + 1 < size) b.push_back(&ex);
        }
        for (const auto& ex : train) {
            if (ex.targets.empty() && b.size() < size) b.push_back(&ex);
        }
        return b;
    }

    std::vector<GradInput> inputs() {
        std::vector<GradInput> in;
        for (auto g : {Group::user, Group::tree, Group::prompt}) {
            model->params().set_trainable(g, true);
            for (const auto* e : model->params().in_group(g)) in.push_back({e->name, e->var});
        }
        return in;
    }
};

// Criterion 4
Outcome gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    GradFixture fx(404);
    auto inputs = fx.inputs();
    std::ostringstream detail;
    bool pass = true;
    auto run = [&](const std::string& name, std::size_t size, double limit,
                   const std::function<ag::Var(const BatchLosses&)>& pick) {
        const auto b = fx.batch(size);
        ForwardOptions opt;
        Rng rng(size * 31 + name.size());
        const auto res = gradcheck([&] { return pick(fx.model->forward_batch(b, opt)); }, inputs, rng, 3);
        pass = pass && res.max_rel_error < limit;
        detail << name << " " << fmt(res.max_rel_error, 3) << "; ";
        if (res.max_rel_error >= limit) detail << "(" << res.worst << ") ";
    };
    run("L_user", 8, 1e-4, [](const BatchLosses& l) { return l.user; });
    run("L_align", 8, 1e-4, [](const BatchLosses& l) { return l.align; });
    run("L_rec", 8, 1e-4, [](const BatchLosses& l) { return l.rec; });
    run("L_all", 4, 1e-3, [](const BatchLosses& l) { return l.total; });
    const double secs = seconds_since(t0);
    detail << fmt(secs, 3) << " s";
    return {pass && secs < 120.0, detail.str()};
}

// Criterion 5
Outcome frozen_backbone() {
    const auto cfg = load_cfg("toy.json");
    const auto data = load_dataset(cfg);
    CrsModel model(cfg, data.graph, build_vocabulary(data));
    const auto train = model.prepare_all(data.train);
    const auto valid = model.prepare_all(data.valid);
    prepare_backbone(model, data, train, nullptr, nullptr);
    const auto before = model.params().hash(Group::plm);
    const auto rep = train_two_stage(model, train, valid);
    const auto after = model.params().hash(Group::plm);
    const bool trained = rep.stage1_steps > 0 && rep.stage2_steps > 0;
    return {before == after && trained,
            "theta_plm " + before.substr(0, 12) + " -> " + after.substr(0, 12) + ", steps " +
                std::to_string(rep.stage1_steps) + "+" + std::to_string(rep.stage2_steps)};
}

// Criterion 6
Outcome overfit() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = load_cfg("overfit.json");
    const auto data = load_dataset(cfg);
    CrsModel model(cfg, data.graph, build_vocabulary(data));
    const auto train = model.prepare_all(data.train);
    const auto valid = model.prepare_all(data.valid);
    prepare_backbone(model, data, train, nullptr, nullptr);
    const auto rep = train_two_stage(model, train, valid);
    const auto m = evaluate(model, train, Task::rec, "train");
    const double r1 = m.metrics.at("recall@1");
    const double secs = seconds_since(t0);
    const bool pass = r1 >= 0.9 && rep.stage2_steps <= 200 && secs <= 300.0 && data.dialogues.size() == 50 &&
                      data.graph.entity_count() == 100 && data.graph.items().size() == 30;
    return {pass, "train recall@1 " + fmt(r1) + " after " + std::to_string(rep.stage2_steps) + " stage-2 steps, " +
                      fmt(secs, 3) + " s"};
}

// Criterion 7
Outcome random_baseline() {
    const auto dir = fresh_temp_dir("baseline");
    const auto world = make_world(77);
    write_fixture(dir, world, make_dialogues(world, 300, 78), "c.jsonl");
    auto cfg = load_cfg("overfit.json");
    cfg.paths.corpus = dir + "/c.jsonl";
    cfg.paths.kg = dir + "/triples.tsv";
    cfg.paths.items = dir + "/items.txt";
    const auto data = load_dataset(cfg);
    CrsModel model(cfg, data.graph, build_vocabulary(data));
    std::vector<PreparedExample> all;
    for (const auto* split : {&data.train, &data.valid, &data.test}) {
        auto p = model.prepare_all(*split);
        all.insert(all.end(), p.begin(), p.end());
    }
    const auto m = evaluate(model, all, Task::rec, "all");
    std::filesystem::remove_all(dir);
    const double n = static_cast<double>(m.counts.at("rec_examples"));
    const double p = 10.0 / static_cast<double>(data.graph.items().size());
    const double sd = std::sqrt(p * (1.0 - p) / n);
    const double r = m.metrics.at("recall@10");
    return {n >= 500 && std::abs(r - p) <= 3.0 * sd,
            "recall@10 " + fmt(r) + " over " + fmt(n, 6) + " examples, expected " + fmt(p) + " +- " + fmt(3 * sd)};
}

// Criterion 8
Outcome ablation() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = load_cfg("ablation.json");
    const auto data = load_dataset(cfg);
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    const auto rep = run_ablation(cfg, data, seeds);
    bool produced = rep.variants.size() == 5;
    for (auto name : kVariantNames) {
        produced = produced && rep.runs.count(std::string(name)) && rep.runs.at(std::string(name)).size() == 5;
    }
    if (!produced) return {false, "report missing variants or runs"};
    const auto full = rep.summary("full", "recall@10").first;
    bool pass = true;
    std::ostringstream detail;
    detail << "full " << fmt(full);
    for (const char* v : {"-tree", "-user", "-align"}) {
        const auto [mean, se] = rep.summary(v, "recall@10");
        detail << ", " << v << " " << fmt(mean) << "+-" << fmt(se);
        pass = pass && full >= mean - se;
    }
    detail << ", " << fmt(seconds_since(t0), 3) << " s";
    return {pass, detail.str()};
}

bool ascending_table(const std::string& tsv, std::size_t rows, std::string& why) {
    std::istringstream in(tsv);
    std::string line;
    if (!std::getline(in, line)) {
        why = "empty table";
        return false;
    }
    const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), '\t'));
    double prev = -INFINITY;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (static_cast<std::size_t>(std::count(line.begin(), line.end(), '\t')) != columns) {
            why = "ragged row";
            return false;
        }
        std::istringstream cells(line);
        std::string cell;
        bool first = true;
        while (std::getline(cells, cell, '\t')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != cell.size()) {
                why = "non-numeric cell '" + cell + "'";
                return false;
            }
            if (first && v <= prev) {
                why = "axis column not ascending";
                return false;
            }
            if (first) prev = v;
            first = false;
        }
        ++n;
    }
    if (n != rows) why = "expected " + std::to_string(rows) + " rows";
    return n == rows;
}

// Criterion 9
Outcome sweeps() {
    const auto cfg = load_cfg("toy.json");
    const RunConfig defaults;
    if (defaults.loss.alpha != 0.02 || defaults.loss.beta != 0.002) return {false, "default alpha/beta changed"};
    const auto data = load_dataset(cfg);
    const std::vector<std::pair<std::string, std::vector<double>>> axes{
        {"tree_depth", {2, 0, 1}}, {"tree_degree", {1, 3, 5}}, {"alpha", {0.0, 0.02, 0.2}}, {"beta", {0.0, 0.002, 0.02}}};
    std::ostringstream detail;
    bool pass = true;
    for (const auto& [axis, values] : axes) {
        const auto rep = run_sweep(cfg, data, axis, values);
        std::string why;
        const bool ok = ascending_table(rep.to_tsv(), values.size(), why);
        pass = pass && ok;
        detail << axis << (ok ? " ok" : " bad (" + why + ")") << "; ";
    }
    return {pass, detail.str()};
}

// Criterion 10
Outcome determinism() {
    const auto cfg = load_cfg("toy.json");
    auto once = [&] {
        const auto data = load_dataset(cfg);
        const auto r = run_experiment(cfg, data);
        std::string log;
        for (const auto& j : r.training.log) log += j.dump() + "\n";
        return r.report.dump() + log;
    };
    const auto a = once();
    const auto b = once();
    return {a == b, a == b ? std::to_string(a.size()) + " identical bytes" : "reports differ"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"metric oracles", metric_oracles},   {"tree builder oracle", tree_oracle},
        {"serialization round trip", round_trip}, {"gradient suite", gradients},
        {"frozen backbone", frozen_backbone}, {"overfit", overfit},
        {"random baseline", random_baseline}, {"ablation", ablation},
        {"sweep harness", sweeps},           {"determinism", determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first
                  << "): " << o.detail << std::endl;
    }
    return all ? 0 : 1;
}
