#include "kgcrs/checks/selftest.hpp"

#include "kgcrs/checks/gradcheck.hpp"
#include "kgcrs/checks/oracles.hpp"
#include "kgcrs/checks/synthetic.hpp"
#include "kgcrs/crs_model.hpp"
#include "kgcrs/eval.hpp"
#include "kgcrs/ktree.hpp"
#include "kgcrs/training.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>

namespace kgcrs::checks {

namespace {

struct Failure {
    std::string detail;
};

void expect(bool ok, const std::string& detail) {
    if (!ok) throw Failure{detail};
}

void metric_examples() {
    const std::vector<int> ranked{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    expect(recall_at_k(ranked, std::vector<int>{0}, 10) == 1.0, "recall, gold at rank 1");
    expect(recall_at_k(ranked, std::vector<int>{10}, 10) == 0.0, "recall, gold at rank 11");
    expect(std::abs(ndcg_at_k(ranked, std::vector<int>{2}, 10) - 0.5) < 1e-12, "ndcg, gold at rank 3");
    expect(mrr_at_k(ranked, std::vector<int>{1}, 10) == 0.5, "mrr, gold at rank 2");
    const std::vector<std::string> r{"a b a b"};
    expect(std::abs(distinct_n(r, 2) - 2.0 / 3.0) < 1e-12, "distinct-2 of 'a b a b'");
    expect(std::abs(total_loss(1, 2, 3, 0.02, 0.002) - 1.046) < 1e-12, "total loss weighting");
}

void metric_oracles(Rng& rng) {
    for (int t = 0; t < 50; ++t) {
        const int n = 2 + static_cast<int>(rng.below(80));
        Eigen::RowVectorXd s(n);
        std::vector<double> sv;
        for (int i = 0; i < n; ++i) {
            s(i) = static_cast<double>(rng.below(6));
            sv.push_back(s(i));
        }
        std::vector<int> gold;
        for (int i = 0; i < n; ++i) {
            if (rng.below(5) == 0) gold.push_back(i);
        }
        if (gold.empty()) gold.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
        const auto ranked = rank_items(s);
        for (int k : {10, 50}) {
            expect(std::abs(recall_at_k(ranked, gold, k) - brute_recall(sv, gold, k)) < 1e-9, "recall oracle");
            expect(std::abs(ndcg_at_k(ranked, gold, k) - brute_ndcg(sv, gold, k)) < 1e-9, "ndcg oracle");
            expect(std::abs(mrr_at_k(ranked, gold, k) - brute_mrr(sv, gold, k)) < 1e-9, "mrr oracle");
        }
    }
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

void tree_oracle_and_round_trip(Rng& rng) {
    for (int t = 0; t < 10; ++t) {
        const int n = 5 + static_cast<int>(rng.below(20));
        const auto g = random_graph(rng, n, 3, 2 * n);
        const Eigen::MatrixXd emb = randn(n, 4, 1.0, rng);
        const Eigen::RowVectorXd ctx = randn(1, 4, 1.0, rng);
        const auto root = static_cast<EntityId>(rng.below(static_cast<std::uint64_t>(n)));
        for (int depth : {1, 2}) {
            for (int degree : {1, 3}) {
                const auto tree = build_tree(g, emb, ctx, root, depth, degree);
                expect(paths_of(tree) == exhaustive_tree(g, emb, ctx, root, depth, degree), "tree oracle");
                expect(isomorphic(parse_tree(serialize_tree(tree, g).text, g), tree), "tree round trip");
            }
        }
    }
}

void gradient(std::uint64_t seed) {
    const auto dir = fresh_temp_dir("selftest");
    const auto world = make_world(seed);
    write_fixture(dir, world, make_dialogues(world, 10, seed + 1), "c.jsonl");
    auto cfg = tiny_config(dir, "c.jsonl");
    cfg.seeds.init = seed;
    const auto data = load_dataset(cfg);
    CrsModel model(cfg, data.graph, build_vocabulary(data));
    const auto train = model.prepare_all(data.train);
    std::vector<const PreparedExample*> batch;
    for (const auto& ex : train) {
        if (!ex.targets.empty() && batch.size() < 3) batch.push_back(&ex);
    }
    for (const auto& ex : train) {
        if (ex.targets.empty() && batch.size() < 4) batch.push_back(&ex);
    }
    std::vector<GradInput> inputs;
    for (auto g : {Group::user, Group::tree, Group::prompt}) {
        model.params().set_trainable(g, true);
        for (const auto* e : model.params().in_group(g)) inputs.push_back({e->name, e->var});
    }
    ForwardOptions opt;
    auto loss = [&] { return model.forward_batch(batch, opt).total; };
    Rng rng(seed);
    const auto res = gradcheck(loss, inputs, rng, 2);
    std::filesystem::remove_all(dir);
    std::ostringstream os;
    os << "end-to-end gradient rel err " << res.max_rel_error << " at " << res.worst;
    expect(res.max_rel_error < 1e-3, os.str());
}

}  // namespace

bool run_selftest(std::ostream& out, std::uint64_t seed) {
    Rng rng(seed);
    const std::vector<std::pair<std::string, std::function<void()>>> checks{
        {"metric examples", metric_examples},
        {"metric oracles", [&] { metric_oracles(rng); }},
        {"tree oracle and round trip", [&] { tree_oracle_and_round_trip(rng); }},
        {"end-to-end gradient", [&] { gradient(seed); }},
    };
    bool ok = true;
    for (const auto& [name, fn] : checks) {
        try {
            fn();
            out << "PASS " << name << "\n";
        } catch (const Failure& f) {
            ok = false;
            out << "FAIL " << name << ": " << f.detail << "\n";
        } catch (const std::exception& e) {
            ok = false;
            out << "FAIL " << name << ": " << e.what() << "\n";
        }
    }
    return ok;
}

}  // namespace kgcrs::checks
