#include "kgcrs/checks/oracles.hpp"
#include "kgcrs/checks/synthetic.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/ktree.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace kgcrs;
using ag::Matrix;

namespace {

std::set<checks::TreePath> paths_of(const KnowledgeTree& t) {
    std::set<checks::TreePath> out;
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
        checks::TreePath p;
        for (int at = static_cast<int>(i); at >= 0; at = t.nodes[static_cast<std::size_t>(at)].parent) {
            const auto& n = t.nodes[static_cast<std::size_t>(at)];
            p.insert(p.begin(), n.entity);
            if (n.parent >= 0) p.insert(p.begin(), n.relation);
        }
        out.insert(p);
    }
    return out;
}

KnowledgeGraph movie_graph() {
    const std::vector<RawTriple> raw{{"Inception", "starring", "DiCaprio"}, {"Inception", "directed_by", "Nolan"},
                                     {"Titanic", "starring", "DiCaprio"}};
    return KnowledgeGraph::from_triples(raw, true);
}

Matrix embeddings_for(const KnowledgeGraph& g, Rng& rng) { return randn(g.entity_count(), 4, 1.0, rng); }

}  // namespace

TEST_CASE("cosine examples") {
    CHECK(cosine(Eigen::RowVector2d(1, 0), Eigen::RowVector2d(3, 0)) == doctest::Approx(1.0));
    CHECK(cosine(Eigen::RowVector2d(1, 0), Eigen::RowVector2d(0, 2)) == doctest::Approx(0.0));
    CHECK(cosine(Eigen::RowVector2d(1, 0), Eigen::RowVector2d(1, 1)) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(cosine(Eigen::RowVector2d(0, 0), Eigen::RowVector2d(1, 1)) == 0.0);
}

TEST_CASE("depth zero keeps only the root") {
    const auto g = movie_graph();
    Rng rng(1);
    const auto emb = embeddings_for(g, rng);
    const auto t = build_tree(g, emb, Eigen::RowVectorXd::Ones(4), g.entity_id("Inception"), 0, 5);
    REQUIRE(t.size() == 1);
    CHECK(t.root().entity == g.entity_id("Inception"));
    CHECK(t.root().parent == -1);
    CHECK(serialize_tree(t, g).text == "#Inception");
}

TEST_CASE("star graph keeps the most similar leaves") {
    std::vector<RawTriple> raw;
    for (int i = 0; i < 5; ++i) raw.push_back({"hub", "r", "leaf" + std::to_string(i)});
    const auto g = KnowledgeGraph::from_triples(raw, false);
    Matrix emb = Matrix::Zero(g.entity_count(), 2);
    for (int i = 0; i < 5; ++i) {
        const double angle = 0.3 * i;
        emb.row(g.entity_id("leaf" + std::to_string(i))) << std::cos(angle), std::sin(angle);
    }
    const Eigen::RowVectorXd ctx = Eigen::RowVector2d(1, 0);
    const auto t = build_tree(g, emb, ctx, g.entity_id("hub"), 1, 3);
    REQUIRE(t.size() == 4);
    REQUIRE(t.root().children.size() == 3);
    for (int k = 0; k < 3; ++k) {
        const auto& child = t.nodes[static_cast<std::size_t>(t.root().children[static_cast<std::size_t>(k)])];
        CHECK(child.entity == g.entity_id("leaf" + std::to_string(k)));
        CHECK(child.depth == 1);
    }
    const auto all = build_tree(g, emb, ctx, g.entity_id("hub"), 1, 50);
    CHECK(all.size() == 6);
}

TEST_CASE("equal similarity breaks ties by ascending entity id") {
    std::vector<RawTriple> raw;
    for (int i = 0; i < 4; ++i) raw.push_back({"hub", "r", "leaf" + std::to_string(i)});
    const auto g = KnowledgeGraph::from_triples(raw, false);
    const Matrix emb = Matrix::Ones(g.entity_count(), 3);
    const auto t = build_tree(g, emb, Eigen::RowVectorXd::Ones(3), g.entity_id("hub"), 1, 2);
    REQUIRE(t.root().children.size() == 2);
    std::vector<EntityId> leaves;
    for (int i = 0; i < 4; ++i) leaves.push_back(g.entity_id("leaf" + std::to_string(i)));
    std::sort(leaves.begin(), leaves.end());
    CHECK(t.nodes[static_cast<std::size_t>(t.root().children[0])].entity == leaves[0]);
    CHECK(t.nodes[static_cast<std::size_t>(t.root().children[1])].entity == leaves[1]);
}

TEST_CASE("paths never revisit an ancestor") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = checks::random_graph(rng, 12, 2, 30);
        const auto emb = embeddings_for(g, rng);
        const Eigen::RowVectorXd ctx = randn(1, 4, 1.0, rng);
        const auto t = build_tree(g, emb, ctx, 0, 3, 3);
        for (std::size_t i = 0; i < t.size(); ++i) {
            auto p = t.path(static_cast<int>(i));
            std::sort(p.begin(), p.end());
            CHECK(std::adjacent_find(p.begin(), p.end()) == p.end());
        }
    }
}

TEST_CASE("built trees equal the exhaustive enumeration") {
    Rng rng(3);
    for (int trial = 0; trial < 25; ++trial) {
        const auto g = checks::random_graph(rng, 4 + static_cast<int>(rng.below(20)), 3, 40, trial % 2 == 0);
        const auto emb = embeddings_for(g, rng);
        const Eigen::RowVectorXd ctx = randn(1, 4, 1.0, rng);
        const auto root = static_cast<EntityId>(rng.below(static_cast<std::uint64_t>(g.entity_count())));
        for (int depth : {1, 2}) {
            for (int degree : {1, 3, 5}) {
                CHECK(paths_of(build_tree(g, emb, ctx, root, depth, degree)) ==
                      checks::exhaustive_tree(g, emb, ctx, root, depth, degree));
            }
        }
    }
}

TEST_CASE("growing the degree or depth only adds nodes") {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const auto g = checks::random_graph(rng, 20, 3, 50);
        const auto emb = embeddings_for(g, rng);
        const Eigen::RowVectorXd ctx = randn(1, 4, 1.0, rng);
        const auto p1 = paths_of(build_tree(g, emb, ctx, 0, 2, 1));
        const auto p3 = paths_of(build_tree(g, emb, ctx, 0, 2, 3));
        const auto p5 = paths_of(build_tree(g, emb, ctx, 0, 2, 5));
        CHECK(std::includes(p3.begin(), p3.end(), p1.begin(), p1.end()));
        CHECK(std::includes(p5.begin(), p5.end(), p3.begin(), p3.end()));
        const auto d1 = paths_of(build_tree(g, emb, ctx, 0, 1, 3));
        CHECK(std::includes(p3.begin(), p3.end(), d1.begin(), d1.end()));
    }
}

TEST_CASE("building is deterministic") {
    Rng rng(5);
    const auto g = checks::random_graph(rng, 25, 3, 60);
    const auto emb = embeddings_for(g, rng);
    const Eigen::RowVectorXd ctx = randn(1, 4, 1.0, rng);
    CHECK(serialize_tree(build_tree(g, emb, ctx, 3, 2, 3), g).text ==
          serialize_tree(build_tree(g, emb, ctx, 3, 2, 3), g).text);
    CHECK_THROWS_AS(build_tree(g, emb, ctx, 3, -1, 3), Error);
    CHECK_THROWS_AS(build_tree(g, emb, ctx, 3, 2, 0), Error);
    CHECK_THROWS_AS(build_tree(g, emb, ctx, 99, 2, 3), Error);
}

TEST_CASE("serialization marks depth with repeated symbols") {
    const auto g = movie_graph();
    Matrix emb = Matrix::Zero(g.entity_count(), 2);
    emb.row(g.entity_id("DiCaprio")) << 1, 0;
    emb.row(g.entity_id("Nolan")) << 0, 1;
    emb.row(g.entity_id("Titanic")) << 1, 0.1;
    const Eigen::RowVectorXd ctx = Eigen::RowVector2d(1, 0);
    const auto one = build_tree(g, emb, ctx, g.entity_id("Inception"), 1, 1);
    CHECK(serialize_tree(one, g).text == "#Inception $$starring ##DiCaprio");
    const auto two = build_tree(g, emb, ctx, g.entity_id("Inception"), 2, 1);
    CHECK(serialize_tree(two, g).text == "#Inception $$starring ##DiCaprio $$$inv:starring ###Titanic");

    const auto parsed = parse_serialized_tree(serialize_tree(two, g).text);
    REQUIRE(parsed.size() == 3);
    CHECK(parsed[0].relation.empty());
    CHECK(parsed[1].relation == "starring");
    CHECK(parsed[2].entity == "Titanic");
    CHECK(parsed[2].depth == 2);
    CHECK(parsed[2].parent == 1);
}

TEST_CASE("serialize then parse round-trips") {
    Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        const auto g = checks::random_graph(rng, 3 + static_cast<int>(rng.below(20)), 2, 40, trial % 2 == 0);
        const auto emb = embeddings_for(g, rng);
        const Eigen::RowVectorXd ctx = randn(1, 4, 1.0, rng);
        const auto t = build_tree(g, emb, ctx, 0, static_cast<int>(rng.below(4)), 1 + static_cast<int>(rng.below(4)));
        const auto back = parse_tree(serialize_tree(t, g).text, g);
        CHECK(isomorphic(back, t));
        CHECK(serialize_tree(back, g).text == serialize_tree(t, g).text);
    }
}

TEST_CASE("malformed serializations are rejected") {
    const auto g = movie_graph();
    CHECK_THROWS_AS(parse_serialized_tree(""), ParseError);
    CHECK_THROWS_AS(parse_serialized_tree("Inception"), ParseError);
    CHECK_THROWS_AS(parse_serialized_tree("##Inception"), ParseError);
    CHECK_THROWS_AS(parse_serialized_tree("#Inception $$starring"), ParseError);
    CHECK_THROWS_AS(parse_serialized_tree("#Inception ##DiCaprio"), ParseError);
    CHECK_THROWS_AS(parse_serialized_tree("#Inception $$starring ###DiCaprio"), ParseError);
    CHECK_THROWS_AS(parse_serialized_tree("#Inception #Titanic"), ParseError);
    CHECK_THROWS_AS(parse_tree("#Inception $$starring ##Nolan", g), Error);
    CHECK_THROWS_AS(parse_tree("#Missing", g), Error);
}

TEST_CASE("isomorphism ignores sibling order only") {
    const auto g = movie_graph();
    const auto a = parse_tree("#Inception $$starring ##DiCaprio $$directed_by ##Nolan", g);
    const auto b = parse_tree("#Inception $$directed_by ##Nolan $$starring ##DiCaprio", g);
    const auto c = parse_tree("#Inception $$starring ##DiCaprio", g);
    CHECK(isomorphic(a, b));
    CHECK(!isomorphic(a, c));
}

TEST_CASE("tree aggregation") {
    ParameterSet ps;
    Rng rng(7);
    const TreeAggregationParams p{AttentionSumParams::create(ps, "tok", Group::tree, 3, 3, rng),
                                  AttentionSumParams::create(ps, "trees", Group::tree, 3, 3, rng)};
    const Matrix t1 = randn(1, 3, 1.0, rng);
    const std::vector<ag::Var> one{ag::Var(t1)};
    const auto r1 = aggregate_trees(one, p);
    REQUIRE(r1.per_tree.size() == 1);
    const Matrix per = t1 * p.tokens.w_v.value();
    CHECK((r1.per_tree[0].value() - per).norm() < 1e-12);
    CHECK((r1.aggregate.value() - per * p.trees.w_v.value()).norm() < 1e-12);

    const std::vector<ag::Var> twice{ag::Var(t1), ag::Var(t1)};
    const auto r2 = aggregate_trees(twice, p);
    CHECK(r2.stacked.rows() == 2);
    CHECK((r2.aggregate.value() - 2.0 * per * p.trees.w_v.value()).norm() < 1e-12);
    CHECK((aggregate_trees(twice, p, true).aggregate.value() - per * p.trees.w_v.value()).norm() < 1e-12);

    const Matrix multi = randn(4, 3, 1.0, rng);
    const std::vector<ag::Var> m{ag::Var(multi)};
    const auto expect = checks::loop_asum(multi, p.tokens.w_q.value(), p.tokens.w_k.value(), p.tokens.w_v.value(), false);
    CHECK((aggregate_trees(m, p).per_tree[0].value() - expect).cwiseAbs().maxCoeff() < 1e-9);

    CHECK_THROWS_AS(aggregate_trees(std::vector<ag::Var>{}, p), Error);
}
