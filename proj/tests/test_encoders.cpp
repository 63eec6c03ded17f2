#include "kgcrs/checks/oracles.hpp"
#include "kgcrs/checks/synthetic.hpp"
#include "kgcrs/encoders.hpp"
#include "kgcrs/error.hpp"

#include <doctest.h>

#include <numeric>

using namespace kgcrs;

namespace {

Vocabulary small_vocab() {
    const std::vector<std::string> texts{"hello world how are you", "#a $$b ##c"};
    return Vocabulary::build(texts);
}

EncoderConfig enc_cfg(int layers = 1, int bases = 8) {
    EncoderConfig c;
    c.d_text = 8;
    c.d_ent = 6;
    c.text_layers = 1;
    c.text_heads = 2;
    c.max_len = 16;
    c.rgcn_layers = layers;
    c.rgcn_bases = bases;
    return c;
}

}  // namespace

TEST_CASE("text encoder shapes, determinism and errors") {
    const auto vocab = small_vocab();
    ParameterSet ps;
    Rng rng(1);
    const TextEncoder enc(ps, vocab, enc_cfg(), rng);
    const auto one = enc.encode("hello", TextKind::dialogue);
    CHECK(one.vectors.rows() == 1);
    CHECK(one.vectors.cols() == 8);
    CHECK(one.tokens.size() == 1);
    const auto a = enc.encode("hello world", TextKind::dialogue);
    const auto b = enc.encode("hello world", TextKind::dialogue);
    CHECK(a.vectors.value() == b.vectors.value());
    CHECK(a.vectors.value().allFinite());
    CHECK_THROWS_AS(enc.encode("", TextKind::dialogue), Error);
    CHECK_THROWS_AS(enc.encode("   ", TextKind::dialogue), Error);
    CHECK_THROWS_AS(enc.encode_ids({}, TextKind::tree), Error);
}

TEST_CASE("truncation keeps recent dialogue tokens and leading tree tokens") {
    std::vector<int> ids(600);
    std::iota(ids.begin(), ids.end(), 0);
    const auto d = truncate_tokens(ids, 512, TextKind::dialogue);
    REQUIRE(d.size() == 512);
    CHECK(d.front() == 88);
    CHECK(d.back() == 599);
    const auto t = truncate_tokens(ids, 512, TextKind::tree);
    REQUIRE(t.size() == 512);
    CHECK(t.front() == 0);
    CHECK(t.back() == 511);
    CHECK(truncate_tokens({1, 2}, 512, TextKind::dialogue) == std::vector<int>{1, 2});

    const auto vocab = small_vocab();
    ParameterSet ps;
    Rng rng(2);
    const TextEncoder enc(ps, vocab, enc_cfg(), rng);
    std::string long_text;
    for (int i = 0; i < 40; ++i) long_text += "hello ";
    CHECK(enc.encode(long_text, TextKind::dialogue).vectors.rows() == 16);
}

TEST_CASE("isolated entity with one layer is act(h W0)") {
    const std::vector<RawTriple> raw{{"a", "r", "b"}, {"c", "self", "c"}};
    const auto g = KnowledgeGraph::from_triples(raw, false);
    ParameterSet ps;
    Rng rng(3);
    auto cfg = enc_cfg();
    cfg.rgcn_activation = "identity";
    const RelationalGraphEncoder rgcn(ps, g, cfg, rng);
    const auto h = rgcn.encode().value();
    const auto b = g.entity_id("b");
    REQUIRE(g.neighbors(b).empty());
    const Eigen::RowVectorXd expect = rgcn.entity_table().value().row(b) * rgcn.self_weight(0).value();
    CHECK((h.row(b) - expect).norm() < 1e-12);
}

TEST_CASE("two linked entities swap inputs under identity weights") {
    const std::vector<RawTriple> raw{{"a", "r", "b"}};
    const auto g = KnowledgeGraph::from_triples(raw, true);
    ParameterSet ps;
    Rng rng(4);
    auto cfg = enc_cfg();
    cfg.rgcn_activation = "identity";
    RelationalGraphEncoder rgcn(ps, g, cfg, rng);
    REQUIRE(!rgcn.uses_bases());
    const int d = cfg.d_ent;
    auto self = rgcn.self_weight(0);
    self.mutable_value().setZero();
    for (RelationId r = 0; r < g.relation_count(); ++r) {
        auto w = rgcn.relation_weight(0, r);
        w.mutable_value() = Eigen::MatrixXd::Identity(d, d);
    }
    const auto x = rgcn.entity_table().value();
    const auto h = rgcn.encode().value();
    CHECK((h.row(0) - x.row(1)).norm() < 1e-12);
    CHECK((h.row(1) - x.row(0)).norm() < 1e-12);
}

TEST_CASE("relational layer matches a per-edge double loop") {
    Rng rng(5);
    for (int bases : {2, 16}) {
        const auto g = checks::random_graph(rng, 15, 3, 30);
        ParameterSet ps;
        const auto cfg = enc_cfg(1, bases);
        const RelationalGraphEncoder rgcn(ps, g, cfg, rng);
        CHECK(rgcn.uses_bases() == (bases < g.relation_count()));
        std::vector<Eigen::MatrixXd> weights;
        for (RelationId r = 0; r < g.relation_count(); ++r) weights.push_back(rgcn.relation_weight(0, r).value());
        std::vector<std::array<int, 3>> edges;
        for (EntityId v = 0; v < g.entity_count(); ++v) {
            for (const auto& e : g.neighbors(v)) edges.push_back({v, e.relation, e.target});
        }
        const auto expect = checks::loop_rgcn_layer(rgcn.entity_table().value(), rgcn.self_weight(0).value(), weights,
                                                    edges, true);
        CHECK((rgcn.encode().value() - expect).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("zero layers return the raw table and every tensor receives gradient") {
    Rng rng(6);
    const auto g = checks::random_graph(rng, 8, 2, 12);
    {
        ParameterSet ps;
        const RelationalGraphEncoder rgcn(ps, g, enc_cfg(0), rng);
        CHECK(rgcn.encode().value() == rgcn.entity_table().value());
    }
    ParameterSet ps;
    auto cfg = enc_cfg(1, 2);
    cfg.rgcn_activation = "identity";
    const RelationalGraphEncoder rgcn(ps, g, cfg, rng);
    ag::backward(ag::sum(rgcn.encode()));
    for (const auto& e : ps.entries()) {
        INFO(e.name);
        CHECK(e.var.has_grad());
        CHECK(e.var.grad().cwiseAbs().sum() > 0.0);
    }
}

TEST_CASE("retrieve gathers rows in order") {
    Rng rng(7);
    const ag::Var G(randn(4, 3, 1.0, rng));
    const std::vector<int> ids{2, 0};
    const auto r = retrieve(G, ids).value();
    CHECK(r.row(0) == G.value().row(2));
    CHECK(r.row(1) == G.value().row(0));
    CHECK(retrieve(G, std::vector<int>{}).rows() == 0);
    CHECK(retrieve(G, std::vector<int>{}).cols() == 3);
    const auto dup = retrieve(G, std::vector<int>{1, 1}).value();
    CHECK(dup.row(0) == dup.row(1));
    CHECK(retrieve(G, std::vector<int>{0, 1, 2, 3}).value() == G.value());
    CHECK_THROWS(retrieve(G, std::vector<int>{4}));
}

TEST_CASE("pooling modes") {
    Rng rng(8);
    Eigen::MatrixXd x(1, 3);
    x << 1, 2, 3;
    CHECK(pool(ag::constant(x), PoolMode::mean).value() == x);
    Eigen::MatrixXd sym(2, 3);
    sym << 1, -2, 3, -1, 2, -3;
    CHECK(pool(ag::constant(sym), PoolMode::mean).value().norm() == 0.0);
    CHECK(pool(ag::constant(sym), PoolMode::max).value() == Eigen::RowVector3d(1, 2, 3));
    CHECK(pool(ag::constant(sym), PoolMode::first).value() == sym.row(0));
    CHECK(pool(ag::constant(sym), PoolMode::last).value() == sym.row(1));
    const Eigen::MatrixXd r3 = randn(3, 4, 1.0, rng);
    const Eigen::RowVectorXd avg = (r3.row(0) + r3.row(1) + r3.row(2)) / 3.0;
    CHECK((pool(ag::constant(r3), PoolMode::mean).value() - avg).norm() < 1e-12);
    CHECK_THROWS_AS(pool(ag::constant(Eigen::MatrixXd(0, 3)), PoolMode::mean), Error);
    CHECK(pool_mode_from_string("max") == PoolMode::max);
    CHECK_THROWS_AS(pool_mode_from_string("cls"), ConfigError);
}
