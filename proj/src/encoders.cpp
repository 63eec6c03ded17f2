#include "kgcrs/encoders.hpp"

#include "kgcrs/error.hpp"

#include <cmath>

namespace kgcrs {

PoolMode pool_mode_from_string(const std::string& s) {
    if (s == "mean") return PoolMode::mean;
    if (s == "max") return PoolMode::max;
    if (s == "first") return PoolMode::first;
    if (s == "last") return PoolMode::last;
    throw ConfigError("unknown pooling mode '" + s + "'");
}

std::vector<int> truncate_tokens(std::vector<int> ids, int max_len, TextKind kind) {
    const auto limit = static_cast<std::size_t>(max_len);
    if (ids.size() <= limit) return ids;
    if (kind == TextKind::dialogue) {
        return {ids.end() - static_cast<std::ptrdiff_t>(limit), ids.end()};
    }
    ids.resize(limit);
    return ids;
}

TextEncoder::TextEncoder(ParameterSet& ps, const Vocabulary& vocab, const EncoderConfig& cfg, Rng& rng)
    : vocab_(&vocab), max_len_(cfg.max_len) {
    nn::TransformerConfig tc;
    tc.vocab_size = vocab.size();
    tc.dim = cfg.d_text;
    tc.heads = cfg.text_heads;
    tc.layers = cfg.text_layers;
    tc.max_positions = cfg.max_len;
    tc.causal = false;
    model_ = nn::Transformer(ps, "text_encoder", Group::plm, tc, rng);
}

TokenEmbeddingSequence TextEncoder::encode(std::string_view text, TextKind kind) const {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        throw Error("encode_text: empty input");
    }
    auto ids = vocab_->encode(text);
    if (ids.empty()) throw Error("encode_text: input has no tokens");
    return encode_ids(std::move(ids), kind);
}

TokenEmbeddingSequence TextEncoder::encode_ids(std::vector<int> ids, TextKind kind) const {
    if (ids.empty()) throw Error("encode_text: empty token sequence");
    ids = truncate_tokens(std::move(ids), max_len_, kind);
    TokenEmbeddingSequence out;
    out.vectors = model_.forward_tokens(ids);
    out.tokens = std::move(ids);
    return out;
}

RelationalGraphEncoder::RelationalGraphEncoder(ParameterSet& ps, const KnowledgeGraph& g,
                                               const EncoderConfig& cfg, Rng& rng)
    : relu_(cfg.rgcn_activation == "relu") {
    const int n = g.entity_count();
    const int n_rel = g.relation_count();
    const int d = cfg.d_ent;
    table_ = ps.add("rgcn.entities", Group::user, randn(n, d, 1.0 / std::sqrt(static_cast<double>(d)), rng));

    // Row-normalised adjacency per relation: S_r(v, u) = 1/|N_r(v)|.
    std::vector<std::vector<Eigen::Triplet<double>>> trip(static_cast<std::size_t>(n_rel));
    for (EntityId v = 0; v < n; ++v) {
        std::vector<int> per_rel(static_cast<std::size_t>(n_rel), 0);
        for (const auto& e : g.neighbors(v)) ++per_rel[static_cast<std::size_t>(e.relation)];
        for (const auto& e : g.neighbors(v)) {
            trip[static_cast<std::size_t>(e.relation)].emplace_back(
                v, e.target, 1.0 / per_rel[static_cast<std::size_t>(e.relation)]);
        }
    }
    adjacency_.resize(static_cast<std::size_t>(n_rel));
    relation_used_.assign(static_cast<std::size_t>(n_rel), false);
    for (int r = 0; r < n_rel; ++r) {
        auto& s = adjacency_[static_cast<std::size_t>(r)];
        s.resize(n, n);
        const auto& t = trip[static_cast<std::size_t>(r)];
        s.setFromTriplets(t.begin(), t.end());
        relation_used_[static_cast<std::size_t>(r)] = !t.empty();
    }

    use_bases_ = n_rel > cfg.rgcn_bases;
    const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
    for (int l = 0; l < cfg.rgcn_layers; ++l) {
        const std::string p = "rgcn.layer" + std::to_string(l);
        Layer layer;
        layer.self = ps.add(p + ".self", Group::user, randn(d, d, stddev, rng));
        if (use_bases_) {
            for (int b = 0; b < cfg.rgcn_bases; ++b) {
                layer.bases.push_back(ps.add(p + ".basis" + std::to_string(b), Group::user, randn(d, d, stddev, rng)));
            }
            layer.coefficients = ps.add(p + ".coefficients", Group::user,
                                        randn(n_rel, cfg.rgcn_bases, 1.0 / std::sqrt(static_cast<double>(cfg.rgcn_bases)), rng));
        } else {
            for (int r = 0; r < n_rel; ++r) {
                layer.relation.push_back(ps.add(p + ".relation" + std::to_string(r), Group::user, randn(d, d, stddev, rng)));
            }
        }
        layers_.push_back(std::move(layer));
    }
}

ag::Var RelationalGraphEncoder::relation_weight(int layer, RelationId r) const {
    const auto& L = layers_.at(static_cast<std::size_t>(layer));
    if (!use_bases_) return L.relation.at(static_cast<std::size_t>(r));
    ag::Var w;
    for (std::size_t b = 0; b < L.bases.size(); ++b) {
        auto term = ag::scale_by(ag::element(L.coefficients, r, static_cast<Eigen::Index>(b)), L.bases[b]);
        w = w ? ag::add(w, term) : term;
    }
    return w;
}

ag::Var RelationalGraphEncoder::encode() const {
    ag::Var h = table_;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        ag::Var out = ag::matmul(h, layers_[l].self);
        for (std::size_t r = 0; r < adjacency_.size(); ++r) {
            if (!relation_used_[r]) continue;
            auto msg = ag::spmm(adjacency_[r], ag::matmul(h, relation_weight(static_cast<int>(l), static_cast<RelationId>(r))));
            out = ag::add(out, msg);
        }
        h = relu_ ? ag::relu(out) : out;
    }
    return h;
}

ag::Var retrieve(const ag::Var& graph_embeddings, std::span<const int> ids) {
    return ag::gather_rows(graph_embeddings, ids);
}

ag::Var pool(const ag::Var& seq, PoolMode mode) {
    if (seq.rows() == 0) throw Error("pool: empty sequence");
    switch (mode) {
        case PoolMode::mean: return ag::mean_rows(seq);
        case PoolMode::max: return ag::max_rows(seq);
        case PoolMode::first: return ag::slice_rows(seq, 0, 1);
        case PoolMode::last: return ag::slice_rows(seq, seq.rows() - 1, 1);
    }
    throw Error("pool: bad mode");
}

}  // namespace kgcrs
