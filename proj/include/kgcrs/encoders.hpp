// Feature encoders: a bidirectional contextual text encoder and a relational
// graph convolutional encoder over the knowledge graph, plus row retrieval and
// pooling.

#pragma once

#include "kgcrs/autograd.hpp"
#include "kgcrs/config.hpp"
#include "kgcrs/kg_store.hpp"
#include "kgcrs/nn.hpp"
#include "kgcrs/params.hpp"
#include "kgcrs/tokenizer.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace kgcrs {

/// Dialogue inputs keep their most recent tokens on truncation, tree inputs
/// keep their leading tokens.
enum class TextKind { dialogue, tree };

enum class PoolMode { mean, max, first, last };
PoolMode pool_mode_from_string(const std::string& s);

struct TokenEmbeddingSequence {
    std::vector<int> tokens;
    ag::Var vectors;  // tokens.size() x d_text
};

std::vector<int> truncate_tokens(std::vector<int> ids, int max_len, TextKind kind);

class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(ParameterSet& ps, const Vocabulary& vocab, const EncoderConfig& cfg, Rng& rng);

    TokenEmbeddingSequence encode(std::string_view text, TextKind kind) const;
    TokenEmbeddingSequence encode_ids(std::vector<int> ids, TextKind kind) const;

    int dim() const { return model_.config().dim; }
    int max_len() const { return max_len_; }
    const nn::Transformer& transformer() const { return model_; }

private:
    const Vocabulary* vocab_ = nullptr;
    nn::Transformer model_;
    int max_len_ = 512;
};

/// Relational graph convolution:
///   h_v' = act( sum_r sum_{u in N_r(v)} W_r h_u / |N_r(v)| + W_0 h_v )
/// where N_r(v) are the targets of v's adjacency edges labelled r. Relation
/// matrices use a basis decomposition once the relation count exceeds the
/// basis count.
class RelationalGraphEncoder {
public:
    RelationalGraphEncoder() = default;
    RelationalGraphEncoder(ParameterSet& ps, const KnowledgeGraph& g, const EncoderConfig& cfg, Rng& rng);

    /// |E| x d_ent matrix; row i embeds entity i. Zero layers returns the table.
    ag::Var encode() const;

    const ag::Var& entity_table() const { return table_; }
    int layers() const { return static_cast<int>(layers_.size()); }
    bool uses_bases() const { return use_bases_; }

    /// Per-layer relation matrix r (after basis composition); for tests.
    ag::Var relation_weight(int layer, RelationId r) const;
    ag::Var self_weight(int layer) const { return layers_[static_cast<std::size_t>(layer)].self; }
    const ag::SparseMatrix& normalized_adjacency(RelationId r) const {
        return adjacency_[static_cast<std::size_t>(r)];
    }

private:
    struct Layer {
        ag::Var self;
        std::vector<ag::Var> relation;  // direct per-relation weights
        std::vector<ag::Var> bases;     // basis matrices
        ag::Var coefficients;           // |R| x bases
    };

    ag::Var table_;
    std::vector<Layer> layers_;
    std::vector<ag::SparseMatrix> adjacency_;  // row-normalised, one per relation
    std::vector<bool> relation_used_;
    bool use_bases_ = false;
    bool relu_ = true;
};

/// Row gather in the given order; serves mentioned entities and the item set.
ag::Var retrieve(const ag::Var& graph_embeddings, std::span<const int> ids);

/// Collapses a sequence to a single 1 x d row.
ag::Var pool(const ag::Var& seq, PoolMode mode);

}  // namespace kgcrs
