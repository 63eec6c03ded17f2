// Dialogue-conditioned knowledge trees: top-N neighbour expansion by cosine
// similarity to the dialogue vector, depth-marked serialisation and the
// two-level attention-sum aggregation of encoded trees.

#pragma once

#include "kgcrs/autograd.hpp"
#include "kgcrs/encoders.hpp"
#include "kgcrs/kg_store.hpp"
#include "kgcrs/user_pref.hpp"

#include <span>
#include <string>
#include <vector>

namespace kgcrs {

struct TreeNode {
    EntityId entity = 0;
    int depth = 0;
    int parent = -1;          // index into KnowledgeTree::nodes, -1 for the root
    RelationId relation = -1;  // relation from the parent, -1 for the root
    std::vector<int> children;  // descending similarity, then ascending entity id
};

struct KnowledgeTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root; breadth-first order
    int depth_limit = 0;
    int degree_limit = 1;
    Eigen::RowVectorXd context;

    const TreeNode& root() const { return nodes.front(); }
    std::size_t size() const { return nodes.size(); }
    /// Entity ids from the root down to node i.
    std::vector<EntityId> path(int i) const;
};

struct SerializedTree {
    std::string text;
};

/// Cosine similarity; 0 when either vector is zero.
double cosine(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b);
double context_similarity(const Eigen::RowVectorXd& context, EntityId m, const ag::Matrix& entity_embeddings);

/// Layer-wise expansion to `depth` edge hops. Each node keeps the `degree` most
/// similar distinct neighbours not already on its root path. A neighbour
/// reachable through several relations is attached through the smallest
/// relation id.
KnowledgeTree build_tree(const KnowledgeGraph& g, const ag::Matrix& entity_embeddings,
                         const Eigen::RowVectorXd& context, EntityId root, int depth, int degree);

/// Depth-first pre-order. A node at depth k is "#"*(k+1) + name; each child is
/// preceded by "$"*(k+1) + relation name, k being the child's depth. Tokens are
/// joined by single spaces.
SerializedTree serialize_tree(const KnowledgeTree& t, const KnowledgeGraph& g);

struct ParsedNode {
    std::string entity;
    std::string relation;  // empty for the root
    int depth = 0;
    int parent = -1;
};

/// Inverse of serialize_tree at the string level; nodes come back in
/// depth-first pre-order. Throws ParseError on malformed input.
std::vector<ParsedNode> parse_serialized_tree(const std::string& text);

/// Resolves a parsed tree against the graph into a KnowledgeTree (nodes in
/// pre-order). Throws if a name or edge is absent from the graph.
KnowledgeTree parse_tree(const std::string& text, const KnowledgeGraph& g);

/// Structural equality up to sibling order.
bool isomorphic(const KnowledgeTree& a, const KnowledgeTree& b);

struct TreeAggregationParams {
    AttentionSumParams tokens;  // per-tree token aggregation
    AttentionSumParams trees;   // across-tree aggregation
};

struct TreeRepresentations {
    std::vector<ag::Var> per_tree;  // t_e, 1 x d each, in mention order
    ag::Var stacked;                // n_E x d
    ag::Var aggregate;              // t_E, 1 x d
};

/// Aggregates already-encoded trees (one n_tokens x d matrix per tree).
TreeRepresentations aggregate_trees(std::span<const ag::Var> encoded, const TreeAggregationParams& p,
                                    bool mean_scaling = false);

/// Encodes every serialized tree with the text encoder and aggregates.
TreeRepresentations encode_and_aggregate(std::span<const SerializedTree> trees, const TextEncoder& encoder,
                                         const TreeAggregationParams& p, bool mean_scaling = false);

}  // namespace kgcrs
