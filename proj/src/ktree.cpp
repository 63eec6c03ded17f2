#include "kgcrs/ktree.hpp"

#include "kgcrs/error.hpp"

#include <algorithm>
#include <deque>
#include <map>

namespace kgcrs {

std::vector<EntityId> KnowledgeTree::path(int i) const {
    std::vector<EntityId> out;
    for (int at = i; at >= 0; at = nodes[static_cast<std::size_t>(at)].parent) {
        out.push_back(nodes[static_cast<std::size_t>(at)].entity);
    }
    std::reverse(out.begin(), out.end());
    return out;
}

double cosine(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

double context_similarity(const Eigen::RowVectorXd& context, EntityId m, const ag::Matrix& entity_embeddings) {
    if (context.size() != entity_embeddings.cols()) throw Error("context_similarity: dimension mismatch");
    return cosine(context, entity_embeddings.row(m));
}

KnowledgeTree build_tree(const KnowledgeGraph& g, const ag::Matrix& entity_embeddings,
                         const Eigen::RowVectorXd& context, EntityId root, int depth, int degree) {
    if (root < 0 || root >= g.entity_count()) throw Error("build_tree: unknown root " + std::to_string(root));
    if (depth < 0) throw Error("build_tree: depth must be >= 0");
    if (degree < 1) throw Error("build_tree: degree must be >= 1");
    if (entity_embeddings.rows() != g.entity_count()) throw Error("build_tree: embedding rows != entity count");

    KnowledgeTree t;
    t.depth_limit = depth;
    t.degree_limit = degree;
    t.context = context;
    t.nodes.push_back({root, 0, -1, -1, {}});

    struct Candidate {
        EntityId entity;
        RelationId relation;
        double score;
    };

    std::deque<int> frontier{0};
    while (!frontier.empty()) {
        const int at = frontier.front();
        frontier.pop_front();
        if (t.nodes[static_cast<std::size_t>(at)].depth >= depth) continue;

        const auto on_path = t.path(at);
        // Adjacency is sorted by (relation, target), so the first sighting of
        // an entity carries its smallest relation id.
        std::map<EntityId, RelationId> first_relation;
        for (const auto& e : g.neighbors(t.nodes[static_cast<std::size_t>(at)].entity)) {
            if (std::find(on_path.begin(), on_path.end(), e.target) != on_path.end()) continue;
            first_relation.try_emplace(e.target, e.relation);
        }
        std::vector<Candidate> cands;
        cands.reserve(first_relation.size());
        for (const auto& [ent, rel] : first_relation) {
            cands.push_back({ent, rel, context_similarity(context, ent, entity_embeddings)});
        }
        const auto keep = std::min<std::size_t>(cands.size(), static_cast<std::size_t>(degree));
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                          [](const Candidate& a, const Candidate& b) {
                              if (a.score != b.score) return a.score > b.score;
                              return a.entity < b.entity;
                          });
        for (std::size_t i = 0; i < keep; ++i) {
            const int child = static_cast<int>(t.nodes.size());
            const int d = t.nodes[static_cast<std::size_t>(at)].depth + 1;
            t.nodes.push_back({cands[i].entity, d, at, cands[i].relation, {}});
            t.nodes[static_cast<std::size_t>(at)].children.push_back(child);
            frontier.push_back(child);
        }
    }
    return t;
}

namespace {

void emit(const KnowledgeTree& t, const KnowledgeGraph& g, int at, std::string& out) {
    const auto& n = t.nodes[static_cast<std::size_t>(at)];
    const auto marks = static_cast<std::size_t>(n.depth + 1);
    if (n.parent >= 0) {
        out += ' ';
        out.append(marks, '$');
        out += g.relations().name(n.relation);
        out += ' ';
    }
    out.append(marks, '#');
    out += g.entities().name(n.entity);
    for (int c : n.children) emit(t, g, c, out);
}

}  // namespace

SerializedTree serialize_tree(const KnowledgeTree& t, const KnowledgeGraph& g) {
    if (t.nodes.empty()) throw Error("serialize_tree: empty tree");
    SerializedTree s;
    emit(t, g, 0, s.text);
    return s;
}

std::vector<ParsedNode> parse_serialized_tree(const std::string& text) {
    // Token starts are marker characters at the beginning of the text or right
    // after a space; everything up to the next start is the name.
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if ((c == '#' || c == '$') && (i == 0 || text[i - 1] == ' ')) {
            starts.push_back(i);
            while (i + 1 < text.size() && text[i + 1] == c) ++i;
        }
    }
    if (starts.empty() || starts.front() != 0) throw ParseError("serialized tree must start with '#'");

    std::vector<ParsedNode> nodes;
    std::vector<int> stack;  // stack[d] = index of the latest node at depth d
    std::string pending_relation;
    int pending_depth = -1;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        const std::size_t begin = starts[k];
        std::size_t end = k + 1 < starts.size() ? starts[k + 1] - 1 : text.size();
        const char marker = text[begin];
        std::size_t run = 0;
        while (begin + run < end && text[begin + run] == marker) ++run;
        std::string name = text.substr(begin + run, end - begin - run);
        if (name.empty()) throw ParseError("serialized tree token without a name");
        const int depth = static_cast<int>(run) - 1;
        if (marker == '$') {
            if (!pending_relation.empty()) throw ParseError("two relation tokens in a row");
            if (depth < 1) throw ParseError("relation marker must have at least two '$'");
            pending_relation = std::move(name);
            pending_depth = depth;
            continue;
        }
        ParsedNode n;
        n.entity = std::move(name);
        n.depth = depth;
        if (nodes.empty()) {
            if (depth != 0) throw ParseError("root must carry a single '#'");
            if (!pending_relation.empty()) throw ParseError("root has a relation");
        } else {
            if (depth < 1 || depth > static_cast<int>(stack.size())) throw ParseError("entity depth jumps");
            if (pending_relation.empty() || pending_depth != depth) {
                throw ParseError("entity at depth " + std::to_string(depth) + " lacks a matching relation");
            }
            n.relation = std::move(pending_relation);
            n.parent = stack[static_cast<std::size_t>(depth - 1)];
        }
        pending_relation.clear();
        pending_depth = -1;
        stack.resize(static_cast<std::size_t>(depth));
        stack.push_back(static_cast<int>(nodes.size()));
        nodes.push_back(std::move(n));
    }
    if (!pending_relation.empty()) throw ParseError("dangling relation token");
    return nodes;
}

KnowledgeTree parse_tree(const std::string& text, const KnowledgeGraph& g) {
    auto parsed = parse_serialized_tree(text);
    KnowledgeTree t;
    for (const auto& p : parsed) {
        TreeNode n;
        n.entity = g.entity_id(p.entity);
        n.depth = p.depth;
        n.parent = p.parent;
        if (p.parent >= 0) {
            auto r = g.relations().find(p.relation);
            if (!r) throw Error("parse_tree: unknown relation '" + p.relation + "'");
            n.relation = *r;
            const auto parent_entity = t.nodes[static_cast<std::size_t>(p.parent)].entity;
            const auto nb = g.neighbors(parent_entity);
            if (std::find(nb.begin(), nb.end(), Edge{n.relation, n.entity}) == nb.end()) {
                throw Error("parse_tree: edge absent from the graph");
            }
            t.nodes[static_cast<std::size_t>(p.parent)].children.push_back(static_cast<int>(t.nodes.size()));
        }
        t.depth_limit = std::max(t.depth_limit, n.depth);
        t.nodes.push_back(std::move(n));
    }
    return t;
}

namespace {

std::string canonical(const KnowledgeTree& t, int at) {
    const auto& n = t.nodes[static_cast<std::size_t>(at)];
    std::vector<std::string> kids;
    for (int c : n.children) kids.push_back(canonical(t, c));
    std::sort(kids.begin(), kids.end());
    std::string s = "(" + std::to_string(n.relation) + ":" + std::to_string(n.entity) + "@" + std::to_string(n.depth);
    for (const auto& k : kids) s += k;
    return s + ")";
}

}  // namespace

bool isomorphic(const KnowledgeTree& a, const KnowledgeTree& b) {
    if (a.nodes.empty() || b.nodes.empty()) return a.nodes.empty() && b.nodes.empty();
    return a.size() == b.size() && canonical(a, 0) == canonical(b, 0);
}

TreeRepresentations aggregate_trees(std::span<const ag::Var> encoded, const TreeAggregationParams& p,
                                    bool mean_scaling) {
    if (encoded.empty()) throw Error("aggregate_trees: no trees");
    TreeRepresentations out;
    for (const auto& e : encoded) out.per_tree.push_back(asum(e, p.tokens, mean_scaling));
    out.stacked = ag::concat_rows(out.per_tree);
    out.aggregate = asum(out.stacked, p.trees, mean_scaling);
    return out;
}

TreeRepresentations encode_and_aggregate(std::span<const SerializedTree> trees, const TextEncoder& encoder,
                                         const TreeAggregationParams& p, bool mean_scaling) {
    std::vector<ag::Var> encoded;
    encoded.reserve(trees.size());
    for (const auto& t : trees) encoded.push_back(encoder.encode(t.text, TextKind::tree).vectors);
    return aggregate_trees(encoded, p, mean_scaling);
}

}  // namespace kgcrs
