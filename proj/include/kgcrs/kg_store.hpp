// Knowledge graph store: dense entity/relation ids, forward triples, a
// bidirectional adjacency index and the candidate-item registry.

#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgcrs {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

inline constexpr std::string_view kInversePrefix = "inv:";

/// Bijective string <-> dense id table; ids follow first-insertion order.
class NameTable {
public:
    std::int32_t intern(std::string_view name);
    std::optional<std::int32_t> find(std::string_view name) const;
    const std::string& name(std::int32_t id) const;
    std::int32_t size() const { return static_cast<std::int32_t>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::int32_t> ids_;
};

struct Triple {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;
    auto operator<=>(const Triple&) const = default;
};

struct Edge {
    RelationId relation = 0;
    EntityId target = 0;
    auto operator<=>(const Edge&) const = default;
};

struct RawTriple {
    std::string head;
    std::string relation;
    std::string tail;
};

class KnowledgeGraph {
public:
    /// Reads a TAB-separated triples file. Throws ParseError on a malformed
    /// line or an empty file.
    static KnowledgeGraph load_triples(const std::string& path, bool use_inverse_edges = true);
    static KnowledgeGraph from_triples(std::span<const RawTriple> triples,
                                       bool use_inverse_edges = true);

    /// Reads a graph written by dump(); ids are restored exactly.
    static KnowledgeGraph load_dump(const std::string& dir);
    void dump(const std::string& dir) const;

    /// Copy of this graph with the given names registered as candidate items.
    /// Unknown names throw; duplicates collapse.
    KnowledgeGraph with_items(std::span<const std::string> names) const;
    static std::vector<std::string> read_item_names(const std::string& path);

    std::span<const Edge> neighbors(EntityId v) const;

    std::int32_t entity_count() const { return entities_.size(); }
    std::int32_t relation_count() const { return relations_.size(); }
    const NameTable& entities() const { return entities_; }
    const NameTable& relations() const { return relations_; }
    const std::vector<Triple>& triples() const { return triples_; }
    bool use_inverse_edges() const { return use_inverse_edges_; }

    /// Items sorted by entity id; position in this list is the item index used
    /// for label and score vectors everywhere.
    const std::vector<EntityId>& items() const { return items_; }
    std::optional<std::int32_t> item_index(EntityId e) const;
    std::optional<RelationId> inverse_of(RelationId r) const;

    EntityId entity_id(std::string_view name) const;  // throws if absent

    /// Git-style hash of the dump manifest and triples.
    std::string content_hash() const;

private:
    void add_triple(std::string_view h, std::string_view r, std::string_view t, std::size_t line);
    void build_adjacency();
    std::string manifest_text() const;
    std::string triples_text() const;

    bool use_inverse_edges_ = true;
    NameTable entities_;
    NameTable relations_;
    std::vector<Triple> triples_;
    std::vector<std::vector<Edge>> adjacency_;
    std::vector<EntityId> items_;
    std::vector<std::int32_t> item_index_;  // per entity, -1 if not an item
    std::vector<RelationId> inverse_;       // per relation, -1 if none
};

}  // namespace kgcrs
