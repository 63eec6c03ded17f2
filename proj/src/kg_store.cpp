#include "kgcrs/kg_store.hpp"

#include "kgcrs/error.hpp"
#include "kgcrs/util.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace kgcrs {

std::int32_t NameTable::intern(std::string_view name) {
    std::string key(name);
    if (auto it = ids_.find(key); it != ids_.end()) return it->second;
    const auto id = static_cast<std::int32_t>(names_.size());
    names_.push_back(key);
    ids_.emplace(std::move(key), id);
    return id;
}

std::optional<std::int32_t> NameTable::find(std::string_view name) const {
    if (auto it = ids_.find(std::string(name)); it != ids_.end()) return it->second;
    return std::nullopt;
}

const std::string& NameTable::name(std::int32_t id) const {
    if (id < 0 || id >= size()) throw Error("name id " + std::to_string(id) + " out of range");
    return names_[static_cast<std::size_t>(id)];
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

void chomp(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
}

}  // namespace

void KnowledgeGraph::add_triple(std::string_view h, std::string_view r, std::string_view t,
                                std::size_t line) {
    if (h.empty() || r.empty() || t.empty()) throw ParseError("empty field in triple", line);
    if (r.starts_with(kInversePrefix)) {
        throw ParseError("relation name may not start with 'inv:': " + std::string(r), line);
    }
    const EntityId head = entities_.intern(h);
    const RelationId rel = relations_.intern(r);
    if (use_inverse_edges_) relations_.intern(std::string(kInversePrefix) + std::string(r));
    const EntityId tail = entities_.intern(t);
    triples_.push_back({head, rel, tail});
}

void KnowledgeGraph::build_adjacency() {
    // Triples keep first-appearance order; duplicates are dropped here.
    std::set<Triple> seen;
    std::vector<Triple> unique;
    unique.reserve(triples_.size());
    for (const auto& t : triples_) {
        if (seen.insert(t).second) unique.push_back(t);
    }
    triples_ = std::move(unique);

    inverse_.assign(static_cast<std::size_t>(relations_.size()), -1);
    for (RelationId r = 0; r < relations_.size(); ++r) {
        const auto& name = relations_.name(r);
        if (name.starts_with(kInversePrefix)) {
            if (auto fwd = relations_.find(std::string_view(name).substr(kInversePrefix.size()))) {
                inverse_[static_cast<std::size_t>(r)] = *fwd;
                inverse_[static_cast<std::size_t>(*fwd)] = r;
            }
        }
    }

    adjacency_.assign(static_cast<std::size_t>(entities_.size()), {});
    for (const auto& t : triples_) {
        adjacency_[static_cast<std::size_t>(t.head)].push_back({t.relation, t.tail});
        if (use_inverse_edges_) {
            adjacency_[static_cast<std::size_t>(t.tail)].push_back(
                {inverse_[static_cast<std::size_t>(t.relation)], t.head});
        }
    }
    for (auto& list : adjacency_) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    item_index_.assign(static_cast<std::size_t>(entities_.size()), -1);
    for (std::size_t i = 0; i < items_.size(); ++i) {
        item_index_[static_cast<std::size_t>(items_[i])] = static_cast<std::int32_t>(i);
    }
}

KnowledgeGraph KnowledgeGraph::load_triples(const std::string& path, bool use_inverse_edges) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open triples file " + path);
    KnowledgeGraph g;
    g.use_inverse_edges_ = use_inverse_edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        chomp(line);
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 3) {
            throw ParseError("expected 3 TAB-separated fields, got " + std::to_string(fields.size()),
                             lineno);
        }
        g.add_triple(fields[0], fields[1], fields[2], lineno);
    }
    if (g.triples_.empty()) throw ParseError("triples file is empty: " + path);
    g.build_adjacency();
    return g;
}

KnowledgeGraph KnowledgeGraph::from_triples(std::span<const RawTriple> triples,
                                            bool use_inverse_edges) {
    KnowledgeGraph g;
    g.use_inverse_edges_ = use_inverse_edges;
    std::size_t i = 0;
    for (const auto& t : triples) g.add_triple(t.head, t.relation, t.tail, ++i);
    if (g.triples_.empty()) throw ParseError("knowledge graph has no triples");
    g.build_adjacency();
    return g;
}

KnowledgeGraph KnowledgeGraph::with_items(std::span<const std::string> names) const {
    KnowledgeGraph g = *this;
    std::set<EntityId> ids(items_.begin(), items_.end());
    for (const auto& n : names) {
        auto id = entities_.find(n);
        if (!id) throw Error("unknown item entity: '" + n + "'");
        ids.insert(*id);
    }
    g.items_.assign(ids.begin(), ids.end());
    g.build_adjacency();
    return g;
}

std::vector<std::string> KnowledgeGraph::read_item_names(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open items file " + path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        chomp(line);
        if (!line.empty()) names.push_back(line);
    }
    return names;
}

std::span<const Edge> KnowledgeGraph::neighbors(EntityId v) const {
    if (v < 0 || v >= entity_count()) throw Error("unknown entity id " + std::to_string(v));
    return adjacency_[static_cast<std::size_t>(v)];
}

std::optional<std::int32_t> KnowledgeGraph::item_index(EntityId e) const {
    if (e < 0 || e >= entity_count()) return std::nullopt;
    const auto idx = item_index_[static_cast<std::size_t>(e)];
    if (idx < 0) return std::nullopt;
    return idx;
}

std::optional<RelationId> KnowledgeGraph::inverse_of(RelationId r) const {
    if (r < 0 || r >= relation_count()) return std::nullopt;
    const auto inv = inverse_[static_cast<std::size_t>(r)];
    if (inv < 0) return std::nullopt;
    return inv;
}

EntityId KnowledgeGraph::entity_id(std::string_view name) const {
    auto id = entities_.find(name);
    if (!id) throw Error("unknown entity: '" + std::string(name) + "'");
    return *id;
}

std::string KnowledgeGraph::manifest_text() const {
    std::ostringstream out;
    out << "format\tkgcrs-graph-v1\n";
    out << "use_inverse_edges\t" << (use_inverse_edges_ ? 1 : 0) << "\n";
    out << "entities\t" << entities_.size() << "\n";
    out << "relations\t" << relations_.size() << "\n";
    out << "triples\t" << triples_.size() << "\n";
    out << "items\t" << items_.size() << "\n";
    for (EntityId i = 0; i < entities_.size(); ++i) out << "entity\t" << i << "\t" << entities_.name(i) << "\n";
    for (RelationId i = 0; i < relations_.size(); ++i) out << "relation\t" << i << "\t" << relations_.name(i) << "\n";
    for (EntityId e : items_) out << "item\t" << e << "\n";
    return out.str();
}

std::string KnowledgeGraph::triples_text() const {
    std::ostringstream out;
    for (const auto& t : triples_) {
        out << entities_.name(t.head) << "\t" << relations_.name(t.relation) << "\t"
            << entities_.name(t.tail) << "\n";
    }
    return out.str();
}

void KnowledgeGraph::dump(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    write_file(dir + "/manifest.tsv", manifest_text());
    write_file(dir + "/triples.tsv", triples_text());
}

KnowledgeGraph KnowledgeGraph::load_dump(const std::string& dir) {
    KnowledgeGraph g;
    std::istringstream manifest(read_file(dir + "/manifest.tsv"));
    std::string line;
    std::size_t lineno = 0;
    std::size_t n_entities = 0, n_relations = 0, n_triples = 0, n_items = 0;
    bool format_ok = false;
    while (std::getline(manifest, line)) {
        ++lineno;
        chomp(line);
        if (line.empty()) continue;
        auto f = split_tabs(line);
        const auto& key = f[0];
        auto need = [&](std::size_t n) {
            if (f.size() != n) throw ParseError("malformed manifest entry '" + key + "'", lineno);
        };
        if (key == "format") {
            need(2);
            if (f[1] != "kgcrs-graph-v1") throw ParseError("unsupported graph format " + f[1], lineno);
            format_ok = true;
        } else if (key == "use_inverse_edges") {
            need(2);
            g.use_inverse_edges_ = f[1] == "1";
        } else if (key == "entities") {
            need(2);
            n_entities = std::stoul(f[1]);
        } else if (key == "relations") {
            need(2);
            n_relations = std::stoul(f[1]);
        } else if (key == "triples") {
            need(2);
            n_triples = std::stoul(f[1]);
        } else if (key == "items") {
            need(2);
            n_items = std::stoul(f[1]);
        } else if (key == "entity" || key == "relation") {
            need(3);
            auto& table = key == "entity" ? g.entities_ : g.relations_;
            if (std::stol(f[1]) != table.size()) throw ParseError("non-dense " + key + " id", lineno);
            table.intern(f[2]);
        } else if (key == "item") {
            need(2);
            g.items_.push_back(static_cast<EntityId>(std::stol(f[1])));
        } else {
            throw ParseError("unknown manifest key '" + key + "'", lineno);
        }
    }
    if (!format_ok) throw ParseError("graph manifest missing format line");

    std::istringstream triples(read_file(dir + "/triples.tsv"));
    lineno = 0;
    while (std::getline(triples, line)) {
        ++lineno;
        chomp(line);
        if (line.empty()) continue;
        auto f = split_tabs(line);
        if (f.size() != 3) throw ParseError("expected 3 TAB-separated fields", lineno);
        auto h = g.entities_.find(f[0]);
        auto r = g.relations_.find(f[1]);
        auto t = g.entities_.find(f[2]);
        if (!h || !r || !t) throw ParseError("triple references a name absent from the manifest", lineno);
        g.triples_.push_back({*h, *r, *t});
    }
    if (static_cast<std::size_t>(g.entities_.size()) != n_entities ||
        static_cast<std::size_t>(g.relations_.size()) != n_relations ||
        g.triples_.size() != n_triples || g.items_.size() != n_items) {
        throw ParseError("graph dump counts do not match its tables");
    }
    for (EntityId e : g.items_) {
        if (e < 0 || e >= g.entities_.size()) throw ParseError("item id out of range");
    }
    std::sort(g.items_.begin(), g.items_.end());
    g.build_adjacency();
    return g;
}

std::string KnowledgeGraph::content_hash() const {
    return git_blob_hash(manifest_text() + triples_text());
}

}  // namespace kgcrs
