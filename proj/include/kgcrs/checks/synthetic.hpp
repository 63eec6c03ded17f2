// Seeded synthetic movie-domain fixture: a small knowledge graph of movies,
// actors, directors and genres plus templated dialogues whose recommended
// movie is the one linked to the most recently mentioned actor or director.

#pragma once

#include "kgcrs/config.hpp"
#include "kgcrs/corpus.hpp"
#include "kgcrs/kg_store.hpp"
#include "kgcrs/util.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kgcrs::checks {

struct SyntheticWorld {
    std::vector<std::string> movies;
    std::vector<std::string> actors;     // actors[i] stars in movies[i]
    std::vector<std::string> directors;  // directors[i] directed movies[i]
    std::vector<std::string> genres;     // movies[i] has genre genres[i % genres.size()]
    std::vector<RawTriple> triples;
};

/// 30 movies, 30 actors, 30 directors, 10 genres (100 entities).
SyntheticWorld make_world(std::uint64_t seed);

std::vector<Dialogue> make_dialogues(const SyntheticWorld& w, int count, std::uint64_t seed,
                                     const std::string& id_prefix = "d");

/// Writes triples.tsv, items.txt and <corpus_name> into `dir`.
void write_fixture(const std::string& dir, const SyntheticWorld& w, const std::vector<Dialogue>& dialogues,
                   const std::string& corpus_name);

/// Random multigraph with `entities` nodes named e0.., `relations` relation
/// names r0.. and `triples` random (head, relation, tail) draws without self
/// loops. Every entity appears in at least one triple.
KnowledgeGraph random_graph(Rng& rng, int entities, int relations, int triples, bool inverse_edges = true);

/// Fresh empty directory under the system temp directory.
std::string fresh_temp_dir(const std::string& tag);

/// Small dimensions and step counts suitable for tests, reading the fixture
/// files in `dir` with the given corpus.
RunConfig tiny_config(const std::string& dir, const std::string& corpus_name);

}  // namespace kgcrs::checks
