// Dialogue corpus: JSONL ingestion, turn expansion into examples, splits and
// label vectors.

#pragma once

#include "kgcrs/kg_store.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kgcrs {

enum class Speaker { seeker, recommender };

struct Utterance {
    Speaker speaker = Speaker::seeker;
    std::string text;
    std::vector<std::string> entities;
    std::vector<std::string> items;
};

struct Dialogue {
    std::string id;
    std::vector<Utterance> utterances;
};

struct Example {
    std::string id;  // "<dialogue id>#<target turn index>"
    std::string dialogue_id;
    std::vector<Utterance> context;
    std::string target_response;
    std::vector<std::string> target_items;
    std::vector<std::string> mentioned_entities;  // first-mention order, no duplicates
};

struct Split {
    std::vector<Dialogue> train;
    std::vector<Dialogue> valid;
    std::vector<Dialogue> test;
};

/// One JSON object per line:
/// {"id": str, "utterances": [{"speaker": "seeker"|"recommender", "text": str,
///   "entities": [str], "items": [str]}]}
/// Throws ParseError naming the record and field on any schema violation.
std::vector<Dialogue> load_dialogues(const std::string& path);
std::vector<Dialogue> parse_dialogues(const std::string& jsonl);
std::string to_jsonl(const std::vector<Dialogue>& dialogues);

/// One example per recommender utterance at index >= 1, in turn order.
std::vector<Example> expand_turns(const Dialogue& d);
std::vector<Example> expand_all(const std::vector<Dialogue>& dialogues);

/// Seeded dialogue-level 8:1:1 split (floor, floor, remainder). Needs >= 10 dialogues.
Split split_dialogues(const std::vector<Dialogue>& dialogues, std::uint64_t seed);

/// Multi-hot vector over g.items() for the example's target items.
std::vector<double> make_label_vector(const Example& ex, const KnowledgeGraph& g);

/// Indices into g.items() of the example's targets, ascending.
std::vector<int> target_item_indices(const Example& ex, const KnowledgeGraph& g);

}  // namespace kgcrs
