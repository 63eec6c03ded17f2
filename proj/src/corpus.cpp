#include "kgcrs/corpus.hpp"

#include "kgcrs/error.hpp"
#include "kgcrs/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace kgcrs {

using nlohmann::json;

namespace {

std::string record_name(const json& rec, std::size_t line) {
    if (rec.is_object() && rec.contains("id") && rec["id"].is_string()) {
        return "dialogue '" + rec["id"].get<std::string>() + "'";
    }
    return "record on line " + std::to_string(line);
}

std::vector<std::string> string_list(const json& u, const char* field, const std::string& where,
                                     std::size_t line) {
    std::vector<std::string> out;
    if (!u.contains(field)) return out;
    const auto& v = u[field];
    if (!v.is_array()) throw ParseError(where + ": field '" + field + "' must be a list", line);
    for (const auto& s : v) {
        if (!s.is_string()) throw ParseError(where + ": field '" + field + "' must hold strings", line);
        out.push_back(s.get<std::string>());
    }
    return out;
}

Dialogue parse_record(const json& rec, std::size_t line) {
    const std::string where = record_name(rec, line);
    if (!rec.is_object()) throw ParseError(where + ": not an object", line);
    if (!rec.contains("id") || !rec["id"].is_string()) throw ParseError(where + ": missing field 'id'", line);
    if (!rec.contains("utterances") || !rec["utterances"].is_array()) {
        throw ParseError(where + ": missing field 'utterances'", line);
    }
    Dialogue d;
    d.id = rec["id"].get<std::string>();
    std::size_t idx = 0;
    for (const auto& u : rec["utterances"]) {
        const std::string uw = where + " utterance " + std::to_string(idx++);
        if (!u.is_object()) throw ParseError(uw + ": not an object", line);
        if (!u.contains("speaker") || !u["speaker"].is_string()) {
            throw ParseError(uw + ": missing field 'speaker'", line);
        }
        Utterance out;
        const auto speaker = u["speaker"].get<std::string>();
        if (speaker == "seeker") {
            out.speaker = Speaker::seeker;
        } else if (speaker == "recommender") {
            out.speaker = Speaker::recommender;
        } else {
            throw ParseError(uw + ": field 'speaker' has unknown value '" + speaker + "'", line);
        }
        if (!u.contains("text") || !u["text"].is_string()) throw ParseError(uw + ": missing field 'text'", line);
        out.text = u["text"].get<std::string>();
        if (out.text.find_first_not_of(" \t\r\n") == std::string::npos) {
            throw ParseError(uw + ": field 'text' is empty", line);
        }
        out.entities = string_list(u, "entities", uw, line);
        out.items = string_list(u, "items", uw, line);
        d.utterances.push_back(std::move(out));
    }
    if (d.utterances.size() < 2) throw ParseError(where + ": needs at least 2 utterances", line);
    return d;
}

}  // namespace

std::vector<Dialogue> parse_dialogues(const std::string& jsonl) {
    std::vector<Dialogue> out;
    std::istringstream in(jsonl);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
        }
        out.push_back(parse_record(rec, lineno));
    }
    return out;
}

std::vector<Dialogue> load_dialogues(const std::string& path) {
    return parse_dialogues(read_file(path));
}

std::string to_jsonl(const std::vector<Dialogue>& dialogues) {
    std::string out;
    for (const auto& d : dialogues) {
        json rec;
        rec["id"] = d.id;
        rec["utterances"] = json::array();
        for (const auto& u : d.utterances) {
            rec["utterances"].push_back({{"speaker", u.speaker == Speaker::seeker ? "seeker" : "recommender"},
                                         {"text", u.text},
                                         {"entities", u.entities},
                                         {"items", u.items}});
        }
        out += rec.dump();
        out += '\n';
    }
    return out;
}

std::vector<Example> expand_turns(const Dialogue& d) {
    std::vector<Example> out;
    std::vector<std::string> mentioned;
    std::set<std::string> seen;
    for (std::size_t n = 0; n < d.utterances.size(); ++n) {
        const auto& u = d.utterances[n];
        if (n >= 1 && u.speaker == Speaker::recommender) {
            Example ex;
            ex.id = d.id + "#" + std::to_string(n);
            ex.dialogue_id = d.id;
            ex.context.assign(d.utterances.begin(), d.utterances.begin() + static_cast<std::ptrdiff_t>(n));
            ex.target_response = u.text;
            ex.target_items = u.items;
            ex.mentioned_entities = mentioned;
            out.push_back(std::move(ex));
        }
        for (const auto& e : u.entities) {
            if (seen.insert(e).second) mentioned.push_back(e);
        }
    }
    return out;
}

std::vector<Example> expand_all(const std::vector<Dialogue>& dialogues) {
    std::vector<Example> out;
    for (const auto& d : dialogues) {
        auto ex = expand_turns(d);
        out.insert(out.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
    }
    return out;
}

Split split_dialogues(const std::vector<Dialogue>& dialogues, std::uint64_t seed) {
    const std::size_t n = dialogues.size();
    if (n < 10) throw Error("split needs at least 10 dialogues, got " + std::to_string(n));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t n_train = (8 * n) / 10;
    const std::size_t n_valid = n / 10;
    Split s;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = dialogues[order[i]];
        if (i < n_train) {
            s.train.push_back(d);
        } else if (i < n_train + n_valid) {
            s.valid.push_back(d);
        } else {
            s.test.push_back(d);
        }
    }
    return s;
}

std::vector<int> target_item_indices(const Example& ex, const KnowledgeGraph& g) {
    std::set<int> idx;
    for (const auto& name : ex.target_items) {
        auto e = g.entities().find(name);
        auto i = e ? g.item_index(*e) : std::nullopt;
        if (!i) throw Error("example " + ex.id + ": target '" + name + "' is not a registered item");
        idx.insert(*i);
    }
    return {idx.begin(), idx.end()};
}

std::vector<double> make_label_vector(const Example& ex, const KnowledgeGraph& g) {
    std::vector<double> y(g.items().size(), 0.0);
    for (int i : target_item_indices(ex, g)) y[static_cast<std::size_t>(i)] = 1.0;
    return y;
}

}  // namespace kgcrs
