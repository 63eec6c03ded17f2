#include "kgcrs/tokenizer.hpp"

#include "kgcrs/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <sstream>

namespace kgcrs {

namespace {

constexpr std::array<std::string_view, 8> kSpecials{"[PAD]", "[UNK]", "[SEP]", "[EOS]",
                                                    "[MASK]", "[USR]", "[SYS]", "[ITEM]"};

bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }
bool is_space(unsigned char c) { return c < 0x80 && std::isspace(c); }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (c == '[') {
            bool matched = false;
            for (auto s : kSpecials) {
                if (text.substr(i, s.size()) == s) {
                    flush();
                    out.emplace_back(s);
                    i += s.size();
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        if (is_space(c)) {
            flush();
        } else if (is_ascii_punct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        } else {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
        }
        ++i;
    }
    flush();
    return out;
}

Vocabulary::Vocabulary() {
    for (auto s : kSpecials) add(std::string(s));
}

void Vocabulary::add(const std::string& t) {
    if (ids_.contains(t)) return;
    ids_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(t);
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
    std::set<std::string> all;
    for (const auto& t : texts) {
        for (auto& w : tokenize(t)) all.insert(std::move(w));
    }
    Vocabulary v;
    for (const auto& w : all) v.add(w);
    return v;
}

int Vocabulary::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? tok::unk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw Error("token id out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& w : tokenize(text)) ids.push_back(id(w));
    return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
    std::string out;
    for (int i : ids) {
        if (i == tok::eos || i == tok::pad) continue;
        if (!out.empty()) out += ' ';
        out += token(i);
    }
    return out;
}

std::string Vocabulary::serialize() const {
    std::string out;
    for (const auto& t : tokens_) out += t + "\n";
    return out;
}

Vocabulary Vocabulary::deserialize(const std::string& text) {
    Vocabulary v;
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (n < kSpecials.size()) {
            if (line != kSpecials[n]) throw Error("vocabulary file does not start with the special tokens");
        } else {
            v.add(line);
        }
        ++n;
    }
    return v;
}

}  // namespace kgcrs
