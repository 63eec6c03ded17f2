// Whitespace + punctuation word tokenizer with a closed vocabulary.

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgcrs {

namespace tok {
inline constexpr int pad = 0;
inline constexpr int unk = 1;
inline constexpr int sep = 2;
inline constexpr int eos = 3;
inline constexpr int mask = 4;
inline constexpr int usr = 5;
inline constexpr int sys = 6;
inline constexpr int item = 7;
}  // namespace tok

inline constexpr std::string_view kItemMask = "[ITEM]";

/// Lowercases ASCII, splits on whitespace and emits every ASCII punctuation
/// character as its own token. Bracketed specials such as "[ITEM]" stay whole.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
public:
    Vocabulary();

    /// Specials first, then every distinct token of `texts` in sorted order.
    static Vocabulary build(std::span<const std::string> texts);

    int id(std::string_view token) const;
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

    std::vector<int> encode(std::string_view text) const;
    std::string decode(std::span<const int> ids) const;

    std::string serialize() const;
    static Vocabulary deserialize(const std::string& text);

private:
    void add(const std::string& t);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

}  // namespace kgcrs
