// Named parameters partitioned into the four training groups.

#pragma once

#include "kgcrs/autograd.hpp"
#include "kgcrs/util.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace kgcrs {

/// plm: frozen language-model backbone (text encoder + decoder).
/// user: graph encoder, cross-interaction, user preference and item heads.
/// tree: knowledge-tree aggregation and projections.
/// prompt: task-specific soft prompts.
enum class Group { plm, user, tree, prompt };
inline constexpr std::array<Group, 4> kAllGroups{Group::plm, Group::user, Group::tree, Group::prompt};

std::string_view group_name(Group g);
Group group_from_name(std::string_view name);

class ParameterSet {
public:
    struct Entry {
        std::string name;
        Group group;
        ag::Var var;
    };

    ag::Var add(std::string name, Group group, ag::Matrix init);
    ag::Var find(std::string_view name) const;

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<const Entry*> in_group(Group g) const;

    void set_trainable(Group g, bool on);
    void zero_grad();
    std::size_t count(Group g) const;  // scalar parameter count

    /// Text form: one "name rows cols" header per tensor followed by its
    /// values in hexadecimal floating point, so reload is bit-exact.
    std::string serialize(Group g) const;
    void deserialize(Group g, const std::string& text);
    std::string hash(Group g) const;

private:
    std::vector<Entry> entries_;
};

ag::Matrix randn(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

}  // namespace kgcrs
