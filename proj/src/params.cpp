#include "kgcrs/params.hpp"

#include "kgcrs/error.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace kgcrs {

std::string_view group_name(Group g) {
    switch (g) {
        case Group::plm: return "theta_plm";
        case Group::user: return "theta_user";
        case Group::tree: return "theta_tree";
        case Group::prompt: return "theta_prompt";
    }
    return "?";
}

Group group_from_name(std::string_view name) {
    for (Group g : kAllGroups) {
        if (group_name(g) == name) return g;
    }
    throw Error("unknown parameter group " + std::string(name));
}

ag::Var ParameterSet::add(std::string name, Group group, ag::Matrix init) {
    for (const auto& e : entries_) {
        if (e.name == name) throw Error("duplicate parameter name " + name);
    }
    ag::Var v(std::move(init), true);
    entries_.push_back({std::move(name), group, v});
    return v;
}

ag::Var ParameterSet::find(std::string_view name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return e.var;
    }
    throw Error("no parameter named " + std::string(name));
}

std::vector<const ParameterSet::Entry*> ParameterSet::in_group(Group g) const {
    std::vector<const Entry*> out;
    for (const auto& e : entries_) {
        if (e.group == g) out.push_back(&e);
    }
    return out;
}

void ParameterSet::set_trainable(Group g, bool on) {
    for (auto& e : entries_) {
        if (e.group == g) e.var.set_requires_grad(on);
    }
}

void ParameterSet::zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
}

std::size_t ParameterSet::count(Group g) const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
        if (e.group == g) n += static_cast<std::size_t>(e.var.value().size());
    }
    return n;
}

std::string ParameterSet::serialize(Group g) const {
    std::string out;
    char buf[64];
    for (const auto& e : entries_) {
        if (e.group != g) continue;
        const auto& m = e.var.value();
        out += e.name + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                std::snprintf(buf, sizeof buf, "%a", m(r, c));
                out += buf;
                out += c + 1 == m.cols() ? '\n' : ' ';
            }
        }
    }
    return out;
}

void ParameterSet::deserialize(Group g, const std::string& text) {
    std::istringstream in(text);
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    std::size_t loaded = 0;
    while (in >> name >> rows >> cols) {
        auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
        if (it == entries_.end() || it->group != g) throw Error("checkpoint has unexpected parameter " + name);
        auto& m = it->var.mutable_value();
        if (m.rows() != rows || m.cols() != cols) {
            throw Error("checkpoint shape mismatch for " + name);
        }
        std::string tok;
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                if (!(in >> tok)) throw Error("truncated checkpoint at " + name);
                m(r, c) = std::strtod(tok.c_str(), nullptr);
            }
        }
        ++loaded;
    }
    if (loaded != in_group(g).size()) {
        throw Error("checkpoint for " + std::string(group_name(g)) + " is missing parameters");
    }
}

std::string ParameterSet::hash(Group g) const { return sha1_hex(serialize(g)); }

ag::Matrix randn(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    ag::Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * rng.normal();
    }
    return m;
}

}  // namespace kgcrs
