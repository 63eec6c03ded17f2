#include "kgcrs/checks/oracles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace kgcrs::checks {

int brute_rank(const std::vector<double>& scores, int i) {
    int rank = 1;
    for (int j = 0; j < static_cast<int>(scores.size()); ++j) {
        if (j == i) continue;
        const double a = scores[static_cast<std::size_t>(j)];
        const double b = scores[static_cast<std::size_t>(i)];
        if (a > b || (a == b && j < i)) ++rank;
    }
    return rank;
}

double brute_recall(const std::vector<double>& scores, const std::vector<int>& gold, int k) {
    int hits = 0;
    for (int g : gold) hits += brute_rank(scores, g) <= k ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double brute_ndcg(const std::vector<double>& scores, const std::vector<int>& gold, int k) {
    double dcg = 0.0;
    for (int g : gold) {
        const int r = brute_rank(scores, g);
        if (r <= k) dcg += 1.0 / std::log2(r + 1.0);
    }
    double ideal = 0.0;
    const int n = std::min<int>(k, static_cast<int>(gold.size()));
    for (int r = 1; r <= n; ++r) ideal += 1.0 / std::log2(r + 1.0);
    return dcg / ideal;
}

double brute_mrr(const std::vector<double>& scores, const std::vector<int>& gold, int k) {
    int best = k + 1;
    for (int g : gold) best = std::min(best, brute_rank(scores, g));
    return best <= k ? 1.0 / best : 0.0;
}

double brute_distinct(const std::vector<std::string>& responses, int n) {
    std::vector<std::vector<std::string>> grams;
    for (const auto& r : responses) {
        std::string lower = r;
        for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        std::istringstream in(lower);
        std::vector<std::string> w;
        for (std::string x; in >> x;) w.push_back(x);
        for (int i = 0; i + n <= static_cast<int>(w.size()); ++i) {
            grams.emplace_back(w.begin() + i, w.begin() + i + n);
        }
    }
    if (grams.empty()) return 0.0;
    int unique = 0;
    for (std::size_t i = 0; i < grams.size(); ++i) {
        bool seen = false;
        for (std::size_t j = 0; j < i && !seen; ++j) seen = grams[j] == grams[i];
        if (!seen) ++unique;
    }
    return static_cast<double>(unique) / static_cast<double>(grams.size());
}

std::set<TreePath> exhaustive_tree(const KnowledgeGraph& g, const Eigen::MatrixXd& emb,
                                   const Eigen::RowVectorXd& context, EntityId root, int depth, int degree) {
    auto sim = [&](EntityId e) {
        const Eigen::RowVectorXd v = emb.row(e);
        const double na = context.norm();
        const double nb = v.norm();
        if (na == 0.0 || nb == 0.0) return 0.0;
        return context.dot(v) / (na * nb);
    };
    // Every (relation, neighbour) pair straight from the triple list.
    auto links = [&](EntityId v) {
        std::vector<std::pair<RelationId, EntityId>> out;
        for (const auto& t : g.triples()) {
            if (t.head == v) out.emplace_back(t.relation, t.tail);
            if (g.use_inverse_edges() && t.tail == v) out.emplace_back(*g.inverse_of(t.relation), t.head);
        }
        return out;
    };

    std::set<TreePath> nodes;
    std::function<void(const TreePath&, int)> grow = [&](const TreePath& path, int level) {
        nodes.insert(path);
        if (level == depth) return;
        std::vector<EntityId> on_path;
        for (std::size_t i = 0; i < path.size(); i += 2) on_path.push_back(path[i]);
        std::map<EntityId, RelationId> rel;
        for (const auto& [r, u] : links(path.back())) {
            if (std::find(on_path.begin(), on_path.end(), u) != on_path.end()) continue;
            auto it = rel.find(u);
            if (it == rel.end() || r < it->second) rel[u] = r;
        }
        std::vector<std::pair<double, EntityId>> ranked;
        for (const auto& [u, r] : rel) ranked.emplace_back(sim(u), u);
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        for (int i = 0; i < degree && i < static_cast<int>(ranked.size()); ++i) {
            TreePath next = path;
            next.push_back(rel[ranked[static_cast<std::size_t>(i)].second]);
            next.push_back(ranked[static_cast<std::size_t>(i)].second);
            grow(next, level + 1);
        }
    };
    grow({root}, 0);
    return nodes;
}

Eigen::RowVectorXd loop_asum(const Eigen::MatrixXd& x, const Eigen::MatrixXd& wq, const Eigen::MatrixXd& wk,
                             const Eigen::MatrixXd& wv, bool mean_scaling) {
    const auto n = x.rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(wk.cols()));
    Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(wv.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::RowVectorXd q = x.row(i) * wq;
        std::vector<double> logits;
        double mx = -INFINITY;
        for (Eigen::Index j = 0; j < n; ++j) {
            const Eigen::RowVectorXd k = x.row(j) * wk;
            logits.push_back(q.dot(k) * scale);
            mx = std::max(mx, logits.back());
        }
        double z = 0.0;
        for (double l : logits) z += std::exp(l - mx);
        for (Eigen::Index j = 0; j < n; ++j) {
            const Eigen::RowVectorXd v = x.row(j) * wv;
            out += std::exp(logits[static_cast<std::size_t>(j)] - mx) / z * v;
        }
    }
    if (mean_scaling) out /= static_cast<double>(n);
    return out;
}

double loop_bce(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& labels) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        for (Eigen::Index j = 0; j < probs.cols(); ++j) {
            const double p = std::clamp(probs(i, j), 1e-12, 1.0 - 1e-12);
            const double y = labels(i, j);
            total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        }
    }
    return total;
}

double loop_info_nce(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& mask, double tau,
                     bool normalize) {
    auto s = [&](Eigen::Index i, Eigen::Index j) {
        double d = a.row(i).dot(b.row(j));
        if (normalize) d /= std::max(a.row(i).norm(), 1e-12) * std::max(b.row(j).norm(), 1e-12);
        return d / tau;
    };
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        double z = 0.0;
        for (Eigen::Index k = 0; k < b.rows(); ++k) z += std::exp(s(i, k));
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            if (mask(i, j) != 0.0) total -= std::log(std::exp(s(i, j)) / z);
        }
    }
    return total;
}

Eigen::MatrixXd loop_rgcn_layer(const Eigen::MatrixXd& x, const Eigen::MatrixXd& self_weight,
                                const std::vector<Eigen::MatrixXd>& weights,
                                const std::vector<std::array<int, 3>>& edges, bool relu) {
    std::map<std::pair<int, int>, int> count;
    for (const auto& e : edges) ++count[{e[0], e[1]}];
    Eigen::MatrixXd h = x * self_weight;
    for (const auto& e : edges) {
        const double c = count[{e[0], e[1]}];
        h.row(e[0]) += x.row(e[2]) * weights[static_cast<std::size_t>(e[1])] / c;
    }
    if (relu) h = h.cwiseMax(0.0);
    return h;
}

}  // namespace kgcrs::checks
