#include "kgcrs/user_pref.hpp"

#include "kgcrs/error.hpp"

#include <array>
#include <cmath>

namespace kgcrs {

AttentionSumParams AttentionSumParams::create(ParameterSet& ps, const std::string& name, Group g,
                                              int d_in, int d_out, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d_in));
    AttentionSumParams p;
    p.w_q = ps.add(name + ".w_q", g, randn(d_in, d_in, s, rng));
    p.w_k = ps.add(name + ".w_k", g, randn(d_in, d_in, s, rng));
    p.w_v = ps.add(name + ".w_v", g, randn(d_in, d_out, s, rng));
    return p;
}

ag::Var asum(const ag::Var& x, const AttentionSumParams& p, bool mean_scaling) {
    if (x.rows() == 0) throw Error("asum: empty input");
    auto q = ag::matmul(x, p.w_q);
    auto k = ag::matmul(x, p.w_k);
    auto v = ag::matmul(x, p.w_v);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.w_k.cols()));
    auto weights = ag::softmax_rows(ag::scale(ag::matmul_nt(q, k), inv_sqrt));
    auto out = ag::sum_rows(ag::matmul(weights, v));
    return mean_scaling ? ag::scale(out, 1.0 / static_cast<double>(x.rows())) : out;
}

CrossInteractionParams CrossInteractionParams::create(ParameterSet& ps, const std::string& name, Group g,
                                                      int d_text, int d_ent, int d, Rng& rng) {
    CrossInteractionParams p;
    p.w_c = ps.add(name + ".w_c", g, randn(d_text, d, 1.0 / std::sqrt(static_cast<double>(d_text)), rng));
    p.w_e = ps.add(name + ".w_e", g, randn(d_ent, d, 1.0 / std::sqrt(static_cast<double>(d_ent)), rng));
    p.bilinear = ps.add(name + ".bilinear", g, randn(d, d, 1.0 / static_cast<double>(d), rng));
    return p;
}

CrossInteraction cross_interact(const ag::Var& context, const ag::Var& entities,
                                const CrossInteractionParams& p, bool normalize) {
    if (context.rows() == 0) throw Error("cross_interact: empty dialogue encoding");
    if (context.cols() != p.w_c.rows()) throw Error("cross_interact: dialogue width mismatch");
    if (entities.rows() > 0 && entities.cols() != p.w_e.rows()) {
        throw Error("cross_interact: entity width mismatch");
    }
    auto c = ag::matmul(context, p.w_c);
    if (entities.rows() == 0) {
        return {c, ag::constant(ag::Matrix(0, p.w_e.cols()))};
    }
    auto e = ag::matmul(entities, p.w_e);
    auto a = ag::matmul_nt(ag::matmul(c, p.bilinear), e);  // n_C x n_E
    auto a_t = ag::transpose(a);
    if (normalize) {
        a = ag::softmax_rows(a);
        a_t = ag::softmax_rows(a_t);
    }
    return {ag::add(c, ag::matmul(a, e)), ag::add(e, ag::matmul(a_t, c))};
}

ag::Var user_embedding(const CrossInteraction& x, const AttentionSumParams& p, bool mean_scaling) {
    if (x.context.rows() + x.entities.rows() == 0) throw Error("user_embedding: no rows");
    if (x.entities.rows() == 0) return asum(x.context, p, mean_scaling);
    if (x.context.rows() == 0) return asum(x.entities, p, mean_scaling);
    std::array<ag::Var, 2> parts{x.context, x.entities};
    return asum(ag::concat_rows(parts), p, mean_scaling);
}

ag::Var item_logits(const ag::Var& user, const ag::Var& items, const ag::Var& w_items) {
    return ag::matmul_nt(user, ag::matmul(items, w_items));
}

ag::Var score_items(const ag::Var& user, const ag::Var& items, const ag::Var& w_items) {
    if (items.rows() < 2) throw Error("score_items: need at least 2 candidate items");
    return ag::softmax_rows(item_logits(user, items, w_items));
}

Reduction reduction_from_string(const std::string& s) {
    if (s == "sum") return Reduction::sum;
    if (s == "mean") return Reduction::mean;
    throw ConfigError("unknown loss reduction '" + s + "'");
}

ag::Var preference_loss(const ag::Var& scores, const ag::Matrix& labels, Reduction reduction) {
    if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
        throw Error("preference_loss: scores and labels differ in shape");
    }
    auto r = ag::clamp(scores, kProbClip, 1.0 - kProbClip);
    // 1 - R as (-1) * R + 1.
    auto one_minus = ag::add_const(ag::scale(r, -1.0), ag::Matrix::Ones(r.rows(), r.cols()));
    ag::Matrix neg_labels = ag::Matrix::Ones(labels.rows(), labels.cols()) - labels;
    auto pos = ag::weighted_sum(ag::log(r), labels);
    auto neg = ag::weighted_sum(ag::log(one_minus), neg_labels);
    auto loss = ag::scale(ag::add(pos, neg), -1.0);
    if (reduction == Reduction::mean && scores.rows() > 0) {
        loss = ag::scale(loss, 1.0 / static_cast<double>(scores.rows()));
    }
    return loss;
}

}  // namespace kgcrs
