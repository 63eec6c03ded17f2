// User-preference extraction: dialogue/entity cross-interaction, attention-sum
// aggregation, item scoring and the collaborative supervision loss.

#pragma once

#include "kgcrs/autograd.hpp"
#include "kgcrs/params.hpp"

#include <string>

namespace kgcrs {

struct AttentionSumParams {
    ag::Var w_q;  // d_in x d_key
    ag::Var w_k;  // d_in x d_key
    ag::Var w_v;  // d_in x d_out

    static AttentionSumParams create(ParameterSet& ps, const std::string& name, Group g, int d_in,
                                     int d_out, Rng& rng);
};

/// ASum(X) = sum_i sum_j softmax_j(X_i W_Q . (X_j W_K)^T / sqrt(d)) X_j W_V.
/// The outer sum runs over query rows, so the result grows with n unless
/// `mean_scaling` divides it by n. Throws on an empty input.
ag::Var asum(const ag::Var& x, const AttentionSumParams& p, bool mean_scaling = false);

struct CrossInteractionParams {
    ag::Var w_c;       // d_text x d
    ag::Var w_e;       // d_ent x d
    ag::Var bilinear;  // d x d

    static CrossInteractionParams create(ParameterSet& ps, const std::string& name, Group g,
                                         int d_text, int d_ent, int d, Rng& rng);
};

struct CrossInteraction {
    ag::Var context;   // n_C x d
    ag::Var entities;  // n_E x d (0 rows when there are no entities)
};

/// C' = C W_C, E' = E W_E, A = C' W E'^T;
/// C~ = C' + norm(A) E', E~ = E' + norm(A^T) C', where norm is a row softmax
/// when `normalize` is set and the identity otherwise.
CrossInteraction cross_interact(const ag::Var& context, const ag::Var& entities,
                                const CrossInteractionParams& p, bool normalize);

/// Row-concatenates both sides and aggregates them with asum.
ag::Var user_embedding(const CrossInteraction& x, const AttentionSumParams& p, bool mean_scaling = false);

/// Logits U (I W_I)^T, 1 x |I|.
ag::Var item_logits(const ag::Var& user, const ag::Var& items, const ag::Var& w_items);

/// softmax(U (I W_I)^T); requires at least two items.
ag::Var score_items(const ag::Var& user, const ag::Var& items, const ag::Var& w_items);

enum class Reduction { sum, mean };
Reduction reduction_from_string(const std::string& s);

inline constexpr double kProbClip = 1e-12;

/// -sum_j sum_i [Y log R + (1 - Y) log(1 - R)], probabilities clipped to
/// [1e-12, 1 - 1e-12]. `mean` divides by the number of rows.
ag::Var preference_loss(const ag::Var& scores, const ag::Matrix& labels, Reduction reduction = Reduction::sum);

}  // namespace kgcrs
