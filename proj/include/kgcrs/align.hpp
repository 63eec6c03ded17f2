// Contrastive alignment between the graph-side entity aggregate and the
// tree-side aggregate of the same conversation.

#pragma once

#include "kgcrs/autograd.hpp"
#include "kgcrs/kg_store.hpp"
#include "kgcrs/user_pref.hpp"

#include <span>
#include <vector>

namespace kgcrs {

enum class SequenceEquality { ordered, set };
SequenceEquality sequence_equality_from_string(const std::string& s);

struct AlignOptions {
    double tau = 0.07;
    bool normalize = true;
    /// Denominator over negatives only, guarded by 1e-12.
    bool literal = false;
    SequenceEquality equality = SequenceEquality::ordered;
};

inline constexpr double kLiteralDenominatorGuard = 1e-12;

/// asum over the mentioned-entity embeddings followed by a linear projection
/// to the alignment space. Throws on an empty input; callers substitute a
/// learned null vector.
ag::Var aggregate_entities(const ag::Var& entity_embeddings, const AttentionSumParams& p,
                           const ag::Var& projection, bool mean_scaling = false);

/// M(i, j) = 1 iff entity sequences i and j are equal.
ag::Matrix contrast_mask(std::span<const std::vector<EntityId>> sequences,
                         SequenceEquality equality = SequenceEquality::ordered);

/// InfoNCE summed over positive pairs: for each M(i, j) = 1,
/// -log(exp(s_ij / tau) / sum_k exp(s_ik / tau)), s the (normalised) dot
/// product of entity row i and tree row j. Returns 0 when no pair is positive.
ag::Var align_loss(const ag::Var& entity_side, const ag::Var& tree_side, const ag::Matrix& mask,
                   const AlignOptions& opt);

}  // namespace kgcrs
