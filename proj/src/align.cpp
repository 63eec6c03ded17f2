#include "kgcrs/align.hpp"

#include "kgcrs/error.hpp"

#include <algorithm>
#include <iostream>

namespace kgcrs {

SequenceEquality sequence_equality_from_string(const std::string& s) {
    if (s == "ordered") return SequenceEquality::ordered;
    if (s == "set") return SequenceEquality::set;
    throw ConfigError("unknown sequence equality '" + s + "'");
}

ag::Var aggregate_entities(const ag::Var& entity_embeddings, const AttentionSumParams& p,
                           const ag::Var& projection, bool mean_scaling) {
    if (entity_embeddings.rows() == 0) throw Error("aggregate_entities: no entities");
    return ag::matmul(asum(entity_embeddings, p, mean_scaling), projection);
}

ag::Matrix contrast_mask(std::span<const std::vector<EntityId>> sequences, SequenceEquality equality) {
    const auto b = static_cast<Eigen::Index>(sequences.size());
    std::vector<std::vector<EntityId>> keys(sequences.begin(), sequences.end());
    if (equality == SequenceEquality::set) {
        for (auto& k : keys) {
            std::sort(k.begin(), k.end());
            k.erase(std::unique(k.begin(), k.end()), k.end());
        }
    }
    ag::Matrix m(b, b);
    for (Eigen::Index i = 0; i < b; ++i) {
        for (Eigen::Index j = 0; j < b; ++j) {
            m(i, j) = keys[static_cast<std::size_t>(i)] == keys[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
        }
    }
    return m;
}

ag::Var align_loss(const ag::Var& entity_side, const ag::Var& tree_side, const ag::Matrix& mask,
                   const AlignOptions& opt) {
    if (opt.tau <= 0) throw Error("align_loss: temperature must be > 0");
    if (entity_side.rows() != tree_side.rows() || entity_side.cols() != tree_side.cols()) {
        throw Error("align_loss: entity and tree batches differ in shape");
    }
    const auto b = entity_side.rows();
    if (mask.rows() != b || mask.cols() != b) throw Error("align_loss: mask shape mismatch");
    if (b == 0 || mask.sum() == 0.0) {
        std::cerr << "warning: align_loss: batch has no positive pairs, loss is 0\n";
        return ag::constant(ag::Matrix::Zero(1, 1));
    }
    auto e = opt.normalize ? ag::l2_normalize_rows(entity_side) : entity_side;
    auto t = opt.normalize ? ag::l2_normalize_rows(tree_side) : tree_side;
    auto s = ag::scale(ag::matmul_nt(e, t), 1.0 / opt.tau);

    if (!opt.literal) {
        return ag::scale(ag::weighted_sum(ag::log_softmax_rows(s), mask), -1.0);
    }
    ag::Matrix negatives = ag::Matrix::Ones(b, b) - mask;
    auto neg_sum = ag::matmul(ag::mul_const(ag::exp(s), negatives), ag::constant(ag::Matrix::Ones(b, 1)));
    auto log_denom = ag::log(ag::add_const(neg_sum, ag::Matrix::Constant(b, 1, kLiteralDenominatorGuard)));
    ag::Matrix positives_per_row = mask.rowwise().sum();
    return ag::sub(ag::weighted_sum(log_denom, positives_per_row), ag::weighted_sum(s, mask));
}

}  // namespace kgcrs
