// Slow, direct reference computations used to cross-check the production
// code. Each one is written from the definition, without sharing helpers with
// the code it checks.

#pragma once

#include "kgcrs/kg_store.hpp"

#include <Eigen/Dense>

#include <array>
#include <set>
#include <string>
#include <vector>

namespace kgcrs::checks {

/// 1-based rank of item `i`: one plus the number of items that beat it
/// (higher score, or equal score and smaller index).
int brute_rank(const std::vector<double>& scores, int i);

double brute_recall(const std::vector<double>& scores, const std::vector<int>& gold, int k);
double brute_ndcg(const std::vector<double>& scores, const std::vector<int>& gold, int k);
double brute_mrr(const std::vector<double>& scores, const std::vector<int>& gold, int k);

/// Corpus-pooled distinct n-gram ratio over space-separated lowercased words.
double brute_distinct(const std::vector<std::string>& responses, int n);

/// A tree node identified by its full root path: alternating entity and
/// relation ids, starting and ending with an entity.
using TreePath = std::vector<int>;

/// Every node of the depth-limited tree: at each node, all neighbours reached
/// through any triple (and its inverse when the graph has inverse edges) are
/// scored, those on the root path are dropped, the whole list is sorted by
/// (score desc, id asc) and the first `degree` kept.
std::set<TreePath> exhaustive_tree(const KnowledgeGraph& g, const Eigen::MatrixXd& emb,
                                   const Eigen::RowVectorXd& context, EntityId root, int depth, int degree);

/// sum_i sum_j softmax_j(q_i . k_j / sqrt(d_key)) v_j by explicit loops.
Eigen::RowVectorXd loop_asum(const Eigen::MatrixXd& x, const Eigen::MatrixXd& wq, const Eigen::MatrixXd& wk,
                             const Eigen::MatrixXd& wv, bool mean_scaling);

/// -sum over rows and columns of Y log R + (1 - Y) log(1 - R), clipped.
double loop_bce(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& labels);

/// Sum over positive pairs (i, j) of -log(exp(s_ij/tau) / sum_k exp(s_ik/tau)),
/// s the cosine (or raw dot) similarity of row i of `a` with row j of `b`.
double loop_info_nce(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& mask, double tau,
                     bool normalize);

/// One relational layer by per-edge accumulation:
/// h_v = act(x_v W_0 + sum over edges (v, r, u) of x_u W_r / c_v,r).
/// `edges` lists (receiver, relation, sender) and c_v,r counts the edges of
/// relation r received by v.
Eigen::MatrixXd loop_rgcn_layer(const Eigen::MatrixXd& x, const Eigen::MatrixXd& self_weight,
                                const std::vector<Eigen::MatrixXd>& weights,
                                const std::vector<std::array<int, 3>>& edges, bool relu);

}  // namespace kgcrs::checks
