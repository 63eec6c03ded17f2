// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// Every value is a 2-D Eigen matrix; sequences are stored one item per row and
// vectors are 1 x d rows. A Var is a cheap shared handle to a graph node. Nodes
// that do not require gradients record no parents, so frozen sub-networks cost
// nothing on the backward pass.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace kgcrs::ag {

using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node& self)> backward;

    void accumulate(const Matrix& g);
};

class Var {
public:
    Var() = default;
    explicit Var(Matrix value, bool requires_grad = false);
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() != 0; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    void zero_grad() { node_->grad.resize(0, 0); }

    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double scalar() const;

    const std::shared_ptr<Node>& node() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

inline Var constant(Matrix m) { return Var(std::move(m), false); }

/// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node that
/// requires a gradient. `loss` must be 1 x 1.
void backward(const Var& loss);

// Linear algebra.
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);
Var spmm(const SparseMatrix& s, const Var& a);  // constant sparse * a

// Elementwise arithmetic; shapes must match exactly unless noted.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var scale_by(const Var& s, const Var& a);  // s is 1 x 1
Var add_row(const Var& a, const Var& row);  // broadcasts a 1 x d row over every row of a
Var add_const(const Var& a, const Matrix& c);
Var mul_const(const Var& a, const Matrix& c);

// Nonlinearities.
Var relu(const Var& a);
Var gelu(const Var& a);  // tanh approximation
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var clamp(const Var& a, double lo, double hi);

// Row-wise normalisers.
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var layer_norm(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);
Var l2_normalize_rows(const Var& a, double eps = 1e-12);

// Reductions.
Var sum(const Var& a);        // 1 x 1
Var sum_rows(const Var& a);   // 1 x cols, sums over rows
Var mean_rows(const Var& a);  // 1 x cols
Var max_rows(const Var& a);   // 1 x cols, gradient to the first maximiser
Var weighted_sum(const Var& a, const Matrix& w);  // sum(a .* w), 1 x 1

// Shape manipulation.
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count);
Var gather_rows(const Var& a, std::span<const int> ids);
Var element(const Var& a, Eigen::Index r, Eigen::Index c);

}  // namespace kgcrs::ag
