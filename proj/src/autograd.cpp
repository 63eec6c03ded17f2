#include "kgcrs/autograd.hpp"

#include "kgcrs/error.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

namespace kgcrs::ag {

void Node::accumulate(const Matrix& g) {
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

double Var::scalar() const {
    if (rows() != 1 || cols() != 1) throw Error("scalar() on a non 1x1 value");
    return value()(0, 0);
}

namespace {

void check(bool ok, const char* op, const std::string& msg) {
    if (!ok) throw Error(std::string(op) + ": " + msg);
}

std::string shape(const Var& v) {
    return std::to_string(v.rows()) + "x" + std::to_string(v.cols());
}

void same_shape(const Var& a, const Var& b, const char* op) {
    check(a.rows() == b.rows() && a.cols() == b.cols(), op,
          "shape mismatch " + shape(a) + " vs " + shape(b));
}

// Builds a result node. Parents and the backward closure are recorded only
// when at least one parent participates in differentiation.
Var make(Matrix value, std::initializer_list<Var> parents, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
        node->requires_grad = true;
        for (const auto& p : parents) node->parents.push_back(p.node());
        node->backward = std::move(fn);
    }
    return Var(std::move(node));
}

Var make_n(Matrix value, std::span<const Var> parents, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
        node->requires_grad = true;
        for (const auto& p : parents) node->parents.push_back(p.node());
        node->backward = std::move(fn);
    }
    return Var(std::move(node));
}

inline void push(Node* p, const Matrix& g) {
    if (p->requires_grad) p->accumulate(g);
}

}  // namespace

void backward(const Var& loss) {
    check(loss.rows() == 1 && loss.cols() == 1, "backward", "loss must be 1x1");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() != 0) n->backward(*n);
    }
}

Var matmul(const Var& a, const Var& b) {
    check(a.cols() == b.rows(), "matmul", shape(a) + " * " + shape(b));
    Matrix out;
    out.noalias() = a.value() * b.value();
    return make(std::move(out), {a, b}, [](Node& self) {
        Node* pa = self.parents[0].get();
        Node* pb = self.parents[1].get();
        if (pa->requires_grad) pa->accumulate(self.grad * pb->value.transpose());
        if (pb->requires_grad) pb->accumulate(pa->value.transpose() * self.grad);
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    check(a.cols() == b.cols(), "matmul_nt", shape(a) + " * " + shape(b) + "^T");
    Matrix out;
    out.noalias() = a.value() * b.value().transpose();
    return make(std::move(out), {a, b}, [](Node& self) {
        Node* pa = self.parents[0].get();
        Node* pb = self.parents[1].get();
        if (pa->requires_grad) pa->accumulate(self.grad * pb->value);
        if (pb->requires_grad) pb->accumulate(self.grad.transpose() * pa->value);
    });
}

Var transpose(const Var& a) {
    return make(a.value().transpose(), {a}, [](Node& self) {
        push(self.parents[0].get(), self.grad.transpose());
    });
}

Var spmm(const SparseMatrix& s, const Var& a) {
    check(s.cols() == a.rows(), "spmm", "sparse cols != rows " + shape(a));
    Matrix out = s * a.value();
    return make(std::move(out), {a}, [s](Node& self) {
        push(self.parents[0].get(), Matrix(s.transpose() * self.grad));
    });
}

Var add(const Var& a, const Var& b) {
    same_shape(a, b, "add");
    return make(a.value() + b.value(), {a, b}, [](Node& self) {
        push(self.parents[0].get(), self.grad);
        push(self.parents[1].get(), self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    same_shape(a, b, "sub");
    return make(a.value() - b.value(), {a, b}, [](Node& self) {
        push(self.parents[0].get(), self.grad);
        push(self.parents[1].get(), -self.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    same_shape(a, b, "mul");
    return make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
        Node* pa = self.parents[0].get();
        Node* pb = self.parents[1].get();
        if (pa->requires_grad) pa->accumulate(self.grad.cwiseProduct(pb->value));
        if (pb->requires_grad) pb->accumulate(self.grad.cwiseProduct(pa->value));
    });
}

Var scale(const Var& a, double s) {
    return make(a.value() * s, {a}, [s](Node& self) {
        push(self.parents[0].get(), self.grad * s);
    });
}

Var scale_by(const Var& s, const Var& a) {
    check(s.rows() == 1 && s.cols() == 1, "scale_by", "scale must be 1x1");
    return make(a.value() * s.value()(0, 0), {s, a}, [](Node& self) {
        Node* ps = self.parents[0].get();
        Node* pa = self.parents[1].get();
        if (ps->requires_grad) {
            ps->accumulate(Matrix::Constant(1, 1, self.grad.cwiseProduct(pa->value).sum()));
        }
        if (pa->requires_grad) pa->accumulate(self.grad * ps->value(0, 0));
    });
}

Var add_row(const Var& a, const Var& row) {
    check(row.rows() == 1 && row.cols() == a.cols(), "add_row",
          "row " + shape(row) + " vs " + shape(a));
    Matrix out = a.value().rowwise() + row.value().row(0);
    return make(std::move(out), {a, row}, [](Node& self) {
        push(self.parents[0].get(), self.grad);
        push(self.parents[1].get(), self.grad.colwise().sum());
    });
}

Var add_const(const Var& a, const Matrix& c) {
    check(a.rows() == c.rows() && a.cols() == c.cols(), "add_const", "shape mismatch");
    return make(a.value() + c, {a}, [](Node& self) { push(self.parents[0].get(), self.grad); });
}

Var mul_const(const Var& a, const Matrix& c) {
    check(a.rows() == c.rows() && a.cols() == c.cols(), "mul_const", "shape mismatch");
    return make(a.value().cwiseProduct(c), {a}, [c](Node& self) {
        push(self.parents[0].get(), self.grad.cwiseProduct(c));
    });
}

Var relu(const Var& a) {
    return make(a.value().cwiseMax(0.0), {a}, [](Node& self) {
        Node* p = self.parents[0].get();
        push(p, (p->value.array() > 0.0).cast<double>().matrix().cwiseProduct(self.grad));
    });
}

Var gelu(const Var& a) {
    static constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double c = 0.044715;
    const Matrix& x = a.value();
    Matrix inner = (k * (x.array() + c * x.array().cube())).matrix();
    Matrix t = inner.array().tanh().matrix();
    Matrix out = (0.5 * x.array() * (1.0 + t.array())).matrix();
    return make(std::move(out), {a}, [t = std::move(t)](Node& self) {
        Node* p = self.parents[0].get();
        const auto x = p->value.array();
        auto sech2 = 1.0 - t.array().square();
        auto d = 0.5 * (1.0 + t.array()) + 0.5 * x * sech2 * k * (1.0 + 3.0 * c * x.square());
        push(p, (d * self.grad.array()).matrix());
    });
}

Var tanh(const Var& a) {
    return make(a.value().array().tanh().matrix(), {a}, [](Node& self) {
        push(self.parents[0].get(),
             ((1.0 - self.value.array().square()) * self.grad.array()).matrix());
    });
}

Var exp(const Var& a) {
    return make(a.value().array().exp().matrix(), {a}, [](Node& self) {
        push(self.parents[0].get(), self.value.cwiseProduct(self.grad));
    });
}

Var log(const Var& a) {
    return make(a.value().array().log().matrix(), {a}, [](Node& self) {
        Node* p = self.parents[0].get();
        push(p, (self.grad.array() / p->value.array()).matrix());
    });
}

Var clamp(const Var& a, double lo, double hi) {
    return make(a.value().cwiseMax(lo).cwiseMin(hi), {a}, [lo, hi](Node& self) {
        Node* p = self.parents[0].get();
        auto inside = ((p->value.array() >= lo) && (p->value.array() <= hi)).cast<double>();
        push(p, (inside * self.grad.array()).matrix());
    });
}

Var softmax_rows(const Var& a) {
    Matrix out = a.value();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double m = out.row(r).maxCoeff();
        out.row(r) = (out.row(r).array() - m).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return make(std::move(out), {a}, [](Node& self) {
        const Matrix& y = self.value;
        Eigen::VectorXd dots = (self.grad.cwiseProduct(y)).rowwise().sum();
        Matrix g = y.cwiseProduct(self.grad.colwise() - dots);
        push(self.parents[0].get(), g);
    });
}

Var log_softmax_rows(const Var& a) {
    Matrix out = a.value();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double m = out.row(r).maxCoeff();
        const double lse = m + std::log((out.row(r).array() - m).exp().sum());
        out.row(r).array() -= lse;
    }
    return make(std::move(out), {a}, [](Node& self) {
        Matrix sm = self.value.array().exp().matrix();
        Eigen::VectorXd gs = self.grad.rowwise().sum();
        Matrix g = self.grad - sm.cwiseProduct(gs.replicate(1, sm.cols()));
        push(self.parents[0].get(), g);
    });
}

Var layer_norm(const Var& a, const Var& gamma, const Var& beta, double eps) {
    check(gamma.rows() == 1 && gamma.cols() == a.cols() && beta.rows() == 1 &&
              beta.cols() == a.cols(),
          "layer_norm", "gamma/beta must be 1x" + std::to_string(a.cols()));
    const Matrix& x = a.value();
    const auto d = static_cast<double>(x.cols());
    Eigen::VectorXd mean = x.rowwise().mean();
    Matrix xc = x.colwise() - mean;
    Eigen::VectorXd inv_std =
        ((xc.array().square().rowwise().sum() / d) + eps).rsqrt().matrix();
    Matrix xhat = xc.array().colwise() * inv_std.array();
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
    out.rowwise() += beta.value().row(0);
    return make(std::move(out), {a, gamma, beta},
                [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                    Node* pa = self.parents[0].get();
                    Node* pg = self.parents[1].get();
                    Node* pb = self.parents[2].get();
                    if (pg->requires_grad) pg->accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
                    if (pb->requires_grad) pb->accumulate(self.grad.colwise().sum());
                    if (pa->requires_grad) {
                        Matrix gx = self.grad.array().rowwise() * pg->value.row(0).array();
                        Eigen::VectorXd m1 = gx.rowwise().mean();
                        Eigen::VectorXd m2 = gx.cwiseProduct(xhat).rowwise().mean();
                        Matrix g = (gx.colwise() - m1) - xhat.cwiseProduct(m2.replicate(1, xhat.cols()));
                        g = g.array().colwise() * inv_std.array();
                        pa->accumulate(g);
                    }
                });
}

Var l2_normalize_rows(const Var& a, double eps) {
    Eigen::VectorXd norms = a.value().rowwise().norm();
    Eigen::VectorXd inv = (norms.array().max(eps)).inverse().matrix();
    Matrix out = a.value().array().colwise() * inv.array();
    return make(std::move(out), {a}, [inv = std::move(inv), norms = std::move(norms), eps](Node& self) {
        const Matrix& y = self.value;
        Eigen::VectorXd dots = self.grad.cwiseProduct(y).rowwise().sum();
        Matrix g(y.rows(), y.cols());
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            if (norms(r) > eps) {
                g.row(r) = (self.grad.row(r) - dots(r) * y.row(r)) * inv(r);
            } else {
                g.row(r) = self.grad.row(r) * inv(r);
            }
        }
        push(self.parents[0].get(), g);
    });
}

Var sum(const Var& a) {
    return make(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
        Node* p = self.parents[0].get();
        push(p, Matrix::Constant(p->value.rows(), p->value.cols(), self.grad(0, 0)));
    });
}

Var sum_rows(const Var& a) {
    return make(a.value().colwise().sum(), {a}, [](Node& self) {
        Node* p = self.parents[0].get();
        push(p, self.grad.replicate(p->value.rows(), 1));
    });
}

Var mean_rows(const Var& a) {
    check(a.rows() > 0, "mean_rows", "empty input");
    const double n = static_cast<double>(a.rows());
    return make(a.value().colwise().mean(), {a}, [n](Node& self) {
        Node* p = self.parents[0].get();
        push(p, self.grad.replicate(p->value.rows(), 1) / n);
    });
}

Var max_rows(const Var& a) {
    check(a.rows() > 0, "max_rows", "empty input");
    const Matrix& x = a.value();
    Matrix out(1, x.cols());
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        Eigen::Index r = 0;
        out(0, c) = x.col(c).maxCoeff(&r);
        arg[static_cast<std::size_t>(c)] = r;
    }
    return make(std::move(out), {a}, [arg = std::move(arg)](Node& self) {
        Node* p = self.parents[0].get();
        Matrix g = Matrix::Zero(p->value.rows(), p->value.cols());
        for (Eigen::Index c = 0; c < g.cols(); ++c) g(arg[static_cast<std::size_t>(c)], c) = self.grad(0, c);
        push(p, g);
    });
}

Var weighted_sum(const Var& a, const Matrix& w) {
    check(a.rows() == w.rows() && a.cols() == w.cols(), "weighted_sum", "shape mismatch");
    return make(Matrix::Constant(1, 1, a.value().cwiseProduct(w).sum()), {a}, [w](Node& self) {
        push(self.parents[0].get(), w * self.grad(0, 0));
    });
}

Var concat_rows(std::span<const Var> parts) {
    check(!parts.empty(), "concat_rows", "no inputs");
    const Eigen::Index cols = parts.front().cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        check(p.cols() == cols, "concat_rows", "column mismatch");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::vector<Eigen::Index> offsets;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        offsets.push_back(at);
        if (p.rows() > 0) out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    return make_n(std::move(out), parts, [offsets = std::move(offsets)](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            Node* p = self.parents[i].get();
            if (p->requires_grad && p->value.rows() > 0) {
                p->accumulate(self.grad.middleRows(offsets[i], p->value.rows()));
            }
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    check(!parts.empty(), "concat_cols", "no inputs");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        check(p.rows() == rows, "concat_cols", "row mismatch");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::vector<Eigen::Index> offsets;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        offsets.push_back(at);
        if (p.cols() > 0) out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return make_n(std::move(out), parts, [offsets = std::move(offsets)](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            Node* p = self.parents[i].get();
            if (p->requires_grad && p->value.cols() > 0) {
                p->accumulate(self.grad.middleCols(offsets[i], p->value.cols()));
            }
        }
    });
}

Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count) {
    check(begin >= 0 && count >= 0 && begin + count <= a.rows(), "slice_rows", "out of range");
    return make(a.value().middleRows(begin, count), {a}, [begin, count](Node& self) {
        Node* p = self.parents[0].get();
        Matrix g = Matrix::Zero(p->value.rows(), p->value.cols());
        g.middleRows(begin, count) = self.grad;
        push(p, g);
    });
}

Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count) {
    check(begin >= 0 && count >= 0 && begin + count <= a.cols(), "slice_cols", "out of range");
    return make(a.value().middleCols(begin, count), {a}, [begin, count](Node& self) {
        Node* p = self.parents[0].get();
        Matrix g = Matrix::Zero(p->value.rows(), p->value.cols());
        g.middleCols(begin, count) = self.grad;
        push(p, g);
    });
}

Var gather_rows(const Var& a, std::span<const int> ids) {
    Matrix out(static_cast<Eigen::Index>(ids.size()), a.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        check(ids[i] >= 0 && ids[i] < a.rows(), "gather_rows",
              "row id " + std::to_string(ids[i]) + " out of range for " + shape(a));
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(ids[i]);
    }
    std::vector<int> idx(ids.begin(), ids.end());
    return make(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        Matrix g = Matrix::Zero(p->value.rows(), p->value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
        p->accumulate(g);
    });
}

Var element(const Var& a, Eigen::Index r, Eigen::Index c) {
    check(r >= 0 && r < a.rows() && c >= 0 && c < a.cols(), "element", "out of range");
    return make(Matrix::Constant(1, 1, a.value()(r, c)), {a}, [r, c](Node& self) {
        Node* p = self.parents[0].get();
        Matrix g = Matrix::Zero(p->value.rows(), p->value.cols());
        g(r, c) = self.grad(0, 0);
        push(p, g);
    });
}

}  // namespace kgcrs::ag
