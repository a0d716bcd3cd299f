// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0

#include "saasr/graph.hpp"

#include <algorithm>
#include <limits>
#include <unordered_set>

namespace saasr::ag {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Var constant(Mat value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = false;
    return Var(n);
}

Var leaf(Mat value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(n);
}

namespace {

// Builds a result node. The backward closure is only attached when grad mode
// is on and at least one parent participates in differentiation.
Var make_op(Mat value, std::initializer_list<Var> parents,
            std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& p : parents) any = any || p.requires_grad();
        if (any) {
            n->requires_grad = true;
            n->parents.reserve(parents.size());
            for (const auto& p : parents) n->parents.push_back(p.node());
            n->backward_fn = std::move(backward_fn);
        }
    }
    return Var(n);
}

Var make_op(Mat value, const std::vector<Var>& parents,
            std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& p : parents) any = any || p.requires_grad();
        if (any) {
            n->requires_grad = true;
            n->parents.reserve(parents.size());
            for (const auto& p : parents) n->parents.push_back(p.node());
            n->backward_fn = std::move(backward_fn);
        }
    }
    return Var(n);
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DataError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
}

}  // namespace

void backward(const Var& loss) {
    if (loss.rows() != 1 || loss.cols() != 1)
        throw DataError("backward: loss must be a 1x1 scalar");
    if (!loss.requires_grad()) return;

    // Iterative post-order topological sort.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise / structural
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return make_op(a.value() + b.value(), {a, b}, [](Node& n) {
        for (auto& p : n.parents) {
            if (!p->requires_grad) continue;
            p->ensure_grad();
            p->grad += n.grad;
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return make_op(a.value() - b.value(), {a, b}, [](Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            pa->grad += n.grad;
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            pb->grad -= n.grad;
        }
    });
}

Var cmul(const Var& a, const Var& b) {
    check_same_shape(a, b, "cmul");
    return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            pa->grad += n.grad.cwiseProduct(pb->value);
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            pb->grad += n.grad.cwiseProduct(pa->value);
        }
    });
}

Var scale(const Var& a, Real s) {
    return make_op(a.value() * s, {a}, [s](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        p->grad += n.grad * s;
    });
}

Var add_colvec(const Var& a, const Var& v) {
    if (v.cols() != 1 || v.rows() != a.rows())
        throw DataError("add_colvec: bias must be (rows x 1)");
    return make_op(a.value().colwise() + Eigen::VectorXd(v.value().col(0)), {a, v}, [](Node& n) {
        auto& pa = n.parents[0];
        auto& pv = n.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            pa->grad += n.grad;
        }
        if (pv->requires_grad) {
            pv->ensure_grad();
            pv->grad.col(0) += n.grad.rowwise().sum();
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows())
        throw DataError("matmul: inner dimension mismatch " + std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()));
    return make_op(a.value() * b.value(), {a, b}, [](Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            pa->grad.noalias() += n.grad * pb->value.transpose();
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            pb->grad.noalias() += pa->value.transpose() * n.grad;
        }
    });
}

Var transpose(const Var& a) {
    return make_op(a.value().transpose(), {a}, [](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        p->grad += n.grad.transpose();
    });
}

Var slice_cols(const Var& a, int start, int n_cols) {
    if (start < 0 || n_cols < 0 || start + n_cols > a.cols())
        throw DataError("slice_cols: range out of bounds");
    return make_op(a.value().middleCols(start, n_cols), {a}, [start, n_cols](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        p->grad.middleCols(start, n_cols) += n.grad;
    });
}

Var slice_rows(const Var& a, int start, int n_rows) {
    if (start < 0 || n_rows < 0 || start + n_rows > a.rows())
        throw DataError("slice_rows: range out of bounds");
    return make_op(a.value().middleRows(start, n_rows), {a}, [start, n_rows](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        p->grad.middleRows(start, n_rows) += n.grad;
    });
}

Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw DataError("concat_cols: empty input");
    Eigen::Index rows = xs[0].rows(), total = 0;
    for (const auto& x : xs) {
        if (x.rows() != rows) throw DataError("concat_cols: row mismatch");
        total += x.cols();
    }
    Mat out(rows, total);
    Eigen::Index off = 0;
    for (const auto& x : xs) {
        out.middleCols(off, x.cols()) = x.value();
        off += x.cols();
    }
    return make_op(std::move(out), xs, [](Node& n) {
        Eigen::Index off = 0;
        for (auto& p : n.parents) {
            const Eigen::Index w = p->value.cols();
            if (p->requires_grad) {
                p->ensure_grad();
                p->grad += n.grad.middleCols(off, w);
            }
            off += w;
        }
    });
}

Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw DataError("concat_rows: empty input");
    Eigen::Index cols = xs[0].cols(), total = 0;
    for (const auto& x : xs) {
        if (x.cols() != cols) throw DataError("concat_rows: col mismatch");
        total += x.rows();
    }
    Mat out(total, cols);
    Eigen::Index off = 0;
    for (const auto& x : xs) {
        out.middleRows(off, x.rows()) = x.value();
        off += x.rows();
    }
    return make_op(std::move(out), xs, [](Node& n) {
        Eigen::Index off = 0;
        for (auto& p : n.parents) {
            const Eigen::Index h = p->value.rows();
            if (p->requires_grad) {
                p->ensure_grad();
                p->grad += n.grad.middleRows(off, h);
            }
            off += h;
        }
    });
}

Var repeat_rows(const Var& row, int n) {
    if (row.rows() != 1) throw DataError("repeat_rows: input must be a single row");
    Mat out = row.value().replicate(n, 1);
    return make_op(std::move(out), {row}, [](Node& n_) {
        auto& p = n_.parents[0];
        p->ensure_grad();
        p->grad.row(0) += n_.grad.colwise().sum();
    });
}

// ---------------------------------------------------------------------------
// nonlinearities
// ---------------------------------------------------------------------------

Var tanh_(const Var& a) {
    Mat y = a.value().array().tanh();
    return make_op(y, {a}, [y](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        p->grad.array() += n.grad.array() * (1.0 - y.array().square());
    });
}

Var sigmoid(const Var& a) {
    Mat y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    return make_op(y, {a}, [y](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        p->grad.array() += n.grad.array() * y.array() * (1.0 - y.array());
    });
}

Var silu(const Var& a) {
    Mat s = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    Mat y = a.value().cwiseProduct(s);
    Mat x = a.value();
    return make_op(y, {a}, [s, x](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        // d/dx x*sigma(x) = sigma(x) (1 + x (1 - sigma(x)))
        p->grad.array() +=
            n.grad.array() * s.array() * (1.0 + x.array() * (1.0 - s.array()));
    });
}

Var log_(const Var& a) {
    Mat x = a.value();
    if ((x.array() <= 0.0).any()) throw DataError("log: non-positive input");
    return make_op(x.array().log().matrix(), {a}, [x](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        p->grad.array() += n.grad.array() / x.array();
    });
}

Var glu_rows(const Var& a) {
    const int d = static_cast<int>(a.rows()) / 2;
    if (a.rows() != 2 * d) throw DataError("glu_rows: row count must be even");
    Mat top = a.value().topRows(d);
    Mat gate = (1.0 / (1.0 + (-a.value().bottomRows(d).array()).exp())).matrix();
    Mat y = top.cwiseProduct(gate);
    return make_op(y, {a}, [d, top, gate](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        p->grad.topRows(d).array() += n.grad.array() * gate.array();
        p->grad.bottomRows(d).array() +=
            n.grad.array() * top.array() * gate.array() * (1.0 - gate.array());
    });
}

// ---------------------------------------------------------------------------
// normalization / reductions
// ---------------------------------------------------------------------------

Var softmax_rows(const Var& a) {
    Mat y = a.value();
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const Real m = y.row(i).maxCoeff();
        y.row(i) = (y.row(i).array() - m).exp();
        y.row(i) /= y.row(i).sum();
    }
    return make_op(y, {a}, [y](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
            const Real dot = n.grad.row(i).dot(y.row(i));
            p->grad.row(i).array() += y.row(i).array() * (n.grad.row(i).array() - dot);
        }
    });
}

Var layer_norm_cols(const Var& x, const Var& gamma, const Var& beta, Real eps) {
    const Eigen::Index d = x.rows(), T = x.cols();
    if (gamma.rows() != d || gamma.cols() != 1 || beta.rows() != d || beta.cols() != 1)
        throw DataError("layer_norm_cols: gamma/beta must be (rows x 1)");
    Mat xhat(d, T);
    Vec inv_std(T);
    for (Eigen::Index j = 0; j < T; ++j) {
        const Real mu = x.value().col(j).mean();
        Vec c = x.value().col(j).array() - mu;
        const Real var = c.squaredNorm() / static_cast<Real>(d);
        inv_std(j) = 1.0 / std::sqrt(var + eps);
        xhat.col(j) = c * inv_std(j);
    }
    Mat y = (xhat.array().colwise() * gamma.value().col(0).array()).colwise() +
            beta.value().col(0).array();
    return make_op(std::move(y), {x, gamma, beta}, [xhat, inv_std, d](Node& n) {
        auto& px = n.parents[0];
        auto& pg = n.parents[1];
        auto& pb = n.parents[2];
        if (pg->requires_grad) {
            pg->ensure_grad();
            pg->grad.col(0) += n.grad.cwiseProduct(xhat).rowwise().sum();
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            pb->grad.col(0) += n.grad.rowwise().sum();
        }
        if (px->requires_grad) {
            px->ensure_grad();
            const Vec g = pg->value.col(0);
            for (Eigen::Index j = 0; j < n.grad.cols(); ++j) {
                Vec dy = n.grad.col(j).cwiseProduct(g);
                const Real m1 = dy.mean();
                const Real m2 = dy.dot(xhat.col(j)) / static_cast<Real>(d);
                px->grad.col(j) +=
                    inv_std(j) * (dy.array() - m1 - xhat.col(j).array() * m2).matrix();
            }
        }
    });
}

Var normalize_cols(const Var& a) {
    const Eigen::Index T = a.cols();
    Mat y(a.rows(), T);
    Vec inv_norm(T);
    for (Eigen::Index j = 0; j < T; ++j) {
        const Real nrm = a.value().col(j).norm();
        if (nrm < 1e-12) throw DataError("normalize_cols: zero-norm column " + std::to_string(j));
        inv_norm(j) = 1.0 / nrm;
        y.col(j) = a.value().col(j) * inv_norm(j);
    }
    return make_op(y, {a}, [y, inv_norm](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (Eigen::Index j = 0; j < y.cols(); ++j) {
            const Real dot = n.grad.col(j).dot(y.col(j));
            p->grad.col(j) += inv_norm(j) * (n.grad.col(j) - dot * y.col(j));
        }
    });
}

Var mean_all(const Var& a) {
    const Real inv = 1.0 / static_cast<Real>(a.rows() * a.cols());
    Mat y(1, 1);
    y(0, 0) = a.value().sum() * inv;
    return make_op(std::move(y), {a}, [inv](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        p->grad.array() += n.grad(0, 0) * inv;
    });
}

Var sum_all(const Var& a) {
    Mat y(1, 1);
    y(0, 0) = a.value().sum();
    return make_op(std::move(y), {a}, [](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        p->grad.array() += n.grad(0, 0);
    });
}

// ---------------------------------------------------------------------------
// indexed
// ---------------------------------------------------------------------------

Var embedding(const Var& table, const std::vector<int>& ids) {
    const int V = static_cast<int>(table.cols());
    Mat out(table.rows(), static_cast<Eigen::Index>(ids.size()));
    for (size_t j = 0; j < ids.size(); ++j) {
        if (ids[j] < 0 || ids[j] >= V)
            throw DataError("embedding: id " + std::to_string(ids[j]) + " outside table of " +
                            std::to_string(V));
        out.col(static_cast<Eigen::Index>(j)) = table.value().col(ids[j]);
    }
    return make_op(std::move(out), {table}, [ids](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (size_t j = 0; j < ids.size(); ++j)
            p->grad.col(ids[j]) += n.grad.col(static_cast<Eigen::Index>(j));
    });
}

Var gather_rowwise(const Var& a, const std::vector<int>& targets) {
    if (static_cast<Eigen::Index>(targets.size()) != a.rows())
        throw DataError("gather_rowwise: one target per row required");
    Mat out(1, a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        if (targets[i] < 0 || targets[i] >= a.cols())
            throw DataError("gather_rowwise: target out of range");
        out(0, i) = a.value()(i, targets[i]);
    }
    return make_op(std::move(out), {a}, [targets](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (size_t i = 0; i < targets.size(); ++i)
            p->grad(static_cast<Eigen::Index>(i), targets[i]) +=
                n.grad(0, static_cast<Eigen::Index>(i));
    });
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

Var im2col(const Var& x, int kernel, int stride, int pad) {
    const int f = static_cast<int>(x.rows());
    const int T = static_cast<int>(x.cols());
    if (kernel < 1 || stride < 1) throw DataError("im2col: bad kernel/stride");
    const int T_out = (T + 2 * pad - kernel) / stride + 1;
    if (T_out < 1) throw DataError("im2col: input shorter than kernel");
    Mat out = Mat::Zero(static_cast<Eigen::Index>(f) * kernel, T_out);
    for (int j = 0; j < T_out; ++j) {
        const int t0 = j * stride - pad;
        for (int k = 0; k < kernel; ++k) {
            const int t = t0 + k;
            if (t >= 0 && t < T) out.block(k * f, j, f, 1) = x.value().col(t);
        }
    }
    return make_op(std::move(out), {x}, [f, kernel, stride, pad, T](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (int j = 0; j < n.grad.cols(); ++j) {
            const int t0 = j * stride - pad;
            for (int k = 0; k < kernel; ++k) {
                const int t = t0 + k;
                if (t >= 0 && t < T) p->grad.col(t) += n.grad.block(k * f, j, f, 1);
            }
        }
    });
}

Var depthwise_conv1d(const Var& x, const Var& kernel) {
    const int f = static_cast<int>(x.rows());
    const int T = static_cast<int>(x.cols());
    const int k = static_cast<int>(kernel.cols());
    if (kernel.rows() != f) throw DataError("depthwise_conv1d: kernel rows must match input");
    if (k % 2 == 0) throw DataError("depthwise_conv1d: kernel size must be odd");
    const int half = k / 2;
    Mat out = Mat::Zero(f, T);
    for (int j = 0; j < T; ++j)
        for (int c = 0; c < k; ++c) {
            const int t = j + c - half;
            if (t >= 0 && t < T)
                out.col(j).array() += kernel.value().col(c).array() * x.value().col(t).array();
        }
    return make_op(std::move(out), {x, kernel}, [f, T, k, half](Node& n) {
        auto& px = n.parents[0];
        auto& pk = n.parents[1];
        if (px->requires_grad) px->ensure_grad();
        if (pk->requires_grad) pk->ensure_grad();
        for (int j = 0; j < T; ++j)
            for (int c = 0; c < k; ++c) {
                const int t = j + c - half;
                if (t < 0 || t >= T) continue;
                if (px->requires_grad)
                    px->grad.col(t).array() += pk->value.col(c).array() * n.grad.col(j).array();
                if (pk->requires_grad)
                    pk->grad.col(c).array() += px->value.col(t).array() * n.grad.col(j).array();
            }
    });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Var cross_entropy_cols(const Var& logits, const std::vector<int>& targets, Real label_smoothing) {
    const Eigen::Index C = logits.rows(), T = logits.cols();
    if (static_cast<Eigen::Index>(targets.size()) != T)
        throw DataError("cross_entropy_cols: one target per column required");
    Mat probs(C, T);
    Real loss = 0.0;
    for (Eigen::Index j = 0; j < T; ++j) {
        const int t = targets[j];
        if (t < 0 || t >= C) throw DataError("cross_entropy_cols: target out of range");
        const Real m = logits.value().col(j).maxCoeff();
        Vec e = (logits.value().col(j).array() - m).exp();
        const Real Z = e.sum();
        probs.col(j) = e / Z;
        const Real log_z = std::log(Z) + m;
        const Real nll = log_z - logits.value()(t, j);
        if (label_smoothing > 0.0) {
            const Real uniform_nll =
                log_z - logits.value().col(j).mean();
            loss += (1.0 - label_smoothing) * nll + label_smoothing * uniform_nll;
        } else {
            loss += nll;
        }
    }
    loss /= static_cast<Real>(T);
    Mat y(1, 1);
    y(0, 0) = loss;
    const Real ls = label_smoothing;
    return make_op(std::move(y), {logits}, [probs, targets, ls](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        const Real g = n.grad(0, 0) / static_cast<Real>(probs.cols());
        const Real C = static_cast<Real>(probs.rows());
        for (Eigen::Index j = 0; j < probs.cols(); ++j) {
            p->grad.col(j) += g * probs.col(j);
            p->grad(targets[j], j) -= g * (1.0 - ls);
            if (ls > 0.0) p->grad.col(j).array() -= g * ls / C;
        }
    });
}

Var cross_entropy_rows(const Var& scores, const std::vector<int>& targets,
                       const std::vector<Real>& weights) {
    const Eigen::Index N = scores.rows(), K = scores.cols();
    if (static_cast<Eigen::Index>(targets.size()) != N ||
        static_cast<Eigen::Index>(weights.size()) != N)
        throw DataError("cross_entropy_rows: one target and weight per row required");
    Real wsum = 0.0;
    for (Real w : weights) wsum += w;
    if (wsum <= 0.0) throw DataError("cross_entropy_rows: all rows masked out");
    Mat probs(N, K);
    Real loss = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
        const int t = targets[i];
        if (t < 0 || t >= K) throw DataError("cross_entropy_rows: target out of range");
        const Real m = scores.value().row(i).maxCoeff();
        Eigen::RowVectorXd e = (scores.value().row(i).array() - m).exp();
        const Real Z = e.sum();
        probs.row(i) = e / Z;
        loss += weights[i] * (std::log(Z) + m - scores.value()(i, t));
    }
    loss /= wsum;
    Mat y(1, 1);
    y(0, 0) = loss;
    return make_op(std::move(y), {scores}, [probs, targets, weights, wsum](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        const Real g = n.grad(0, 0) / wsum;
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            if (weights[i] == 0.0) continue;
            p->grad.row(i) += g * weights[i] * probs.row(i);
            p->grad(i, targets[i]) -= g * weights[i];
        }
    });
}

int ctc_min_frames(const std::vector<int>& target) {
    int need = static_cast<int>(target.size());
    for (size_t i = 1; i < target.size(); ++i)
        if (target[i] == target[i - 1]) ++need;
    return need;
}

namespace {
inline Real log_add(Real a, Real b) {
    if (a == -std::numeric_limits<Real>::infinity()) return b;
    if (b == -std::numeric_limits<Real>::infinity()) return a;
    const Real m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}
}  // namespace

Var ctc_loss(const Var& logits, const std::vector<int>& target, int blank_row) {
    const int C = static_cast<int>(logits.rows());
    const int T = static_cast<int>(logits.cols());
    const int L = static_cast<int>(target.size());
    if (blank_row < 0 || blank_row >= C) throw DataError("ctc_loss: blank row out of range");
    for (int t : target)
        if (t < 0 || t >= C || t == blank_row)
            throw DataError("ctc_loss: target symbol out of range");
    if (T < ctc_min_frames(target))
        throw DataError("ctc_loss: target of length " + std::to_string(L) +
                        " cannot align to " + std::to_string(T) + " frames");

    constexpr Real NEG_INF = -std::numeric_limits<Real>::infinity();
    const int S = 2 * L + 1;
    // extended label sequence: blank, l1, blank, l2, ..., blank
    std::vector<int> lab(S);
    for (int s = 0; s < S; ++s) lab[s] = (s % 2 == 0) ? blank_row : target[s / 2];

    // column-wise log-softmax
    Mat lp(C, T);
    for (int j = 0; j < T; ++j) {
        const Real m = logits.value().col(j).maxCoeff();
        Vec e = (logits.value().col(j).array() - m).exp();
        lp.col(j) = (logits.value().col(j).array() - m - std::log(e.sum())).matrix();
    }

    // forward variables, emission at t included
    Mat alpha = Mat::Constant(S, T, NEG_INF);
    alpha(0, 0) = lp(blank_row, 0);
    if (S > 1) alpha(1, 0) = lp(lab[1], 0);
    for (int t = 1; t < T; ++t) {
        for (int s = 0; s < S; ++s) {
            Real a = alpha(s, t - 1);
            if (s >= 1) a = log_add(a, alpha(s - 1, t - 1));
            if (s >= 2 && lab[s] != blank_row && lab[s] != lab[s - 2])
                a = log_add(a, alpha(s - 2, t - 1));
            alpha(s, t) = (a == NEG_INF) ? NEG_INF : a + lp(lab[s], t);
        }
    }
    Real log_p = alpha(S - 1, T - 1);
    if (S > 1) log_p = log_add(log_p, alpha(S - 2, T - 1));
    if (!std::isfinite(log_p)) throw DataError("ctc_loss: no feasible alignment");

    Mat y(1, 1);
    y(0, 0) = -log_p;
    return make_op(std::move(y), {logits}, [lp, alpha, lab, blank_row, S, T, C, log_p](Node& n) {
        constexpr Real NI = -std::numeric_limits<Real>::infinity();
        // backward variables, emission at t included:
        // beta_t(s) = lp(lab[s], t) + logsum_{s' in succ(s)} beta_{t+1}(s')
        Mat beta = Mat::Constant(S, T, NI);
        beta(S - 1, T - 1) = lp(blank_row, T - 1);
        if (S > 1) beta(S - 2, T - 1) = lp(lab[S - 2], T - 1);
        for (int t = T - 2; t >= 0; --t) {
            for (int s = S - 1; s >= 0; --s) {
                Real b = beta(s, t + 1);
                if (s + 1 < S) b = log_add(b, beta(s + 1, t + 1));
                if (s + 2 < S && lab[s + 2] != blank_row && lab[s + 2] != lab[s])
                    b = log_add(b, beta(s + 2, t + 1));
                beta(s, t) = (b == NI) ? NI : b + lp(lab[s], t);
            }
        }
        // occupancy gamma_t(s) = alpha + beta - emission (counted twice);
        // d(-log p)/d logits = softmax - per-symbol posterior
        auto& p = n.parents[0];
        p->ensure_grad();
        const Real g = n.grad(0, 0);
        for (int t = 0; t < T; ++t) {
            Vec post = Vec::Constant(C, NI);
            for (int s = 0; s < S; ++s) {
                if (alpha(s, t) == NI || beta(s, t) == NI) continue;
                const Real occ = alpha(s, t) + beta(s, t) - lp(lab[s], t);
                post(lab[s]) = log_add(post(lab[s]), occ);
            }
            for (int c = 0; c < C; ++c) {
                const Real soft = std::exp(lp(c, t));
                const Real q = (post(c) == NI) ? 0.0 : std::exp(post(c) - log_p);
                p->grad(c, t) += g * (soft - q);
            }
        }
    });
}

}  // namespace saasr::ag
