// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
//
// Reverse-mode automatic differentiation over dense matrices.
// Graphs are built define-by-run; sequence data is laid out feature x time
// (one column per step). All math runs in double precision so that
// finite-difference gradient checks are meaningful.
#pragma once

#include "saasr/common.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace saasr::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Mat value;
    Mat grad;  // allocated lazily by ensure_grad()
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;  // reads self.grad, accumulates into parents

    void ensure_grad() {
        if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    }
};

// Lightweight handle; copyable, shares the node.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    const Mat& value() const { return node_->value; }
    Mat& value_mut() { return node_->value; }
    const Mat& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool valid() const { return static_cast<bool>(node_); }
    NodePtr node() const { return node_; }

    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }

    // mutates shared node state; the handle itself stays const
    void zero_grad() const {
        if (node_) node_->grad.setZero();
    }

private:
    NodePtr node_;
};

// When grad mode is off (inference), ops compute values only and record no tape.
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

Var constant(Mat value);
Var leaf(Mat value);  // requires_grad = true

// Runs backward from a scalar (1x1) loss, accumulating into .grad of leaves.
void backward(const Var& loss);

// ---- elementwise / structural ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cmul(const Var& a, const Var& b);  // coefficient-wise product
Var scale(const Var& a, Real s);
Var add_colvec(const Var& a, const Var& v);  // v: (rows x 1) added to every column
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var slice_cols(const Var& a, int start, int n);
Var slice_rows(const Var& a, int start, int n);
Var concat_cols(const std::vector<Var>& xs);
Var concat_rows(const std::vector<Var>& xs);
Var repeat_rows(const Var& row, int n);  // (1 x k) -> (n x k)

// ---- nonlinearities ----
Var tanh_(const Var& a);
Var sigmoid(const Var& a);
Var silu(const Var& a);
Var log_(const Var& a);
Var glu_rows(const Var& a);  // (2d x T) -> (d x T): top half gated by sigmoid of bottom half

// ---- normalization / reductions ----
Var softmax_rows(const Var& a);            // each row sums to 1
Var layer_norm_cols(const Var& x, const Var& gamma, const Var& beta, Real eps = 1e-5);
Var normalize_cols(const Var& a);          // L2 per column; throws DataError on zero norm
Var mean_all(const Var& a);
Var sum_all(const Var& a);

// ---- indexed ----
// table: (f x V); ids are 0-based column indices into the table.
Var embedding(const Var& table, const std::vector<int>& ids);
// picks beta[n, targets[n]] as a (1 x n) row (used for diagnostics).
Var gather_rowwise(const Var& a, const std::vector<int>& targets);

// ---- convolution ----
// x: (f_in x T). Expands k-wide windows (stride, symmetric zero pad) into
// a (f_in*k x T_out) matrix; convolution is then a plain matmul.
Var im2col(const Var& x, int kernel, int stride, int pad);
// depthwise along time, same-length output (odd kernel, zero pad).
Var depthwise_conv1d(const Var& x, const Var& kernel);  // kernel: (f x k)

// ---- losses ----
// logits: (C x T), targets: 0-based class per column. Mean over columns.
Var cross_entropy_cols(const Var& logits, const std::vector<int>& targets,
                       Real label_smoothing = 0.0);
// scores: (n x K), targets: 0-based class per row, weights: per-row mask/weight.
// Weighted mean of -log softmax(row)[target].
Var cross_entropy_rows(const Var& scores, const std::vector<int>& targets,
                       const std::vector<Real>& weights);
// CTC negative log-likelihood. logits: (C x T) with blank_row the blank class;
// target holds 0-based non-blank rows. Throws DataError if the target cannot
// be aligned within T frames.
Var ctc_loss(const Var& logits, const std::vector<int>& target, int blank_row);

// CTC feasibility: minimum frames needed for a target (repeats need a blank).
int ctc_min_frames(const std::vector<int>& target);

}  // namespace saasr::ag
