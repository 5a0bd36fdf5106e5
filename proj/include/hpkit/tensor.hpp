// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense f64 tensor with tape-based reverse-mode differentiation.
// The op set is fixed and small; every differentiable op registers a backward
// rule on the tape of its inputs. No broadcasting beyond the explicit
// *_broadcast ops, so each backward rule stays auditable.

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "hpkit/errors.hpp"
#include "hpkit/util.hpp"

namespace hpkit {

class Tape;

struct TensorData {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until touched by backward
    Tape* tape = nullptr;
    std::int64_t produced_by = -1;  // node index on tape, -1 for leaves
    std::uint64_t tape_generation = 0;
};

class Tensor {
public:
    Tensor() : d_(std::make_shared<TensorData>()) {}

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);
    static Tensor scalar(double value) { return from({1}, {value}); }

    // Learnable leaf recorded against a tape. Gradients accumulate here.
    static Tensor param(std::vector<std::size_t> shape, std::vector<double> values, Tape& tape);

    const std::vector<std::size_t>& shape() const { return d_->shape; }
    std::size_t rank() const { return d_->shape.size(); }
    std::size_t numel() const { return d_->data.size(); }
    std::size_t dim(std::size_t i) const { return d_->shape.at(i); }

    const std::vector<double>& data() const { return d_->data; }
    // Leaf mutation hook for optimizers and finite-difference probes. Op
    // outputs are never written through this path.
    std::vector<double>& mutable_data() { return d_->data; }

    bool requires_grad() const { return d_->requires_grad; }
    bool has_grad() const { return !d_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad();

    double value() const;                                // numel-1 tensors
    double at(std::initializer_list<std::size_t> idx) const;

    Tape* tape() const { return d_->tape; }
    std::shared_ptr<TensorData> ptr() const { return d_; }

private:
    explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
    std::shared_ptr<TensorData> d_;

    friend class Tape;
    friend Tensor make_op_output(std::vector<std::size_t>, const std::vector<Tensor>&,
                                 const char*);
};

class Tape {
public:
    struct Node {
        std::vector<std::shared_ptr<TensorData>> inputs;
        std::shared_ptr<TensorData> output;
        std::function<void(Node&)> backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Drops all recorded nodes and re-arms backward(). Outputs of earlier
    // nodes become detached constants.
    void reset();

    std::size_t size() const { return nodes_.size(); }
    bool backward_done() const { return backward_done_; }
    std::uint64_t generation() const { return generation_; }

private:
    std::vector<Node> nodes_;
    bool backward_done_ = false;
    std::uint64_t generation_ = 1;

    friend Tensor make_op_output(std::vector<std::size_t>, const std::vector<Tensor>&,
                                 const char*);
    friend void record(Tensor&, std::vector<Tensor>, std::function<void(Node&)>);
    friend void backward(const Tensor&);
};

// ---- ops --------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor layer_norm(const Tensor& a, double eps = 1e-5);
Tensor silu(const Tensor& a);

// x: [C,H,W], kernel: [C',C,k,k] with odd k and padding == (k-1)/2.
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t padding);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// a: [m,n], v: [n]. Row-wise bias-style broadcast.
Tensor add_row_broadcast(const Tensor& a, const Tensor& v);
Tensor mul_row_broadcast(const Tensor& a, const Tensor& v);
// x: [C,H,W], b: [C]. Per-channel bias.
Tensor add_chan_broadcast(const Tensor& x, const Tensor& b);

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

// table: [d,h] -> row `index` as [h]. Gradient flows only into that row.
Tensor embedding_row(const Tensor& table, std::size_t index);

// [t,C] tokens (row-major over a H x W grid) <-> [C,H,W] image layout.
Tensor tokens_to_grid(const Tensor& tokens, std::size_t h, std::size_t w);
Tensor grid_to_tokens(const Tensor& grid);

// ---- autodiff driver ----------------------------------------------------

// Reverse pass from a scalar loss. Errors on non-scalar loss, detached
// graphs, and repeated calls without Tape::reset().
void backward(const Tensor& loss);

// Scales gradients so the global L2 norm is at most max_norm. Returns the
// applied factor (1.0 when already within bounds).
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

void zero_grads(const std::vector<Tensor>& params);

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace hpkit
