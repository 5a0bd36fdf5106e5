// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "hpkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hpkit {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("tensor: zero-sized dimension in " + shape_str(shape));
        n *= d;
    }
    return n;
}

void ensure_grad_buffer(TensorData& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// ---- Tensor -------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    const std::size_t n = shape_numel(shape);
    Tensor t;
    t.d_->shape = std::move(shape);
    t.d_->data.assign(n, 0.0);
    return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    const std::size_t n = shape_numel(shape);
    Tensor t;
    t.d_->shape = std::move(shape);
    t.d_->data.assign(n, value);
    return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
    const std::size_t n = shape_numel(shape);
    if (n != values.size()) {
        throw DimensionError("tensor: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(shape));
    }
    Tensor t;
    t.d_->shape = std::move(shape);
    t.d_->data = std::move(values);
    return t;
}

Tensor Tensor::param(std::vector<std::size_t> shape, std::vector<double> values, Tape& tape) {
    Tensor t = from(std::move(shape), std::move(values));
    t.d_->requires_grad = true;
    t.d_->tape = &tape;
    t.d_->tape_generation = tape.generation();
    return t;
}

const std::vector<double>& Tensor::grad() const {
    if (d_->grad.empty()) throw TapeError("grad(): no gradient has been accumulated");
    return d_->grad;
}

void Tensor::zero_grad() {
    std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

double Tensor::value() const {
    if (numel() != 1) throw DimensionError("value(): tensor has shape " + shape_str(shape()));
    return d_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != rank()) {
        throw DimensionError("at(): " + std::to_string(idx.size()) +
                             " indices for rank " + std::to_string(rank()));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
        if (i >= d_->shape[axis]) throw IndexError("at(): index out of range");
        flat = flat * d_->shape[axis] + i;
        ++axis;
    }
    return d_->data[flat];
}

// ---- tape plumbing --------------------------------------------------------

void Tape::reset() {
    nodes_.clear();
    backward_done_ = false;
    ++generation_;
}

// Allocates the op output; decides whether the op must be recorded (any input
// requires grad). All grad-requiring inputs must live on one tape.
Tensor make_op_output(std::vector<std::size_t> shape, const std::vector<Tensor>& inputs,
                      const char* op) {
    Tensor out = Tensor::zeros(std::move(shape));
    Tape* tape = nullptr;
    bool needs_grad = false;
    for (const Tensor& in : inputs) {
        if (!in.requires_grad()) continue;
        needs_grad = true;
        if (in.tape() == nullptr) {
            throw TapeError(std::string(op) + ": input requires grad but has no tape");
        }
        if (in.ptr()->tape_generation != in.tape()->generation()) {
            // Parameter from before a reset is fine (leaves survive resets);
            // stale op outputs behave as constants.
            if (in.ptr()->produced_by >= 0) continue;
        }
        if (tape != nullptr && tape != in.tape()) {
            throw TapeError(std::string(op) + ": inputs live on different tapes");
        }
        tape = in.tape();
    }
    if (needs_grad && tape != nullptr) {
        out.d_->requires_grad = true;
        out.d_->tape = tape;
        out.d_->tape_generation = tape->generation();
    }
    return out;
}

void record(Tensor& out, std::vector<Tensor> inputs, std::function<void(Tape::Node&)> bw) {
    if (!out.requires_grad() || out.tape() == nullptr) return;
    Tape& tape = *out.tape();
    Tape::Node node;
    node.inputs.reserve(inputs.size());
    for (Tensor& in : inputs) node.inputs.push_back(in.ptr());
    node.output = out.ptr();
    node.backward = std::move(bw);
    out.ptr()->produced_by = static_cast<std::int64_t>(tape.nodes_.size());
    out.ptr()->tape_generation = tape.generation();
    tape.nodes_.push_back(std::move(node));
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw TapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    Tape* tape = loss.tape();
    if (tape == nullptr || loss.ptr()->produced_by < 0 ||
        loss.ptr()->tape_generation != tape->generation()) {
        throw TapeError("backward: loss is detached from the tape");
    }
    if (tape->backward_done_) {
        throw TapeError("backward: tape already backpropagated; call reset() first");
    }
    const std::int64_t start = loss.ptr()->produced_by;
    ensure_grad_buffer(*loss.ptr());
    loss.ptr()->grad[0] = 1.0;
    for (std::int64_t i = start; i >= 0; --i) {
        Tape::Node& node = tape->nodes_[static_cast<std::size_t>(i)];
        if (node.output->grad.empty()) continue;  // did not feed the loss
        for (auto& in : node.inputs) {
            if (in->requires_grad) ensure_grad_buffer(*in);
        }
        node.backward(node);
    }
    tape->backward_done_ = true;
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
    if (max_norm <= 0.0) throw ParameterError("clip_grad_norm: max_norm must be positive");
    double sq = 0.0;
    for (const Tensor& p : params) {
        if (!p.has_grad()) continue;
        for (double g : p.ptr()->grad) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return 1.0;
    const double factor = max_norm / norm;
    for (const Tensor& p : params) {
        if (!p.has_grad()) continue;
        for (double& g : p.ptr()->grad) g *= factor;
    }
    return factor;
}

void zero_grads(const std::vector<Tensor>& params) {
    for (const Tensor& p : params) p.ptr()->grad.assign(p.numel(), 0.0);
}

// ---- elementwise ops ------------------------------------------------------

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = make_op_output(a.shape(), {a, b}, "add");
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out.ptr()->data[i] = a.data()[i] + b.data()[i];
    }
    record(out, {a, b}, [](Tape::Node& nd) {
        const auto& g = nd.output->grad;
        for (int k = 0; k < 2; ++k) {
            auto& in = *nd.inputs[static_cast<std::size_t>(k)];
            if (!in.requires_grad) continue;
            for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] += g[i];
        }
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = make_op_output(a.shape(), {a, b}, "sub");
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out.ptr()->data[i] = a.data()[i] - b.data()[i];
    }
    record(out, {a, b}, [](Tape::Node& nd) {
        const auto& g = nd.output->grad;
        auto& ia = *nd.inputs[0];
        auto& ib = *nd.inputs[1];
        if (ia.requires_grad) {
            for (std::size_t i = 0; i < g.size(); ++i) ia.grad[i] += g[i];
        }
        if (ib.requires_grad) {
            for (std::size_t i = 0; i < g.size(); ++i) ib.grad[i] -= g[i];
        }
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = make_op_output(a.shape(), {a, b}, "mul");
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out.ptr()->data[i] = a.data()[i] * b.data()[i];
    }
    record(out, {a, b}, [](Tape::Node& nd) {
        const auto& g = nd.output->grad;
        auto& ia = *nd.inputs[0];
        auto& ib = *nd.inputs[1];
        if (ia.requires_grad) {
            for (std::size_t i = 0; i < g.size(); ++i) ia.grad[i] += g[i] * ib.data[i];
        }
        if (ib.requires_grad) {
            for (std::size_t i = 0; i < g.size(); ++i) ib.grad[i] += g[i] * ia.data[i];
        }
    });
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = make_op_output(a.shape(), {a}, "scale");
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out.ptr()->data[i] = a.data()[i] * s;
    record(out, {a}, [s](Tape::Node& nd) {
        const auto& g = nd.output->grad;
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] += g[i] * s;
    });
    return out;
}

Tensor add_scalar(const Tensor& a, double s) {
    Tensor out = make_op_output(a.shape(), {a}, "add_scalar");
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out.ptr()->data[i] = a.data()[i] + s;
    record(out, {a}, [](Tape::Node& nd) {
        const auto& g = nd.output->grad;
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] += g[i];
    });
    return out;
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    }
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = make_op_output({m, n}, {a, b}, "matmul");
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = out.ptr()->data.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) pc[i * n + j] += av * pb[p * n + j];
        }
    }
    record(out, {a, b}, [m, k, n](Tape::Node& nd) {
        const auto& g = nd.output->grad;
        auto& ia = *nd.inputs[0];
        auto& ib = *nd.inputs[1];
        if (ia.requires_grad) {
            // dA = dC . B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double gv = g[i * n + j];
                    if (gv == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) {
                        ia.grad[i * k + p] += gv * ib.data[p * n + j];
                    }
                }
            }
        }
        if (ib.requires_grad) {
            // dB = A^T . dC
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = ia.data[i * k + p];
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) {
                        ib.grad[p * n + j] += av * g[i * n + j];
                    }
                }
            }
        }
    });
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose: expects rank 2, got " + shape_str(a.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor out = make_op_output({n, m}, {a}, "transpose");
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.ptr()->data[j * m + i] = a.data()[i * n + j];
        }
    }
    record(out, {a}, [m, n](Tape::Node& nd) {
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        const auto& g = nd.output->grad;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) in.grad[i * n + j] += g[j * m + i];
        }
    });
    return out;
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
    const std::size_t n = shape_numel(shape);
    if (n != a.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(shape));
    }
    Tensor out = make_op_output(std::move(shape), {a}, "reshape");
    out.ptr()->data = a.data();
    record(out, {a}, [](Tape::Node& nd) {
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        const auto& g = nd.output->grad;
        for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] += g[i];
    });
    return out;
}

// ---- nonlinearities ---------------------------------------------------------

Tensor softmax(const Tensor& a, std::size_t axis) {
    if (axis >= a.rank()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                             shape_str(a.shape()));
    }
    const std::size_t len = a.dim(axis);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);

    Tensor out = make_op_output(a.shape(), {a}, "softmax");
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = a.data()[base];
            for (std::size_t i = 1; i < len; ++i) {
                mx = std::max(mx, a.data()[base + i * inner]);
            }
            double denom = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                const double e = std::exp(a.data()[base + i * inner] - mx);
                out.ptr()->data[base + i * inner] = e;
                denom += e;
            }
            for (std::size_t i = 0; i < len; ++i) out.ptr()->data[base + i * inner] /= denom;
        }
    }
    record(out, {a}, [outer, len, inner](Tape::Node& nd) {
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        const auto& g = nd.output->grad;
        const auto& y = nd.output->data;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t ii = 0; ii < inner; ++ii) {
                const std::size_t base = o * len * inner + ii;
                double dot = 0.0;
                for (std::size_t i = 0; i < len; ++i) {
                    dot += g[base + i * inner] * y[base + i * inner];
                }
                for (std::size_t i = 0; i < len; ++i) {
                    const std::size_t p = base + i * inner;
                    in.grad[p] += y[p] * (g[p] - dot);
                }
            }
        }
    });
    return out;
}

Tensor layer_norm(const Tensor& a, double eps) {
    if (a.rank() < 1) throw DimensionError("layer_norm: rank-0 input");
    const std::size_t c = a.dim(a.rank() - 1);
    const std::size_t rows = a.numel() / c;
    Tensor out = make_op_output(a.shape(), {a}, "layer_norm");
    std::vector<double> inv_sigma(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a.data().data() + r * c;
        double mu = 0.0;
        for (std::size_t i = 0; i < c; ++i) mu += x[i];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t i = 0; i < c; ++i) var += (x[i] - mu) * (x[i] - mu);
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = is;
        for (std::size_t i = 0; i < c; ++i) out.ptr()->data[r * c + i] = (x[i] - mu) * is;
    }
    record(out, {a}, [rows, c, inv_sigma = std::move(inv_sigma)](Tape::Node& nd) {
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        const auto& g = nd.output->grad;
        const auto& y = nd.output->data;
        for (std::size_t r = 0; r < rows; ++r) {
            double g_mean = 0.0, gy_mean = 0.0;
            for (std::size_t i = 0; i < c; ++i) {
                g_mean += g[r * c + i];
                gy_mean += g[r * c + i] * y[r * c + i];
            }
            g_mean /= static_cast<double>(c);
            gy_mean /= static_cast<double>(c);
            for (std::size_t i = 0; i < c; ++i) {
                const std::size_t p = r * c + i;
                in.grad[p] += inv_sigma[r] * (g[p] - g_mean - y[p] * gy_mean);
            }
        }
    });
    return out;
}

Tensor silu(const Tensor& a) {
    Tensor out = make_op_output(a.shape(), {a}, "silu");
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.data()[i];
        out.ptr()->data[i] = x * sigmoid(x);
    }
    record(out, {a}, [](Tape::Node& nd) {
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        const auto& g = nd.output->grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = in.data[i];
            const double s = sigmoid(x);
            in.grad[i] += g[i] * s * (1.0 + x * (1.0 - s));
        }
    });
    return out;
}

// ---- convolution --------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t padding) {
    if (x.rank() != 3) throw DimensionError("conv2d: input must be [C,H,W], got " + shape_str(x.shape()));
    if (kernel.rank() != 4) {
        throw DimensionError("conv2d: kernel must be [C',C,k,k], got " + shape_str(kernel.shape()));
    }
    const std::size_t co = kernel.dim(0), ci = kernel.dim(1);
    const std::size_t kh = kernel.dim(2), kw = kernel.dim(3);
    if (kh != kw) throw ParameterError("conv2d: kernel must be square, got " + shape_str(kernel.shape()));
    if (kh % 2 == 0) throw ParameterError("conv2d: kernel size must be odd, got " + std::to_string(kh));
    if (padding != (kh - 1) / 2) {
        throw ParameterError("conv2d: padding must be (k-1)/2 = " + std::to_string((kh - 1) / 2) +
                             ", got " + std::to_string(padding));
    }
    if (ci != x.dim(0)) {
        throw DimensionError("conv2d: kernel expects " + std::to_string(ci) + " channels, input has " +
                             std::to_string(x.dim(0)));
    }
    const std::size_t h = x.dim(1), w = x.dim(2);
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);
    Tensor out = make_op_output({co, h, w}, {x, kernel}, "conv2d");

    auto in_at = [&](const std::vector<double>& buf, std::size_t c, std::ptrdiff_t y,
                     std::ptrdiff_t xx) -> double {
        if (y < 0 || xx < 0 || y >= static_cast<std::ptrdiff_t>(h) ||
            xx >= static_cast<std::ptrdiff_t>(w)) {
            return 0.0;
        }
        return buf[(c * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(xx)];
    };

    for (std::size_t oc = 0; oc < co; ++oc) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                double acc = 0.0;
                for (std::size_t c = 0; c < ci; ++c) {
                    for (std::size_t dy = 0; dy < kh; ++dy) {
                        for (std::size_t dx = 0; dx < kw; ++dx) {
                            const double kv = kernel.data()[((oc * ci + c) * kh + dy) * kw + dx];
                            acc += kv * in_at(x.data(), c, static_cast<std::ptrdiff_t>(y + dy) - pad,
                                              static_cast<std::ptrdiff_t>(xx + dx) - pad);
                        }
                    }
                }
                out.ptr()->data[(oc * h + y) * w + xx] = acc;
            }
        }
    }
    record(out, {x, kernel}, [co, ci, kh, kw, h, w, pad](Tape::Node& nd) {
        auto& ix = *nd.inputs[0];
        auto& ik = *nd.inputs[1];
        const auto& g = nd.output->grad;
        const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(h);
        const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(w);
        for (std::size_t oc = 0; oc < co; ++oc) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t xx = 0; xx < w; ++xx) {
                    const double gv = g[(oc * h + y) * w + xx];
                    if (gv == 0.0) continue;
                    for (std::size_t c = 0; c < ci; ++c) {
                        for (std::size_t dy = 0; dy < kh; ++dy) {
                            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - pad;
                            if (sy < 0 || sy >= H) continue;
                            for (std::size_t dx = 0; dx < kw; ++dx) {
                                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + dx) - pad;
                                if (sx < 0 || sx >= W) continue;
                                const std::size_t in_idx =
                                    (c * h + static_cast<std::size_t>(sy)) * w +
                                    static_cast<std::size_t>(sx);
                                const std::size_t k_idx = ((oc * ci + c) * kh + dy) * kw + dx;
                                if (ix.requires_grad) ix.grad[in_idx] += gv * ik.data[k_idx];
                                if (ik.requires_grad) ik.grad[k_idx] += gv * ix.data[in_idx];
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

// ---- reductions ---------------------------------------------------------

Tensor sum(const Tensor& a) {
    Tensor out = make_op_output({1}, {a}, "sum");
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    out.ptr()->data[0] = acc;
    record(out, {a}, [](Tape::Node& nd) {
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        const double g = nd.output->grad[0];
        for (double& gv : in.grad) gv += g;
    });
    return out;
}

Tensor mean(const Tensor& a) {
    Tensor out = make_op_output({1}, {a}, "mean");
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    const double inv_n = 1.0 / static_cast<double>(a.numel());
    out.ptr()->data[0] = acc * inv_n;
    record(out, {a}, [inv_n](Tape::Node& nd) {
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        const double g = nd.output->grad[0] * inv_n;
        for (double& gv : in.grad) gv += g;
    });
    return out;
}

// ---- broadcasts -----------------------------------------------------------

namespace {
void check_row_broadcast(const Tensor& a, const Tensor& v, const char* op) {
    if (a.rank() != 2) throw DimensionError(std::string(op) + ": base must be rank 2, got " + shape_str(a.shape()));
    if (v.rank() != 1 || v.dim(0) != a.dim(1)) {
        throw DimensionError(std::string(op) + ": vector " + shape_str(v.shape()) +
                             " does not match row width of " + shape_str(a.shape()));
    }
}
}  // namespace

Tensor add_row_broadcast(const Tensor& a, const Tensor& v) {
    check_row_broadcast(a, v, "add_row_broadcast");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor out = make_op_output(a.shape(), {a, v}, "add_row_broadcast");
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.ptr()->data[i * n + j] = a.data()[i * n + j] + v.data()[j];
        }
    }
    record(out, {a, v}, [m, n](Tape::Node& nd) {
        auto& ia = *nd.inputs[0];
        auto& iv = *nd.inputs[1];
        const auto& g = nd.output->grad;
        if (ia.requires_grad) {
            for (std::size_t i = 0; i < g.size(); ++i) ia.grad[i] += g[i];
        }
        if (iv.requires_grad) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) iv.grad[j] += g[i * n + j];
            }
        }
    });
    return out;
}

Tensor mul_row_broadcast(const Tensor& a, const Tensor& v) {
    check_row_broadcast(a, v, "mul_row_broadcast");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor out = make_op_output(a.shape(), {a, v}, "mul_row_broadcast");
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.ptr()->data[i * n + j] = a.data()[i * n + j] * v.data()[j];
        }
    }
    record(out, {a, v}, [m, n](Tape::Node& nd) {
        auto& ia = *nd.inputs[0];
        auto& iv = *nd.inputs[1];
        const auto& g = nd.output->grad;
        if (ia.requires_grad) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) ia.grad[i * n + j] += g[i * n + j] * iv.data[j];
            }
        }
        if (iv.requires_grad) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) iv.grad[j] += g[i * n + j] * ia.data[i * n + j];
            }
        }
    });
    return out;
}

Tensor add_chan_broadcast(const Tensor& x, const Tensor& b) {
    if (x.rank() != 3) throw DimensionError("add_chan_broadcast: base must be [C,H,W], got " + shape_str(x.shape()));
    if (b.rank() != 1 || b.dim(0) != x.dim(0)) {
        throw DimensionError("add_chan_broadcast: bias " + shape_str(b.shape()) +
                             " does not match channels of " + shape_str(x.shape()));
    }
    const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
    Tensor out = make_op_output(x.shape(), {x, b}, "add_chan_broadcast");
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < hw; ++i) {
            out.ptr()->data[ch * hw + i] = x.data()[ch * hw + i] + b.data()[ch];
        }
    }
    record(out, {x, b}, [c, hw](Tape::Node& nd) {
        auto& ix = *nd.inputs[0];
        auto& ib = *nd.inputs[1];
        const auto& g = nd.output->grad;
        if (ix.requires_grad) {
            for (std::size_t i = 0; i < g.size(); ++i) ix.grad[i] += g[i];
        }
        if (ib.requires_grad) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i < hw; ++i) ib.grad[ch] += g[ch * hw + i];
            }
        }
    });
    return out;
}

// ---- slicing / concatenation ---------------------------------------------

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
    if (a.rank() != 2) throw DimensionError("slice_cols: expects rank 2, got " + shape_str(a.shape()));
    if (len == 0 || start + len > a.dim(1)) {
        throw IndexError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") outside width " + std::to_string(a.dim(1)));
    }
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor out = make_op_output({m, len}, {a}, "slice_cols");
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < len; ++j) {
            out.ptr()->data[i * len + j] = a.data()[i * n + start + j];
        }
    }
    record(out, {a}, [m, n, start, len](Tape::Node& nd) {
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        const auto& g = nd.output->grad;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < len; ++j) in.grad[i * n + start + j] += g[i * len + j];
        }
    });
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    const std::size_t m = parts[0].dim(0);
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.dim(0) != m) {
            throw DimensionError("concat_cols: part " + shape_str(p.shape()) +
                                 " does not share row count " + std::to_string(m));
        }
        total += p.dim(1);
    }
    Tensor out = make_op_output({m, total}, parts, "concat_cols");
    std::size_t off = 0;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
        const std::size_t w = p.dim(1);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                out.ptr()->data[i * total + off + j] = p.data()[i * w + j];
            }
        }
        widths.push_back(w);
        off += w;
    }
    record(out, parts, [m, total, widths = std::move(widths)](Tape::Node& nd) {
        const auto& g = nd.output->grad;
        std::size_t off2 = 0;
        for (std::size_t k = 0; k < nd.inputs.size(); ++k) {
            auto& in = *nd.inputs[k];
            const std::size_t w = widths[k];
            if (in.requires_grad) {
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        in.grad[i * w + j] += g[i * total + off2 + j];
                    }
                }
            }
            off2 += w;
        }
    });
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no parts");
    const std::size_t n = parts[0].dim(parts[0].rank() - 1);
    std::size_t rows = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.dim(1) != n) {
            throw DimensionError("concat_rows: part " + shape_str(p.shape()) +
                                 " does not share column count " + std::to_string(n));
        }
        rows += p.dim(0);
    }
    Tensor out = make_op_output({rows, n}, parts, "concat_rows");
    std::size_t off = 0;
    std::vector<std::size_t> heights;
    for (const Tensor& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.ptr()->data.begin() + static_cast<std::ptrdiff_t>(off));
        heights.push_back(p.dim(0));
        off += p.numel();
    }
    record(out, parts, [n, heights = std::move(heights)](Tape::Node& nd) {
        const auto& g = nd.output->grad;
        std::size_t off2 = 0;
        for (std::size_t k = 0; k < nd.inputs.size(); ++k) {
            auto& in = *nd.inputs[k];
            const std::size_t count = heights[k] * n;
            if (in.requires_grad) {
                for (std::size_t i = 0; i < count; ++i) in.grad[i] += g[off2 + i];
            }
            off2 += count;
        }
    });
    return out;
}

Tensor embedding_row(const Tensor& table, std::size_t index) {
    if (table.rank() != 2) {
        throw DimensionError("embedding_row: table must be rank 2, got " + shape_str(table.shape()));
    }
    if (index >= table.dim(0)) {
        throw IndexError("embedding_row: row " + std::to_string(index) + " outside table with " +
                         std::to_string(table.dim(0)) + " rows");
    }
    const std::size_t h = table.dim(1);
    Tensor out = make_op_output({h}, {table}, "embedding_row");
    for (std::size_t j = 0; j < h; ++j) out.ptr()->data[j] = table.data()[index * h + j];
    record(out, {table}, [index, h](Tape::Node& nd) {
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        const auto& g = nd.output->grad;
        for (std::size_t j = 0; j < h; ++j) in.grad[index * h + j] += g[j];
    });
    return out;
}

// ---- token/grid views ------------------------------------------------------

Tensor tokens_to_grid(const Tensor& tokens, std::size_t h, std::size_t w) {
    if (tokens.rank() != 2) {
        throw DimensionError("tokens_to_grid: expects [t,C], got " + shape_str(tokens.shape()));
    }
    if (tokens.dim(0) != h * w) {
        throw DimensionError("tokens_to_grid: " + std::to_string(tokens.dim(0)) +
                             " tokens do not fill a " + std::to_string(h) + "x" + std::to_string(w) +
                             " grid");
    }
    const std::size_t c = tokens.dim(1);
    Tensor out = make_op_output({c, h, w}, {tokens}, "tokens_to_grid");
    for (std::size_t t = 0; t < h * w; ++t) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            out.ptr()->data[ch * h * w + t] = tokens.data()[t * c + ch];
        }
    }
    record(out, {tokens}, [c, hw = h * w](Tape::Node& nd) {
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        const auto& g = nd.output->grad;
        for (std::size_t t = 0; t < hw; ++t) {
            for (std::size_t ch = 0; ch < c; ++ch) in.grad[t * c + ch] += g[ch * hw + t];
        }
    });
    return out;
}

Tensor grid_to_tokens(const Tensor& grid) {
    if (grid.rank() != 3) {
        throw DimensionError("grid_to_tokens: expects [C,H,W], got " + shape_str(grid.shape()));
    }
    const std::size_t c = grid.dim(0), hw = grid.dim(1) * grid.dim(2);
    Tensor out = make_op_output({hw, c}, {grid}, "grid_to_tokens");
    for (std::size_t t = 0; t < hw; ++t) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            out.ptr()->data[t * c + ch] = grid.data()[ch * hw + t];
        }
    }
    record(out, {grid}, [c, hw](Tape::Node& nd) {
        auto& in = *nd.inputs[0];
        if (!in.requires_grad) return;
        const auto& g = nd.output->grad;
        for (std::size_t t = 0; t < hw; ++t) {
            for (std::size_t ch = 0; ch < c; ++ch) in.grad[ch * hw + t] += g[t * c + ch];
        }
    });
    return out;
}

}  // namespace hpkit
