// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "hpkit/nn.hpp"

#include <algorithm>
#include <map>

namespace hpkit::nn {

Tensor normal_tensor(std::vector<std::size_t> shape, Rng& rng, double stddev) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> values(n);
    for (double& v : values) v = rng.normal(0.0, stddev);
    return Tensor::from(std::move(shape), std::move(values));
}

// ---- Linear ---------------------------------------------------------------

Linear Linear::init(std::size_t in, std::size_t out, Tape& tape, Rng& rng, bool bias) {
    Linear l;
    const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
    l.w = Tensor::param({in, out}, normal_tensor({in, out}, rng, stddev).data(), tape);
    l.has_bias = bias;
    if (bias) l.b = Tensor::param({out}, std::vector<double>(out, 0.0), tape);
    return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out, Tape& tape, bool bias) {
    Linear l;
    l.w = Tensor::param({in, out}, std::vector<double>(in * out, 0.0), tape);
    l.has_bias = bias;
    if (bias) l.b = Tensor::param({out}, std::vector<double>(out, 0.0), tape);
    return l;
}

Tensor Linear::forward(const Tensor& x) const {
    Tensor y = matmul(x, w);
    if (has_bias) y = add_row_broadcast(y, b);
    return y;
}

Tensor Linear::forward_vec(const Tensor& x) const {
    if (x.rank() != 1) throw DimensionError("Linear::forward_vec expects a vector, got " + shape_str(x.shape()));
    Tensor y = forward(reshape(x, {1, x.dim(0)}));
    return reshape(y, {out_dim()});
}

void Linear::collect(const std::string& prefix, NamedTensors& out) const {
    out.emplace_back(prefix + ".w", w);
    if (has_bias) out.emplace_back(prefix + ".b", b);
}

// ---- LayerNorm --------------------------------------------------------------

LayerNorm LayerNorm::init(std::size_t width, Tape& tape) {
    LayerNorm ln;
    ln.gamma = Tensor::param({width}, std::vector<double>(width, 1.0), tape);
    ln.beta = Tensor::param({width}, std::vector<double>(width, 0.0), tape);
    return ln;
}

Tensor LayerNorm::forward(const Tensor& x) const {
    return add_row_broadcast(mul_row_broadcast(layer_norm(x, eps), gamma), beta);
}

void LayerNorm::collect(const std::string& prefix, NamedTensors& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

// ---- AdaLN -------------------------------------------------------------------

AdaLN AdaLN::init(std::size_t cond_dim, std::size_t width, Tape& tape) {
    AdaLN a;
    a.to_gamma = Linear::zeros(cond_dim, width, tape);
    a.to_beta = Linear::zeros(cond_dim, width, tape);
    return a;
}

Tensor AdaLN::forward(const Tensor& x, const Tensor& cond) const {
    if (cond.rank() != 1 || cond.dim(0) != to_gamma.in_dim()) {
        throw DimensionError("adaln: conditioning " + shape_str(cond.shape()) +
                             " does not match map input width " +
                             std::to_string(to_gamma.in_dim()));
    }
    if (x.rank() != 2 || x.dim(1) != to_gamma.out_dim()) {
        throw DimensionError("adaln: tokens " + shape_str(x.shape()) +
                             " do not match channel width " + std::to_string(to_gamma.out_dim()));
    }
    const Tensor normed = layer_norm(x, eps);
    const Tensor gain = add_scalar(to_gamma.forward_vec(cond), 1.0);
    const Tensor shift = to_beta.forward_vec(cond);
    return add_row_broadcast(mul_row_broadcast(normed, gain), shift);
}

void AdaLN::collect(const std::string& prefix, NamedTensors& out) const {
    to_gamma.collect(prefix + ".gamma_map", out);
    to_beta.collect(prefix + ".beta_map", out);
}

// ---- Mhca --------------------------------------------------------------------

Mhca Mhca::init(std::size_t q_width, std::size_t kv_width, std::size_t attn_width,
                std::size_t out_width, std::size_t heads, Tape& tape, Rng& rng) {
    if (heads == 0 || attn_width % heads != 0) {
        throw ConfigError("mhca: attention width " + std::to_string(attn_width) +
                          " not divisible by " + std::to_string(heads) + " heads");
    }
    Mhca m;
    m.heads = heads;
    m.wq = Linear::init(q_width, attn_width, tape, rng);
    m.wk = Linear::init(kv_width, attn_width, tape, rng);
    m.wv = Linear::init(kv_width, attn_width, tape, rng);
    m.wo = Linear::init(attn_width, out_width, tape, rng);
    return m;
}

Tensor Mhca::forward(const Tensor& query, const Tensor& key_value) const {
    if (query.rank() != 2 || query.dim(1) != wq.in_dim()) {
        throw DimensionError("mhca: query " + shape_str(query.shape()) + " expects width " +
                             std::to_string(wq.in_dim()));
    }
    if (key_value.rank() != 2 || key_value.dim(1) != wk.in_dim()) {
        throw DimensionError("mhca: key/value " + shape_str(key_value.shape()) +
                             " expects width " + std::to_string(wk.in_dim()));
    }
    const Tensor q = wq.forward(query);
    const Tensor k = wk.forward(key_value);
    const Tensor v = wv.forward(key_value);
    const std::size_t dh = attn_width() / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> per_head;
    per_head.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = slice_cols(q, h * dh, dh);
        const Tensor kh = slice_cols(k, h * dh, dh);
        const Tensor vh = slice_cols(v, h * dh, dh);
        const Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
        const Tensor probs = softmax(scores, 1);
        per_head.push_back(matmul(probs, vh));
    }
    return wo.forward(concat_cols(per_head));
}

void Mhca::collect(const std::string& prefix, NamedTensors& out) const {
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
}

// ---- Mlp ----------------------------------------------------------------------

Mlp Mlp::init(std::size_t width, std::size_t hidden, Tape& tape, Rng& rng) {
    Mlp m;
    m.fc1 = Linear::init(width, hidden, tape, rng);
    m.fc2 = Linear::init(hidden, width, tape, rng);
    return m;
}

Tensor Mlp::forward(const Tensor& x) const {
    return fc2.forward(silu(fc1.forward(x)));
}

void Mlp::collect(const std::string& prefix, NamedTensors& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

// ---- Adam ----------------------------------------------------------------------

void Adam::step(const std::vector<Tensor>& params) {
    if (m_.size() != params.size()) {
        m_.assign(params.size(), {});
        v_.assign(params.size(), {});
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].numel(), 0.0);
            v_[i].assign(params[i].numel(), 0.0);
        }
        t_ = 0;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& p = params[i];
        if (!p.has_grad()) continue;
        const auto& g = p.ptr()->grad;
        auto& data = p.ptr()->data;
        for (std::size_t j = 0; j < g.size(); ++j) {
            m_[i][j] = beta1 * m_[i][j] + (1.0 - beta1) * g[j];
            v_[i][j] = beta2 * v_[i][j] + (1.0 - beta2) * g[j] * g[j];
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// ---- checkpoint loading -----------------------------------------------------

void load_named(const NamedTensors& params, const NamedTensors& checkpoint) {
    std::map<std::string, const Tensor*> src;
    for (const auto& [name, t] : checkpoint) src[name] = &t;
    for (const auto& [name, t] : params) {
        auto it = src.find(name);
        if (it == src.end()) throw ConfigError("checkpoint missing tensor '" + name + "'");
        if (it->second->shape() != t.shape()) {
            throw ConfigError("checkpoint tensor '" + name + "' has shape " +
                              shape_str(it->second->shape()) + ", expected " +
                              shape_str(t.shape()));
        }
        const_cast<Tensor&>(t).mutable_data() = it->second->data();
    }
}

}  // namespace hpkit::nn
