// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small parameterized blocks shared by the motion bank, the adapter and the
// toy denoiser. All blocks register their parameters on a caller-owned tape
// and expose collect() for checkpointing.

#pragma once

#include <cmath>
#include <string>

#include "hpkit/tensor.hpp"
#include "hpkit/tensor_io.hpp"

namespace hpkit::nn {

// Convention for the scaled normal N(0, 1/sqrt(dim)): the second argument is
// read as the variance by default; the stddev reading stays available as a
// config switch.
enum class ScaledNormal { kVariance, kStdDev };

inline double scaled_normal_stddev(std::size_t dim, ScaledNormal mode) {
    return mode == ScaledNormal::kVariance ? std::pow(static_cast<double>(dim), -0.25)
                                           : 1.0 / std::sqrt(static_cast<double>(dim));
}

Tensor normal_tensor(std::vector<std::size_t> shape, Rng& rng, double stddev);

struct Linear {
    Tensor w;  // [in, out]
    Tensor b;  // [out] when has_bias
    bool has_bias = true;

    // Weights ~ N(0, 1/fan_in), zero bias.
    static Linear init(std::size_t in, std::size_t out, Tape& tape, Rng& rng, bool bias = true);
    // All-zero weights (and bias); used for AdaLN maps and the adapter W_up.
    static Linear zeros(std::size_t in, std::size_t out, Tape& tape, bool bias = true);

    Tensor forward(const Tensor& x) const;      // x: [m, in]
    Tensor forward_vec(const Tensor& x) const;  // x: [in]

    std::size_t in_dim() const { return w.dim(0); }
    std::size_t out_dim() const { return w.dim(1); }

    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Learnable layer norm: unit-variance normalization followed by per-channel
// affine (gamma init 1, beta init 0).
struct LayerNorm {
    Tensor gamma;
    Tensor beta;
    double eps = 1e-5;

    static LayerNorm init(std::size_t width, Tape& tape);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Adaptive layer norm: (1 + dgamma(cond)) * LN(x) + beta(cond), per token.
// Both conditioning maps start at zero so the block opens as plain LN.
struct AdaLN {
    Linear to_gamma;
    Linear to_beta;
    double eps = 1e-5;

    static AdaLN init(std::size_t cond_dim, std::size_t width, Tape& tape);
    Tensor forward(const Tensor& x, const Tensor& cond) const;
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Multi-head scaled dot-product cross-attention. Query and key/value streams
// may have different widths; attention runs at attn_width and projects to
// out_width.
struct Mhca {
    std::size_t heads = 0;
    Linear wq, wk, wv, wo;

    static Mhca init(std::size_t q_width, std::size_t kv_width, std::size_t attn_width,
                     std::size_t out_width, std::size_t heads, Tape& tape, Rng& rng);

    Tensor forward(const Tensor& query, const Tensor& key_value) const;

    std::size_t attn_width() const { return wq.out_dim(); }
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Two linear layers with SiLU between.
struct Mlp {
    Linear fc1, fc2;

    static Mlp init(std::size_t width, std::size_t hidden, Tape& tape, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, NamedTensors& out) const;
};

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void step(const std::vector<Tensor>& params);

private:
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

// Copies values from a checkpoint into live parameters, matched by name.
// Throws ConfigError on missing names or shape mismatches.
void load_named(const NamedTensors& params, const NamedTensors& checkpoint);

}  // namespace hpkit::nn
