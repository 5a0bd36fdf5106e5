// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// ID-aware multi-scale adapter: low-rank projection of patch features,
// parallel multi-scale convolutions, ID-queried cross-attention, and a
// zero-initialized residual up-projection so the frozen backbone's output is
// untouched at step 0.
//
// The attended ID tokens are scattered back over the patch tokens with a
// second attention pass (patch tokens as queries over the fused ID tokens),
// which makes the residual per-patch and shape-preserving.

#pragma once

#include <cstdint>
#include <vector>

#include "hpkit/nn.hpp"
#include "hpkit/tensor.hpp"
#include "hpkit/util.hpp"

namespace hpkit::adapter {

struct AdapterConfig {
    std::size_t appearance_width = 1024;  // patch-encoder token width
    std::size_t id_width = 512;           // ID embedding width
    std::size_t rank = 384;
    std::vector<std::size_t> kernels = {1, 3, 5};
    std::size_t heads = 8;

    std::size_t concat_width() const { return rank * kernels.size(); }
    void validate() const;
};

struct ConvBranch {
    Tensor kernel;  // [rank, rank, k, k]
    Tensor bias;    // [rank]
};

struct IMAdapter {
    AdapterConfig config;
    nn::Linear w_down;  // appearance_width -> rank, no bias
    std::vector<ConvBranch> branches;
    nn::Linear kv_proj;   // rank * kernels -> rank
    nn::Mhca id_attn;     // queries: ID tokens, kv: projected conv features
    nn::Mhca patch_attn;  // queries: patch tokens, kv: fused ID tokens
    nn::Linear w_up;      // rank -> appearance_width, zero-initialized, no bias

    static IMAdapter init(const AdapterConfig& config, Tape& tape, Rng& rng);

    // low_rank_tokens: [t, rank] over an h x w grid. The branches run on the
    // grid in parallel and concatenate along channels: output [t, rank * k].
    Tensor mconv(const Tensor& low_rank_tokens, std::size_t grid_h, std::size_t grid_w) const;

    // appearance: [t, appearance_width] with t == grid_h * grid_w,
    // id_tokens: [i, id_width]. Output shape equals the appearance shape.
    Tensor forward(const Tensor& appearance, std::size_t grid_h, std::size_t grid_w,
                   const Tensor& id_tokens) const;

    void collect(const std::string& prefix, NamedTensors& out) const;
    std::vector<Tensor> parameters() const;
};

enum class SampleMode { kTrain, kInfer };

struct IdSource {
    bool reference = false;   // inference: always the reference image
    std::size_t frame = 0;    // training: uniform random frame of the clip
};

IdSource sample_id_source(SampleMode mode, std::size_t clip_length, Rng& rng);

}  // namespace hpkit::adapter
