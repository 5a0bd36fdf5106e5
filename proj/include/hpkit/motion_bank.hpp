// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Motion memory bank: learnable memory tokens query the intensity-conditioned
// motion features through cross-attention, refined by AdaLN and an MLP. The
// memory matrix is shared across blocks; AdaLN/MHCA/MLP weights are per block.

#pragma once

#include <cstdint>
#include <vector>

#include "hpkit/nn.hpp"
#include "hpkit/tensor.hpp"

namespace hpkit::motion {

struct BankConfig {
    std::size_t memory_count = 64;
    std::size_t width = 768;
    std::size_t heads = 8;
    std::size_t blocks = 6;
    std::size_t mlp_ratio = 4;
    nn::ScaledNormal init_mode = nn::ScaledNormal::kVariance;

    void validate() const;
};

// Memories ~ N(0, 1/sqrt(dim)); reproducible under seed.
Tensor init_memories(std::size_t count, std::size_t dim, std::uint64_t seed,
                     nn::ScaledNormal mode = nn::ScaledNormal::kVariance);

struct BankBlock {
    nn::AdaLN adaln_in;
    nn::Mhca attn;
    nn::AdaLN adaln_out;
    nn::Mlp mlp;
};

struct MemoryBank {
    BankConfig config;
    Tensor memories;  // [memory_count, width]
    std::vector<BankBlock> blocks;

    static MemoryBank init(const BankConfig& config, Tape& tape, Rng& rng);

    // motion_features: [n, width], intensity: [width]. Output: [memory_count,
    // width] regardless of n. Blocks run sequentially; each consumes the
    // previous block's memory tokens as its motion features, with the
    // intensity embedding re-added.
    Tensor forward(const Tensor& motion_features, const Tensor& intensity) const;

    void collect(const std::string& prefix, NamedTensors& out) const;
    std::vector<Tensor> parameters() const;
};

// One bank block stage, exposed for composition tests:
// AdaLN(x + cond, cond) -> MHCA(memories, .) -> AdaLN(., cond) -> MLP.
Tensor bank_block_forward(const BankBlock& block, const Tensor& memories,
                          const Tensor& motion_features, const Tensor& intensity);

}  // namespace hpkit::motion
