// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "hpkit/motion_bank.hpp"

namespace hpkit::motion {

void BankConfig::validate() const {
    if (memory_count == 0 || width == 0 || blocks == 0 || mlp_ratio == 0) {
        throw ConfigError("bank: counts and widths must be positive");
    }
    if (heads == 0 || width % heads != 0) {
        throw ConfigError("bank: width " + std::to_string(width) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
}

Tensor init_memories(std::size_t count, std::size_t dim, std::uint64_t seed,
                     nn::ScaledNormal mode) {
    if (count == 0 || dim == 0) throw ParameterError("init_memories: count and dim must be positive");
    Rng rng(seed);
    return nn::normal_tensor({count, dim}, rng, nn::scaled_normal_stddev(dim, mode));
}

MemoryBank MemoryBank::init(const BankConfig& config, Tape& tape, Rng& rng) {
    config.validate();
    MemoryBank bank;
    bank.config = config;
    const double stddev = nn::scaled_normal_stddev(config.width, config.init_mode);
    bank.memories = Tensor::param(
        {config.memory_count, config.width},
        nn::normal_tensor({config.memory_count, config.width}, rng, stddev).data(), tape);
    bank.blocks.reserve(config.blocks);
    for (std::size_t i = 0; i < config.blocks; ++i) {
        BankBlock block;
        block.adaln_in = nn::AdaLN::init(config.width, config.width, tape);
        block.attn = nn::Mhca::init(config.width, config.width, config.width, config.width,
                                    config.heads, tape, rng);
        block.adaln_out = nn::AdaLN::init(config.width, config.width, tape);
        block.mlp = nn::Mlp::init(config.width, config.width * config.mlp_ratio, tape, rng);
        bank.blocks.push_back(std::move(block));
    }
    return bank;
}

Tensor bank_block_forward(const BankBlock& block, const Tensor& memories,
                          const Tensor& motion_features, const Tensor& intensity) {
    Tensor x = add_row_broadcast(motion_features, intensity);
    x = block.adaln_in.forward(x, intensity);
    x = block.attn.forward(memories, x);
    x = block.adaln_out.forward(x, intensity);
    return block.mlp.forward(x);
}

Tensor MemoryBank::forward(const Tensor& motion_features, const Tensor& intensity) const {
    if (motion_features.rank() != 2 || motion_features.dim(1) != config.width) {
        throw DimensionError("bank: motion features " + shape_str(motion_features.shape()) +
                             " expect width " + std::to_string(config.width));
    }
    if (intensity.rank() != 1 || intensity.dim(0) != config.width) {
        throw DimensionError("bank: intensity embedding " + shape_str(intensity.shape()) +
                             " expects width " + std::to_string(config.width));
    }
    Tensor x = motion_features;
    for (const BankBlock& block : blocks) {
        x = bank_block_forward(block, memories, x, intensity);
    }
    return x;
}

void MemoryBank::collect(const std::string& prefix, NamedTensors& out) const {
    out.emplace_back(prefix + ".memories", memories);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string base = prefix + ".block" + std::to_string(i);
        blocks[i].adaln_in.collect(base + ".adaln_in", out);
        blocks[i].attn.collect(base + ".attn", out);
        blocks[i].adaln_out.collect(base + ".adaln_out", out);
        blocks[i].mlp.collect(base + ".mlp", out);
    }
}

std::vector<Tensor> MemoryBank::parameters() const {
    NamedTensors named;
    collect("bank", named);
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (auto& [name, t] : named) out.push_back(t);
    return out;
}

}  // namespace hpkit::motion
