// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "hpkit/imadapter.hpp"

namespace hpkit::adapter {

void AdapterConfig::validate() const {
    if (appearance_width == 0 || id_width == 0 || rank == 0) {
        throw ConfigError("adapter: widths must be positive");
    }
    if (kernels.empty()) throw ConfigError("adapter: need at least one convolution branch");
    for (std::size_t k : kernels) {
        if (k % 2 == 0) throw ConfigError("adapter: kernel size " + std::to_string(k) + " must be odd");
    }
    if (heads == 0 || rank % heads != 0) {
        throw ConfigError("adapter: rank " + std::to_string(rank) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
}

IMAdapter IMAdapter::init(const AdapterConfig& config, Tape& tape, Rng& rng) {
    config.validate();
    IMAdapter a;
    a.config = config;
    a.w_down = nn::Linear::init(config.appearance_width, config.rank, tape, rng, /*bias=*/false);
    a.branches.reserve(config.kernels.size());
    for (std::size_t k : config.kernels) {
        ConvBranch branch;
        const double stddev =
            1.0 / std::sqrt(static_cast<double>(config.rank * k * k));
        branch.kernel = Tensor::param(
            {config.rank, config.rank, k, k},
            nn::normal_tensor({config.rank, config.rank, k, k}, rng, stddev).data(), tape);
        branch.bias = Tensor::param({config.rank}, std::vector<double>(config.rank, 0.0), tape);
        a.branches.push_back(std::move(branch));
    }
    a.kv_proj = nn::Linear::init(config.concat_width(), config.rank, tape, rng);
    a.id_attn = nn::Mhca::init(config.id_width, config.rank, config.rank, config.rank,
                               config.heads, tape, rng);
    a.patch_attn = nn::Mhca::init(config.rank, config.rank, config.rank, config.rank,
                                  config.heads, tape, rng);
    a.w_up = nn::Linear::zeros(config.rank, config.appearance_width, tape, /*bias=*/false);
    return a;
}

Tensor IMAdapter::mconv(const Tensor& low_rank_tokens, std::size_t grid_h,
                        std::size_t grid_w) const {
    if (low_rank_tokens.rank() != 2 || low_rank_tokens.dim(1) != config.rank) {
        throw DimensionError("mconv: tokens " + shape_str(low_rank_tokens.shape()) +
                             " expect width " + std::to_string(config.rank));
    }
    if (low_rank_tokens.dim(0) != grid_h * grid_w) {
        throw DimensionError("mconv: " + std::to_string(low_rank_tokens.dim(0)) +
                             " tokens do not fill a " + std::to_string(grid_h) + "x" +
                             std::to_string(grid_w) + " grid");
    }
    const Tensor grid = tokens_to_grid(low_rank_tokens, grid_h, grid_w);
    std::vector<Tensor> outs;
    outs.reserve(branches.size());
    for (const ConvBranch& branch : branches) {
        const std::size_t k = branch.kernel.dim(2);
        Tensor y = conv2d(grid, branch.kernel, (k - 1) / 2);
        y = add_chan_broadcast(y, branch.bias);
        outs.push_back(grid_to_tokens(y));
    }
    return concat_cols(outs);
}

Tensor IMAdapter::forward(const Tensor& appearance, std::size_t grid_h, std::size_t grid_w,
                          const Tensor& id_tokens) const {
    if (appearance.rank() != 2 || appearance.dim(1) != config.appearance_width) {
        throw DimensionError("adapter: appearance " + shape_str(appearance.shape()) +
                             " expects width " + std::to_string(config.appearance_width));
    }
    if (appearance.dim(0) != grid_h * grid_w) {
        throw DimensionError("adapter: " + std::to_string(appearance.dim(0)) +
                             " appearance tokens do not fill a " + std::to_string(grid_h) + "x" +
                             std::to_string(grid_w) + " grid");
    }
    if (id_tokens.rank() != 2 || id_tokens.dim(1) != config.id_width) {
        throw DimensionError("adapter: ID tokens " + shape_str(id_tokens.shape()) +
                             " expect width " + std::to_string(config.id_width));
    }
    const Tensor low_rank = w_down.forward(appearance);
    const Tensor conv_features = mconv(low_rank, grid_h, grid_w);
    const Tensor kv = kv_proj.forward(conv_features);
    const Tensor fused_id = id_attn.forward(id_tokens, kv);
    const Tensor per_patch = patch_attn.forward(kv, fused_id);
    return add(appearance, w_up.forward(per_patch));
}

void IMAdapter::collect(const std::string& prefix, NamedTensors& out) const {
    w_down.collect(prefix + ".w_down", out);
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const std::string base = prefix + ".conv" + std::to_string(config.kernels[i]);
        out.emplace_back(base + ".kernel", branches[i].kernel);
        out.emplace_back(base + ".bias", branches[i].bias);
    }
    kv_proj.collect(prefix + ".kv_proj", out);
    id_attn.collect(prefix + ".id_attn", out);
    patch_attn.collect(prefix + ".patch_attn", out);
    w_up.collect(prefix + ".w_up", out);
}

std::vector<Tensor> IMAdapter::parameters() const {
    NamedTensors named;
    collect("adapter", named);
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (auto& [name, t] : named) out.push_back(t);
    return out;
}

IdSource sample_id_source(SampleMode mode, std::size_t clip_length, Rng& rng) {
    IdSource s;
    if (mode == SampleMode::kInfer) {
        s.reference = true;
        return s;
    }
    if (clip_length == 0) throw ParameterError("sample_id_source: empty clip in train mode");
    s.frame = static_cast<std::size_t>(rng.uniform_int(clip_length));
    return s;
}

}  // namespace hpkit::adapter
