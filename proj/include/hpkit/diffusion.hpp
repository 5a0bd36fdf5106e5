// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale latent diffusion harness: epsilon-prediction training objective,
// a token-transformer denoiser with appearance and motion cross-attention,
// deterministic DDIM sampling and classifier-free guidance.

#pragma once

#include <cstdint>
#include <vector>

#include "hpkit/nn.hpp"
#include "hpkit/tensor.hpp"
#include "hpkit/util.hpp"

namespace hpkit::diffusion {

struct NoiseSchedule {
    std::vector<double> betas;
    std::vector<double> alpha_bars;  // strictly decreasing, in (0, 1]

    static NoiseSchedule linear(std::size_t timesteps, double beta_start, double beta_end);

    std::size_t timesteps() const { return betas.size(); }
    // t == -1 denotes the clean endpoint with alpha_bar == 1.
    double alpha_bar(std::ptrdiff_t t) const;
    void validate() const;
};

// sqrt(abar_t) * z + sqrt(1 - abar_t) * eps.
Tensor noising(const Tensor& z, const Tensor& eps, std::size_t t, const NoiseSchedule& sched);

// eps_uncond + w * (eps_cond - eps_uncond). w == 1 returns the conditional
// branch itself and w == 0 the unconditional one, exactly.
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double guidance);

// Deterministic (eta = 0) DDIM update from t to t_prev (t_prev may be -1).
Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, std::ptrdiff_t t,
                 std::ptrdiff_t t_prev, const NoiseSchedule& sched);

struct DenoiserConfig {
    std::size_t latent_channels = 4;
    std::size_t latent_h = 8;
    std::size_t latent_w = 8;
    std::size_t width = 64;
    std::size_t heads = 4;
    std::size_t blocks = 2;
    std::size_t mlp_ratio = 4;
    std::size_t time_embed_dim = 32;
    std::size_t appearance_width = 1024;
    std::size_t motion_width = 768;

    std::size_t latent_tokens() const { return latent_h * latent_w; }
    void validate() const;
};

struct Conditioning {
    Tensor appearance;  // [a, appearance_width]
    Tensor motion;      // [n + memories, motion_width]
    Tensor spatial;     // latent-shaped [C,H,W]; empty means no spatial signal
    bool has_spatial = false;
};

// Routes the streams: appearance tokens to the appearance cross-attention,
// concat(per-frame motion, refined memory tokens) to the motion
// cross-attention, spatial map added to the latent tokens before block 1.
Conditioning condition_pack(const Tensor& appearance, const Tensor& motion_refined,
                            const Tensor& motion_frames, const Tensor& spatial,
                            const DenoiserConfig& config);

struct DenoiserBlock {
    nn::LayerNorm ln_self;
    nn::Mhca self_attn;
    nn::LayerNorm ln_appearance;
    nn::Mhca appearance_attn;
    nn::LayerNorm ln_motion;
    nn::Mhca motion_attn;
    nn::LayerNorm ln_mlp;
    nn::Mlp mlp;
};

struct ToyDenoiser {
    DenoiserConfig config;
    nn::Linear in_proj;
    nn::Linear time_proj;
    Tensor null_appearance;  // [1, appearance_width], the unconditional branch
    Tensor null_motion;      // [1, motion_width]
    std::vector<DenoiserBlock> blocks;
    nn::Linear out_proj;

    static ToyDenoiser init(const DenoiserConfig& config, Tape& tape, Rng& rng);

    // latent: [C,H,W]; predicts epsilon with the same shape. conditional ==
    // false swaps both token streams for the learned null tokens (CFG).
    Tensor forward(const Tensor& latent, const Conditioning& cond, std::size_t t,
                   bool conditional = true) const;

    void collect(const std::string& prefix, NamedTensors& out) const;
    std::vector<Tensor> parameters() const;
};

using Predictor =
    std::function<Tensor(const Tensor& noised, const Conditioning& cond, std::size_t t)>;

// Draws eps ~ N(0, I) and returns mean((eps - predicted)^2) as a taped
// scalar, differentiable with respect to every parameter feeding `cond` and
// the predictor.
Tensor diffusion_loss_fn(const Tensor& z, const Conditioning& cond, std::size_t t,
                         const NoiseSchedule& sched, const Predictor& predictor, Rng& rng);

Tensor diffusion_loss(const Tensor& z, const Conditioning& cond, std::size_t t,
                      const NoiseSchedule& sched, const ToyDenoiser& model, Rng& rng);

// Strictly decreasing timesteps for an S-step DDIM trajectory over the
// schedule (last step runs to the clean endpoint t == -1).
std::vector<std::ptrdiff_t> ddim_timesteps(std::size_t schedule_steps, std::size_t sample_steps);

// Deterministic DDIM trajectory from seed-driven Gaussian noise. When
// `trajectory` is non-null it receives every state from x_T to the sample.
Tensor ddim_sample(const ToyDenoiser& model, const Conditioning& cond,
                   const NoiseSchedule& sched, std::size_t steps, double cfg_scale,
                   std::uint64_t seed, std::vector<Tensor>* trajectory = nullptr);

}  // namespace hpkit::diffusion
