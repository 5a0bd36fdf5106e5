// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "hpkit/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace hpkit::diffusion {

// ---- schedule -------------------------------------------------------------

NoiseSchedule NoiseSchedule::linear(std::size_t timesteps, double beta_start, double beta_end) {
    if (timesteps == 0) throw ParameterError("schedule: need at least one timestep");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || !(beta_start <= beta_end)) {
        throw ParameterError("schedule: betas must satisfy 0 < start <= end < 1");
    }
    NoiseSchedule s;
    s.betas.resize(timesteps);
    s.alpha_bars.resize(timesteps);
    double prod = 1.0;
    for (std::size_t t = 0; t < timesteps; ++t) {
        const double frac = timesteps == 1 ? 0.0
                                           : static_cast<double>(t) /
                                                 static_cast<double>(timesteps - 1);
        s.betas[t] = beta_start + (beta_end - beta_start) * frac;
        prod *= 1.0 - s.betas[t];
        s.alpha_bars[t] = prod;
    }
    s.validate();
    return s;
}

double NoiseSchedule::alpha_bar(std::ptrdiff_t t) const {
    if (t == -1) return 1.0;
    if (t < 0 || static_cast<std::size_t>(t) >= alpha_bars.size()) {
        throw IndexError("schedule: timestep " + std::to_string(t) + " outside [0, " +
                         std::to_string(alpha_bars.size()) + ")");
    }
    return alpha_bars[static_cast<std::size_t>(t)];
}

void NoiseSchedule::validate() const {
    if (betas.empty() || betas.size() != alpha_bars.size()) {
        throw ParameterError("schedule: inconsistent beta/alpha_bar tables");
    }
    double prev = 1.0;
    for (std::size_t t = 0; t < alpha_bars.size(); ++t) {
        const double ab = alpha_bars[t];
        if (!(ab > 0.0 && ab <= 1.0)) throw ParameterError("schedule: alpha_bar outside (0, 1]");
        if (!(ab < prev)) throw ParameterError("schedule: alpha_bar must strictly decrease");
        prev = ab;
    }
    // first step stays within one beta of the clean endpoint
    if (1.0 - alpha_bars[0] > betas[0] + 1e-12) {
        throw ParameterError("schedule: alpha_bar[0] further than one beta from 1");
    }
}

// ---- core steps -------------------------------------------------------------

Tensor noising(const Tensor& z, const Tensor& eps, std::size_t t, const NoiseSchedule& sched) {
    if (z.shape() != eps.shape()) {
        throw DimensionError("noising: z " + shape_str(z.shape()) + " vs eps " +
                             shape_str(eps.shape()));
    }
    const double ab = sched.alpha_bar(static_cast<std::ptrdiff_t>(t));
    return add(scale(z, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double guidance) {
    if (eps_cond.shape() != eps_uncond.shape()) {
        throw DimensionError("cfg_combine: shape mismatch " + shape_str(eps_cond.shape()) +
                             " vs " + shape_str(eps_uncond.shape()));
    }
    if (guidance == 1.0) return eps_cond;
    if (guidance == 0.0) return eps_uncond;
    return add(eps_uncond, scale(sub(eps_cond, eps_uncond), guidance));
}

Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, std::ptrdiff_t t,
                 std::ptrdiff_t t_prev, const NoiseSchedule& sched) {
    if (x_t.shape() != eps_hat.shape()) {
        throw DimensionError("ddim_step: state " + shape_str(x_t.shape()) + " vs noise " +
                             shape_str(eps_hat.shape()));
    }
    if (t_prev >= t) {
        throw ParameterError("ddim_step: t_prev " + std::to_string(t_prev) +
                             " must precede t " + std::to_string(t));
    }
    const double ab_t = sched.alpha_bar(t);
    const double ab_p = sched.alpha_bar(t_prev);
    const Tensor x0 = scale(sub(x_t, scale(eps_hat, std::sqrt(1.0 - ab_t))), 1.0 / std::sqrt(ab_t));
    return add(scale(x0, std::sqrt(ab_p)), scale(eps_hat, std::sqrt(1.0 - ab_p)));
}

// ---- denoiser ---------------------------------------------------------------

void DenoiserConfig::validate() const {
    if (latent_channels == 0 || latent_h == 0 || latent_w == 0) {
        throw ConfigError("denoiser: latent dims must be positive");
    }
    if (width == 0 || heads == 0 || width % heads != 0) {
        throw ConfigError("denoiser: width " + std::to_string(width) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    if (blocks == 0 || mlp_ratio == 0 || time_embed_dim == 0 || time_embed_dim % 2 != 0) {
        throw ConfigError("denoiser: blocks/mlp_ratio positive, time embed even");
    }
    if (appearance_width == 0 || motion_width == 0) {
        throw ConfigError("denoiser: conditioning widths must be positive");
    }
}

Conditioning condition_pack(const Tensor& appearance, const Tensor& motion_refined,
                            const Tensor& motion_frames, const Tensor& spatial,
                            const DenoiserConfig& config) {
    if (appearance.rank() != 2 || appearance.dim(1) != config.appearance_width) {
        throw DimensionError("condition_pack: appearance " + shape_str(appearance.shape()) +
                             " expects width " + std::to_string(config.appearance_width));
    }
    for (const Tensor* m : {&motion_refined, &motion_frames}) {
        if (m->rank() != 2 || m->dim(1) != config.motion_width) {
            throw DimensionError("condition_pack: motion tokens " + shape_str(m->shape()) +
                                 " expect width " + std::to_string(config.motion_width));
        }
    }
    Conditioning cond;
    cond.appearance = appearance;
    cond.motion = concat_rows({motion_frames, motion_refined});
    if (spatial.numel() > 0) {
        const std::vector<std::size_t> latent_shape = {config.latent_channels, config.latent_h,
                                                       config.latent_w};
        if (spatial.shape() != latent_shape) {
            throw DimensionError("condition_pack: spatial map " + shape_str(spatial.shape()) +
                                 " must match latent " + shape_str(latent_shape));
        }
        cond.spatial = spatial;
        cond.has_spatial = true;
    }
    return cond;
}

ToyDenoiser ToyDenoiser::init(const DenoiserConfig& config, Tape& tape, Rng& rng) {
    config.validate();
    ToyDenoiser d;
    d.config = config;
    d.in_proj = nn::Linear::init(config.latent_channels, config.width, tape, rng);
    d.time_proj = nn::Linear::init(config.time_embed_dim, config.width, tape, rng);
    d.null_appearance = Tensor::param(
        {1, config.appearance_width},
        nn::normal_tensor({1, config.appearance_width}, rng, 0.02).data(), tape);
    d.null_motion = Tensor::param(
        {1, config.motion_width}, nn::normal_tensor({1, config.motion_width}, rng, 0.02).data(),
        tape);
    d.blocks.reserve(config.blocks);
    for (std::size_t i = 0; i < config.blocks; ++i) {
        DenoiserBlock b;
        b.ln_self = nn::LayerNorm::init(config.width, tape);
        b.self_attn = nn::Mhca::init(config.width, config.width, config.width, config.width,
                                     config.heads, tape, rng);
        b.ln_appearance = nn::LayerNorm::init(config.width, tape);
        b.appearance_attn = nn::Mhca::init(config.width, config.appearance_width, config.width,
                                           config.width, config.heads, tape, rng);
        b.ln_motion = nn::LayerNorm::init(config.width, tape);
        b.motion_attn = nn::Mhca::init(config.width, config.motion_width, config.width,
                                       config.width, config.heads, tape, rng);
        b.ln_mlp = nn::LayerNorm::init(config.width, tape);
        b.mlp = nn::Mlp::init(config.width, config.width * config.mlp_ratio, tape, rng);
        d.blocks.push_back(std::move(b));
    }
    // zero-initialized head: the untrained denoiser predicts zero noise
    d.out_proj = nn::Linear::zeros(config.width, config.latent_channels, tape);
    return d;
}

namespace {

Tensor timestep_embedding(std::size_t t, std::size_t dim) {
    const std::size_t half = dim / 2;
    std::vector<double> values(dim);
    for (std::size_t i = 0; i < half; ++i) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        values[i] = std::sin(static_cast<double>(t) * freq);
        values[half + i] = std::cos(static_cast<double>(t) * freq);
    }
    return Tensor::from({dim}, std::move(values));
}

}  // namespace

Tensor ToyDenoiser::forward(const Tensor& latent, const Conditioning& cond, std::size_t t,
                            bool conditional) const {
    const std::vector<std::size_t> latent_shape = {config.latent_channels, config.latent_h,
                                                   config.latent_w};
    if (latent.shape() != latent_shape) {
        throw DimensionError("denoiser: latent " + shape_str(latent.shape()) + " expected " +
                             shape_str(latent_shape));
    }
    const Tensor& appearance = conditional ? cond.appearance : null_appearance;
    const Tensor& motion = conditional ? cond.motion : null_motion;
    if (conditional) {
        if (appearance.rank() != 2 || appearance.dim(1) != config.appearance_width ||
            motion.rank() != 2 || motion.dim(1) != config.motion_width) {
            throw DimensionError("denoiser: conditioning widths do not match config");
        }
    }

    Tensor x = grid_to_tokens(latent);
    if (cond.has_spatial) x = add(x, grid_to_tokens(cond.spatial));
    x = in_proj.forward(x);
    x = add_row_broadcast(x, time_proj.forward_vec(timestep_embedding(t, config.time_embed_dim)));

    for (const DenoiserBlock& b : blocks) {
        const Tensor normed_self = b.ln_self.forward(x);
        x = add(x, b.self_attn.forward(normed_self, normed_self));
        x = add(x, b.appearance_attn.forward(b.ln_appearance.forward(x), appearance));
        x = add(x, b.motion_attn.forward(b.ln_motion.forward(x), motion));
        x = add(x, b.mlp.forward(b.ln_mlp.forward(x)));
    }
    x = out_proj.forward(x);
    return tokens_to_grid(x, config.latent_h, config.latent_w);
}

void ToyDenoiser::collect(const std::string& prefix, NamedTensors& out) const {
    in_proj.collect(prefix + ".in_proj", out);
    time_proj.collect(prefix + ".time_proj", out);
    out.emplace_back(prefix + ".null_appearance", null_appearance);
    out.emplace_back(prefix + ".null_motion", null_motion);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string base = prefix + ".block" + std::to_string(i);
        blocks[i].ln_self.collect(base + ".ln_self", out);
        blocks[i].self_attn.collect(base + ".self_attn", out);
        blocks[i].ln_appearance.collect(base + ".ln_appearance", out);
        blocks[i].appearance_attn.collect(base + ".appearance_attn", out);
        blocks[i].ln_motion.collect(base + ".ln_motion", out);
        blocks[i].motion_attn.collect(base + ".motion_attn", out);
        blocks[i].ln_mlp.collect(base + ".ln_mlp", out);
        blocks[i].mlp.collect(base + ".mlp", out);
    }
    out_proj.collect(prefix + ".out_proj", out);
}

std::vector<Tensor> ToyDenoiser::parameters() const {
    NamedTensors named;
    collect("denoiser", named);
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (auto& [name, t] : named) out.push_back(t);
    return out;
}

// ---- loss and sampling ----------------------------------------------------

Tensor diffusion_loss_fn(const Tensor& z, const Conditioning& cond, std::size_t t,
                         const NoiseSchedule& sched, const Predictor& predictor, Rng& rng) {
    std::vector<double> noise(z.numel());
    for (double& v : noise) v = rng.normal();
    const Tensor eps = Tensor::from(z.shape(), std::move(noise));
    const Tensor noised = noising(z, eps, t, sched);
    const Tensor predicted = predictor(noised, cond, t);
    if (predicted.shape() != eps.shape()) {
        throw DimensionError("diffusion_loss: prediction " + shape_str(predicted.shape()) +
                             " does not match noise " + shape_str(eps.shape()));
    }
    const Tensor diff = sub(eps, predicted);
    return mean(mul(diff, diff));
}

Tensor diffusion_loss(const Tensor& z, const Conditioning& cond, std::size_t t,
                      const NoiseSchedule& sched, const ToyDenoiser& model, Rng& rng) {
    return diffusion_loss_fn(
        z, cond, t, sched,
        [&model](const Tensor& noised, const Conditioning& c, std::size_t step) {
            return model.forward(noised, c, step, /*conditional=*/true);
        },
        rng);
}

std::vector<std::ptrdiff_t> ddim_timesteps(std::size_t schedule_steps, std::size_t sample_steps) {
    if (schedule_steps == 0) throw ParameterError("ddim_timesteps: empty schedule");
    if (sample_steps == 0) throw ParameterError("ddim_timesteps: need at least one step");
    sample_steps = std::min(sample_steps, schedule_steps);
    std::vector<std::ptrdiff_t> ts;
    ts.reserve(sample_steps);
    if (sample_steps == 1) {
        ts.push_back(static_cast<std::ptrdiff_t>(schedule_steps) - 1);
        return ts;
    }
    for (std::size_t i = 0; i < sample_steps; ++i) {
        const double pos = static_cast<double>(schedule_steps - 1) *
                           static_cast<double>(sample_steps - 1 - i) /
                           static_cast<double>(sample_steps - 1);
        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(std::llround(pos));
        if (ts.empty() || ts.back() != t) ts.push_back(t);
    }
    return ts;
}

Tensor ddim_sample(const ToyDenoiser& model, const Conditioning& cond,
                   const NoiseSchedule& sched, std::size_t steps, double cfg_scale,
                   std::uint64_t seed, std::vector<Tensor>* trajectory) {
    Rng rng(seed);
    std::vector<double> noise(model.config.latent_channels * model.config.latent_h *
                              model.config.latent_w);
    for (double& v : noise) v = rng.normal();
    Tensor x = Tensor::from(
        {model.config.latent_channels, model.config.latent_h, model.config.latent_w},
        std::move(noise));
    if (trajectory) trajectory->push_back(x);

    const auto ts = ddim_timesteps(sched.timesteps(), steps);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const std::ptrdiff_t t = ts[i];
        const std::ptrdiff_t t_prev = (i + 1 < ts.size()) ? ts[i + 1] : -1;
        const Tensor eps_cond = model.forward(x, cond, static_cast<std::size_t>(t), true);
        Tensor eps_hat = eps_cond;
        if (cfg_scale != 1.0) {
            const Tensor eps_uncond = model.forward(x, cond, static_cast<std::size_t>(t), false);
            eps_hat = cfg_combine(eps_cond, eps_uncond, cfg_scale);
        }
        x = ddim_step(x, eps_hat, t, t_prev, sched);
        if (trajectory) trajectory->push_back(x);
    }
    return x;
}

}  // namespace hpkit::diffusion
