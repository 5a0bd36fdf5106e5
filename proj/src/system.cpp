// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "hpkit/system.hpp"

namespace hpkit::system {

PortraitSystem PortraitSystem::init(const config::PipelineConfig& cfg, Tape& tape,
                                    std::uint64_t param_seed) {
    cfg.validate();
    Rng rng(param_seed);
    PortraitSystem s{
        cfg,
        landmarks::IntensityEmbedding::init(static_cast<std::size_t>(cfg.discretization.levels),
                                            cfg.embedding_width(), tape, rng,
                                            cfg.bank.init_mode),
        motion::MemoryBank::init(cfg.bank, tape, rng),
        adapter::IMAdapter::init(cfg.adapter, tape, rng),
        diffusion::ToyDenoiser::init(cfg.denoiser, tape, rng),
    };
    return s;
}

Tensor PortraitSystem::intensity_embedding(int level_e, int level_h) const {
    return embedding.lookup(level_e, level_h);
}

diffusion::Conditioning PortraitSystem::condition(const Tensor& motion_frames,
                                                  const Tensor& appearance,
                                                  const Tensor& id_tokens, const Tensor& spatial,
                                                  int level_e, int level_h) const {
    const Tensor intensity = intensity_embedding(level_e, level_h);
    const Tensor refined = bank.forward(motion_frames, intensity);
    const Tensor adapted = adapter.forward(appearance, cfg.grid_h, cfg.grid_w, id_tokens);
    return diffusion::condition_pack(adapted, refined, motion_frames, spatial, cfg.denoiser);
}

NamedTensors PortraitSystem::named_params() const {
    NamedTensors out;
    embedding.collect("embedding", out);
    bank.collect("bank", out);
    adapter.collect("adapter", out);
    denoiser.collect("denoiser", out);
    return out;
}

std::vector<Tensor> PortraitSystem::params() const {
    NamedTensors named = named_params();
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (auto& [name, t] : named) out.push_back(t);
    return out;
}

namespace {

// Deterministic probe set approximating the loss expectation: a uniform
// timestep grid with two fixed noise draws per point.
double eval_probe_loss(const PortraitSystem& system, Tape& tape,
                       const std::vector<TrainSample>& samples, const Tensor& appearance,
                       const Tensor& id_tokens, const Tensor& spatial,
                       const diffusion::NoiseSchedule& sched) {
    const std::size_t T = sched.timesteps();
    std::vector<std::size_t> t_probes;
    for (int i = 0; i < 5; ++i) {
        t_probes.push_back(std::min(T - 1, T / 10 + i * (T / 5)));
    }
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t si = 0; si < samples.size(); ++si) {
        const TrainSample& s = samples[si];
        const auto cond = system.condition(s.motion_frames, appearance, id_tokens, spatial,
                                           s.level_e, s.level_h);
        for (std::size_t t : t_probes) {
            for (std::uint64_t draw = 0; draw < 2; ++draw) {
                Rng probe_rng(0x9e3779b9u + 1000 * si + 10 * t + draw);
                const Tensor loss = diffusion::diffusion_loss(s.latent, cond, t, sched,
                                                              system.denoiser, probe_rng);
                total += loss.value();
                ++count;
            }
        }
        tape.reset();
    }
    return total / static_cast<double>(count);
}

}  // namespace

TrainResult train_toy(PortraitSystem& system, Tape& tape, const std::vector<TrainSample>& samples,
                      const Tensor& appearance, const Tensor& id_tokens, const Tensor& spatial,
                      const diffusion::NoiseSchedule& sched, const TrainOptions& options) {
    if (samples.empty()) throw ParameterError("train_toy: no training samples");
    const std::vector<Tensor> params = system.params();
    nn::Adam optimizer;
    optimizer.lr = options.learning_rate;
    Rng rng(options.seed);

    TrainResult result;
    result.eval_loss_start =
        eval_probe_loss(system, tape, samples, appearance, id_tokens, spatial, sched);

    for (std::size_t step = 0; step < options.steps; ++step) {
        tape.reset();
        zero_grads(params);
        // full batch: every sample contributes several (t, eps) draws per step
        std::vector<Tensor> pieces;
        pieces.reserve(samples.size() * options.draws_per_sample);
        for (const TrainSample& s : samples) {
            const auto cond = system.condition(s.motion_frames, appearance, id_tokens, spatial,
                                               s.level_e, s.level_h);
            for (std::size_t draw = 0; draw < options.draws_per_sample; ++draw) {
                const std::size_t t =
                    static_cast<std::size_t>(rng.uniform_int(sched.timesteps()));
                const bool conditional = rng.uniform() >= options.cond_dropout;
                std::vector<double> noise(s.latent.numel());
                for (double& v : noise) v = rng.normal();
                const Tensor eps = Tensor::from(s.latent.shape(), std::move(noise));
                const Tensor noised = diffusion::noising(s.latent, eps, t, sched);
                const Tensor predicted = system.denoiser.forward(noised, cond, t, conditional);
                const Tensor diff = sub(eps, predicted);
                pieces.push_back(mean(mul(diff, diff)));
            }
        }
        Tensor loss = pieces[0];
        for (std::size_t i = 1; i < pieces.size(); ++i) loss = add(loss, pieces[i]);
        loss = scale(loss, 1.0 / static_cast<double>(pieces.size()));

        backward(loss);
        clip_grad_norm(params, options.grad_clip);
        if (options.cosine_decay) {
            const double progress =
                static_cast<double>(step) / static_cast<double>(options.steps);
            optimizer.lr = options.learning_rate *
                           (0.1 + 0.45 * (1.0 + std::cos(M_PI * progress)));
        }
        optimizer.step(params);
        result.loss_history.push_back(loss.value());
    }
    tape.reset();
    result.eval_loss_end =
        eval_probe_loss(system, tape, samples, appearance, id_tokens, spatial, sched);
    return result;
}

}  // namespace hpkit::system
