// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "hpkit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "hpkit/metrics.hpp"
#include "hpkit/pose.hpp"
#include "hpkit/tensor_io.hpp"

namespace hpkit::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << j.dump(2) << '\n';
}

landmarks::LandmarkSequence require_landmarks(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("config: paths.") + what + " is not set");
    return landmarks::load_landmarks(path);
}

Tensor require_tensor(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("config: paths.") + what + " is not set");
    return read_tensor(path);
}

}  // namespace

Tensor latent_to_frame(const Tensor& latent) {
    if (latent.rank() != 3) {
        throw DimensionError("latent_to_frame: expects [C,H,W], got " + shape_str(latent.shape()));
    }
    const std::size_t c = latent.dim(0), h = latent.dim(1), w = latent.dim(2);
    std::vector<double> frame(h * w * c);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double v = 0.5 + 0.25 * latent.data()[(ch * h + y) * w + x];
                frame[(y * w + x) * c + ch] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return Tensor::from({h, w, c}, std::move(frame));
}

RunOutcome run_pipeline(const config::PipelineConfig& cfg, const std::string& out_dir) {
    RunOutcome outcome;
    json& report = outcome.report;
    report["config_hash"] = hex64(fnv1a64(cfg.canonical_json()));
    report["seed"] = cfg.seed;
    report["stages"] = json::array();

    fs::create_directories(out_dir);
    const fs::path out(out_dir);

    std::string current_stage;
    auto stage_done = [&](const std::string& name, const std::vector<std::string>& artifacts) {
        report["stages"].push_back({{"name", name}, {"artifacts", artifacts}});
    };

    try {
        // -- load-landmarks
        current_stage = "load-landmarks";
        const auto seq = require_landmarks(cfg.paths.landmarks, "landmarks");
        stage_done(current_stage, {});

        // -- crop-region
        current_stage = "crop-region";
        const auto region =
            landmarks::face_crop_region(seq.frames[0], seq.index_map, cfg.crop.frame_width,
                                        cfg.crop.frame_height, cfg.crop.margin);
        write_json(out / "crop_region.json", {{"left", region.left},
                                              {"top", region.top},
                                              {"right", region.right},
                                              {"bottom", region.bottom}});
        stage_done(current_stage, {"crop_region.json"});

        // -- intensity
        current_stage = "intensity";
        const auto mi = landmarks::motion_intensity(seq, cfg.discretization.range_min,
                                                    cfg.discretization.range_max,
                                                    cfg.discretization.levels);
        write_json(out / "intensity.json", {{"I_e", mi.expression},
                                            {"I_h", mi.head},
                                            {"level_e", mi.expression_level},
                                            {"level_h", mi.head_level}});
        stage_done(current_stage, {"intensity.json"});

        // -- init-params
        current_stage = "init-params";
        Tape tape;
        auto system = system::PortraitSystem::init(cfg, tape, cfg.seed);
        if (!cfg.paths.checkpoint.empty()) {
            nn::load_named(system.named_params(), read_container(cfg.paths.checkpoint));
        }
        write_container((out / "params.hpt").string(), system.named_params());
        stage_done(current_stage, {"params.hpt"});

        // -- embedding
        current_stage = "embedding";
        const Tensor intensity_vec =
            system.intensity_embedding(mi.expression_level, mi.head_level);
        write_tensor((out / "es.hpt").string(), intensity_vec);
        stage_done(current_stage, {"es.hpt"});

        // -- bank-forward
        current_stage = "bank-forward";
        const Tensor motion_frames = require_tensor(cfg.paths.motion_features, "motion_features");
        const Tensor refined = system.bank.forward(motion_frames, intensity_vec);
        write_tensor((out / "refined_motion.hpt").string(), refined);
        stage_done(current_stage, {"refined_motion.hpt"});

        // -- adapter-forward
        current_stage = "adapter-forward";
        const Tensor appearance = require_tensor(cfg.paths.appearance, "appearance");
        const Tensor id_tokens = require_tensor(cfg.paths.id_features, "id_features");
        const Tensor adapted =
            system.adapter.forward(appearance, cfg.grid_h, cfg.grid_w, id_tokens);
        write_tensor((out / "appearance_adapted.hpt").string(), adapted);
        stage_done(current_stage, {"appearance_adapted.hpt"});

        // -- condition-pack
        current_stage = "condition-pack";
        Tensor spatial;
        if (!cfg.paths.spatial.empty()) spatial = read_tensor(cfg.paths.spatial);
        const auto cond =
            diffusion::condition_pack(adapted, refined, motion_frames, spatial, cfg.denoiser);
        write_tensor((out / "motion_tokens.hpt").string(), cond.motion);
        stage_done(current_stage, {"motion_tokens.hpt"});

        // -- sample
        current_stage = "sample";
        std::vector<Tensor> trajectory;
        const Tensor sample =
            diffusion::ddim_sample(system.denoiser, cond,
                                   diffusion::NoiseSchedule::linear(cfg.schedule.timesteps,
                                                                    cfg.schedule.beta_start,
                                                                    cfg.schedule.beta_end),
                                   cfg.sample_steps, cfg.cfg_scale, cfg.seed + 1, &trajectory);
        write_tensor((out / "sample.hpt").string(), sample);
        {
            const std::size_t n = trajectory.size();
            const auto& ls = sample.shape();
            std::vector<double> stacked;
            stacked.reserve(n * sample.numel());
            for (const Tensor& t : trajectory) {
                stacked.insert(stacked.end(), t.data().begin(), t.data().end());
            }
            write_tensor((out / "trajectory.hpt").string(),
                         Tensor::from({n, ls[0], ls[1], ls[2]}, std::move(stacked)));
        }
        stage_done(current_stage, {"sample.hpt", "trajectory.hpt"});

        // -- metrics
        current_stage = "metrics";
        json metrics_report = json::object();
        if (!cfg.paths.landmarks_reference.empty()) {
            const auto ref_seq = landmarks::load_landmarks(cfg.paths.landmarks_reference);
            const double raw = metrics::lmd(seq, ref_seq);
            metrics_report["LMD"] = metrics::lmd_scaled(raw);
            metrics_report["lmd_raw"] = raw;
        }
        if (!cfg.paths.reference_frame.empty()) {
            const Tensor reference = read_tensor(cfg.paths.reference_frame);
            const auto pair = metrics::FramePair::make(latent_to_frame(sample), reference);
            metrics_report["PSNR"] = metrics::psnr(pair, cfg.metrics.psnr_cap);
            metrics::SsimParams sp;
            sp.window = cfg.metrics.ssim_window;
            metrics_report["SSIM"] = metrics::ssim(pair, sp);
        }
        write_json(out / "metrics.json", metrics_report);
        report["metrics"] = metrics_report;
        stage_done(current_stage, {"metrics.json"});

        report["status"] = "ok";
        outcome.ok = true;
    } catch (const std::exception& e) {
        report["status"] = "failed";
        report["failed_stage"] = current_stage;
        report["error"] = e.what();
        outcome.ok = false;
        outcome.failed_stage = current_stage;
        outcome.error = e.what();
    }
    write_json(out / "report.json", report);
    return outcome;
}

// ---- validation -----------------------------------------------------------

FileKind detect_file_kind(const std::string& path) {
    const fs::path p(path);
    if (p.extension() == ".hpt") return FileKind::kTensor;
    if (p.extension() == ".json") {
        std::ifstream f(path);
        if (!f) return FileKind::kConfig;
        json j;
        try {
            f >> j;
        } catch (const json::exception&) {
            return FileKind::kConfig;
        }
        if (j.contains("frames")) return FileKind::kLandmarks;
        if (j.contains("points")) return FileKind::kSkeleton;
        return FileKind::kConfig;
    }
    return FileKind::kTensor;
}

std::vector<std::string> validate_file(const std::string& path, FileKind kind) {
    if (kind == FileKind::kAuto) kind = detect_file_kind(path);
    switch (kind) {
        case FileKind::kTensor:
            return validate_tensor_file(path);
        case FileKind::kLandmarks:
            return landmarks::validate_landmark_json(path);
        case FileKind::kSkeleton:
            return pose::validate_skeleton_json(path);
        case FileKind::kConfig:
            return config::validate_config_json(path);
        case FileKind::kAuto:
            break;
    }
    return {"unknown file kind"};
}

// ---- training / sampling --------------------------------------------------

nlohmann::json train_toy_run(const config::PipelineConfig& cfg, std::size_t steps_override,
                             std::uint64_t seed_override, bool has_overrides,
                             const std::string& out_dir) {
    config::PipelineConfig effective = cfg;
    if (has_overrides) {
        if (steps_override > 0) effective.train.steps = steps_override;
        effective.seed = seed_override;
    }
    if (effective.train.samples.empty()) {
        throw ConfigError("train: config lists no train.samples");
    }

    const Tensor appearance = require_tensor(effective.paths.appearance, "appearance");
    const Tensor id_tokens = require_tensor(effective.paths.id_features, "id_features");
    Tensor spatial;
    if (!effective.paths.spatial.empty()) spatial = read_tensor(effective.paths.spatial);

    std::vector<system::TrainSample> samples;
    for (const auto& sp : effective.train.samples) {
        system::TrainSample s;
        s.latent = require_tensor(sp.latent, "train latent");
        s.motion_frames = require_tensor(sp.motion_features, "train motion_features");
        const auto seq = require_landmarks(sp.landmarks, "train landmarks");
        const auto mi = landmarks::motion_intensity(seq, effective.discretization.range_min,
                                                    effective.discretization.range_max,
                                                    effective.discretization.levels);
        s.level_e = mi.expression_level;
        s.level_h = mi.head_level;
        samples.push_back(std::move(s));
    }

    Tape tape;
    auto system = system::PortraitSystem::init(effective, tape, effective.seed);
    if (!effective.paths.checkpoint.empty()) {
        nn::load_named(system.named_params(), read_container(effective.paths.checkpoint));
    }

    system::TrainOptions options;
    options.steps = effective.train.steps;
    options.learning_rate = effective.learning_rate;
    options.grad_clip = effective.grad_clip;
    options.cond_dropout = effective.cond_dropout;
    options.seed = effective.seed;

    const auto sched = diffusion::NoiseSchedule::linear(
        effective.schedule.timesteps, effective.schedule.beta_start, effective.schedule.beta_end);
    const auto result =
        system::train_toy(system, tape, samples, appearance, id_tokens, spatial, sched, options);

    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    write_container((out / "params.hpt").string(), system.named_params());
    {
        std::ofstream f(out / "config.json", std::ios::trunc);
        if (!f) throw IoError("cannot write checkpoint config");
        f << effective.canonical_json() << '\n';
    }
    json report;
    report["steps"] = options.steps;
    report["seed"] = effective.seed;
    report["eval_loss_start"] = result.eval_loss_start;
    report["eval_loss_end"] = result.eval_loss_end;
    report["loss_history"] = result.loss_history;
    write_json(out / "train_report.json", report);
    return report;
}

void sample_toy_run(const std::string& ckpt_dir, std::size_t steps, double cfg_scale,
                    std::uint64_t seed, const std::string& out_path) {
    const fs::path ckpt(ckpt_dir);
    const auto cfg = config::load_config((ckpt / "config.json").string());

    Tape tape;
    auto system = system::PortraitSystem::init(cfg, tape, cfg.seed);
    nn::load_named(system.named_params(), read_container((ckpt / "params.hpt").string()));

    const auto seq = require_landmarks(cfg.paths.landmarks, "landmarks");
    const auto mi =
        landmarks::motion_intensity(seq, cfg.discretization.range_min,
                                    cfg.discretization.range_max, cfg.discretization.levels);
    const Tensor motion_frames = require_tensor(cfg.paths.motion_features, "motion_features");
    const Tensor appearance = require_tensor(cfg.paths.appearance, "appearance");
    const Tensor id_tokens = require_tensor(cfg.paths.id_features, "id_features");
    Tensor spatial;
    if (!cfg.paths.spatial.empty()) spatial = read_tensor(cfg.paths.spatial);

    const auto cond = system.condition(motion_frames, appearance, id_tokens, spatial,
                                       mi.expression_level, mi.head_level);
    const auto sched = diffusion::NoiseSchedule::linear(cfg.schedule.timesteps,
                                                        cfg.schedule.beta_start,
                                                        cfg.schedule.beta_end);
    std::vector<Tensor> trajectory;
    const Tensor sample =
        diffusion::ddim_sample(system.denoiser, cond, sched, steps, cfg_scale, seed, &trajectory);

    const auto& ls = sample.shape();
    std::vector<double> stacked;
    stacked.reserve(trajectory.size() * sample.numel());
    for (const Tensor& t : trajectory) {
        stacked.insert(stacked.end(), t.data().begin(), t.data().end());
    }
    write_tensor(out_path, Tensor::from({trajectory.size(), ls[0], ls[1], ls[2]},
                                        std::move(stacked)));
}

}  // namespace hpkit::pipeline
