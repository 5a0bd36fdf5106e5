// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pipeline configuration: every cross-module dimension is validated at load
// time, before any computation runs.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hpkit/diffusion.hpp"
#include "hpkit/imadapter.hpp"
#include "hpkit/motion_bank.hpp"

namespace hpkit::config {

struct DiscretizationConfig {
    double range_min = 0.0;
    double range_max = 1.0;
    int levels = 64;
};

struct CropConfig {
    double margin = 0.1;
    double frame_width = 512.0;
    double frame_height = 512.0;
};

struct ScheduleConfig {
    std::size_t timesteps = 50;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
};

struct MetricsConfig {
    std::size_t ssim_window = 11;
    double psnr_cap = 100.0;
};

struct PathsConfig {
    std::string landmarks;
    std::string landmarks_reference;
    std::string motion_features;
    std::string appearance;
    std::string id_features;
    std::string spatial;
    std::string reference_frame;
    std::string checkpoint;
};

struct TrainSamplePaths {
    std::string latent;
    std::string motion_features;
    std::string landmarks;
};

struct TrainConfig {
    std::size_t steps = 200;
    std::vector<TrainSamplePaths> samples;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    DiscretizationConfig discretization;
    CropConfig crop;
    motion::BankConfig bank;
    adapter::AdapterConfig adapter;
    diffusion::DenoiserConfig denoiser;
    ScheduleConfig schedule;
    MetricsConfig metrics;
    double cfg_scale = 2.0;
    double grad_clip = 0.99;
    double learning_rate = 1e-3;
    double cond_dropout = 0.1;
    std::size_t sample_steps = 10;
    std::size_t grid_h = 16;
    std::size_t grid_w = 16;
    PathsConfig paths;
    TrainConfig train;

    static PipelineConfig defaults();

    std::size_t embedding_width() const { return bank.width / 2; }

    // Every violated consistency constraint, empty when the config is sound.
    std::vector<std::string> check() const;
    // Throws ConfigError listing all violations.
    void validate() const;

    // Stable serialization used for run-report hashing.
    std::string canonical_json() const;
};

// Loads and validates; relative paths resolve against the config file's
// directory. Missing keys keep their defaults.
PipelineConfig load_config(const std::string& path);

std::vector<std::string> validate_config_json(const std::string& path);

}  // namespace hpkit::config
