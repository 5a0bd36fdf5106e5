// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration behind the CLI: staged pipeline execution with a
// reproducible run report, file validation, toy training and sampling.

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hpkit/config.hpp"
#include "hpkit/system.hpp"

namespace hpkit::pipeline {

struct RunOutcome {
    bool ok = false;
    std::string failed_stage;
    std::string error;
    nlohmann::json report;
};

// Executes landmarks -> crop-region -> intensity -> embedding -> bank-forward
// -> adapter-forward -> condition-pack -> sample -> metrics. Every artifact
// and report.json land in out_dir; nothing is written elsewhere. Stage
// failures are captured in the outcome (and the report), not thrown.
RunOutcome run_pipeline(const config::PipelineConfig& cfg, const std::string& out_dir);

enum class FileKind { kAuto, kTensor, kLandmarks, kSkeleton, kConfig };

FileKind detect_file_kind(const std::string& path);

// Full diagnostics for one file; empty result means valid.
std::vector<std::string> validate_file(const std::string& path, FileKind kind = FileKind::kAuto);

// Trains on cfg.train.samples and writes params.hpt, config.json and
// train_report.json into out_dir. Returns the training report.
nlohmann::json train_toy_run(const config::PipelineConfig& cfg, std::size_t steps_override,
                             std::uint64_t seed_override, bool has_overrides,
                             const std::string& out_dir);

// Loads a checkpoint directory produced by train_toy_run, samples a DDIM
// trajectory and writes it (steps+1 stacked states) to out_path.
void sample_toy_run(const std::string& ckpt_dir, std::size_t steps, double cfg_scale,
                    std::uint64_t seed, const std::string& out_path);

// [C,H,W] latent -> [H,W,C] frame in [0,1] via a fixed affine squash.
Tensor latent_to_frame(const Tensor& latent);

}  // namespace hpkit::pipeline
