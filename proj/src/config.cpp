// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "hpkit/config.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hpkit::config {

namespace {

using nlohmann::json;

std::string resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return p;
    std::filesystem::path path(p);
    if (path.is_absolute()) return path.lexically_normal().string();
    return (base / path).lexically_normal().string();
}

void parse_into(PipelineConfig& cfg, const json& j, const std::filesystem::path& base) {
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("discretization")) {
        const auto& d = j["discretization"];
        if (d.contains("range")) {
            cfg.discretization.range_min = d["range"].at(0).get<double>();
            cfg.discretization.range_max = d["range"].at(1).get<double>();
        }
        cfg.discretization.levels = d.value("levels", cfg.discretization.levels);
    }
    if (j.contains("crop")) {
        const auto& c = j["crop"];
        cfg.crop.margin = c.value("margin", cfg.crop.margin);
        cfg.crop.frame_width = c.value("frame_width", cfg.crop.frame_width);
        cfg.crop.frame_height = c.value("frame_height", cfg.crop.frame_height);
    }
    if (j.contains("bank")) {
        const auto& b = j["bank"];
        cfg.bank.memory_count = b.value("memories", cfg.bank.memory_count);
        cfg.bank.width = b.value("width", cfg.bank.width);
        cfg.bank.heads = b.value("heads", cfg.bank.heads);
        cfg.bank.blocks = b.value("blocks", cfg.bank.blocks);
        cfg.bank.mlp_ratio = b.value("mlp_ratio", cfg.bank.mlp_ratio);
        const std::string init = b.value("init", std::string("variance"));
        if (init == "variance") {
            cfg.bank.init_mode = nn::ScaledNormal::kVariance;
        } else if (init == "stddev") {
            cfg.bank.init_mode = nn::ScaledNormal::kStdDev;
        } else {
            throw ConfigError("config: bank.init must be 'variance' or 'stddev', got '" + init + "'");
        }
    }
    if (j.contains("adapter")) {
        const auto& a = j["adapter"];
        cfg.adapter.appearance_width = a.value("appearance_width", cfg.adapter.appearance_width);
        cfg.adapter.id_width = a.value("id_width", cfg.adapter.id_width);
        cfg.adapter.rank = a.value("rank", cfg.adapter.rank);
        cfg.adapter.heads = a.value("heads", cfg.adapter.heads);
        if (a.contains("kernels")) {
            cfg.adapter.kernels.clear();
            for (const auto& k : a["kernels"]) cfg.adapter.kernels.push_back(k.get<std::size_t>());
        }
    }
    if (j.contains("denoiser")) {
        const auto& d = j["denoiser"];
        cfg.denoiser.latent_channels = d.value("latent_channels", cfg.denoiser.latent_channels);
        cfg.denoiser.latent_h = d.value("latent_h", cfg.denoiser.latent_h);
        cfg.denoiser.latent_w = d.value("latent_w", cfg.denoiser.latent_w);
        cfg.denoiser.width = d.value("width", cfg.denoiser.width);
        cfg.denoiser.heads = d.value("heads", cfg.denoiser.heads);
        cfg.denoiser.blocks = d.value("blocks", cfg.denoiser.blocks);
        cfg.denoiser.mlp_ratio = d.value("mlp_ratio", cfg.denoiser.mlp_ratio);
        cfg.denoiser.time_embed_dim = d.value("time_embed_dim", cfg.denoiser.time_embed_dim);
    }
    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        cfg.schedule.timesteps = s.value("timesteps", cfg.schedule.timesteps);
        cfg.schedule.beta_start = s.value("beta_start", cfg.schedule.beta_start);
        cfg.schedule.beta_end = s.value("beta_end", cfg.schedule.beta_end);
    }
    if (j.contains("metrics")) {
        const auto& m = j["metrics"];
        cfg.metrics.ssim_window = m.value("ssim_window", cfg.metrics.ssim_window);
        cfg.metrics.psnr_cap = m.value("psnr_cap", cfg.metrics.psnr_cap);
    }
    cfg.cfg_scale = j.value("cfg_scale", cfg.cfg_scale);
    cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.cond_dropout = j.value("cond_dropout", cfg.cond_dropout);
    cfg.sample_steps = j.value("sample_steps", cfg.sample_steps);
    if (j.contains("grid")) {
        cfg.grid_h = j["grid"].value("h", cfg.grid_h);
        cfg.grid_w = j["grid"].value("w", cfg.grid_w);
    }
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        cfg.paths.landmarks = resolve(base, p.value("landmarks", std::string()));
        cfg.paths.landmarks_reference = resolve(base, p.value("landmarks_reference", std::string()));
        cfg.paths.motion_features = resolve(base, p.value("motion_features", std::string()));
        cfg.paths.appearance = resolve(base, p.value("appearance", std::string()));
        cfg.paths.id_features = resolve(base, p.value("id_features", std::string()));
        cfg.paths.spatial = resolve(base, p.value("spatial", std::string()));
        cfg.paths.reference_frame = resolve(base, p.value("reference_frame", std::string()));
        cfg.paths.checkpoint = resolve(base, p.value("checkpoint", std::string()));
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        cfg.train.steps = t.value("steps", cfg.train.steps);
        if (t.contains("samples")) {
            cfg.train.samples.clear();
            for (const auto& s : t["samples"]) {
                TrainSamplePaths sp;
                sp.latent = resolve(base, s.value("latent", std::string()));
                sp.motion_features = resolve(base, s.value("motion_features", std::string()));
                sp.landmarks = resolve(base, s.value("landmarks", std::string()));
                cfg.train.samples.push_back(std::move(sp));
            }
        }
    }
    // widths of the conditioning streams follow the producing modules
    cfg.denoiser.appearance_width = cfg.adapter.appearance_width;
    cfg.denoiser.motion_width = cfg.bank.width;
}

}  // namespace

PipelineConfig PipelineConfig::defaults() { return PipelineConfig{}; }

std::vector<std::string> PipelineConfig::check() const {
    std::vector<std::string> problems;
    auto note = [&](const std::string& msg) { problems.push_back(msg); };

    if (discretization.levels < 2) note("discretization.levels must be at least 2");
    if (!(discretization.range_min < discretization.range_max)) {
        note("discretization.range must be non-empty");
    }
    if (crop.margin < 0.0) note("crop.margin must be non-negative");
    if (!(crop.frame_width > 0.0) || !(crop.frame_height > 0.0)) {
        note("crop frame size must be positive");
    }
    try {
        bank.validate();
    } catch (const Error& e) {
        note(e.what());
    }
    if (bank.width % 2 != 0) {
        note("bank.width must be even so two embedding tables concatenate to it");
    }
    try {
        adapter.validate();
    } catch (const Error& e) {
        note(e.what());
    }
    try {
        denoiser.validate();
    } catch (const Error& e) {
        note(e.what());
    }
    if (denoiser.appearance_width != adapter.appearance_width) {
        note("denoiser appearance width must match the adapter output width");
    }
    if (denoiser.motion_width != bank.width) {
        note("denoiser motion width must match the bank width");
    }
    if (schedule.timesteps == 0) note("schedule.timesteps must be positive");
    if (!(schedule.beta_start > 0.0) || !(schedule.beta_end < 1.0) ||
        !(schedule.beta_start <= schedule.beta_end)) {
        note("schedule betas must satisfy 0 < start <= end < 1");
    }
    if (!(cfg_scale >= 0.0)) note("cfg_scale must be non-negative");
    if (!(grad_clip > 0.0)) note("grad_clip must be positive");
    if (!(learning_rate > 0.0)) note("learning_rate must be positive");
    if (cond_dropout < 0.0 || cond_dropout > 1.0) note("cond_dropout must lie in [0, 1]");
    if (sample_steps == 0) note("sample_steps must be positive");
    if (grid_h == 0 || grid_w == 0) note("grid dimensions must be positive");
    if (metrics.ssim_window < 3 || metrics.ssim_window % 2 == 0) {
        note("metrics.ssim_window must be odd and at least 3");
    }
    if (!(metrics.psnr_cap > 0.0)) note("metrics.psnr_cap must be positive");
    return problems;
}

void PipelineConfig::validate() const {
    const auto problems = check();
    if (problems.empty()) return;
    std::string msg = "config: " + std::to_string(problems.size()) + " violation(s):";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
}

std::string PipelineConfig::canonical_json() const {
    json j;
    j["seed"] = seed;
    j["discretization"] = {{"range", {discretization.range_min, discretization.range_max}},
                           {"levels", discretization.levels}};
    j["crop"] = {{"margin", crop.margin},
                 {"frame_width", crop.frame_width},
                 {"frame_height", crop.frame_height}};
    j["bank"] = {{"memories", bank.memory_count},
                 {"width", bank.width},
                 {"heads", bank.heads},
                 {"blocks", bank.blocks},
                 {"mlp_ratio", bank.mlp_ratio},
                 {"init", bank.init_mode == nn::ScaledNormal::kVariance ? "variance" : "stddev"}};
    j["adapter"] = {{"appearance_width", adapter.appearance_width},
                    {"id_width", adapter.id_width},
                    {"rank", adapter.rank},
                    {"kernels", adapter.kernels},
                    {"heads", adapter.heads}};
    j["denoiser"] = {{"latent_channels", denoiser.latent_channels},
                     {"latent_h", denoiser.latent_h},
                     {"latent_w", denoiser.latent_w},
                     {"width", denoiser.width},
                     {"heads", denoiser.heads},
                     {"blocks", denoiser.blocks},
                     {"mlp_ratio", denoiser.mlp_ratio},
                     {"time_embed_dim", denoiser.time_embed_dim}};
    j["schedule"] = {{"timesteps", schedule.timesteps},
                     {"beta_start", schedule.beta_start},
                     {"beta_end", schedule.beta_end}};
    j["metrics"] = {{"ssim_window", metrics.ssim_window}, {"psnr_cap", metrics.psnr_cap}};
    j["cfg_scale"] = cfg_scale;
    j["grad_clip"] = grad_clip;
    j["learning_rate"] = learning_rate;
    j["cond_dropout"] = cond_dropout;
    j["sample_steps"] = sample_steps;
    j["grid"] = {{"h", grid_h}, {"w", grid_w}};
    j["paths"] = {{"landmarks", paths.landmarks},
                  {"landmarks_reference", paths.landmarks_reference},
                  {"motion_features", paths.motion_features},
                  {"appearance", paths.appearance},
                  {"id_features", paths.id_features},
                  {"spatial", paths.spatial},
                  {"reference_frame", paths.reference_frame},
                  {"checkpoint", paths.checkpoint}};
    json samples = json::array();
    for (const auto& s : train.samples) {
        samples.push_back({{"latent", s.latent},
                           {"motion_features", s.motion_features},
                           {"landmarks", s.landmarks}});
    }
    j["train"] = {{"steps", train.steps}, {"samples", samples}};
    return j.dump(2);
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    PipelineConfig cfg = PipelineConfig::defaults();
    try {
        parse_into(cfg, j, std::filesystem::path(path).parent_path());
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    cfg.validate();
    return cfg;
}

std::vector<std::string> validate_config_json(const std::string& path) {
    std::vector<std::string> diags;
    std::ifstream f(path);
    if (!f) {
        diags.push_back("cannot open " + path);
        return diags;
    }
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        diags.emplace_back(std::string("JSON parse error: ") + e.what());
        return diags;
    }
    PipelineConfig cfg = PipelineConfig::defaults();
    try {
        parse_into(cfg, j, std::filesystem::path(path).parent_path());
    } catch (const Error& e) {
        diags.emplace_back(e.what());
        return diags;
    } catch (const json::exception& e) {
        diags.emplace_back(std::string("schema error: ") + e.what());
        return diags;
    }
    for (auto& p : cfg.check()) diags.push_back(std::move(p));
    return diags;
}

}  // namespace hpkit::config
