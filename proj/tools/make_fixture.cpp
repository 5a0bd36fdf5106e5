// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Regenerates the synthetic fixture set under tests/fixtures/. Deterministic:
// rerunning produces byte-identical files.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "hpkit/landmarks.hpp"
#include "hpkit/pose.hpp"
#include "hpkit/tensor_io.hpp"
#include "hpkit/util.hpp"

namespace fs = std::filesystem;
using hpkit::Rng;
using hpkit::Tensor;
using nlohmann::json;

namespace {

// 9-point synthetic face: 0 nose, 1-2 eyebrows, 3-4 eyes, 5-8 mouth.
hpkit::landmarks::LandmarkSequence make_landmarks(std::size_t frames, double expression_amp,
                                                  double head_amp, double phase) {
    hpkit::landmarks::LandmarkSequence seq;
    seq.fps = 25.0;
    seq.center_index = 0;
    seq.index_map.eyebrows = {1, 2};
    seq.index_map.eyes = {3, 4};
    seq.index_map.mouth = {5, 6, 7, 8};
    const double base[9][2] = {{256, 260}, {215, 185}, {297, 185}, {225, 215}, {287, 215},
                               {226, 320}, {286, 320}, {256, 305}, {256, 336}};
    for (std::size_t k = 0; k < frames; ++k) {
        const double t = static_cast<double>(k) / 8.0;
        const double head_dx = head_amp * std::sin(2.0 * t + phase);
        const double head_dy = 0.6 * head_amp * std::cos(1.5 * t + phase);
        std::vector<hpkit::landmarks::Vec2> frame(9);
        for (std::size_t j = 0; j < 9; ++j) {
            double dx = head_dx, dy = head_dy;
            if (j >= 5) {  // mouth opens and closes
                dy += expression_amp * std::sin(3.0 * t + phase) * (j == 8 ? 1.4 : 0.5);
            }
            if (j == 1 || j == 2) {  // eyebrows raise
                dy -= expression_amp * 0.7 * std::cos(2.2 * t + phase);
            }
            frame[j] = {base[j][0] + dx, base[j][1] + dy};
        }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

hpkit::pose::Skeleton make_skeleton(double scale, double dx, double dy, double sway) {
    hpkit::pose::Skeleton s;
    const double base[6][2] = {{256, 250}, {226, 210}, {286, 210},
                               {180, 360}, {332, 360}, {256, 330}};
    for (int i = 0; i < 6; ++i) {
        s.points.push_back({scale * (base[i][0] + (i >= 3 ? sway : 0.4 * sway)) + dx,
                            scale * base[i][1] + dy, 0.9});
    }
    s.valid.assign(6, true);
    s.edges = {{0, 1}, {0, 2}, {1, 2}, {0, 5}, {3, 5}, {4, 5}};
    s.semantics["nose"] = {0};
    s.semantics["eyes"] = {1, 2};
    s.semantics["shoulders"] = {3, 4};
    return s;
}

Tensor smooth_frame(std::size_t h, std::size_t w, std::size_t c, double phase) {
    std::vector<double> data(h * w * c);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double v = 0.5 + 0.3 * std::sin(0.8 * static_cast<double>(y) + phase) *
                                           std::cos(0.6 * static_cast<double>(x) +
                                                    0.4 * static_cast<double>(ch));
                data[(y * w + x) * c + ch] = v;
            }
        }
    }
    return Tensor::from({h, w, c}, std::move(data));
}

Tensor gaussian_tensor(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> data(n);
    for (double& v : data) v = rng.normal(0.0, stddev);
    return Tensor::from(std::move(shape), std::move(data));
}

json base_config() {
    json j;
    j["seed"] = 7;
    j["discretization"] = {{"range", {0.0, 1.0}}, {"levels", 64}};
    j["crop"] = {{"margin", 0.1}, {"frame_width", 512.0}, {"frame_height", 512.0}};
    j["bank"] = {{"memories", 16}, {"width", 96},     {"heads", 8},
                 {"blocks", 2},    {"mlp_ratio", 4},  {"init", "variance"}};
    j["adapter"] = {{"appearance_width", 64},
                    {"id_width", 32},
                    {"rank", 48},
                    {"kernels", {1, 3, 5}},
                    {"heads", 8}};
    j["denoiser"] = {{"latent_channels", 4}, {"latent_h", 4},  {"latent_w", 4},
                     {"width", 64},          {"heads", 4},     {"blocks", 2},
                     {"mlp_ratio", 4},       {"time_embed_dim", 32}};
    j["schedule"] = {{"timesteps", 50}, {"beta_start", 1e-4}, {"beta_end", 2e-2}};
    j["metrics"] = {{"ssim_window", 3}, {"psnr_cap", 100.0}};
    j["cfg_scale"] = 2.0;
    j["grad_clip"] = 0.99;
    j["learning_rate"] = 2e-3;
    j["cond_dropout"] = 0.1;
    j["sample_steps"] = 6;
    j["grid"] = {{"h", 4}, {"w", 4}};
    j["paths"] = {{"landmarks", "landmarks_drive.json"},
                  {"landmarks_reference", "landmarks_ref.json"},
                  {"motion_features", "fm_a.hpt"},
                  {"appearance", "fa.hpt"},
                  {"id_features", "fid.hpt"},
                  {"spatial", "spatial.hpt"},
                  {"reference_frame", "ref_frame.hpt"}};
    return j;
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream f(path, std::ios::trunc);
    f << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path dir = argc > 1 ? argv[1] : "tests/fixtures";
    fs::create_directories(dir);
    fs::create_directories(dir / "driving_skeletons");

    // landmark sequences: the driving clip moves more than the reference
    hpkit::landmarks::save_landmarks((dir / "landmarks_drive.json").string(),
                                     make_landmarks(8, 9.0, 14.0, 0.3));
    hpkit::landmarks::save_landmarks((dir / "landmarks_ref.json").string(),
                                     make_landmarks(8, 2.5, 4.0, 1.1));

    // skeletons: driving frames are a scaled/translated swaying copy
    hpkit::pose::save_skeleton((dir / "skeleton_source.json").string(),
                               make_skeleton(1.0, 0.0, 0.0, 0.0));
    for (int k = 0; k < 8; ++k) {
        const double sway = 6.0 * std::sin(0.7 * k);
        char name[16];
        std::snprintf(name, sizeof(name), "d%03d.json", k);
        hpkit::pose::save_skeleton((dir / "driving_skeletons" / name).string(),
                                   make_skeleton(1.6, 40.0, -25.0, sway));
    }

    // feature tensors (stand-ins for the frozen upstream encoders)
    Rng rng(20260809);
    hpkit::write_tensor((dir / "fm_a.hpt").string(), gaussian_tensor({8, 96}, rng));
    hpkit::write_tensor((dir / "fm_b.hpt").string(), gaussian_tensor({8, 96}, rng));
    hpkit::write_tensor((dir / "fa.hpt").string(), gaussian_tensor({16, 64}, rng));
    hpkit::write_tensor((dir / "fid.hpt").string(), gaussian_tensor({1, 32}, rng));
    hpkit::write_tensor((dir / "spatial.hpt").string(), gaussian_tensor({4, 4, 4}, rng, 1.0));
    hpkit::write_tensor((dir / "z0.hpt").string(), gaussian_tensor({4, 4, 4}, rng));
    hpkit::write_tensor((dir / "z1.hpt").string(), gaussian_tensor({4, 4, 4}, rng));
    hpkit::write_tensor((dir / "ref_frame.hpt").string(), smooth_frame(4, 4, 4, 0.9));
    hpkit::write_tensor((dir / "image.hpt").string(), smooth_frame(6, 6, 3, 0.2));

    write_json_file(dir / "run_config.json", base_config());

    json train = base_config();
    train["train"] = {{"steps", 200},
                      {"samples",
                       {{{"latent", "z0.hpt"},
                         {"motion_features", "fm_a.hpt"},
                         {"landmarks", "landmarks_drive.json"}},
                        {{"latent", "z1.hpt"},
                         {"motion_features", "fm_b.hpt"},
                         {"landmarks", "landmarks_ref.json"}}}}};
    write_json_file(dir / "train_config.json", train);

    std::cout << "fixture written to " << dir << std::endl;
    return 0;
}
