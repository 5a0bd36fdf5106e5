// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// hpkit CLI. Exit codes: 0 success, 2 validation failure, 3 runtime stage
// failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hpkit/metrics.hpp"
#include "hpkit/pipeline.hpp"
#include "hpkit/pose.hpp"
#include "hpkit/tensor_io.hpp"
#include "hpkit/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kValidationFailure = 2;
constexpr int kRuntimeFailure = 3;

void emit(const json& j, const std::string& out_path) {
    const std::string text = j.dump(2);
    if (!out_path.empty()) {
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) throw hpkit::IoError("cannot open " + out_path + " for writing");
        f << text << '\n';
    }
    std::cout << text << std::endl;
}

std::pair<double, double> parse_range(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) {
        throw hpkit::ParameterError("--range expects 'min,max', got '" + text + "'");
    }
    return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
}

std::pair<std::size_t, std::size_t> parse_dims(const std::string& text, const char* flag) {
    const auto x = text.find('x');
    if (x == std::string::npos) {
        throw hpkit::ParameterError(std::string(flag) + " expects 'AxB', got '" + text + "'");
    }
    return {std::stoul(text.substr(0, x)), std::stoul(text.substr(x + 1))};
}

std::vector<fs::path> sorted_json_files(const std::string& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<fs::path> sorted_tensor_files(const std::string& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".hpt") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

hpkit::config::PipelineConfig config_or_defaults(const std::string& path) {
    return path.empty() ? hpkit::config::PipelineConfig::defaults()
                        : hpkit::config::load_config(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"portrait-animation conditioning toolkit"};
    app.require_subcommand(1);

    std::string global_config;
    std::string global_out;
    std::uint64_t global_seed = 0;
    bool seed_given = false;
    app.add_option("--config", global_config, "pipeline config JSON")->expected(1);
    app.add_option("--out", global_out, "output file or directory");
    app.add_option("--seed", global_seed, "seed override")->each([&](const std::string&) {
        seed_given = true;
    });

    // intensity
    auto* cmd_intensity = app.add_subcommand("intensity", "expression/head motion intensity");
    std::string in_landmarks;
    std::string in_range = "0,1";
    int in_levels = 64;
    cmd_intensity->add_option("--landmarks", in_landmarks, "landmark JSON")->required();
    cmd_intensity->add_option("--range", in_range, "discretization range 'min,max'");
    cmd_intensity->add_option("--levels", in_levels, "discretization levels");

    // crop-region
    auto* cmd_crop = app.add_subcommand("crop-region", "face crop region from landmarks");
    std::string cr_landmarks;
    std::string cr_size = "512x512";
    std::size_t cr_frame = 0;
    double cr_margin = 0.1;
    cmd_crop->add_option("--landmarks", cr_landmarks, "landmark JSON")->required();
    cmd_crop->add_option("--size", cr_size, "frame size 'WxH'");
    cmd_crop->add_option("--frame", cr_frame, "frame index");
    cmd_crop->add_option("--margin", cr_margin, "margin fraction");

    // bank-forward
    auto* cmd_bank = app.add_subcommand("bank-forward", "motion memory bank forward pass");
    std::string bf_features, bf_intensity, bf_params, bf_out;
    cmd_bank->add_option("--features", bf_features, "motion features tensor")->required();
    cmd_bank->add_option("--intensity", bf_intensity, "intensity embedding tensor")->required();
    cmd_bank->add_option("--params", bf_params, "parameter container")->required();
    cmd_bank->add_option("--out", bf_out, "output tensor")->required();

    // adapter-forward
    auto* cmd_adapter = app.add_subcommand("adapter-forward", "ID-aware adapter forward pass");
    std::string af_appearance, af_grid = "16x16", af_id, af_params, af_out;
    cmd_adapter->add_option("--appearance", af_appearance, "appearance tokens tensor")->required();
    cmd_adapter->add_option("--grid", af_grid, "patch grid 'HxW'");
    cmd_adapter->add_option("--id", af_id, "ID tokens tensor")->required();
    cmd_adapter->add_option("--params", af_params, "parameter container")->required();
    cmd_adapter->add_option("--out", af_out, "output tensor")->required();

    // retarget
    auto* cmd_retarget = app.add_subcommand("retarget", "align driving skeletons to a source");
    std::string rt_source, rt_driving, rt_out;
    bool rt_drop_eyes = false;
    cmd_retarget->add_option("--source", rt_source, "source skeleton JSON")->required();
    cmd_retarget->add_option("--driving", rt_driving, "directory of driving skeleton JSONs")->required();
    cmd_retarget->add_flag("--drop-eyes", rt_drop_eyes, "remove eye keypoints and edges");
    cmd_retarget->add_option("--out", rt_out, "output directory")->required();

    // augment
    auto* cmd_augment = app.add_subcommand("augment", "edge dropout / color jitter");
    std::string ag_skeleton, ag_image, ag_out;
    double ag_dropout = 0.05;
    std::uint64_t ag_seed = 0;
    double ag_brightness = 0.2, ag_contrast = 0.2, ag_saturation = 0.2, ag_hue = 0.05;
    cmd_augment->add_option("--skeleton", ag_skeleton, "skeleton JSON (edge dropout)");
    cmd_augment->add_option("--image", ag_image, "[H,W,3] tensor in [0,1] (color jitter)");
    cmd_augment->add_option("--edge-dropout", ag_dropout, "edge removal probability");
    cmd_augment->add_option("--seed", ag_seed, "augmentation seed");
    cmd_augment->add_option("--brightness", ag_brightness, "brightness half-range");
    cmd_augment->add_option("--contrast", ag_contrast, "contrast half-range");
    cmd_augment->add_option("--saturation", ag_saturation, "saturation half-range");
    cmd_augment->add_option("--hue", ag_hue, "hue half-range");
    cmd_augment->add_option("--out", ag_out, "output path")->required();

    // train-toy
    auto* cmd_train = app.add_subcommand("train-toy", "train the toy conditioning stack");
    std::size_t tt_steps = 0;
    cmd_train->add_option("--steps", tt_steps, "training steps (overrides config)");

    // sample-toy
    auto* cmd_sample = app.add_subcommand("sample-toy", "DDIM sampling from a checkpoint");
    std::string st_ckpt, st_out;
    std::size_t st_steps = 10;
    double st_cfg = 2.0;
    std::uint64_t st_seed = 1;
    cmd_sample->add_option("--ckpt", st_ckpt, "checkpoint directory")->required();
    cmd_sample->add_option("--steps", st_steps, "DDIM steps");
    cmd_sample->add_option("--cfg", st_cfg, "classifier-free guidance scale");
    cmd_sample->add_option("--seed", st_seed, "sampling noise seed");
    cmd_sample->add_option("--out", st_out, "trajectory tensor output")->required();

    // metrics
    auto* cmd_metrics = app.add_subcommand("metrics", "LMD / PSNR / SSIM report");
    std::string mt_gen, mt_ref, mt_lgen, mt_lref, mt_out;
    std::size_t mt_window = 11;
    double mt_cap = 100.0;
    cmd_metrics->add_option("--gen", mt_gen, "directory of generated frames (*.hpt)");
    cmd_metrics->add_option("--ref", mt_ref, "directory of reference frames (*.hpt)");
    cmd_metrics->add_option("--landmarks-gen", mt_lgen, "generated landmark JSON");
    cmd_metrics->add_option("--landmarks-ref", mt_lref, "reference landmark JSON");
    cmd_metrics->add_option("--ssim-window", mt_window, "SSIM window size");
    cmd_metrics->add_option("--psnr-cap", mt_cap, "PSNR cap in dB");
    cmd_metrics->add_option("--out", mt_out, "report JSON output");

    // run
    auto* cmd_run = app.add_subcommand("run", "full pipeline on a config");

    // validate
    auto* cmd_validate = app.add_subcommand("validate", "check tensors / landmark / skeleton / config files");
    std::vector<std::string> vd_paths;
    std::string vd_kind = "auto";
    cmd_validate->add_option("paths", vd_paths, "files to validate")->required();
    cmd_validate->add_option("--kind", vd_kind, "tensor|landmarks|skeleton|config|auto");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kOk : kValidationFailure;
    }

    try {
        if (cmd_intensity->parsed()) {
            const auto seq = hpkit::landmarks::load_landmarks(in_landmarks);
            const auto [lo, hi] = parse_range(in_range);
            const auto mi = hpkit::landmarks::motion_intensity(seq, lo, hi, in_levels);
            emit({{"I_e", mi.expression},
                  {"I_h", mi.head},
                  {"level_e", mi.expression_level},
                  {"level_h", mi.head_level}},
                 global_out);
            return kOk;
        }

        if (cmd_crop->parsed()) {
            const auto seq = hpkit::landmarks::load_landmarks(cr_landmarks);
            if (cr_frame >= seq.frame_count()) {
                throw hpkit::IndexError("crop-region: frame " + std::to_string(cr_frame) +
                                        " outside " + std::to_string(seq.frame_count()));
            }
            const auto [w, h] = parse_dims(cr_size, "--size");
            const auto region = hpkit::landmarks::face_crop_region(
                seq.frames[cr_frame], seq.index_map, static_cast<double>(w),
                static_cast<double>(h), cr_margin);
            emit({{"left", region.left},
                  {"top", region.top},
                  {"right", region.right},
                  {"bottom", region.bottom}},
                 global_out);
            return kOk;
        }

        if (cmd_bank->parsed()) {
            auto cfg = config_or_defaults(global_config);
            hpkit::Tape tape;
            hpkit::Rng rng(cfg.seed);
            auto bank = hpkit::motion::MemoryBank::init(cfg.bank, tape, rng);
            hpkit::NamedTensors named;
            bank.collect("bank", named);
            hpkit::nn::load_named(named, hpkit::read_container(bf_params));
            const auto features = hpkit::read_tensor(bf_features);
            const auto intensity = hpkit::read_tensor(bf_intensity);
            hpkit::write_tensor(bf_out, bank.forward(features, intensity));
            return kOk;
        }

        if (cmd_adapter->parsed()) {
            auto cfg = config_or_defaults(global_config);
            hpkit::Tape tape;
            hpkit::Rng rng(cfg.seed);
            auto adapter = hpkit::adapter::IMAdapter::init(cfg.adapter, tape, rng);
            hpkit::NamedTensors named;
            adapter.collect("adapter", named);
            hpkit::nn::load_named(named, hpkit::read_container(af_params));
            const auto [gh, gw] = parse_dims(af_grid, "--grid");
            const auto appearance = hpkit::read_tensor(af_appearance);
            const auto id_tokens = hpkit::read_tensor(af_id);
            hpkit::write_tensor(af_out, adapter.forward(appearance, gh, gw, id_tokens));
            return kOk;
        }

        if (cmd_retarget->parsed()) {
            const auto source = hpkit::pose::load_skeleton(rt_source);
            const auto files = sorted_json_files(rt_driving);
            if (files.empty()) {
                throw hpkit::IoError("retarget: no skeleton JSON files in " + rt_driving);
            }
            std::vector<hpkit::pose::Skeleton> driving;
            driving.reserve(files.size());
            for (const auto& f : files) driving.push_back(hpkit::pose::load_skeleton(f.string()));
            const auto transform = hpkit::pose::compute_retarget(source, driving[0]);
            auto mapped = hpkit::pose::apply_retarget(driving, transform);
            if (rt_drop_eyes) {
                for (auto& skel : mapped) skel = hpkit::pose::drop_eye_keypoints(skel);
            }
            fs::create_directories(rt_out);
            for (std::size_t i = 0; i < mapped.size(); ++i) {
                hpkit::pose::save_skeleton((fs::path(rt_out) / files[i].filename()).string(),
                                           mapped[i]);
            }
            emit({{"translation", {transform.translate_x, transform.translate_y}},
                  {"scale", transform.scale},
                  {"frames", mapped.size()}},
                 (fs::path(rt_out) / "transform.json").string());
            return kOk;
        }

        if (cmd_augment->parsed()) {
            if (ag_skeleton.empty() == ag_image.empty()) {
                throw hpkit::ParameterError("augment: pass exactly one of --skeleton or --image");
            }
            if (!ag_skeleton.empty()) {
                const auto skel = hpkit::pose::load_skeleton(ag_skeleton);
                hpkit::pose::save_skeleton(ag_out,
                                           hpkit::pose::edge_dropout(skel, ag_dropout, ag_seed));
            } else {
                const auto img = hpkit::pose::image_from_tensor(hpkit::read_tensor(ag_image));
                hpkit::pose::JitterRanges ranges;
                ranges.brightness_lo = 1.0 - ag_brightness;
                ranges.brightness_hi = 1.0 + ag_brightness;
                ranges.contrast_lo = 1.0 - ag_contrast;
                ranges.contrast_hi = 1.0 + ag_contrast;
                ranges.saturation_lo = 1.0 - ag_saturation;
                ranges.saturation_hi = 1.0 + ag_saturation;
                ranges.hue_lo = -ag_hue;
                ranges.hue_hi = ag_hue;
                hpkit::write_tensor(
                    ag_out, hpkit::pose::image_to_tensor(
                                hpkit::pose::color_jitter(img, ranges, ag_seed)));
            }
            return kOk;
        }

        if (cmd_train->parsed()) {
            if (global_config.empty()) throw hpkit::ConfigError("train-toy: --config is required");
            if (global_out.empty()) throw hpkit::ConfigError("train-toy: --out is required");
            const auto cfg = hpkit::config::load_config(global_config);
            const auto report = hpkit::pipeline::train_toy_run(
                cfg, tt_steps, seed_given ? global_seed : cfg.seed, true, global_out);
            std::cout << report.dump(2) << std::endl;
            return kOk;
        }

        if (cmd_sample->parsed()) {
            hpkit::pipeline::sample_toy_run(st_ckpt, st_steps, st_cfg,
                                            seed_given ? global_seed : st_seed, st_out);
            return kOk;
        }

        if (cmd_metrics->parsed()) {
            json report = json::object();
            if (!mt_lgen.empty() && !mt_lref.empty()) {
                const auto gen_seq = hpkit::landmarks::load_landmarks(mt_lgen);
                const auto ref_seq = hpkit::landmarks::load_landmarks(mt_lref);
                const double raw = hpkit::metrics::lmd(gen_seq, ref_seq);
                report["LMD"] = hpkit::metrics::lmd_scaled(raw);
                report["lmd_raw"] = raw;
            }
            if (!mt_gen.empty() && !mt_ref.empty()) {
                const auto gen_files = sorted_tensor_files(mt_gen);
                const auto ref_files = sorted_tensor_files(mt_ref);
                if (gen_files.size() != ref_files.size() || gen_files.empty()) {
                    throw hpkit::ParameterError(
                        "metrics: frame directories must hold the same non-zero file count");
                }
                for (std::size_t i = 0; i < gen_files.size(); ++i) {
                    if (gen_files[i].filename() != ref_files[i].filename()) {
                        throw hpkit::ParameterError("metrics: frame name mismatch at " +
                                                    gen_files[i].filename().string());
                    }
                }
                std::vector<double> psnrs(gen_files.size()), ssims(gen_files.size());
                hpkit::metrics::SsimParams sp;
                sp.window = mt_window;
                hpkit::parallel_for(gen_files.size(), [&](std::size_t i) {
                    const auto pair = hpkit::metrics::FramePair::make(
                        hpkit::read_tensor(gen_files[i].string()),
                        hpkit::read_tensor(ref_files[i].string()));
                    psnrs[i] = hpkit::metrics::psnr(pair, mt_cap);
                    ssims[i] = hpkit::metrics::ssim(pair, sp);
                });
                double psnr_mean = 0.0, ssim_mean = 0.0;
                for (std::size_t i = 0; i < psnrs.size(); ++i) {
                    psnr_mean += psnrs[i];
                    ssim_mean += ssims[i];
                }
                report["PSNR"] = psnr_mean / static_cast<double>(psnrs.size());
                report["SSIM"] = ssim_mean / static_cast<double>(ssims.size());
                report["frames"] = psnrs.size();
            }
            if (report.empty()) {
                throw hpkit::ParameterError(
                    "metrics: provide --gen/--ref directories or landmark files");
            }
            emit(report, !mt_out.empty() ? mt_out : global_out);
            return kOk;
        }

        if (cmd_run->parsed()) {
            if (global_config.empty()) throw hpkit::ConfigError("run: --config is required");
            if (global_out.empty()) throw hpkit::ConfigError("run: --out is required");
            auto cfg = hpkit::config::load_config(global_config);
            if (seed_given) cfg.seed = global_seed;
            const auto outcome = hpkit::pipeline::run_pipeline(cfg, global_out);
            if (!outcome.ok) {
                std::cerr << "stage '" << outcome.failed_stage << "' failed: " << outcome.error
                          << std::endl;
                return kRuntimeFailure;
            }
            std::cout << outcome.report.dump(2) << std::endl;
            return kOk;
        }

        if (cmd_validate->parsed()) {
            hpkit::pipeline::FileKind kind = hpkit::pipeline::FileKind::kAuto;
            if (vd_kind == "tensor") kind = hpkit::pipeline::FileKind::kTensor;
            else if (vd_kind == "landmarks") kind = hpkit::pipeline::FileKind::kLandmarks;
            else if (vd_kind == "skeleton") kind = hpkit::pipeline::FileKind::kSkeleton;
            else if (vd_kind == "config") kind = hpkit::pipeline::FileKind::kConfig;
            else if (vd_kind != "auto") {
                throw hpkit::ParameterError("validate: unknown kind '" + vd_kind + "'");
            }
            bool any = false;
            for (const auto& path : vd_paths) {
                const auto diags = hpkit::pipeline::validate_file(path, kind);
                if (diags.empty()) {
                    std::cout << path << ": ok" << std::endl;
                } else {
                    any = true;
                    for (const auto& d : diags) std::cout << path << ": " << d << std::endl;
                }
            }
            return any ? kValidationFailure : kOk;
        }
    } catch (const hpkit::ConfigError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kValidationFailure;
    } catch (const hpkit::IoError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return cmd_run->parsed() || cmd_train->parsed() || cmd_sample->parsed()
                   ? kRuntimeFailure
                   : kValidationFailure;
    } catch (const hpkit::ParameterError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kValidationFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kRuntimeFailure;
    }
    return kOk;
}
