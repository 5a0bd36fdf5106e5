// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Landmark-sequence processing: face crop region, expression/head motion
// intensities normalized by face scale, discretization to levels, and the
// learnable intensity embedding tables.

#pragma once

#include <string>
#include <vector>

#include "hpkit/nn.hpp"
#include "hpkit/tensor.hpp"

namespace hpkit::landmarks {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct LandmarkIndexMap {
    std::vector<std::size_t> eyebrows;
    std::vector<std::size_t> mouth;
    std::vector<std::size_t> eyes;
};

struct LandmarkSequence {
    std::vector<std::vector<Vec2>> frames;  // n frames x m points
    double fps = 25.0;
    std::size_t center_index = 0;  // nose tip by default
    LandmarkIndexMap index_map;

    std::size_t frame_count() const { return frames.size(); }
    std::size_t point_count() const { return frames.empty() ? 0 : frames[0].size(); }

    // Throws on n < 1, m < 2, varying m, bad center index or non-finite coords.
    void validate() const;
};

struct MotionIntensity {
    double expression = 0.0;  // I_e
    double head = 0.0;        // I_h
    int expression_level = 0;
    int head_level = 0;
};

struct FaceCropRegion {
    double left = 0.0;
    double top = 0.0;
    double right = 0.0;
    double bottom = 0.0;
};

// e[k][j] = l[k][j] - l[k][center]; zero at the center point.
std::vector<std::vector<Vec2>> relative_offsets(const LandmarkSequence& seq);

// Euclidean norm of the first frame's bounding-box extent. Positive; throws
// GeometryError when all first-frame points coincide.
double face_scale(const LandmarkSequence& seq);

// Temporal RMS of the relative offsets, averaged per frame and normalized by
// the face scale.
double expression_intensity(const LandmarkSequence& seq);

// Temporal RMS of the center point around its mean, normalized by face scale.
double head_intensity(const LandmarkSequence& seq);

// Uniform binning of [range_min, range_max) into `levels` bins with clamping.
int discretize(double value, double range_min, double range_max, int levels);

MotionIntensity motion_intensity(const LandmarkSequence& seq, double range_min,
                                 double range_max, int levels);

// Two learnable tables, one per intensity kind; E_s concatenates the two
// looked-up rows along the channel dimension.
struct IntensityEmbedding {
    Tensor expression_table;  // [levels, h]
    Tensor head_table;        // [levels, h]

    static IntensityEmbedding init(std::size_t levels, std::size_t h, Tape& tape, Rng& rng,
                                   nn::ScaledNormal mode = nn::ScaledNormal::kVariance);

    // E_s = concat(expression_table[level_e], head_table[level_h]), length 2h.
    Tensor lookup(int expression_level, int head_level) const;

    std::size_t levels() const { return expression_table.dim(0); }
    std::size_t table_width() const { return expression_table.dim(1); }
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Crop bounds from the eyebrow/mouth landmark sets, expanded by a margin
// fraction of the box size and clamped to the frame.
FaceCropRegion face_crop_region(const std::vector<Vec2>& frame_landmarks,
                                const LandmarkIndexMap& map, double frame_width,
                                double frame_height, double margin);

LandmarkSequence load_landmarks(const std::string& path);
void save_landmarks(const std::string& path, const LandmarkSequence& seq);

// Collects every schema violation in the file; empty means valid.
std::vector<std::string> validate_landmark_json(const std::string& path);

}  // namespace hpkit::landmarks
