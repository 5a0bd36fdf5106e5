// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Skeleton conditioning strategies: nose-anchored translation/scaling
// retargeting, eye keypoint removal for cross-reenactment, training-time
// edge dropout, and color jitter for the motion-encoder crop.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hpkit/tensor.hpp"
#include "hpkit/util.hpp"

namespace hpkit::pose {

struct SkeletonPoint {
    double x = 0.0;
    double y = 0.0;
    double confidence = 1.0;
};

using Edge = std::pair<std::size_t, std::size_t>;

struct Skeleton {
    std::vector<SkeletonPoint> points;
    std::vector<bool> valid;  // invalid points are excluded from all distances
    std::vector<Edge> edges;
    std::map<std::string, std::vector<std::size_t>> semantics;  // "nose", "eyes", ...

    std::size_t nose_index() const;  // throws RetargetError when absent
    bool has_valid_nose() const;
    std::vector<std::size_t> eye_indices() const;

    void validate() const;  // bounds-checks edges, flags, semantics
};

struct RetargetTransform {
    double translate_x = 0.0;
    double translate_y = 0.0;
    double scale = 1.0;
};

// translation = source nose - driving nose; scale = median edge-length ratio
// over edges present and valid in both skeletons.
RetargetTransform compute_retarget(const Skeleton& source, const Skeleton& driving_first);

// p' = anchor + translation + scale * (p - anchor), anchored at the first
// driving frame's nose so that nose maps exactly onto the source nose.
std::vector<Skeleton> apply_retarget(const std::vector<Skeleton>& driving,
                                     const RetargetTransform& t);

// Marks eye points invalid and removes every edge incident to one. Idempotent.
Skeleton drop_eye_keypoints(const Skeleton& skel);

// Removes each non-protected edge independently with probability p.
Skeleton edge_dropout(const Skeleton& skel, double p, std::uint64_t seed,
                      const std::vector<Edge>& protected_edges = {});

// ---- color jitter ------------------------------------------------------------

struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;  // H x W x 3, row-major, values in [0, 1]

    double& at(std::size_t y, std::size_t x, std::size_t c) {
        return data[(y * width + x) * 3 + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c) const {
        return data[(y * width + x) * 3 + c];
    }
};

Image image_from_tensor(const Tensor& t);  // [H,W,3]
Tensor image_to_tensor(const Image& img);

struct JitterRanges {
    double brightness_lo = 0.8, brightness_hi = 1.2;
    double contrast_lo = 0.8, contrast_hi = 1.2;
    double saturation_lo = 0.8, saturation_hi = 1.2;
    double hue_lo = -0.05, hue_hi = 0.05;

    static JitterRanges identity();
    void validate() const;  // each interval must contain its identity value
};

// Factors sampled per call; applied brightness -> contrast -> saturation ->
// hue, clamped to [0, 1] after each stage.
Image color_jitter(const Image& image, const JitterRanges& ranges, std::uint64_t seed);

// ---- JSON I/O ------------------------------------------------------------------

Skeleton load_skeleton(const std::string& path);
void save_skeleton(const std::string& path, const Skeleton& skel);
std::vector<std::string> validate_skeleton_json(const std::string& path);

}  // namespace hpkit::pose
