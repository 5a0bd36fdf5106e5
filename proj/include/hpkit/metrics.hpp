// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Self-reenactment metrics computable without pretrained networks: landmark
// mean distance, PSNR and SSIM.

#pragma once

#include "hpkit/landmarks.hpp"
#include "hpkit/tensor.hpp"

namespace hpkit::metrics {

struct FramePair {
    Tensor generated;  // [H,W,C], values in [0,1]
    Tensor reference;

    // Validates matching shapes and the [0,1] range.
    static FramePair make(Tensor generated, Tensor reference);
};

// Mean Euclidean distance over all frames and points (raw, unscaled).
double lmd(const landmarks::LandmarkSequence& generated,
           const landmarks::LandmarkSequence& reference);

// Reporting convention: tables list LMD in units of 1e-3.
inline double lmd_scaled(double raw) { return raw * 1e3; }

// 10*log10(1/MSE) against peak 1.0, capped (identical frames hit the cap).
double psnr(const FramePair& pair, double cap_db = 100.0);

struct SsimParams {
    std::size_t window = 11;
    double k1 = 0.01;
    double k2 = 0.03;
    double sigma = 1.5;
};

// Mean local SSIM with a Gaussian window over the valid region, averaged
// across channels. Throws ParameterError when the frame is smaller than the
// window.
double ssim(const FramePair& pair, const SsimParams& params = {});

}  // namespace hpkit::metrics
