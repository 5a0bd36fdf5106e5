// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "hpkit/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace hpkit::metrics {

FramePair FramePair::make(Tensor generated, Tensor reference) {
    if (generated.shape() != reference.shape()) {
        throw DimensionError("frame pair: shapes differ, " + shape_str(generated.shape()) +
                             " vs " + shape_str(reference.shape()));
    }
    if (generated.rank() != 3) {
        throw DimensionError("frame pair: expects [H,W,C], got " + shape_str(generated.shape()));
    }
    for (const Tensor* t : {&generated, &reference}) {
        for (double v : t->data()) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ParameterError("frame pair: values must lie in [0, 1]");
            }
        }
    }
    FramePair p;
    p.generated = std::move(generated);
    p.reference = std::move(reference);
    return p;
}

double lmd(const landmarks::LandmarkSequence& generated,
           const landmarks::LandmarkSequence& reference) {
    generated.validate();
    reference.validate();
    if (generated.frame_count() != reference.frame_count() ||
        generated.point_count() != reference.point_count()) {
        throw DimensionError("lmd: sequence sizes differ, " +
                             std::to_string(generated.frame_count()) + "x" +
                             std::to_string(generated.point_count()) + " vs " +
                             std::to_string(reference.frame_count()) + "x" +
                             std::to_string(reference.point_count()));
    }
    const std::size_t n = generated.frame_count();
    const std::size_t m = generated.point_count();
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < m; ++j) {
            acc += std::hypot(generated.frames[k][j].x - reference.frames[k][j].x,
                              generated.frames[k][j].y - reference.frames[k][j].y);
        }
    }
    return acc / static_cast<double>(n * m);
}

double psnr(const FramePair& pair, double cap_db) {
    const auto& a = pair.generated.data();
    const auto& b = pair.reference.data();
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return cap_db;
    return std::min(cap_db, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<double> gaussian_window(std::size_t size, double sigma) {
    std::vector<double> w(size);
    const double center = (static_cast<double>(size) - 1.0) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - center;
        w[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        total += w[i];
    }
    for (double& v : w) v /= total;
    return w;
}

// Separable valid-region filtering: [h, w] -> [h - win + 1, w - win + 1].
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& window) {
    const std::size_t win = window.size();
    const std::size_t out_w = w - win + 1;
    std::vector<double> rows(h * out_w, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < win; ++k) acc += window[k] * img[y * w + x + k];
            rows[y * out_w + x] = acc;
        }
    }
    const std::size_t out_h = h - win + 1;
    std::vector<double> out(out_h * out_w, 0.0);
    for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < win; ++k) acc += window[k] * rows[(y + k) * out_w + x];
            out[y * out_w + x] = acc;
        }
    }
    return out;
}

}  // namespace

double ssim(const FramePair& pair, const SsimParams& params) {
    const std::size_t h = pair.generated.dim(0);
    const std::size_t w = pair.generated.dim(1);
    const std::size_t channels = pair.generated.dim(2);
    if (params.window < 2 || params.window % 2 == 0) {
        throw ParameterError("ssim: window must be odd and at least 3");
    }
    if (h < params.window || w < params.window) {
        throw ParameterError("ssim: frame " + std::to_string(h) + "x" + std::to_string(w) +
                             " smaller than the " + std::to_string(params.window) + " window");
    }
    const double c1 = params.k1 * params.k1;  // peak 1.0
    const double c2 = params.k2 * params.k2;
    const auto window = gaussian_window(params.window, params.sigma);

    double total = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        std::vector<double> x(h * w), y(h * w), xx(h * w), yy(h * w), xy(h * w);
        for (std::size_t i = 0; i < h * w; ++i) {
            const double a = pair.generated.data()[i * channels + c];
            const double b = pair.reference.data()[i * channels + c];
            x[i] = a;
            y[i] = b;
            xx[i] = a * a;
            yy[i] = b * b;
            xy[i] = a * b;
        }
        const auto mu_x = filter_valid(x, h, w, window);
        const auto mu_y = filter_valid(y, h, w, window);
        const auto mu_xx = filter_valid(xx, h, w, window);
        const auto mu_yy = filter_valid(yy, h, w, window);
        const auto mu_xy = filter_valid(xy, h, w, window);
        double acc = 0.0;
        for (std::size_t i = 0; i < mu_x.size(); ++i) {
            const double var_x = mu_xx[i] - mu_x[i] * mu_x[i];
            const double var_y = mu_yy[i] - mu_y[i] * mu_y[i];
            const double cov = mu_xy[i] - mu_x[i] * mu_y[i];
            const double num = (2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * cov + c2);
            const double den = (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) * (var_x + var_y + c2);
            acc += num / den;
        }
        total += acc / static_cast<double>(mu_x.size());
    }
    return total / static_cast<double>(channels);
}

}  // namespace hpkit::metrics
