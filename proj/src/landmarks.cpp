// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "hpkit/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace hpkit::landmarks {

void LandmarkSequence::validate() const {
    if (frames.empty()) throw ParameterError("landmarks: sequence has no frames");
    const std::size_t m = frames[0].size();
    if (m < 2) throw ParameterError("landmarks: need at least 2 points per frame, got " + std::to_string(m));
    if (center_index >= m) {
        throw IndexError("landmarks: center index " + std::to_string(center_index) +
                         " outside " + std::to_string(m) + " points");
    }
    for (std::size_t k = 0; k < frames.size(); ++k) {
        if (frames[k].size() != m) {
            throw ParameterError("landmarks: frame " + std::to_string(k) + " has " +
                                 std::to_string(frames[k].size()) + " points, expected " +
                                 std::to_string(m));
        }
        for (const Vec2& p : frames[k]) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
                throw ParameterError("landmarks: non-finite coordinate in frame " + std::to_string(k));
            }
        }
    }
}

std::vector<std::vector<Vec2>> relative_offsets(const LandmarkSequence& seq) {
    seq.validate();
    const std::size_t n = seq.frame_count();
    const std::size_t m = seq.point_count();
    std::vector<std::vector<Vec2>> e(n, std::vector<Vec2>(m));
    for (std::size_t k = 0; k < n; ++k) {
        const Vec2 c = seq.frames[k][seq.center_index];
        for (std::size_t j = 0; j < m; ++j) {
            e[k][j] = {seq.frames[k][j].x - c.x, seq.frames[k][j].y - c.y};
        }
    }
    return e;
}

double face_scale(const LandmarkSequence& seq) {
    seq.validate();
    double min_x = std::numeric_limits<double>::infinity();
    double min_y = std::numeric_limits<double>::infinity();
    double max_x = -std::numeric_limits<double>::infinity();
    double max_y = -std::numeric_limits<double>::infinity();
    for (const Vec2& p : seq.frames[0]) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const double s = std::hypot(max_x - min_x, max_y - min_y);
    if (s == 0.0) throw GeometryError("face_scale: all first-frame landmarks coincide");
    return s;
}

double expression_intensity(const LandmarkSequence& seq) {
    const double s = face_scale(seq);
    const auto e = relative_offsets(seq);
    const std::size_t n = e.size();
    const std::size_t m = e[0].size();
    // Deviations are taken against offsets shifted by frame 0, so a sequence
    // with identical offsets yields exactly zero instead of rounding noise.
    std::vector<Vec2> d_bar(m, {0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < m; ++j) {
            d_bar[j].x += e[k][j].x - e[0][j].x;
            d_bar[j].y += e[k][j].y - e[0][j].y;
        }
    }
    for (Vec2& v : d_bar) {
        v.x /= static_cast<double>(n);
        v.y /= static_cast<double>(n);
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double frame_var = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double dx = (e[k][j].x - e[0][j].x) - d_bar[j].x;
            const double dy = (e[k][j].y - e[0][j].y) - d_bar[j].y;
            frame_var += dx * dx + dy * dy;
        }
        acc += std::sqrt(frame_var / static_cast<double>(m));
    }
    return acc / (static_cast<double>(n) * s);
}

double head_intensity(const LandmarkSequence& seq) {
    const double s = face_scale(seq);
    const std::size_t n = seq.frame_count();
    const Vec2 anchor = seq.frames[0][seq.center_index];
    Vec2 mean_delta{0.0, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
        mean_delta.x += seq.frames[k][seq.center_index].x - anchor.x;
        mean_delta.y += seq.frames[k][seq.center_index].y - anchor.y;
    }
    mean_delta.x /= static_cast<double>(n);
    mean_delta.y /= static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = (seq.frames[k][seq.center_index].x - anchor.x) - mean_delta.x;
        const double dy = (seq.frames[k][seq.center_index].y - anchor.y) - mean_delta.y;
        acc += dx * dx + dy * dy;
    }
    return std::sqrt(acc / static_cast<double>(n)) / s;
}

int discretize(double value, double range_min, double range_max, int levels) {
    if (levels < 2) throw ParameterError("discretize: need at least 2 levels, got " + std::to_string(levels));
    if (!(range_min < range_max)) {
        throw ParameterError("discretize: empty range [" + std::to_string(range_min) + ", " +
                             std::to_string(range_max) + ")");
    }
    if (!std::isfinite(value)) throw ParameterError("discretize: non-finite value");
    if (value <= range_min) return 0;
    if (value >= range_max) return levels - 1;
    const double t = (value - range_min) / (range_max - range_min);
    const int level = static_cast<int>(std::floor(t * static_cast<double>(levels)));
    return std::min(level, levels - 1);
}

MotionIntensity motion_intensity(const LandmarkSequence& seq, double range_min,
                                 double range_max, int levels) {
    MotionIntensity mi;
    mi.expression = expression_intensity(seq);
    mi.head = head_intensity(seq);
    mi.expression_level = discretize(mi.expression, range_min, range_max, levels);
    mi.head_level = discretize(mi.head, range_min, range_max, levels);
    return mi;
}

// ---- intensity embedding ---------------------------------------------------

IntensityEmbedding IntensityEmbedding::init(std::size_t levels, std::size_t h, Tape& tape,
                                            Rng& rng, nn::ScaledNormal mode) {
    const double stddev = nn::scaled_normal_stddev(h, mode);
    IntensityEmbedding emb;
    emb.expression_table =
        Tensor::param({levels, h}, nn::normal_tensor({levels, h}, rng, stddev).data(), tape);
    emb.head_table =
        Tensor::param({levels, h}, nn::normal_tensor({levels, h}, rng, stddev).data(), tape);
    return emb;
}

Tensor IntensityEmbedding::lookup(int expression_level, int head_level) const {
    if (expression_level < 0 || static_cast<std::size_t>(expression_level) >= levels() ||
        head_level < 0 || static_cast<std::size_t>(head_level) >= levels()) {
        throw IndexError("intensity_embedding: level outside [0, " + std::to_string(levels()) + ")");
    }
    const std::size_t h = table_width();
    const Tensor row_e = embedding_row(expression_table, static_cast<std::size_t>(expression_level));
    const Tensor row_h = embedding_row(head_table, static_cast<std::size_t>(head_level));
    const Tensor joined =
        concat_cols({reshape(row_e, {1, h}), reshape(row_h, {1, h})});
    return reshape(joined, {2 * h});
}

void IntensityEmbedding::collect(const std::string& prefix, NamedTensors& out) const {
    out.emplace_back(prefix + ".expression", expression_table);
    out.emplace_back(prefix + ".head", head_table);
}

// ---- crop region ---------------------------------------------------------

FaceCropRegion face_crop_region(const std::vector<Vec2>& frame_landmarks,
                                const LandmarkIndexMap& map, double frame_width,
                                double frame_height, double margin) {
    if (map.eyebrows.empty() || map.mouth.empty()) {
        throw ConfigError("face_crop_region: eyebrow and mouth index sets must be non-empty");
    }
    if (margin < 0.0) throw ParameterError("face_crop_region: negative margin");
    auto point = [&](std::size_t idx) -> const Vec2& {
        if (idx >= frame_landmarks.size()) {
            throw IndexError("face_crop_region: landmark index " + std::to_string(idx) +
                             " outside " + std::to_string(frame_landmarks.size()) + " points");
        }
        return frame_landmarks[idx];
    };
    double top = std::numeric_limits<double>::infinity();
    for (std::size_t idx : map.eyebrows) top = std::min(top, point(idx).y);
    double bottom = -std::numeric_limits<double>::infinity();
    for (std::size_t idx : map.mouth) bottom = std::max(bottom, point(idx).y);
    double left = std::numeric_limits<double>::infinity();
    double right = -std::numeric_limits<double>::infinity();
    for (const auto* set : {&map.eyebrows, &map.mouth}) {
        for (std::size_t idx : *set) {
            left = std::min(left, point(idx).x);
            right = std::max(right, point(idx).x);
        }
    }
    if (!(top < bottom) || !(left < right)) {
        throw GeometryError("face_crop_region: degenerate box (eyebrows/mouth landmarks collapse)");
    }
    const double w = right - left;
    const double h = bottom - top;
    FaceCropRegion r;
    r.left = std::max(0.0, left - margin * w);
    r.right = std::min(frame_width, right + margin * w);
    r.top = std::max(0.0, top - margin * h);
    r.bottom = std::min(frame_height, bottom + margin * h);
    if (!(r.left < r.right) || !(r.top < r.bottom)) {
        throw GeometryError("face_crop_region: region falls outside the frame");
    }
    return r;
}

// ---- JSON I/O ----------------------------------------------------------------

namespace {

std::vector<std::size_t> index_list(const nlohmann::json& j) {
    std::vector<std::size_t> out;
    for (const auto& v : j) out.push_back(v.get<std::size_t>());
    return out;
}

}  // namespace

LandmarkSequence load_landmarks(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    LandmarkSequence seq;
    try {
        seq.fps = j.value("fps", 25.0);
        seq.center_index = j.at("center_index").get<std::size_t>();
        if (j.contains("index_map")) {
            const auto& im = j["index_map"];
            if (im.contains("eyebrows")) seq.index_map.eyebrows = index_list(im["eyebrows"]);
            if (im.contains("mouth")) seq.index_map.mouth = index_list(im["mouth"]);
            if (im.contains("eyes")) seq.index_map.eyes = index_list(im["eyes"]);
        }
        for (const auto& frame : j.at("frames")) {
            std::vector<Vec2> pts;
            pts.reserve(frame.size());
            for (const auto& p : frame) {
                pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            }
            seq.frames.push_back(std::move(pts));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    seq.validate();
    return seq;
}

void save_landmarks(const std::string& path, const LandmarkSequence& seq) {
    nlohmann::json j;
    j["fps"] = seq.fps;
    j["center_index"] = seq.center_index;
    j["index_map"] = {{"eyebrows", seq.index_map.eyebrows},
                      {"mouth", seq.index_map.mouth},
                      {"eyes", seq.index_map.eyes}};
    auto frames = nlohmann::json::array();
    for (const auto& frame : seq.frames) {
        auto jf = nlohmann::json::array();
        for (const Vec2& p : frame) jf.push_back({p.x, p.y});
        frames.push_back(std::move(jf));
    }
    j["frames"] = std::move(frames);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << j.dump(2) << '\n';
}

std::vector<std::string> validate_landmark_json(const std::string& path) {
    std::vector<std::string> diags;
    std::ifstream f(path);
    if (!f) {
        diags.push_back("cannot open " + path);
        return diags;
    }
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        diags.emplace_back(std::string("JSON parse error: ") + e.what());
        return diags;
    }
    if (!j.contains("center_index") || !j["center_index"].is_number_unsigned()) {
        diags.emplace_back("missing or non-integer 'center_index'");
    }
    if (!j.contains("frames") || !j["frames"].is_array() || j["frames"].empty()) {
        diags.emplace_back("missing or empty 'frames' array");
        return diags;
    }
    const auto& frames = j["frames"];
    std::size_t m = 0;
    if (frames[0].is_array()) m = frames[0].size();
    if (m < 2) diags.push_back("frame 0 has " + std::to_string(m) + " points, need at least 2");
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto& frame = frames[k];
        if (!frame.is_array()) {
            diags.push_back("frame " + std::to_string(k) + " is not an array");
            continue;
        }
        if (frame.size() != m) {
            diags.push_back("frame " + std::to_string(k) + " has " + std::to_string(frame.size()) +
                            " points, expected " + std::to_string(m));
        }
        for (std::size_t p = 0; p < frame.size(); ++p) {
            const auto& pt = frame[p];
            if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
                diags.push_back("frame " + std::to_string(k) + " point " + std::to_string(p) +
                                " is not an [x, y] pair");
            }
        }
    }
    if (j.contains("center_index") && j["center_index"].is_number_unsigned() &&
        j["center_index"].get<std::size_t>() >= m) {
        diags.push_back("center_index " + std::to_string(j["center_index"].get<std::size_t>()) +
                        " outside " + std::to_string(m) + " points");
    }
    return diags;
}

}  // namespace hpkit::landmarks
