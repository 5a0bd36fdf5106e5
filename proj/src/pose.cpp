// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "hpkit/pose.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hpkit::pose {

namespace {

bool same_edge(const Edge& a, const Edge& b) {
    return (a.first == b.first && a.second == b.second) ||
           (a.first == b.second && a.second == b.first);
}

double edge_length(const Skeleton& s, const Edge& e) {
    return std::hypot(s.points[e.first].x - s.points[e.second].x,
                      s.points[e.first].y - s.points[e.second].y);
}

bool edge_valid(const Skeleton& s, const Edge& e) {
    return s.valid[e.first] && s.valid[e.second];
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double luminance(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

}  // namespace

std::size_t Skeleton::nose_index() const {
    auto it = semantics.find("nose");
    if (it == semantics.end() || it->second.empty()) {
        throw RetargetError("skeleton: no nose in the semantic map");
    }
    return it->second[0];
}

bool Skeleton::has_valid_nose() const {
    auto it = semantics.find("nose");
    if (it == semantics.end() || it->second.empty()) return false;
    const std::size_t idx = it->second[0];
    return idx < points.size() && valid[idx];
}

std::vector<std::size_t> Skeleton::eye_indices() const {
    auto it = semantics.find("eyes");
    return it == semantics.end() ? std::vector<std::size_t>{} : it->second;
}

void Skeleton::validate() const {
    if (valid.size() != points.size()) {
        throw ParameterError("skeleton: " + std::to_string(valid.size()) + " validity flags for " +
                             std::to_string(points.size()) + " points");
    }
    for (const Edge& e : edges) {
        if (e.first >= points.size() || e.second >= points.size()) {
            throw IndexError("skeleton: edge (" + std::to_string(e.first) + ", " +
                             std::to_string(e.second) + ") outside " +
                             std::to_string(points.size()) + " points");
        }
    }
    for (const auto& [name, indices] : semantics) {
        for (std::size_t idx : indices) {
            if (idx >= points.size()) {
                throw IndexError("skeleton: semantic '" + name + "' index " + std::to_string(idx) +
                                 " outside " + std::to_string(points.size()) + " points");
            }
        }
    }
    for (const SkeletonPoint& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            throw ParameterError("skeleton: non-finite point coordinate");
        }
    }
}

RetargetTransform compute_retarget(const Skeleton& source, const Skeleton& driving_first) {
    source.validate();
    driving_first.validate();
    if (!source.has_valid_nose()) throw RetargetError("retarget: source nose missing or invalid");
    if (!driving_first.has_valid_nose()) {
        throw RetargetError("retarget: driving nose missing or invalid");
    }
    const SkeletonPoint& src_nose = source.points[source.nose_index()];
    const SkeletonPoint& drv_nose = driving_first.points[driving_first.nose_index()];

    std::vector<double> ratios;
    for (const Edge& se : source.edges) {
        if (!edge_valid(source, se)) continue;
        for (const Edge& de : driving_first.edges) {
            if (!same_edge(se, de) || !edge_valid(driving_first, de)) continue;
            const double src_len = edge_length(source, se);
            const double drv_len = edge_length(driving_first, de);
            if (src_len > 0.0 && drv_len > 0.0) ratios.push_back(src_len / drv_len);
            break;
        }
    }
    if (ratios.empty()) throw RetargetError("retarget: no common valid edge between skeletons");

    std::sort(ratios.begin(), ratios.end());
    const std::size_t n = ratios.size();
    const double median =
        (n % 2 == 1) ? ratios[n / 2] : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);

    RetargetTransform t;
    t.translate_x = src_nose.x - drv_nose.x;
    t.translate_y = src_nose.y - drv_nose.y;
    t.scale = median;
    return t;
}

std::vector<Skeleton> apply_retarget(const std::vector<Skeleton>& driving,
                                     const RetargetTransform& t) {
    if (!(t.scale > 0.0) || !std::isfinite(t.scale)) {
        throw RetargetError("retarget: scale must be positive and finite");
    }
    if (driving.empty()) return {};
    if (!driving[0].has_valid_nose()) {
        throw RetargetError("retarget: first driving frame has no valid nose anchor");
    }
    const SkeletonPoint anchor = driving[0].points[driving[0].nose_index()];
    std::vector<Skeleton> out;
    out.reserve(driving.size());
    for (const Skeleton& skel : driving) {
        Skeleton mapped = skel;
        for (SkeletonPoint& p : mapped.points) {
            p.x = anchor.x + t.translate_x + t.scale * (p.x - anchor.x);
            p.y = anchor.y + t.translate_y + t.scale * (p.y - anchor.y);
        }
        out.push_back(std::move(mapped));
    }
    return out;
}

Skeleton drop_eye_keypoints(const Skeleton& skel) {
    Skeleton out = skel;
    const std::vector<std::size_t> eyes = skel.eye_indices();
    if (eyes.empty()) return out;
    for (std::size_t idx : eyes) {
        if (idx < out.valid.size()) out.valid[idx] = false;
    }
    auto touches_eye = [&](const Edge& e) {
        return std::find(eyes.begin(), eyes.end(), e.first) != eyes.end() ||
               std::find(eyes.begin(), eyes.end(), e.second) != eyes.end();
    };
    out.edges.erase(std::remove_if(out.edges.begin(), out.edges.end(), touches_eye),
                    out.edges.end());
    return out;
}

Skeleton edge_dropout(const Skeleton& skel, double p, std::uint64_t seed,
                      const std::vector<Edge>& protected_edges) {
    if (p < 0.0 || p > 1.0) {
        throw ParameterError("edge_dropout: probability " + std::to_string(p) + " outside [0, 1]");
    }
    Rng rng(seed);
    Skeleton out = skel;
    out.edges.clear();
    for (const Edge& e : skel.edges) {
        const bool guarded = std::any_of(protected_edges.begin(), protected_edges.end(),
                                         [&](const Edge& pe) { return same_edge(pe, e); });
        if (guarded || rng.uniform() >= p) out.edges.push_back(e);
    }
    return out;
}

// ---- color jitter ---------------------------------------------------------

Image image_from_tensor(const Tensor& t) {
    if (t.rank() != 3 || t.dim(2) != 3) {
        throw DimensionError("image: expects [H,W,3], got " + shape_str(t.shape()));
    }
    Image img;
    img.height = t.dim(0);
    img.width = t.dim(1);
    img.data = t.data();
    return img;
}

Tensor image_to_tensor(const Image& img) {
    return Tensor::from({img.height, img.width, 3}, img.data);
}

JitterRanges JitterRanges::identity() {
    JitterRanges r;
    r.brightness_lo = r.brightness_hi = 1.0;
    r.contrast_lo = r.contrast_hi = 1.0;
    r.saturation_lo = r.saturation_hi = 1.0;
    r.hue_lo = r.hue_hi = 0.0;
    return r;
}

void JitterRanges::validate() const {
    auto check = [](double lo, double hi, double identity, double floor, const char* name) {
        if (!(lo <= hi) || lo > identity || hi < identity || lo < floor) {
            throw ParameterError(std::string("color_jitter: invalid ") + name + " range [" +
                                 std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
    };
    check(brightness_lo, brightness_hi, 1.0, 0.0, "brightness");
    check(contrast_lo, contrast_hi, 1.0, 0.0, "contrast");
    check(saturation_lo, saturation_hi, 1.0, 0.0, "saturation");
    check(hue_lo, hue_hi, 0.0, -0.5, "hue");
    if (hue_hi > 0.5) throw ParameterError("color_jitter: hue range exceeds 0.5");
}

namespace {

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    v = mx;
    const double delta = mx - mn;
    s = mx > 0.0 ? delta / mx : 0.0;
    if (delta == 0.0) {
        h = 0.0;
        return;
    }
    if (mx == r) {
        h = (g - b) / delta;
    } else if (mx == g) {
        h = 2.0 + (b - r) / delta;
    } else {
        h = 4.0 + (r - g) / delta;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    if (s <= 0.0) {
        r = g = b = v;
        return;
    }
    h = h - std::floor(h);
    const double hh = h * 6.0;
    const int sector = std::min(5, static_cast<int>(hh));
    const double f = hh - sector;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

}  // namespace

Image color_jitter(const Image& image, const JitterRanges& ranges, std::uint64_t seed) {
    ranges.validate();
    if (image.data.size() != image.height * image.width * 3) {
        throw DimensionError("color_jitter: image buffer does not match declared size");
    }
    Rng rng(seed);
    const double fb = ranges.brightness_lo + (ranges.brightness_hi - ranges.brightness_lo) * rng.uniform();
    const double fc = ranges.contrast_lo + (ranges.contrast_hi - ranges.contrast_lo) * rng.uniform();
    const double fs = ranges.saturation_lo + (ranges.saturation_hi - ranges.saturation_lo) * rng.uniform();
    const double fh = ranges.hue_lo + (ranges.hue_hi - ranges.hue_lo) * rng.uniform();

    Image out = image;
    // brightness
    if (fb != 1.0) {
        for (double& v : out.data) v = clamp01(v * fb);
    }
    // contrast, against the mean luminance of the whole image
    if (fc != 1.0) {
        double mean_l = 0.0;
        for (std::size_t i = 0; i < out.data.size(); i += 3) {
            mean_l += luminance(out.data[i], out.data[i + 1], out.data[i + 2]);
        }
        mean_l /= static_cast<double>(out.data.size() / 3);
        for (double& v : out.data) v = clamp01(mean_l + fc * (v - mean_l));
    }
    // saturation, against per-pixel luminance
    if (fs != 1.0) {
        for (std::size_t i = 0; i < out.data.size(); i += 3) {
            const double l = luminance(out.data[i], out.data[i + 1], out.data[i + 2]);
            for (int c = 0; c < 3; ++c) {
                out.data[i + static_cast<std::size_t>(c)] =
                    clamp01(l + fs * (out.data[i + static_cast<std::size_t>(c)] - l));
            }
        }
    }
    // hue rotation in HSV
    if (fh != 0.0) {
        for (std::size_t i = 0; i < out.data.size(); i += 3) {
            double h, s, v;
            rgb_to_hsv(out.data[i], out.data[i + 1], out.data[i + 2], h, s, v);
            double r, g, b;
            hsv_to_rgb(h + fh, s, v, r, g, b);
            out.data[i] = clamp01(r);
            out.data[i + 1] = clamp01(g);
            out.data[i + 2] = clamp01(b);
        }
    }
    return out;
}

// ---- JSON I/O ---------------------------------------------------------------

Skeleton load_skeleton(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    Skeleton skel;
    try {
        for (const auto& p : j.at("points")) {
            SkeletonPoint pt;
            pt.x = p.at(0).get<double>();
            pt.y = p.at(1).get<double>();
            if (p.size() > 2) pt.confidence = p.at(2).get<double>();
            skel.points.push_back(pt);
        }
        if (j.contains("valid")) {
            for (const auto& v : j["valid"]) skel.valid.push_back(v.get<bool>());
        } else {
            skel.valid.assign(skel.points.size(), true);
        }
        for (const auto& e : j.at("edges")) {
            skel.edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
        }
        if (j.contains("semantics")) {
            for (const auto& [name, val] : j["semantics"].items()) {
                std::vector<std::size_t> indices;
                if (val.is_array()) {
                    for (const auto& v : val) indices.push_back(v.get<std::size_t>());
                } else {
                    indices.push_back(val.get<std::size_t>());
                }
                skel.semantics[name] = std::move(indices);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    skel.validate();
    return skel;
}

void save_skeleton(const std::string& path, const Skeleton& skel) {
    nlohmann::json j;
    auto points = nlohmann::json::array();
    for (const SkeletonPoint& p : skel.points) points.push_back({p.x, p.y, p.confidence});
    j["points"] = std::move(points);
    j["valid"] = skel.valid;
    auto edges = nlohmann::json::array();
    for (const Edge& e : skel.edges) edges.push_back({e.first, e.second});
    j["edges"] = std::move(edges);
    nlohmann::json sem;
    for (const auto& [name, indices] : skel.semantics) {
        if (name == "nose" && indices.size() == 1) {
            sem[name] = indices[0];
        } else {
            sem[name] = indices;
        }
    }
    j["semantics"] = std::move(sem);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << j.dump(2) << '\n';
}

std::vector<std::string> validate_skeleton_json(const std::string& path) {
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
    if (!j.contains("points") || !j["points"].is_array() || j["points"].empty()) {
        diags.emplace_back("missing or empty 'points' array");
        return diags;
    }
    const std::size_t n = j["points"].size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = j["points"][i];
        if (!p.is_array() || p.size() < 2 || !p[0].is_number() || !p[1].is_number()) {
            diags.push_back("point " + std::to_string(i) + " is not an [x, y, conf] triple");
        }
    }
    if (j.contains("valid") && j["valid"].size() != n) {
        diags.push_back("'valid' has " + std::to_string(j["valid"].size()) + " entries for " +
                        std::to_string(n) + " points");
    }
    if (!j.contains("edges") || !j["edges"].is_array()) {
        diags.emplace_back("missing 'edges' array");
    } else {
        for (std::size_t i = 0; i < j["edges"].size(); ++i) {
            const auto& e = j["edges"][i];
            if (!e.is_array() || e.size() != 2) {
                diags.push_back("edge " + std::to_string(i) + " is not an index pair");
                continue;
            }
            if (e[0].get<std::size_t>() >= n || e[1].get<std::size_t>() >= n) {
                diags.push_back("edge " + std::to_string(i) + " references a point outside 0.." +
                                std::to_string(n - 1));
            }
        }
    }
    if (j.contains("semantics")) {
        for (const auto& [name, val] : j["semantics"].items()) {
            std::vector<std::size_t> indices;
            if (val.is_array()) {
                for (const auto& v : val) indices.push_back(v.get<std::size_t>());
            } else if (val.is_number_unsigned()) {
                indices.push_back(val.get<std::size_t>());
            } else {
                diags.push_back("semantic '" + name + "' is neither an index nor an index list");
            }
            for (std::size_t idx : indices) {
                if (idx >= n) {
                    diags.push_back("semantic '" + name + "' index " + std::to_string(idx) +
                                    " outside 0.." + std::to_string(n - 1));
                }
            }
        }
    }
    return diags;
}

}  // namespace hpkit::pose
