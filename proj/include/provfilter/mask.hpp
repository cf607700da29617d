#pragma once

// Contextual mask: binary map of query regions unexplained by the
// geometrically aligned host. Pipeline: color quantization, per-pixel
// max-channel difference, threshold, 5x5 opening, 5x5 median filter,
// small-component removal, connected component analysis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <string>
#include <vector>

#include "provfilter/features.hpp"
#include "provfilter/image.hpp"

namespace provfilter {

struct MaskComponent {
    Rect bbox;
    int area = 0;  // foreground pixels
};

struct ContextMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> bits;  // 0 background, 1 foreground
    double coverage = 0;        // foreground fraction
    std::vector<MaskComponent> components;  // 8-connected, area descending

    bool at(int x, int y) const {
        return bits[size_t(y) * width + x] != 0;
    }
};

struct MaskParams {
    int quant_levels = 32;
    int diff_threshold = 24;   // intensity levels
    int morph_kernel = 5;      // square structuring element / median window
    int min_area = 64;         // drop smaller components
    double coverage_high = 0.9;
    double coverage_low = 0.005;
    double match_quality_max = 0.6;  // mean descriptor distance gate
};

// Uniform per-channel bins, bin-center representative.
inline RasterImage quantize_colors(const RasterImage& img, int levels = 32) {
    if (levels < 2) throw std::invalid_argument("quantize_colors: levels >= 2");
    RasterImage out = img;
    const double bin = 256.0 / levels;
    for (auto& v : out.pixels)
        v = uint8_t(std::min(255.0, std::floor(v / bin) * bin + bin / 2));
    return out;
}

namespace detail {

inline std::vector<uint8_t> erode(const std::vector<uint8_t>& in, int w, int h,
                                  int k) {
    const int r = k / 2;
    std::vector<uint8_t> out(in.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool all = true;
            for (int dy = -r; dy <= r && all; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    int xx = x + dx, yy = y + dy;
                    // outside the frame counts as background
                    if (xx < 0 || yy < 0 || xx >= w || yy >= h ||
                        !in[size_t(yy) * w + xx]) {
                        all = false;
                        break;
                    }
                }
            out[size_t(y) * w + x] = all ? 1 : 0;
        }
    return out;
}

inline std::vector<uint8_t> dilate(const std::vector<uint8_t>& in, int w, int h,
                                   int k) {
    const int r = k / 2;
    std::vector<uint8_t> out(in.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool any = false;
            for (int dy = -r; dy <= r && !any; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    int xx = x + dx, yy = y + dy;
                    if (xx >= 0 && yy >= 0 && xx < w && yy < h &&
                        in[size_t(yy) * w + xx]) {
                        any = true;
                        break;
                    }
                }
            out[size_t(y) * w + x] = any ? 1 : 0;
        }
    return out;
}

inline std::vector<uint8_t> median_binary(const std::vector<uint8_t>& in, int w,
                                          int h, int k) {
    const int r = k / 2;
    const int majority = (k * k) / 2 + 1;
    std::vector<uint8_t> out(in.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int count = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    int xx = x + dx, yy = y + dy;
                    if (xx >= 0 && yy >= 0 && xx < w && yy < h)
                        count += in[size_t(yy) * w + xx];
                }
            out[size_t(y) * w + x] = count >= majority ? 1 : 0;
        }
    return out;
}

}  // namespace detail

// 8-connected components, area descending; optionally removes components
// below min_area from the bit map.
inline void label_components(ContextMask& mask, int min_area) {
    const int w = mask.width, h = mask.height;
    std::vector<int32_t> label(size_t(w) * h, -1);
    std::vector<MaskComponent> comps;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.bits[size_t(y) * w + x] || label[size_t(y) * w + x] >= 0)
                continue;
            int id = int(comps.size());
            MaskComponent comp;
            comp.bbox = {x, y, 1, 1};
            int x0 = x, y0 = y, x1 = x, y1 = y;
            stack.push_back({x, y});
            label[size_t(y) * w + x] = id;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                ++comp.area;
                x0 = std::min(x0, cx);
                y0 = std::min(y0, cy);
                x1 = std::max(x1, cx);
                y1 = std::max(y1, cy);
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        size_t pos = size_t(ny) * w + nx;
                        if (mask.bits[pos] && label[pos] < 0) {
                            label[pos] = id;
                            stack.push_back({nx, ny});
                        }
                    }
            }
            comp.bbox = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
            comps.push_back(comp);
        }
    }
    // erase small components from the bit map
    std::vector<char> keep(comps.size(), 1);
    for (size_t i = 0; i < comps.size(); ++i)
        if (comps[i].area < min_area) keep[i] = 0;
    for (size_t p = 0; p < mask.bits.size(); ++p)
        if (mask.bits[p] && !keep[label[p]]) mask.bits[p] = 0;
    std::vector<MaskComponent> kept;
    for (size_t i = 0; i < comps.size(); ++i)
        if (keep[i]) kept.push_back(comps[i]);
    std::stable_sort(kept.begin(), kept.end(),
                     [](const MaskComponent& a, const MaskComponent& b) {
                         return a.area > b.area;
                     });
    mask.components = std::move(kept);
    int fg = 0;
    for (auto b : mask.bits) fg += b;
    mask.coverage = double(fg) / double(size_t(w) * h);
}

inline ContextMask compute_mask(const RasterImage& query,
                                const RasterImage& host_aligned,
                                const std::vector<uint8_t>& validity,
                                MaskParams params = {}) {
    if (!query.same_size(host_aligned) || query.channels != host_aligned.channels)
        throw DimensionMismatch("compute_mask: image dimensions differ");
    const int w = query.width, h = query.height;

    RasterImage q = quantize_colors(query, params.quant_levels);
    RasterImage a = quantize_colors(host_aligned, params.quant_levels);

    ContextMask mask;
    mask.width = w;
    mask.height = h;
    mask.bits.assign(size_t(w) * h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t pos = size_t(y) * w + x;
            if (!validity.empty() && !validity[pos]) continue;
            int d = 0;
            for (int c = 0; c < q.channels; ++c)
                d = std::max(d, std::abs(int(q.at(x, y, c)) - int(a.at(x, y, c))));
            mask.bits[pos] = d > params.diff_threshold ? 1 : 0;
        }

    mask.bits = detail::erode(mask.bits, w, h, params.morph_kernel);
    mask.bits = detail::dilate(mask.bits, w, h, params.morph_kernel);
    mask.bits = detail::median_binary(mask.bits, w, h, params.morph_kernel);
    label_components(mask, params.min_area);
    return mask;
}

enum class MaskVerdict { composite, near_duplicate, unrelated };

inline const char* to_string(MaskVerdict v) {
    switch (v) {
        case MaskVerdict::composite: return "composite";
        case MaskVerdict::near_duplicate: return "near_duplicate";
        case MaskVerdict::unrelated: return "unrelated";
    }
    return "?";
}

// registration_ok = false means the homography step failed outright.
inline MaskVerdict classify_mask(const ContextMask& mask, double match_quality,
                                 bool registration_ok, MaskParams params = {}) {
    if (!registration_ok || match_quality > params.match_quality_max)
        return MaskVerdict::unrelated;
    if (mask.coverage > params.coverage_high) return MaskVerdict::near_duplicate;
    if (mask.coverage < params.coverage_low) return MaskVerdict::near_duplicate;
    return MaskVerdict::composite;
}

// Sub-FeatureSet whose keypoint centers land on foreground pixels.
inline FeatureSet keypoints_in_mask(const FeatureSet& fs, const ContextMask& mask,
                                    int img_width, int img_height) {
    if (mask.width != img_width || mask.height != img_height)
        throw DimensionMismatch("keypoints_in_mask: mask dimensions differ");
    FeatureSet out;
    out.image_id = fs.image_id;
    for (size_t i = 0; i < fs.size(); ++i) {
        int x = std::clamp(int(std::lround(fs.keypoints[i].x)), 0, mask.width - 1);
        int y = std::clamp(int(std::lround(fs.keypoints[i].y)), 0, mask.height - 1);
        if (mask.at(x, y)) {
            out.keypoints.push_back(fs.keypoints[i]);
            out.descriptors.push_back(fs.descriptors[i]);
        }
    }
    return out;
}

inline RasterImage mask_to_image(const ContextMask& mask) {
    RasterImage img(mask.width, mask.height, 1);
    for (size_t i = 0; i < mask.bits.size(); ++i)
        img.pixels[i] = mask.bits[i] ? 255 : 0;
    return img;
}

}  // namespace provfilter
