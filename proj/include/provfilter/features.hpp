#pragma once

// Hessian-based interest point detection over integral images plus a
// 64-d oriented gradient descriptor (OpenSURF-style box filters,
// 4x4 subregions of Haar statistics, unit-normalized).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "provfilter/image.hpp"
#include "provfilter/serial.hpp"

namespace provfilter {

struct Keypoint {
    float x = 0;
    float y = 0;
    float scale = 0;
    float orientation = 0;  // radians in (-pi, pi]
    float response = 0;
};

using Descriptor = std::array<float, 64>;
inline constexpr int kDescriptorDim = 64;

struct FeatureSet {
    std::string image_id;
    std::vector<Keypoint> keypoints;
    std::vector<Descriptor> descriptors;  // parallel to keypoints

    size_t size() const { return keypoints.size(); }
    bool empty() const { return keypoints.empty(); }
};

struct DetectorParams {
    int octaves = 3;
    int intervals = 4;
    int init_step = 2;
    float threshold = 4e-4f;
    int budget = 2000;
};

inline float l2_distance_sq(const Descriptor& a, const Descriptor& b) {
    float s = 0;
    for (int i = 0; i < kDescriptorDim; ++i) {
        float d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

namespace detail {

// Box sum over `rows` x `cols` starting at (row, col), clipped.
inline float box(const IntegralImage& ii, int row, int col, int rows, int cols) {
    return float(ii.box_sum(col, row, col + cols, row + rows));
}

inline float haar_x(const IntegralImage& ii, int row, int col, int s) {
    return box(ii, row - s / 2, col, s, s / 2) -
           box(ii, row - s / 2, col - s / 2, s, s / 2);
}

inline float haar_y(const IntegralImage& ii, int row, int col, int s) {
    return box(ii, row, col - s / 2, s / 2, s) -
           box(ii, row - s / 2, col - s / 2, s / 2, s);
}

inline float gaussian(float x, float y, float sig) {
    return 1.0f / (2.0f * std::numbers::pi_v<float> * sig * sig) *
           std::exp(-(x * x + y * y) / (2.0f * sig * sig));
}

// Angle of (x, y) in [0, 2*pi).
inline float angle_of(float x, float y) {
    float a = std::atan2(y, x);
    if (a < 0) a += 2.0f * std::numbers::pi_v<float>;
    return a;
}

struct ResponseLayer {
    int width = 0, height = 0, step = 0, filter = 0;
    std::vector<float> responses;

    float response_at(int row, int col) const {
        return responses[size_t(row) * width + col];
    }
    // Look up this layer's response at a coordinate expressed in the
    // (finer) grid of `src`.
    float response_at(int row, int col, const ResponseLayer& src) const {
        int r = (row * src.step) / step;
        int c = (col * src.step) / step;
        return responses[size_t(r) * width + c];
    }
};

inline void build_response_layer(const IntegralImage& ii, ResponseLayer& rl) {
    rl.responses.assign(size_t(rl.width) * rl.height, 0.f);
    const int b = (rl.filter - 1) / 2;
    const int l = rl.filter / 3;
    const int w = rl.filter;
    const float inv_area = 1.f / (float(w) * w);

    for (int ar = 0; ar < rl.height; ++ar) {
        const int r = ar * rl.step;
        for (int ac = 0; ac < rl.width; ++ac) {
            const int c = ac * rl.step;
            float dxx = box(ii, r - l + 1, c - b, 2 * l - 1, w) -
                        box(ii, r - l + 1, c - l / 2, 2 * l - 1, l) * 3.f;
            float dyy = box(ii, r - b, c - l + 1, w, 2 * l - 1) -
                        box(ii, r - l / 2, c - l + 1, l, 2 * l - 1) * 3.f;
            float dxy = box(ii, r - l, c + 1, l, l) +
                        box(ii, r + 1, c - l, l, l) -
                        box(ii, r - l, c - l, l, l) -
                        box(ii, r + 1, c + 1, l, l);
            dxx *= inv_area;
            dyy *= inv_area;
            dxy *= inv_area;
            rl.responses[size_t(ar) * rl.width + ac] =
                dxx * dyy - 0.81f * dxy * dxy;
        }
    }
}

class FastHessian {
  public:
    FastHessian(const IntegralImage& ii, const DetectorParams& p)
        : ii_(ii), params_(p) {}

    std::vector<Keypoint> detect() {
        build_layers();
        std::vector<Keypoint> out;
        static constexpr int filter_map[5][4] = {
            {0, 1, 2, 3}, {1, 3, 4, 5}, {3, 5, 6, 7}, {5, 7, 8, 9}, {7, 9, 10, 11}};
        const int octaves = std::min(params_.octaves, 4);
        for (int o = 0; o < octaves; ++o) {
            for (int i = 0; i <= 1; ++i) {
                const ResponseLayer& b = layers_[filter_map[o][i]];
                const ResponseLayer& m = layers_[filter_map[o][i + 1]];
                const ResponseLayer& t = layers_[filter_map[o][i + 2]];
                for (int r = 0; r < t.height; ++r)
                    for (int c = 0; c < t.width; ++c)
                        if (is_extremum(r, c, t, m, b))
                            interpolate_extremum(r, c, t, m, b, out);
            }
        }
        return out;
    }

  private:
    void build_layers() {
        const int w = ii_.width();
        const int h = ii_.height();
        const int s = params_.init_step;
        // filter sizes 9..195 shared across octaves
        static constexpr int sizes[12] = {9,  15, 21, 27,  39,  51,
                                          75, 99, 147, 195, 291, 387};
        static constexpr int steps_pow[12] = {0, 0, 0, 0, 1, 1,
                                              2, 2, 3, 3, 4, 4};
        int n_layers = 4 + 2 * std::min(params_.octaves - 1, 3);
        layers_.clear();
        for (int i = 0; i < n_layers && i < 12; ++i) {
            ResponseLayer rl;
            rl.step = s * (1 << steps_pow[i]);
            rl.width = w / rl.step;
            rl.height = h / rl.step;
            rl.filter = sizes[i];
            if (rl.width <= 0 || rl.height <= 0) rl.width = rl.height = 0;
            if (rl.width > 0) build_response_layer(ii_, rl);
            layers_.push_back(std::move(rl));
        }
    }

    bool is_extremum(int r, int c, const ResponseLayer& t,
                     const ResponseLayer& m, const ResponseLayer& b) const {
        const int layer_border = (t.filter + 1) / (2 * t.step);
        if (r <= layer_border || r >= t.height - layer_border ||
            c <= layer_border || c >= t.width - layer_border)
            return false;
        float candidate = m.response_at(r, c, t);
        if (candidate < params_.threshold) return false;
        for (int rr = -1; rr <= 1; ++rr)
            for (int cc = -1; cc <= 1; ++cc) {
                if (t.response_at(r + rr, c + cc) >= candidate) return false;
                if ((rr != 0 || cc != 0) &&
                    m.response_at(r + rr, c + cc, t) >= candidate)
                    return false;
                if (b.response_at(r + rr, c + cc, t) >= candidate) return false;
            }
        return true;
    }

    void interpolate_extremum(int r, int c, const ResponseLayer& t,
                              const ResponseLayer& m, const ResponseLayer& b,
                              std::vector<Keypoint>& out) const {
        auto v = [&](int rr, int cc, int layer) -> float {
            switch (layer) {
                case 0: return b.response_at(r + rr, c + cc, t);
                case 1: return m.response_at(r + rr, c + cc, t);
                default: return t.response_at(r + rr, c + cc);
            }
        };
        // 3D quadratic fit around the sample
        float dx = (v(0, 1, 1) - v(0, -1, 1)) / 2.f;
        float dy = (v(1, 0, 1) - v(-1, 0, 1)) / 2.f;
        float ds = (v(0, 0, 2) - v(0, 0, 0)) / 2.f;

        float dxx = v(0, 1, 1) - 2 * v(0, 0, 1) + v(0, -1, 1);
        float dyy = v(1, 0, 1) - 2 * v(0, 0, 1) + v(-1, 0, 1);
        float dss = v(0, 0, 2) - 2 * v(0, 0, 1) + v(0, 0, 0);
        float dxy = (v(1, 1, 1) - v(1, -1, 1) - v(-1, 1, 1) + v(-1, -1, 1)) / 4.f;
        float dxs = (v(0, 1, 2) - v(0, -1, 2) - v(0, 1, 0) + v(0, -1, 0)) / 4.f;
        float dys = (v(1, 0, 2) - v(-1, 0, 2) - v(1, 0, 0) + v(-1, 0, 0)) / 4.f;

        // Solve H * x = -g for the offset (3x3 Cramer)
        float h[3][3] = {{dxx, dxy, dxs}, {dxy, dyy, dys}, {dxs, dys, dss}};
        float det = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1]) -
                    h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0]) +
                    h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
        if (std::abs(det) < 1e-12f) return;
        auto solve = [&](int col) {
            float a[3][3];
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) a[i][j] = h[i][j];
            float g[3] = {-dx, -dy, -ds};
            for (int i = 0; i < 3; ++i) a[i][col] = g[i];
            return (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                    a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                    a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])) /
                   det;
        };
        float xc = solve(0), xr = solve(1), xi = solve(2);
        if (std::abs(xc) >= 0.5f || std::abs(xr) >= 0.5f || std::abs(xi) >= 0.5f)
            return;

        const int filter_step = m.filter - b.filter;
        Keypoint kp;
        kp.x = float((c + xc) * t.step);
        kp.y = float((r + xr) * t.step);
        kp.scale = 0.1333f * (float(m.filter) + xi * float(filter_step));
        kp.response = m.response_at(r, c, t);
        if (kp.response <= 0) return;
        if (kp.x < 0 || kp.x >= float(ii_.width()) || kp.y < 0 ||
            kp.y >= float(ii_.height()))
            return;
        out.push_back(kp);
    }

    const IntegralImage& ii_;
    DetectorParams params_;
    std::vector<ResponseLayer> layers_;
};

inline float compute_orientation(const IntegralImage& ii, const Keypoint& kp) {
    const float s = kp.scale;
    const int x = int(std::lround(kp.x));
    const int y = int(std::lround(kp.y));
    const int ws = 4 * int(std::lround(s));

    std::vector<float> res_x, res_y, ang;
    for (int i = -6; i <= 6; ++i) {
        for (int j = -6; j <= 6; ++j) {
            if (i * i + j * j >= 36) continue;
            float g = gaussian(float(i), float(j), 2.5f);
            float rx = g * haar_x(ii, int(std::lround(y + j * s)),
                                  int(std::lround(x + i * s)), ws);
            float ry = g * haar_y(ii, int(std::lround(y + j * s)),
                                  int(std::lround(x + i * s)), ws);
            res_x.push_back(rx);
            res_y.push_back(ry);
            ang.push_back(angle_of(rx, ry));
        }
    }

    const float two_pi = 2.0f * std::numbers::pi_v<float>;
    const float window = std::numbers::pi_v<float> / 3.0f;
    float best = 0.f, orientation = 0.f;
    for (float a1 = 0.f; a1 < two_pi; a1 += 0.15f) {
        float a2 = (a1 + window > two_pi) ? (a1 + window - two_pi) : (a1 + window);
        float sum_x = 0.f, sum_y = 0.f;
        for (size_t k = 0; k < ang.size(); ++k) {
            float a = ang[k];
            bool in_window = (a1 < a2) ? (a1 < a && a < a2)
                                       : ((a > 0 && a < a2) || (a > a1 && a < two_pi));
            if (in_window) {
                sum_x += res_x[k];
                sum_y += res_y[k];
            }
        }
        float mag = sum_x * sum_x + sum_y * sum_y;
        if (mag > best) {
            best = mag;
            orientation = angle_of(sum_x, sum_y);
        }
    }
    // wrap to (-pi, pi]
    if (orientation > std::numbers::pi_v<float>) orientation -= two_pi;
    return orientation;
}

inline Descriptor compute_descriptor(const IntegralImage& ii, const Keypoint& kp) {
    Descriptor desc{};
    const float scale = kp.scale;
    const int x = int(std::lround(kp.x));
    const int y = int(std::lround(kp.y));
    const float co = std::cos(kp.orientation);
    const float si = std::sin(kp.orientation);
    const int hs = 2 * int(std::lround(scale));

    int count = 0;
    float len = 0.f;
    float cx = -0.5f;
    int i = -8;
    while (i < 12) {
        i = i - 4;
        cx += 1.f;
        float cy = -0.5f;
        int j = -8;
        while (j < 12) {
            j = j - 4;
            cy += 1.f;
            float dx = 0.f, dy = 0.f, mdx = 0.f, mdy = 0.f;
            const int ix = i + 5;
            const int jx = j + 5;
            const int xs = int(std::lround(x + (-jx * scale * si + ix * scale * co)));
            const int ys = int(std::lround(y + (jx * scale * co + ix * scale * si)));
            for (int k = i; k < i + 9; ++k) {
                for (int l = j; l < j + 9; ++l) {
                    const int sample_x =
                        int(std::lround(x + (-l * scale * si + k * scale * co)));
                    const int sample_y =
                        int(std::lround(y + (l * scale * co + k * scale * si)));
                    const float g1 = gaussian(float(xs - sample_x),
                                              float(ys - sample_y), 2.5f * scale);
                    const float rx = haar_x(ii, sample_y, sample_x, hs);
                    const float ry = haar_y(ii, sample_y, sample_x, hs);
                    const float rrx = g1 * (-rx * si + ry * co);
                    const float rry = g1 * (rx * co + ry * si);
                    dx += rrx;
                    dy += rry;
                    mdx += std::abs(rrx);
                    mdy += std::abs(rry);
                }
            }
            const float g2 = gaussian(cx - 2.0f, cy - 2.0f, 1.5f);
            desc[count++] = dx * g2;
            desc[count++] = dy * g2;
            desc[count++] = mdx * g2;
            desc[count++] = mdy * g2;
            len += (dx * dx + dy * dy + mdx * mdx + mdy * mdy) * g2 * g2;
            j += 9;
        }
        i += 9;
    }
    len = std::sqrt(len);
    if (len > 0.f) {
        for (auto& v : desc) v /= len;
    } else {
        desc[0] = 1.f;  // flat patch fallback, still unit norm
    }
    return desc;
}

inline void sort_and_cap(std::vector<Keypoint>& kps, int budget) {
    std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
        if (a.response != b.response) return a.response > b.response;
        if (a.y != b.y) return a.y < b.y;
        if (a.x != b.x) return a.x < b.x;
        return a.scale < b.scale;
    });
    if (int(kps.size()) > budget) kps.resize(budget);
}

}  // namespace detail

inline FeatureSet detect_and_describe(const RasterImage& img, int budget,
                                      DetectorParams params = {},
                                      std::string image_id = {}) {
    FeatureSet fs;
    fs.image_id = std::move(image_id);
    if (budget < 1 || img.width < 32 || img.height < 32) return fs;
    params.budget = budget;

    RasterImage gray = to_grayscale(img);
    IntegralImage ii(gray);
    detail::FastHessian fh(ii, params);
    std::vector<Keypoint> kps = fh.detect();
    detail::sort_and_cap(kps, budget);

    fs.keypoints.reserve(kps.size());
    fs.descriptors.reserve(kps.size());
    for (auto& kp : kps) {
        kp.orientation = detail::compute_orientation(ii, kp);
        fs.keypoints.push_back(kp);
        fs.descriptors.push_back(detail::compute_descriptor(ii, kp));
    }
    return fs;
}

// Detection restricted to a set of rectangles with the Hessian threshold
// scaled down so sparse regions still produce keypoints.
inline FeatureSet redetect_in_regions(const RasterImage& img,
                                      const std::vector<Rect>& regions,
                                      int budget, DetectorParams params = {},
                                      float threshold_factor = 0.25f,
                                      std::string image_id = {}) {
    FeatureSet fs;
    fs.image_id = std::move(image_id);
    if (budget < 1 || img.width < 32 || img.height < 32 || regions.empty())
        return fs;

    std::vector<Rect> clipped;
    for (const Rect& r : regions) {
        Rect c = r.clipped(img.width, img.height);
        if (c.w > 0 && c.h > 0) clipped.push_back(c);
    }
    if (clipped.empty()) return fs;

    DetectorParams p = params;
    p.threshold *= threshold_factor;

    RasterImage gray = to_grayscale(img);
    IntegralImage ii(gray);
    detail::FastHessian fh(ii, p);
    std::vector<Keypoint> kps = fh.detect();

    std::vector<Keypoint> kept;
    for (const Keypoint& kp : kps) {
        int px = std::clamp(int(std::lround(kp.x)), 0, img.width - 1);
        int py = std::clamp(int(std::lround(kp.y)), 0, img.height - 1);
        for (const Rect& r : clipped) {
            if (r.contains(px, py)) {
                kept.push_back(kp);
                break;
            }
        }
    }
    detail::sort_and_cap(kept, budget);

    for (auto& kp : kept) {
        kp.orientation = detail::compute_orientation(ii, kp);
        fs.keypoints.push_back(kp);
        fs.descriptors.push_back(detail::compute_descriptor(ii, kp));
    }
    return fs;
}

// --- FeatureSet binary format ("PFFS") ---

inline constexpr uint16_t kFeatureFormatVersion = 1;

inline void write_feature_set(BinaryWriter& w, const FeatureSet& fs) {
    w.put_bytes("PFFS", 4);
    w.put<uint16_t>(kFeatureFormatVersion);
    w.put_string(fs.image_id);
    w.put<uint32_t>(uint32_t(fs.keypoints.size()));
    for (size_t i = 0; i < fs.keypoints.size(); ++i) {
        const Keypoint& kp = fs.keypoints[i];
        w.put<float>(kp.x);
        w.put<float>(kp.y);
        w.put<float>(kp.scale);
        w.put<float>(kp.orientation);
        w.put<float>(kp.response);
        w.put_bytes(fs.descriptors[i].data(), sizeof(Descriptor));
    }
}

inline FeatureSet read_feature_set(BinaryReader& r) {
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::string_view(magic, 4) != "PFFS")
        throw FormatError("bad feature file magic");
    auto version = r.get<uint16_t>();
    if (version != kFeatureFormatVersion)
        throw FormatError("unsupported feature file version");
    FeatureSet fs;
    fs.image_id = r.get_string();
    auto n = r.get<uint32_t>();
    fs.keypoints.resize(n);
    fs.descriptors.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        Keypoint& kp = fs.keypoints[i];
        kp.x = r.get<float>();
        kp.y = r.get<float>();
        kp.scale = r.get<float>();
        kp.orientation = r.get<float>();
        kp.response = r.get<float>();
        r.get_bytes(fs.descriptors[i].data(), sizeof(Descriptor));
    }
    return fs;
}

}  // namespace provfilter
