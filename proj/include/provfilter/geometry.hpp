#pragma once

// Descriptor matching under the nearest-neighbor distance ratio policy,
// RANSAC homography estimation with normalized DLT, and projective
// warping with a validity mask.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "provfilter/features.hpp"
#include "provfilter/image.hpp"

namespace provfilter {

struct InsufficientMatches : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateGeometry : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Match {
    int query_kp = 0;
    int target_kp = 0;
    float distance = 0;
    float ratio = 0;
};

struct Homography {
    Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();  // target -> query
    int inlier_count = 0;
    double mean_reprojection_error = 0;  // over inliers
    double match_quality = 0;  // mean descriptor distance, set by caller

    Eigen::Vector2d apply(double x, double y) const {
        Eigen::Vector3d p = matrix * Eigen::Vector3d(x, y, 1.0);
        return {p.x() / p.z(), p.y() / p.z()};
    }
};

// Exact 2-NN ratio test, one-to-one by keeping the closest match per
// target keypoint.
inline std::vector<Match> match_nndr(const FeatureSet& fs_q,
                                     const FeatureSet& fs_t,
                                     float ratio_threshold = 0.8f) {
    std::vector<Match> raw;
    for (size_t qi = 0; qi < fs_q.size(); ++qi) {
        float d1 = std::numeric_limits<float>::max();
        float d2 = std::numeric_limits<float>::max();
        int best = -1;
        for (size_t ti = 0; ti < fs_t.size(); ++ti) {
            float d = l2_distance_sq(fs_q.descriptors[qi], fs_t.descriptors[ti]);
            if (d < d1) {
                d2 = d1;
                d1 = d;
                best = int(ti);
            } else if (d < d2) {
                d2 = d;
            }
        }
        if (best < 0) continue;
        float dist1 = std::sqrt(d1);
        float dist2 = std::sqrt(d2);
        float ratio = dist1 == 0.f ? 0.f : (dist2 == 0.f ? 1.f : dist1 / dist2);
        if (ratio <= ratio_threshold)
            raw.push_back({int(qi), best, dist1, ratio});
    }
    // one-to-one: lowest distance wins per target keypoint
    std::vector<int> winner(fs_t.size(), -1);
    for (size_t i = 0; i < raw.size(); ++i) {
        int t = raw[i].target_kp;
        if (winner[t] < 0 || raw[i].distance < raw[winner[t]].distance)
            winner[t] = int(i);
    }
    std::vector<Match> out;
    for (size_t i = 0; i < raw.size(); ++i)
        if (winner[raw[i].target_kp] == int(i)) out.push_back(raw[i]);
    return out;
}

// The n lowest-distance matches, ascending.
inline std::vector<Match> top_matches(std::vector<Match> matches, int n = 25) {
    if (matches.size() < 4)
        throw InsufficientMatches("need at least 4 matches for a homography");
    std::sort(matches.begin(), matches.end(),
              [](const Match& a, const Match& b) {
                  if (a.distance != b.distance) return a.distance < b.distance;
                  return a.query_kp < b.query_kp;
              });
    if (int(matches.size()) > n) matches.resize(n);
    return matches;
}

inline double mean_match_distance(const std::vector<Match>& matches) {
    if (matches.empty()) return std::numeric_limits<double>::max();
    double s = 0;
    for (const auto& m : matches) s += m.distance;
    return s / double(matches.size());
}

namespace detail {

// Hartley normalization: zero centroid, sqrt(2) mean distance.
inline Eigen::Matrix3d normalizing_transform(
    const std::vector<Eigen::Vector2d>& pts) {
    Eigen::Vector2d c(0, 0);
    for (const auto& p : pts) c += p;
    c /= double(pts.size());
    double mean_d = 0;
    for (const auto& p : pts) mean_d += (p - c).norm();
    mean_d /= double(pts.size());
    double s = mean_d > 1e-12 ? std::sqrt(2.0) / mean_d : 1.0;
    Eigen::Matrix3d t;
    t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
    return t;
}

// DLT from src -> dst point pairs; returns false on rank deficiency.
inline bool dlt_homography(const std::vector<Eigen::Vector2d>& src,
                           const std::vector<Eigen::Vector2d>& dst,
                           Eigen::Matrix3d& h_out) {
    const size_t n = src.size();
    Eigen::Matrix3d t_src = normalizing_transform(src);
    Eigen::Matrix3d t_dst = normalizing_transform(dst);
    Eigen::MatrixXd a(2 * n, 9);
    for (size_t i = 0; i < n; ++i) {
        Eigen::Vector3d s = t_src * Eigen::Vector3d(src[i].x(), src[i].y(), 1);
        Eigen::Vector3d d = t_dst * Eigen::Vector3d(dst[i].x(), dst[i].y(), 1);
        double x = s.x(), y = s.y(), u = d.x(), v = d.y();
        a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
        a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // rank must be 8 for a unique solution
    if (sv.size() >= 8 && sv(7) < 1e-9 * sv(0)) return false;
    Eigen::VectorXd h = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    Eigen::Matrix3d full = t_dst.inverse() * hn * t_src;
    if (std::abs(full.determinant()) < 1e-12) return false;
    if (std::abs(full(2, 2)) < 1e-12) return false;
    h_out = full / full(2, 2);
    return true;
}

inline bool collinear(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                      const Eigen::Vector2d& c) {
    Eigen::Vector2d u = b - a, v = c - a;
    return std::abs(u.x() * v.y() - u.y() * v.x()) < 1e-9;
}

inline bool degenerate_sample(const std::vector<Eigen::Vector2d>& pts) {
    for (size_t i = 0; i < pts.size(); ++i)
        for (size_t j = i + 1; j < pts.size(); ++j)
            for (size_t k = j + 1; k < pts.size(); ++k)
                if (collinear(pts[i], pts[j], pts[k])) return true;
    return false;
}

}  // namespace detail

struct RansacOptions {
    int max_iterations = 2000;
    double inlier_threshold = 3.0;  // px
    double confidence = 0.995;
};

// Estimates the homography mapping target keypoint coordinates onto
// query coordinates. Deterministic under a fixed seed.
inline Homography estimate_homography(const std::vector<Match>& matches,
                                      const std::vector<Keypoint>& kps_q,
                                      const std::vector<Keypoint>& kps_t,
                                      uint64_t seed = 0,
                                      RansacOptions opts = {}) {
    if (matches.size() < 4)
        throw InsufficientMatches("need at least 4 matches for a homography");
    const size_t n = matches.size();
    std::vector<Eigen::Vector2d> src(n), dst(n);
    for (size_t i = 0; i < n; ++i) {
        const Keypoint& t = kps_t[matches[i].target_kp];
        const Keypoint& q = kps_q[matches[i].query_kp];
        src[i] = {t.x, t.y};
        dst[i] = {q.x, q.y};
    }

    std::mt19937 rng(uint32_t(seed * 2654435761u + 17));
    std::uniform_int_distribution<size_t> pick(0, n - 1);
    const double thr_sq = opts.inlier_threshold * opts.inlier_threshold;

    std::vector<char> best_inliers(n, 0);
    int best_count = 0;
    int iterations = opts.max_iterations;
    for (int it = 0; it < iterations; ++it) {
        size_t idx[4];
        for (int j = 0; j < 4; ++j) {
            bool fresh;
            do {
                idx[j] = pick(rng);
                fresh = true;
                for (int l = 0; l < j; ++l)
                    if (idx[l] == idx[j]) fresh = false;
            } while (!fresh);
        }
        std::vector<Eigen::Vector2d> s = {src[idx[0]], src[idx[1]],
                                          src[idx[2]], src[idx[3]]};
        std::vector<Eigen::Vector2d> d = {dst[idx[0]], dst[idx[1]],
                                          dst[idx[2]], dst[idx[3]]};
        if (detail::degenerate_sample(s) || detail::degenerate_sample(d))
            continue;
        Eigen::Matrix3d h;
        if (!detail::dlt_homography(s, d, h)) continue;

        int count = 0;
        std::vector<char> inliers(n, 0);
        for (size_t i = 0; i < n; ++i) {
            Eigen::Vector3d p = h * Eigen::Vector3d(src[i].x(), src[i].y(), 1);
            if (std::abs(p.z()) < 1e-12) continue;
            double ex = p.x() / p.z() - dst[i].x();
            double ey = p.y() / p.z() - dst[i].y();
            if (ex * ex + ey * ey < thr_sq) {
                inliers[i] = 1;
                ++count;
            }
        }
        if (count > best_count) {
            best_count = count;
            best_inliers = inliers;
            // adaptive iteration bound at the requested confidence
            double w = double(count) / double(n);
            double p_good = std::pow(w, 4);
            if (p_good > 1e-12) {
                double needed =
                    std::log(1.0 - opts.confidence) / std::log(1.0 - p_good);
                iterations = std::min(iterations,
                                      it + 1 + int(std::ceil(needed)));
            }
        }
    }

    if (best_count < 4)
        throw DegenerateGeometry("no homography with >= 4 inliers");

    // final refit over all inliers
    std::vector<Eigen::Vector2d> s_in, d_in;
    for (size_t i = 0; i < n; ++i)
        if (best_inliers[i]) {
            s_in.push_back(src[i]);
            d_in.push_back(dst[i]);
        }
    Eigen::Matrix3d h_final;
    if (!detail::dlt_homography(s_in, d_in, h_final))
        throw DegenerateGeometry("inlier set is rank deficient");

    Homography out;
    out.matrix = h_final;
    double err_sum = 0;
    int count = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!best_inliers[i]) continue;
        Eigen::Vector2d p = out.apply(src[i].x(), src[i].y());
        err_sum += (p - dst[i]).norm();
        ++count;
    }
    out.inlier_count = count;
    out.mean_reprojection_error = count ? err_sum / count : 0.0;
    return out;
}

struct WarpResult {
    RasterImage image;
    std::vector<uint8_t> valid;  // width*height, 1 where source coverage

    bool is_valid(int x, int y) const {
        return valid[size_t(y) * image.width + x] != 0;
    }
};

// Inverse-mapped bilinear resampling of img through h (which maps source
// coordinates onto the output frame). Uncovered pixels are zeroed and
// flagged invalid.
inline WarpResult warp(const RasterImage& img, const Homography& h, int out_w,
                       int out_h) {
    if (std::abs(h.matrix.determinant()) < 1e-12)
        throw DegenerateGeometry("homography is not invertible");
    Eigen::Matrix3d inv = h.matrix.inverse();
    WarpResult out;
    out.image = RasterImage(out_w, out_h, img.channels);
    out.valid.assign(size_t(out_w) * out_h, 0);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            Eigen::Vector3d p = inv * Eigen::Vector3d(x, y, 1.0);
            if (std::abs(p.z()) < 1e-12) continue;
            double sx = p.x() / p.z();
            double sy = p.y() / p.z();
            if (sx < 0 || sy < 0 || sx > img.width - 1 || sy > img.height - 1)
                continue;
            int x0 = int(sx), y0 = int(sy);
            int x1 = std::min(x0 + 1, img.width - 1);
            int y1 = std::min(y0 + 1, img.height - 1);
            double fx = sx - x0, fy = sy - y0;
            for (int c = 0; c < img.channels; ++c) {
                double v = (1 - fx) * (1 - fy) * img.at(x0, y0, c) +
                           fx * (1 - fy) * img.at(x1, y0, c) +
                           (1 - fx) * fy * img.at(x0, y1, c) +
                           fx * fy * img.at(x1, y1, c);
                out.image.at(x, y, c) = uint8_t(std::lround(v));
            }
            out.valid[size_t(y) * out_w + x] = 1;
        }
    }
    return out;
}

}  // namespace provfilter
