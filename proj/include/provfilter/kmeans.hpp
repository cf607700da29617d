#pragma once

// Seeded k-means with k-means++ initialization. Empty clusters are
// re-seeded from the point farthest from its assigned centroid.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace provfilter {

inline float vec_dist_sq(const float* a, const float* b, int dim) {
    float s = 0;
    for (int i = 0; i < dim; ++i) {
        float d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// points: n x dim row-major. Returns k x dim centroids; assign holds the
// final cluster of each point.
inline void kmeans(const float* points, size_t n, int dim, int k, int iters,
                   std::mt19937& rng, std::vector<float>& centroids,
                   std::vector<int>& assign) {
    centroids.assign(size_t(k) * dim, 0.f);
    assign.assign(n, 0);
    if (n == 0 || k <= 0) return;

    // k-means++ seeding
    std::vector<float> best_d(n, std::numeric_limits<float>::max());
    std::uniform_int_distribution<size_t> first(0, n - 1);
    size_t pick = first(rng);
    std::copy(points + pick * dim, points + (pick + 1) * dim, centroids.begin());
    for (int c = 1; c < k; ++c) {
        const float* prev = &centroids[size_t(c - 1) * dim];
        double total = 0;
        for (size_t i = 0; i < n; ++i) {
            float d = vec_dist_sq(points + i * dim, prev, dim);
            if (d < best_d[i]) best_d[i] = d;
            total += best_d[i];
        }
        if (total <= 0) {
            pick = first(rng);  // all points identical
        } else {
            std::uniform_real_distribution<double> u(0, total);
            double target = u(rng), acc = 0;
            pick = n - 1;
            for (size_t i = 0; i < n; ++i) {
                acc += best_d[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        }
        std::copy(points + pick * dim, points + (pick + 1) * dim,
                  &centroids[size_t(c) * dim]);
    }

    std::vector<float> sums(size_t(k) * dim);
    std::vector<uint32_t> counts(k);
    std::vector<float> point_d(n);
    for (int it = 0; it < iters; ++it) {
        bool changed = false;
        for (size_t i = 0; i < n; ++i) {
            const float* p = points + i * dim;
            int best = 0;
            float bd = vec_dist_sq(p, centroids.data(), dim);
            for (int c = 1; c < k; ++c) {
                float d = vec_dist_sq(p, &centroids[size_t(c) * dim], dim);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            point_d[i] = bd;
            if (assign[i] != best) changed = true;
            assign[i] = best;
        }
        sums.assign(size_t(k) * dim, 0.f);
        counts.assign(k, 0);
        for (size_t i = 0; i < n; ++i) {
            const float* p = points + i * dim;
            float* s = &sums[size_t(assign[i]) * dim];
            for (int d = 0; d < dim; ++d) s[d] += p[d];
            ++counts[assign[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                size_t far = 0;
                for (size_t i = 1; i < n; ++i)
                    if (point_d[i] > point_d[far]) far = i;
                std::copy(points + far * dim, points + (far + 1) * dim,
                          &centroids[size_t(c) * dim]);
                point_d[far] = 0;
                changed = true;
            } else {
                for (int d = 0; d < dim; ++d)
                    centroids[size_t(c) * dim + d] = sums[size_t(c) * dim + d] / counts[c];
            }
        }
        if (!changed && it > 0) break;
    }
}

}  // namespace provfilter
