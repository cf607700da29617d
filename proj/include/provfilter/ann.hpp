#pragma once

// Descriptor-space nearest-neighbor index with five interchangeable
// backends: brute force (oracle), randomized KD-Tree, KD-Forest,
// Product Quantization with ADC + exact re-rank, and a hierarchical
// k-means tree. Indexes are immutable after build and safe for
// concurrent queries.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <limits>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "provfilter/features.hpp"
#include "provfilter/kmeans.hpp"
#include "provfilter/serial.hpp"
#include "provfilter/util.hpp"

namespace provfilter {

struct InvalidParams : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct VersionMismatch : FormatError {
    using FormatError::FormatError;
};

enum class AnnBackend : uint8_t { brute = 0, kdtree = 1, kdforest = 2, pq = 3, hkmeans = 4 };

inline const char* to_string(AnnBackend b) {
    switch (b) {
        case AnnBackend::brute: return "brute";
        case AnnBackend::kdtree: return "kdtree";
        case AnnBackend::kdforest: return "kdforest";
        case AnnBackend::pq: return "pq";
        case AnnBackend::hkmeans: return "hkmeans";
    }
    return "?";
}

inline AnnBackend backend_from_string(const std::string& s) {
    if (s == "brute") return AnnBackend::brute;
    if (s == "kdtree") return AnnBackend::kdtree;
    if (s == "kdforest") return AnnBackend::kdforest;
    if (s == "pq") return AnnBackend::pq;
    if (s == "hkmeans") return AnnBackend::hkmeans;
    throw InvalidParams("unknown backend: " + s);
}

struct AnnParams {
    int max_leaf_checks = 256;  // 0 = unbounded (exact search)
    float epsilon = 0.f;        // (1+eps) pruning slack
    int num_trees = 2;          // kdforest
    int kd_leaf_size = 16;
    int pq_m = 8;
    int pq_kstar = 256;
    int kmeans_iters = 25;
    int pq_rerank = 4096;  // exact re-rank pool; 0 = all codes
    int branching = 32;    // hkmeans
    int leaf_size = 100;
    int hk_kmeans_iters = 10;
};

struct DescriptorRecord {
    uint32_t global_id = 0;
    std::string image_id;
    uint32_t keypoint_ordinal = 0;
    Descriptor vector{};
};

struct Neighbor {
    uint32_t global_id = 0;
    float distance = 0;  // L2

    bool operator==(const Neighbor&) const = default;
};

struct AnnStats {
    uint64_t memory_bytes = 0;
    uint64_t code_bytes = 0;  // pq only
    double build_seconds = 0;
    uint64_t n = 0;
    AnnBackend backend = AnnBackend::brute;
    AnnParams params;
};

namespace detail {

// Bounded max-heap keeping the k best (distance, id) pairs.
class KnnHeap {
  public:
    explicit KnnHeap(size_t k) : k_(k) { heap_.reserve(k); }

    static bool worse(const Neighbor& a, const Neighbor& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.global_id < b.global_id;  // larger id = worse
    }

    void add(uint32_t id, float dist_sq) {
        Neighbor cand{id, dist_sq};
        if (heap_.size() < k_) {
            heap_.push_back(cand);
            std::push_heap(heap_.begin(), heap_.end(), worse);
        } else if (worse(cand, heap_.front())) {
            std::pop_heap(heap_.begin(), heap_.end(), worse);
            heap_.back() = cand;
            std::push_heap(heap_.begin(), heap_.end(), worse);
        }
    }

    bool full() const { return heap_.size() >= k_; }
    float worst_dist() const {
        return full() ? heap_.front().distance
                      : std::numeric_limits<float>::max();
    }

    // ascending (distance, id); converts squared distances to L2
    std::vector<Neighbor> extract_sorted() {
        std::sort(heap_.begin(), heap_.end(), worse);
        for (auto& nb : heap_) nb.distance = std::sqrt(nb.distance);
        return std::move(heap_);
    }

  private:
    size_t k_;
    std::vector<Neighbor> heap_;
};

}  // namespace detail

class AnnIndex {
  public:
    static AnnIndex build(const std::vector<DescriptorRecord>& records,
                          AnnBackend backend, AnnParams params = {},
                          uint64_t seed = 0) {
        if (records.empty()) throw InvalidParams("empty input");
        if (params.pq_m <= 0 || kDescriptorDim % params.pq_m != 0)
            throw InvalidParams("pq subvector count must divide 64");
        if (params.branching < 2)
            throw InvalidParams("hkmeans branching must be >= 2");
        if (params.num_trees < 1) throw InvalidParams("num_trees must be >= 1");

        auto t0 = std::chrono::steady_clock::now();
        AnnIndex idx;
        idx.backend_ = backend;
        idx.params_ = params;
        idx.seed_ = seed;
        idx.n_ = records.size();
        idx.vectors_.resize(idx.n_ * kDescriptorDim);
        idx.rec_image_.resize(idx.n_);
        idx.rec_ordinal_.resize(idx.n_);
        std::unordered_map<std::string, uint32_t> name_index;
        for (size_t i = 0; i < records.size(); ++i) {
            const auto& r = records[i];
            if (r.global_id != i)
                throw InvalidParams("global_ids must be dense and ordered");
            std::copy(r.vector.begin(), r.vector.end(),
                      idx.vectors_.begin() + i * kDescriptorDim);
            idx.rec_ordinal_[i] = r.keypoint_ordinal;
            auto [it, inserted] = name_index.try_emplace(
                r.image_id, uint32_t(idx.image_names_.size()));
            if (inserted) idx.image_names_.push_back(r.image_id);
            idx.rec_image_[i] = it->second;
        }

        switch (backend) {
            case AnnBackend::brute:
                break;
            case AnnBackend::kdtree:
                idx.build_trees(1);
                break;
            case AnnBackend::kdforest:
                idx.build_trees(params.num_trees);
                break;
            case AnnBackend::pq:
                idx.build_pq();
                break;
            case AnnBackend::hkmeans:
                idx.build_hk();
                break;
        }
        idx.build_seconds_ =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        return idx;
    }

    std::vector<Neighbor> knn(const Descriptor& query, int k) const {
        if (k < 1) throw InvalidParams("k must be >= 1");
        size_t kk = std::min<size_t>(size_t(k), n_);
        const float* q = query.data();
        switch (backend_) {
            case AnnBackend::brute: return knn_brute(q, kk);
            case AnnBackend::kdtree:
            case AnnBackend::kdforest: return knn_kd(q, kk);
            case AnnBackend::pq: return knn_pq(q, kk);
            case AnnBackend::hkmeans: return knn_hk(q, kk);
        }
        return {};
    }

    std::vector<std::vector<Neighbor>> knn_batch(
        const std::vector<Descriptor>& queries, int k) const {
        std::vector<std::vector<Neighbor>> out(queries.size());
        parallel_for(queries.size(),
                     [&](size_t i) { out[i] = knn(queries[i], k); });
        return out;
    }

    AnnStats stats() const {
        AnnStats s;
        s.backend = backend_;
        s.params = params_;
        s.n = n_;
        s.build_seconds = build_seconds_;
        uint64_t table = rec_image_.size() * 4 + rec_ordinal_.size() * 4;
        for (const auto& nm : image_names_) table += nm.size();
        uint64_t raw = uint64_t(vectors_.size()) * sizeof(float);
        switch (backend_) {
            case AnnBackend::brute:
                s.memory_bytes = raw + table;
                break;
            case AnnBackend::kdtree:
            case AnnBackend::kdforest: {
                uint64_t tree_bytes = 0;
                for (const auto& t : trees_)
                    tree_bytes += t.nodes.size() * sizeof(KdNode) +
                                  t.perm.size() * sizeof(uint32_t);
                s.memory_bytes = raw + table + tree_bytes;
                break;
            }
            case AnnBackend::pq:
                // Raw vectors live in the shared record table and are only
                // touched for re-ranking; the index proper is codes + books.
                s.code_bytes = pq_codes_.size();
                s.memory_bytes = pq_codes_.size() +
                                 pq_codebooks_.size() * sizeof(float) + table;
                break;
            case AnnBackend::hkmeans:
                s.memory_bytes = raw + table +
                                 hk_nodes_.size() * sizeof(HkNode) +
                                 hk_centroids_.size() * sizeof(float) +
                                 hk_children_.size() * sizeof(int32_t) +
                                 hk_perm_.size() * sizeof(uint32_t);
                break;
        }
        return s;
    }

    size_t size() const { return n_; }
    const std::string& image_of(uint32_t gid) const {
        return image_names_[rec_image_[gid]];
    }
    uint32_t keypoint_ordinal_of(uint32_t gid) const { return rec_ordinal_[gid]; }
    const float* vector_of(uint32_t gid) const {
        return &vectors_[size_t(gid) * kDescriptorDim];
    }
    AnnBackend backend() const { return backend_; }
    const AnnParams& params() const { return params_; }

    void save(const std::string& path) const;
    static AnnIndex load(const std::string& path);

  private:
    struct KdNode {
        int32_t left = -1, right = -1;  // -1 on both = leaf
        int32_t begin = 0, end = 0;     // leaf range into perm
        int32_t dim = 0;
        float split = 0;
    };
    struct KdTree {
        std::vector<KdNode> nodes;
        std::vector<uint32_t> perm;
    };
    struct HkNode {
        int32_t child_offset = -1;  // into hk_children_, -1 = leaf
        int32_t n_children = 0;
        int32_t begin = 0, end = 0;  // leaf range into hk_perm_
    };

    float dist_sq_to(const float* q, uint32_t gid) const {
        return vec_dist_sq(q, vector_of(gid), kDescriptorDim);
    }

    // ---- brute ----
    std::vector<Neighbor> knn_brute(const float* q, size_t k) const {
        detail::KnnHeap heap(k);
        for (uint32_t i = 0; i < n_; ++i) heap.add(i, dist_sq_to(q, i));
        return heap.extract_sorted();
    }

    // ---- kd-tree / kd-forest ----
    void build_trees(int num_trees) {
        trees_.resize(num_trees);
        bool randomized = num_trees > 1;
        for (int t = 0; t < num_trees; ++t) {
            std::mt19937 rng(uint32_t(seed_ * 2654435761u + t + 1));
            KdTree& tree = trees_[t];
            tree.perm.resize(n_);
            for (uint32_t i = 0; i < n_; ++i) tree.perm[i] = i;
            build_kd_node(tree, 0, int32_t(n_), rng, randomized);
        }
    }

    int32_t build_kd_node(KdTree& tree, int32_t begin, int32_t end,
                          std::mt19937& rng, bool randomized) {
        int32_t id = int32_t(tree.nodes.size());
        tree.nodes.push_back({});
        int32_t count = end - begin;
        if (count <= params_.kd_leaf_size) {
            tree.nodes[id].begin = begin;
            tree.nodes[id].end = end;
            return id;
        }
        // variance per dimension over a bounded sample of the subset
        int32_t sample = std::min(count, 128);
        int32_t stride = count / sample;
        std::array<double, kDescriptorDim> mean{}, var{};
        for (int32_t s = 0; s < sample; ++s) {
            const float* v = vector_of(tree.perm[begin + s * stride]);
            for (int d = 0; d < kDescriptorDim; ++d) mean[d] += v[d];
        }
        for (int d = 0; d < kDescriptorDim; ++d) mean[d] /= sample;
        for (int32_t s = 0; s < sample; ++s) {
            const float* v = vector_of(tree.perm[begin + s * stride]);
            for (int d = 0; d < kDescriptorDim; ++d) {
                double dd = v[d] - mean[d];
                var[d] += dd * dd;
            }
        }
        int dim;
        if (randomized) {
            std::array<int, kDescriptorDim> order;
            for (int d = 0; d < kDescriptorDim; ++d) order[d] = d;
            std::partial_sort(order.begin(), order.begin() + 5, order.end(),
                              [&](int a, int b) { return var[a] > var[b]; });
            dim = order[std::uniform_int_distribution<int>(0, 4)(rng)];
        } else {
            dim = 0;
            for (int d = 1; d < kDescriptorDim; ++d)
                if (var[d] > var[dim]) dim = d;
        }
        float split = float(mean[dim]);
        auto* perm = tree.perm.data();
        auto mid_it = std::partition(
            perm + begin, perm + end,
            [&](uint32_t gid) { return vector_of(gid)[dim] < split; });
        int32_t mid = int32_t(mid_it - perm);
        if (mid == begin || mid == end) {
            // degenerate split (constant values); fall back to median
            mid = begin + count / 2;
            std::nth_element(perm + begin, perm + mid, perm + end,
                             [&](uint32_t a, uint32_t b) {
                                 return vector_of(a)[dim] < vector_of(b)[dim];
                             });
            split = vector_of(perm[mid])[dim];
        }
        tree.nodes[id].dim = dim;
        tree.nodes[id].split = split;
        int32_t l = build_kd_node(tree, begin, mid, rng, randomized);
        int32_t r = build_kd_node(tree, mid, end, rng, randomized);
        tree.nodes[id].left = l;
        tree.nodes[id].right = r;
        return id;
    }

    // Exact backtracking search of a single tree (unbounded budget).
    void kd_exact(const KdTree& tree, int32_t node_id, const float* q,
                  float mindist, std::array<float, kDescriptorDim>& dists,
                  detail::KnnHeap& heap) const {
        const KdNode& node = tree.nodes[node_id];
        if (node.left < 0) {
            for (int32_t i = node.begin; i < node.end; ++i) {
                uint32_t gid = tree.perm[i];
                heap.add(gid, dist_sq_to(q, gid));
            }
            return;
        }
        float diff = q[node.dim] - node.split;
        int32_t near = diff < 0 ? node.left : node.right;
        int32_t far = diff < 0 ? node.right : node.left;
        kd_exact(tree, near, q, mindist, dists, heap);
        float cut = diff * diff;
        float old = dists[node.dim];
        float new_mind = mindist + cut - old;
        float slack = (1.f + params_.epsilon) * (1.f + params_.epsilon);
        if (!heap.full() || new_mind * slack <= heap.worst_dist()) {
            dists[node.dim] = cut;
            kd_exact(tree, far, q, new_mind, dists, heap);
            dists[node.dim] = old;
        }
    }

    std::vector<Neighbor> knn_kd(const float* q, size_t k) const {
        detail::KnnHeap heap(k);
        if (params_.max_leaf_checks <= 0) {
            // one exhaustive tree already yields the exact answer
            std::array<float, kDescriptorDim> dists{};
            kd_exact(trees_[0], 0, q, 0.f, dists, heap);
            return heap.extract_sorted();
        }
        // best-bin-first across all trees with a shared leaf budget
        struct Entry {
            float bound;
            int32_t tree, node;
            bool operator>(const Entry& o) const {
                if (bound != o.bound) return bound > o.bound;
                if (tree != o.tree) return tree > o.tree;
                return node > o.node;
            }
        };
        std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
        std::vector<uint8_t> visited(n_, 0);
        int leaves = 0;
        const float slack =
            (1.f + params_.epsilon) * (1.f + params_.epsilon);

        auto descend = [&](int32_t t, int32_t node_id, float bound) {
            const KdTree& tree = trees_[t];
            int32_t id = node_id;
            while (tree.nodes[id].left >= 0) {
                const KdNode& node = tree.nodes[id];
                float diff = q[node.dim] - node.split;
                int32_t near = diff < 0 ? node.left : node.right;
                int32_t far = diff < 0 ? node.right : node.left;
                pq.push({bound + diff * diff, t, far});
                id = near;
            }
            const KdNode& leaf = tree.nodes[id];
            for (int32_t i = leaf.begin; i < leaf.end; ++i) {
                uint32_t gid = tree.perm[i];
                if (visited[gid]) continue;
                visited[gid] = 1;
                heap.add(gid, dist_sq_to(q, gid));
            }
            ++leaves;
        };

        for (size_t t = 0; t < trees_.size(); ++t) descend(int32_t(t), 0, 0.f);
        while (!pq.empty() && leaves < params_.max_leaf_checks) {
            Entry e = pq.top();
            pq.pop();
            if (heap.full() && e.bound * 1.f > heap.worst_dist() * slack) continue;
            descend(e.tree, e.node, e.bound);
        }
        return heap.extract_sorted();
    }

    // ---- product quantization ----
    int pq_subdim() const { return kDescriptorDim / params_.pq_m; }

    void build_pq() {
        const int m = params_.pq_m;
        const int ks = params_.pq_kstar;
        const int sd = pq_subdim();
        // train on a bounded sample
        size_t n_train = std::min<size_t>(n_, 20000);
        std::vector<uint32_t> train_ids(n_);
        for (uint32_t i = 0; i < n_; ++i) train_ids[i] = i;
        if (n_train < n_) {
            std::mt19937 rng(uint32_t(seed_ ^ 0x9e3779b9u));
            std::shuffle(train_ids.begin(), train_ids.end(), rng);
            train_ids.resize(n_train);
            std::sort(train_ids.begin(), train_ids.end());
        }
        pq_codebooks_.assign(size_t(m) * ks * sd, 0.f);
        parallel_for(size_t(m), [&](size_t j) {
            std::vector<float> sub(n_train * sd);
            for (size_t i = 0; i < n_train; ++i) {
                const float* v = vector_of(train_ids[i]);
                std::copy(v + j * sd, v + (j + 1) * sd, &sub[i * sd]);
            }
            std::mt19937 rng(uint32_t(seed_ * 2654435761u + 101 + j));
            std::vector<float> cents;
            std::vector<int> assign;
            kmeans(sub.data(), n_train, sd, std::min<int>(ks, int(n_train)),
                   params_.kmeans_iters, rng, cents, assign);
            // fewer training points than centroids: pad by repeating
            cents.resize(size_t(ks) * sd, 0.f);
            std::copy(cents.begin(), cents.end(),
                      pq_codebooks_.begin() + j * size_t(ks) * sd);
        });
        pq_codes_.assign(n_ * m, 0);
        parallel_for(n_, [&](size_t i) {
            const float* v = vector_of(uint32_t(i));
            for (int j = 0; j < m; ++j) {
                const float* books = &pq_codebooks_[size_t(j) * ks * sd];
                int best = 0;
                float bd = vec_dist_sq(v + j * sd, books, sd);
                for (int c = 1; c < ks; ++c) {
                    float d = vec_dist_sq(v + j * sd, books + size_t(c) * sd, sd);
                    if (d < bd) {
                        bd = d;
                        best = c;
                    }
                }
                pq_codes_[i * m + j] = uint8_t(best);
            }
        });
    }

    std::vector<Neighbor> knn_pq(const float* q, size_t k) const {
        const int m = params_.pq_m;
        const int ks = params_.pq_kstar;
        const int sd = pq_subdim();
        std::vector<float> lut(size_t(m) * ks);
        for (int j = 0; j < m; ++j) {
            const float* books = &pq_codebooks_[size_t(j) * ks * sd];
            for (int c = 0; c < ks; ++c)
                lut[size_t(j) * ks + c] =
                    vec_dist_sq(q + j * sd, books + size_t(c) * sd, sd);
        }
        std::vector<std::pair<float, uint32_t>> adc(n_);
        for (size_t i = 0; i < n_; ++i) {
            const uint8_t* code = &pq_codes_[i * m];
            float d = 0;
            for (int j = 0; j < m; ++j) d += lut[size_t(j) * ks + code[j]];
            adc[i] = {d, uint32_t(i)};
        }
        size_t pool = params_.pq_rerank <= 0
                          ? n_
                          : std::min<size_t>(
                                n_, std::max<size_t>(size_t(params_.pq_rerank),
                                                     4 * k));
        std::nth_element(adc.begin(), adc.begin() + std::min(pool, n_ - 1),
                         adc.end());
        detail::KnnHeap heap(k);
        for (size_t i = 0; i < pool; ++i)
            heap.add(adc[i].second, dist_sq_to(q, adc[i].second));
        return heap.extract_sorted();
    }

    // ---- hierarchical k-means tree ----
    void build_hk() {
        hk_perm_.resize(n_);
        for (uint32_t i = 0; i < n_; ++i) hk_perm_[i] = i;
        std::mt19937 rng(uint32_t(seed_ * 2654435761u + 7));
        // root centroid = global mean
        hk_nodes_.clear();
        hk_centroids_.clear();
        hk_children_.clear();
        hk_nodes_.push_back({});
        hk_centroids_.assign(kDescriptorDim, 0.f);
        for (size_t i = 0; i < n_; ++i) {
            const float* v = vector_of(uint32_t(i));
            for (int d = 0; d < kDescriptorDim; ++d) hk_centroids_[d] += v[d];
        }
        for (int d = 0; d < kDescriptorDim; ++d) hk_centroids_[d] /= float(n_);
        build_hk_node(0, 0, int32_t(n_), rng);
    }

    void build_hk_node(int32_t id, int32_t begin, int32_t end,
                       std::mt19937& rng) {
        int32_t count = end - begin;
        if (count <= params_.leaf_size || count <= params_.branching) {
            hk_nodes_[id].begin = begin;
            hk_nodes_[id].end = end;
            return;
        }
        const int k = std::min(params_.branching, count);
        std::vector<float> pts(size_t(count) * kDescriptorDim);
        for (int32_t i = 0; i < count; ++i) {
            const float* v = vector_of(hk_perm_[begin + i]);
            std::copy(v, v + kDescriptorDim, &pts[size_t(i) * kDescriptorDim]);
        }
        std::vector<float> cents;
        std::vector<int> assign;
        kmeans(pts.data(), size_t(count), kDescriptorDim, k,
               params_.hk_kmeans_iters, rng, cents, assign);

        // stable partition of the perm range by cluster
        std::vector<uint32_t> reordered;
        reordered.reserve(count);
        std::vector<int32_t> cluster_begin(k + 1, 0);
        for (int c = 0; c < k; ++c) {
            cluster_begin[c] = begin + int32_t(reordered.size());
            for (int32_t i = 0; i < count; ++i)
                if (assign[i] == c) reordered.push_back(hk_perm_[begin + i]);
        }
        cluster_begin[k] = end;
        std::copy(reordered.begin(), reordered.end(), hk_perm_.begin() + begin);

        int32_t child_offset = int32_t(hk_children_.size());
        int n_children = 0;
        std::vector<std::pair<int32_t, int>> to_build;  // (node id, cluster)
        for (int c = 0; c < k; ++c) {
            if (cluster_begin[c + 1] - cluster_begin[c] == 0) continue;
            int32_t cid = int32_t(hk_nodes_.size());
            hk_nodes_.push_back({});
            hk_centroids_.insert(hk_centroids_.end(),
                                 cents.begin() + size_t(c) * kDescriptorDim,
                                 cents.begin() + size_t(c + 1) * kDescriptorDim);
            hk_children_.push_back(cid);
            to_build.emplace_back(cid, c);
            ++n_children;
        }
        hk_nodes_[id].child_offset = child_offset;
        hk_nodes_[id].n_children = n_children;
        hk_nodes_[id].begin = begin;
        hk_nodes_[id].end = end;
        for (auto [cid, c] : to_build)
            build_hk_node(cid, cluster_begin[c], cluster_begin[c + 1], rng);
    }

    std::vector<Neighbor> knn_hk(const float* q, size_t k) const {
        struct Entry {
            float dist;
            int32_t node;
            bool operator>(const Entry& o) const {
                if (dist != o.dist) return dist > o.dist;
                return node > o.node;
            }
        };
        std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
        pq.push({0.f, 0});
        detail::KnnHeap heap(k);
        const int64_t cap = params_.max_leaf_checks <= 0
                                ? std::numeric_limits<int64_t>::max()
                                : params_.max_leaf_checks;
        int64_t leaves = 0;
        while (!pq.empty() && leaves < cap) {
            auto [dist, id] = pq.top();
            pq.pop();
            const HkNode& node = hk_nodes_[id];
            if (node.child_offset < 0) {
                for (int32_t i = node.begin; i < node.end; ++i) {
                    uint32_t gid = hk_perm_[i];
                    heap.add(gid, dist_sq_to(q, gid));
                }
                ++leaves;
                continue;
            }
            for (int c = 0; c < node.n_children; ++c) {
                int32_t cid = hk_children_[node.child_offset + c];
                float d = vec_dist_sq(q, &hk_centroids_[size_t(cid) * kDescriptorDim],
                                      kDescriptorDim);
                pq.push({d, cid});
            }
        }
        return heap.extract_sorted();
    }

    AnnBackend backend_ = AnnBackend::brute;
    AnnParams params_;
    uint64_t seed_ = 0;
    double build_seconds_ = 0;
    size_t n_ = 0;
    std::vector<float> vectors_;
    std::vector<std::string> image_names_;
    std::vector<uint32_t> rec_image_;
    std::vector<uint32_t> rec_ordinal_;

    std::vector<KdTree> trees_;
    std::vector<float> pq_codebooks_;
    std::vector<uint8_t> pq_codes_;
    std::vector<HkNode> hk_nodes_;
    std::vector<float> hk_centroids_;
    std::vector<int32_t> hk_children_;
    std::vector<uint32_t> hk_perm_;
};

// ---- index file format ("PFIX") ----

inline constexpr uint16_t kIndexFormatVersion = 1;

inline void AnnIndex::save(const std::string& path) const {
    BinaryWriter w(path);
    w.put_bytes("PFIX", 4);
    w.put<uint16_t>(kIndexFormatVersion);
    w.put<uint8_t>(uint8_t(backend_));
    w.put<uint64_t>(seed_);
    w.put<double>(build_seconds_);
    const AnnParams& p = params_;
    w.put<int32_t>(p.max_leaf_checks);
    w.put<float>(p.epsilon);
    w.put<int32_t>(p.num_trees);
    w.put<int32_t>(p.kd_leaf_size);
    w.put<int32_t>(p.pq_m);
    w.put<int32_t>(p.pq_kstar);
    w.put<int32_t>(p.kmeans_iters);
    w.put<int32_t>(p.pq_rerank);
    w.put<int32_t>(p.branching);
    w.put<int32_t>(p.leaf_size);
    w.put<int32_t>(p.hk_kmeans_iters);
    w.put<uint64_t>(n_);
    w.put<uint32_t>(uint32_t(image_names_.size()));
    for (const auto& nm : image_names_) w.put_string(nm);
    w.put_vector(rec_image_);
    w.put_vector(rec_ordinal_);
    w.put_vector(vectors_);
    w.put<uint32_t>(uint32_t(trees_.size()));
    for (const auto& t : trees_) {
        w.put_vector(t.nodes);
        w.put_vector(t.perm);
    }
    w.put_vector(pq_codebooks_);
    w.put_vector(pq_codes_);
    w.put_vector(hk_nodes_);
    w.put_vector(hk_centroids_);
    w.put_vector(hk_children_);
    w.put_vector(hk_perm_);
    w.close();
}

inline AnnIndex AnnIndex::load(const std::string& path) {
    BinaryReader r(path);
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::string_view(magic, 4) != "PFIX")
        throw VersionMismatch("bad index file magic");
    if (r.get<uint16_t>() != kIndexFormatVersion)
        throw VersionMismatch("unsupported index file version");
    AnnIndex idx;
    idx.backend_ = AnnBackend(r.get<uint8_t>());
    idx.seed_ = r.get<uint64_t>();
    idx.build_seconds_ = r.get<double>();
    AnnParams& p = idx.params_;
    p.max_leaf_checks = r.get<int32_t>();
    p.epsilon = r.get<float>();
    p.num_trees = r.get<int32_t>();
    p.kd_leaf_size = r.get<int32_t>();
    p.pq_m = r.get<int32_t>();
    p.pq_kstar = r.get<int32_t>();
    p.kmeans_iters = r.get<int32_t>();
    p.pq_rerank = r.get<int32_t>();
    p.branching = r.get<int32_t>();
    p.leaf_size = r.get<int32_t>();
    p.hk_kmeans_iters = r.get<int32_t>();
    idx.n_ = r.get<uint64_t>();
    auto n_names = r.get<uint32_t>();
    idx.image_names_.resize(n_names);
    for (auto& nm : idx.image_names_) nm = r.get_string();
    idx.rec_image_ = r.get_vector<uint32_t>();
    idx.rec_ordinal_ = r.get_vector<uint32_t>();
    idx.vectors_ = r.get_vector<float>();
    auto n_trees = r.get<uint32_t>();
    idx.trees_.resize(n_trees);
    for (auto& t : idx.trees_) {
        t.nodes = r.get_vector<KdNode>();
        t.perm = r.get_vector<uint32_t>();
    }
    idx.pq_codebooks_ = r.get_vector<float>();
    idx.pq_codes_ = r.get_vector<uint8_t>();
    idx.hk_nodes_ = r.get_vector<HkNode>();
    idx.hk_centroids_ = r.get_vector<float>();
    idx.hk_children_ = r.get_vector<int32_t>();
    idx.hk_perm_ = r.get_vector<uint32_t>();
    return idx;
}

}  // namespace provfilter
