#pragma once

// Keypoint-vote retrieval: turns per-keypoint neighbor lists into an
// image-level ranked list, plus rank aggregation across search tiers.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "provfilter/ann.hpp"

namespace provfilter {

struct RankedEntry {
    std::string image_id;
    int votes = 0;
    double score = 0;  // normalized confidence in [0,1]
    double mean_distance = 0;
};

struct RankedList {
    std::string query_id;
    int tier = 1;
    std::vector<RankedEntry> entries;

    bool empty() const { return entries.empty(); }
    // rank of an image (1-based), 0 if absent
    int rank_of(const std::string& image_id) const {
        for (size_t i = 0; i < entries.size(); ++i)
            if (entries[i].image_id == image_id) return int(i) + 1;
        return 0;
    }
};

// Each query keypoint contributes at most one vote per distinct gallery
// image (its closest neighbor within that image). Sorted by votes
// descending, ties by mean distance ascending, then image id.
inline RankedList vote(
    const std::vector<std::vector<Neighbor>>& neighbor_lists,
    const std::function<const std::string&(uint32_t)>& image_of,
    int max_results = 100, std::string query_id = {}, int tier = 1) {
    struct Tally {
        int votes = 0;
        double dist_sum = 0;
    };
    std::unordered_map<std::string, Tally> tallies;
    for (const auto& nbs : neighbor_lists) {
        std::unordered_map<std::string, float> best_in_image;
        for (const Neighbor& nb : nbs) {
            const std::string& img = image_of(nb.global_id);
            auto [it, inserted] = best_in_image.try_emplace(img, nb.distance);
            if (!inserted && nb.distance < it->second) it->second = nb.distance;
        }
        for (const auto& [img, d] : best_in_image) {
            Tally& t = tallies[img];
            t.votes += 1;
            t.dist_sum += d;
        }
    }

    RankedList out;
    out.query_id = std::move(query_id);
    out.tier = tier;
    const size_t n_query = neighbor_lists.size();
    out.entries.reserve(tallies.size());
    for (const auto& [img, t] : tallies) {
        RankedEntry e;
        e.image_id = img;
        e.votes = t.votes;
        e.score = n_query ? double(t.votes) / double(n_query) : 0.0;
        e.mean_distance = t.dist_sum / t.votes;
        out.entries.push_back(std::move(e));
    }
    std::sort(out.entries.begin(), out.entries.end(),
              [](const RankedEntry& a, const RankedEntry& b) {
                  if (a.votes != b.votes) return a.votes > b.votes;
                  if (a.mean_distance != b.mean_distance)
                      return a.mean_distance < b.mean_distance;
                  return a.image_id < b.image_id;
              });
    if (int(out.entries.size()) > max_results) out.entries.resize(max_results);
    return out;
}

namespace detail {

inline std::unordered_map<std::string, double> minmax_normalized(
    const RankedList& list) {
    std::unordered_map<std::string, double> out;
    if (list.entries.empty()) return out;
    double lo = std::numeric_limits<double>::max();
    double hi = std::numeric_limits<double>::lowest();
    for (const auto& e : list.entries) {
        lo = std::min(lo, e.score);
        hi = std::max(hi, e.score);
    }
    for (const auto& e : list.entries)
        out[e.image_id] = (hi > lo) ? (e.score - lo) / (hi - lo) : 1.0;
    return out;
}

}  // namespace detail

// Max-fusion over min-max-normalized per-list scores; ties broken by the
// best rank any source list gave the image, then image id.
inline RankedList aggregate(const RankedList& tier1,
                            const std::vector<RankedList>& tier2_lists) {
    for (const auto& l : tier2_lists)
        if (l.query_id != tier1.query_id)
            throw std::invalid_argument("aggregate: query id mismatch");

    struct Fused {
        double score = 0;
        int best_rank = std::numeric_limits<int>::max();
        int votes = 0;
        double mean_distance = 0;
    };
    std::map<std::string, Fused> fused;  // ordered for determinism
    auto absorb = [&](const RankedList& list) {
        auto norm = detail::minmax_normalized(list);
        for (size_t i = 0; i < list.entries.size(); ++i) {
            const RankedEntry& e = list.entries[i];
            Fused& f = fused[e.image_id];
            double s = norm[e.image_id];
            if (s > f.score || (s == f.score && int(i) + 1 < f.best_rank)) {
                f.votes = e.votes;
                f.mean_distance = e.mean_distance;
            }
            f.score = std::max(f.score, s);
            f.best_rank = std::min(f.best_rank, int(i) + 1);
        }
    };
    absorb(tier1);
    for (const auto& l : tier2_lists) absorb(l);

    RankedList out;
    out.query_id = tier1.query_id;
    out.tier = 2;
    for (const auto& [img, f] : fused) {
        RankedEntry e;
        e.image_id = img;
        e.votes = f.votes;
        e.score = f.score;
        e.mean_distance = f.mean_distance;
        out.entries.push_back(std::move(e));
    }
    std::vector<int> best_rank;
    best_rank.reserve(out.entries.size());
    for (const auto& e : out.entries) best_rank.push_back(fused[e.image_id].best_rank);
    std::vector<size_t> order(out.entries.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (out.entries[a].score != out.entries[b].score)
            return out.entries[a].score > out.entries[b].score;
        if (best_rank[a] != best_rank[b]) return best_rank[a] < best_rank[b];
        return out.entries[a].image_id < out.entries[b].image_id;
    });
    std::vector<RankedEntry> sorted;
    sorted.reserve(order.size());
    for (size_t i : order) sorted.push_back(std::move(out.entries[i]));
    out.entries = std::move(sorted);
    return out;
}

// Tab-separated export: query_id, rank, image_id, votes, score, tier.
inline void write_ranked_list(std::ostream& os, const RankedList& list) {
    char buf[32];
    for (size_t i = 0; i < list.entries.size(); ++i) {
        const RankedEntry& e = list.entries[i];
        std::snprintf(buf, sizeof(buf), "%.6f", e.score);
        os << list.query_id << '\t' << (i + 1) << '\t' << e.image_id << '\t'
           << e.votes << '\t' << buf << '\t' << list.tier << '\n';
    }
}

}  // namespace provfilter
