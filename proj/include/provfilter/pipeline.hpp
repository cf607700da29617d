#pragma once

// Two-tier provenance filtering: coarse keypoint-vote retrieval, host
// registration, contextual mask, per-component refined search, fusion.

#include <chrono>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "provfilter/ann.hpp"
#include "provfilter/config.hpp"
#include "provfilter/features.hpp"
#include "provfilter/geometry.hpp"
#include "provfilter/image.hpp"
#include "provfilter/image_io.hpp"
#include "provfilter/mask.hpp"
#include "provfilter/retrieval.hpp"

namespace provfilter {

struct EmptyQueryFeatures : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Read-only view of the indexed collection: image paths plus extracted
// features, shared across concurrent queries.
class CorpusStore {
  public:
    void add(const std::string& image_id, const std::string& path) {
        paths_[image_id] = path;
    }
    void add_features(FeatureSet fs) {
        features_[fs.image_id] = std::move(fs);
    }

    const FeatureSet* features_of(const std::string& image_id) const {
        auto it = features_.find(image_id);
        return it == features_.end() ? nullptr : &it->second;
    }
    RasterImage load(const std::string& image_id) const {
        auto it = paths_.find(image_id);
        if (it == paths_.end()) throw IoError("unknown image id: " + image_id);
        return load_image(it->second);
    }
    bool has(const std::string& image_id) const {
        return paths_.count(image_id) > 0;
    }
    size_t size() const { return paths_.size(); }

    const std::unordered_map<std::string, FeatureSet>& features() const {
        return features_;
    }

    void save_features(const std::string& path) const {
        BinaryWriter w(path);
        w.put<uint32_t>(uint32_t(features_.size()));
        std::vector<const FeatureSet*> ordered;
        for (const auto& [id, fs] : features_) ordered.push_back(&fs);
        std::sort(ordered.begin(), ordered.end(),
                  [](auto* a, auto* b) { return a->image_id < b->image_id; });
        for (const auto* fs : ordered) write_feature_set(w, *fs);
        w.close();
    }
    void load_features(const std::string& path) {
        BinaryReader r(path);
        auto n = r.get<uint32_t>();
        for (uint32_t i = 0; i < n; ++i) add_features(read_feature_set(r));
    }

  private:
    std::unordered_map<std::string, std::string> paths_;
    std::unordered_map<std::string, FeatureSet> features_;
};

struct StageTimings {
    double features = 0;
    double tier1 = 0;
    double registration = 0;
    double mask = 0;
    double tier2 = 0;
    double aggregate = 0;
};

struct ProvenanceResult {
    std::string query_id;
    RankedList tier1;
    std::string r_best;  // empty if tier 1 found nothing
    MaskVerdict verdict = MaskVerdict::unrelated;
    std::optional<ContextMask> mask;
    std::vector<RankedList> tier2;
    RankedList final;
    StageTimings timings;
    std::string error;  // set for failed batch entries

    bool failed() const { return !error.empty(); }
};

namespace detail {

class StageClock {
  public:
    double lap() {
        auto now = std::chrono::steady_clock::now();
        double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

  private:
    std::chrono::steady_clock::time_point last_ =
        std::chrono::steady_clock::now();
};

inline FeatureSet keypoints_in_component(const FeatureSet& fs,
                                         const ContextMask& mask,
                                         const MaskComponent& comp) {
    FeatureSet out;
    out.image_id = fs.image_id;
    for (size_t i = 0; i < fs.size(); ++i) {
        int x = std::clamp(int(std::lround(fs.keypoints[i].x)), 0, mask.width - 1);
        int y = std::clamp(int(std::lround(fs.keypoints[i].y)), 0, mask.height - 1);
        if (comp.bbox.contains(x, y) && mask.at(x, y)) {
            out.keypoints.push_back(fs.keypoints[i]);
            out.descriptors.push_back(fs.descriptors[i]);
        }
    }
    return out;
}

inline RasterImage ensure_channels(const RasterImage& img, int channels) {
    if (img.channels == channels) return img;
    if (channels == 1) return to_grayscale(img);
    RasterImage out(img.width, img.height, 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y);
    return out;
}

}  // namespace detail

inline ProvenanceResult run_query(const RasterImage& query_img,
                                  const std::string& query_id,
                                  const AnnIndex& index,
                                  const CorpusStore& corpus,
                                  const PipelineConfig& cfg) {
    ProvenanceResult res;
    res.query_id = query_id;
    detail::StageClock clock;

    FeatureSet fs_q =
        detect_and_describe(query_img, cfg.budget, cfg.detector, query_id);
    res.timings.features = clock.lap();
    if (fs_q.empty())
        throw EmptyQueryFeatures("query yields no keypoints: " + query_id);

    auto nn = index.knn_batch(fs_q.descriptors, cfg.k_per_keypoint);
    res.tier1 = vote(
        nn, [&](uint32_t gid) -> const std::string& { return index.image_of(gid); },
        cfg.max_results, query_id, 1);
    res.timings.tier1 = clock.lap();

    if (!res.tier1.empty()) res.r_best = res.tier1.entries.front().image_id;
    res.final = res.tier1;

    const int iterations = std::max(1, cfg.refine_iterations);
    std::string registered_against;
    for (int iter = 0; iter < iterations; ++iter) {
        if (res.final.empty()) break;
        const std::string& target = res.final.entries.front().image_id;
        if (target == registered_against) break;  // converged
        registered_against = target;

        bool registration_ok = false;
        double match_quality = std::numeric_limits<double>::max();
        std::optional<WarpResult> warped;
        const FeatureSet* fs_host = corpus.features_of(target);
        if (fs_host && !fs_host->empty()) {
            try {
                auto matches = match_nndr(fs_q, *fs_host, cfg.ratio_threshold);
                auto top = top_matches(std::move(matches), cfg.top_n_matches);
                match_quality = mean_match_distance(top);
                Homography h =
                    estimate_homography(top, fs_q.keypoints, fs_host->keypoints,
                                        cfg.seed, cfg.ransac);
                h.match_quality = match_quality;
                RasterImage host = detail::ensure_channels(
                    corpus.load(target), query_img.channels);
                warped = warp(host, h, query_img.width, query_img.height);
                registration_ok = true;
            } catch (const InsufficientMatches&) {
            } catch (const DegenerateGeometry&) {
            }
        }
        res.timings.registration += clock.lap();

        MaskVerdict verdict = MaskVerdict::unrelated;
        std::optional<ContextMask> mask;
        if (registration_ok) {
            mask = compute_mask(query_img, warped->image, warped->valid, cfg.mask);
            verdict = classify_mask(*mask, match_quality, true, cfg.mask);
        }
        if (iter == 0) {
            res.verdict = verdict;
            res.mask = mask;
        }
        res.timings.mask += clock.lap();

        if (verdict == MaskVerdict::composite) {
            int n_comps =
                std::min<int>(cfg.max_components, int(mask->components.size()));
            for (int ci = 0; ci < n_comps; ++ci) {
                const MaskComponent& comp = mask->components[ci];
                FeatureSet fs_c = detail::keypoints_in_component(fs_q, *mask, comp);
                if (int(fs_c.size()) < cfg.min_kp) {
                    fs_c = redetect_in_regions(query_img, {comp.bbox}, cfg.budget,
                                               cfg.detector, cfg.redetect_factor,
                                               query_id);
                }
                if (fs_c.empty()) continue;
                auto nn2 = index.knn_batch(fs_c.descriptors, cfg.k_per_keypoint);
                RankedList t2 = vote(
                    nn2,
                    [&](uint32_t gid) -> const std::string& {
                        return index.image_of(gid);
                    },
                    cfg.max_results, query_id, 2);
                if (!t2.empty()) res.tier2.push_back(std::move(t2));
            }
        }
        res.timings.tier2 += clock.lap();

        res.final = aggregate(res.tier1, res.tier2);
        res.timings.aggregate += clock.lap();
        if (verdict != MaskVerdict::composite) break;
    }
    return res;
}

struct QueryJob {
    std::string query_id;
    std::string path;
};

inline std::vector<ProvenanceResult> run_batch(const std::vector<QueryJob>& jobs,
                                               const AnnIndex& index,
                                               const CorpusStore& corpus,
                                               const PipelineConfig& cfg) {
    std::vector<ProvenanceResult> out(jobs.size());
    parallel_for(jobs.size(), [&](size_t i) {
        try {
            RasterImage img = load_image(jobs[i].path);
            out[i] = run_query(img, jobs[i].query_id, index, corpus, cfg);
        } catch (const std::exception& e) {
            out[i].query_id = jobs[i].query_id;
            out[i].error = e.what();
        }
    });
    return out;
}

// ---- JSON serialization ----

inline nlohmann::ordered_json ranked_list_to_json(const RankedList& list) {
    nlohmann::ordered_json j;
    j["query_id"] = list.query_id;
    j["tier"] = list.tier;
    j["entries"] = nlohmann::ordered_json::array();
    for (size_t i = 0; i < list.entries.size(); ++i) {
        const auto& e = list.entries[i];
        j["entries"].push_back({{"rank", i + 1},
                                {"image_id", e.image_id},
                                {"votes", e.votes},
                                {"score", e.score},
                                {"mean_distance", e.mean_distance}});
    }
    return j;
}

// Wall-clock timings are optional so reports can stay byte-reproducible.
inline nlohmann::ordered_json result_to_json(const ProvenanceResult& res,
                                             bool include_timings = true) {
    nlohmann::ordered_json j;
    j["query_id"] = res.query_id;
    j["error"] = res.error;
    j["r_best"] = res.r_best;
    j["verdict"] = to_string(res.verdict);
    j["tier1"] = ranked_list_to_json(res.tier1);
    j["tier2"] = nlohmann::ordered_json::array();
    for (const auto& l : res.tier2) j["tier2"].push_back(ranked_list_to_json(l));
    j["final"] = ranked_list_to_json(res.final);
    if (res.mask) {
        nlohmann::ordered_json m;
        m["coverage"] = res.mask->coverage;
        m["components"] = nlohmann::ordered_json::array();
        for (const auto& c : res.mask->components)
            m["components"].push_back({{"x", c.bbox.x},
                                       {"y", c.bbox.y},
                                       {"w", c.bbox.w},
                                       {"h", c.bbox.h},
                                       {"area", c.area}});
        j["mask"] = m;
    } else {
        j["mask"] = nullptr;
    }
    if (include_timings) {
        j["timings"] = {{"features", res.timings.features},
                        {"tier1", res.timings.tier1},
                        {"registration", res.timings.registration},
                        {"mask", res.timings.mask},
                        {"tier2", res.timings.tier2},
                        {"aggregate", res.timings.aggregate}};
    }
    return j;
}

}  // namespace provfilter
