#pragma once

// Run configuration: every tunable of the two-tier pipeline, loadable
// from a flat `key = value` file (# comments allowed).

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "provfilter/ann.hpp"
#include "provfilter/features.hpp"
#include "provfilter/geometry.hpp"
#include "provfilter/mask.hpp"

namespace provfilter {

struct PipelineConfig {
    int budget = 2000;           // keypoints per image (500 for large scale)
    DetectorParams detector;
    AnnParams ann;
    uint64_t seed = 0;

    int k_per_keypoint = 5;
    int max_results = 100;

    float ratio_threshold = 0.8f;
    int top_n_matches = 25;
    RansacOptions ransac;

    MaskParams mask;

    int max_components = 4;
    int min_kp = 10;
    float redetect_factor = 0.25f;
    int refine_iterations = 1;
};

inline std::unordered_map<std::string, std::string> parse_key_values(
    std::istream& in) {
    std::unordered_map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r\"");
            size_t b = s.find_last_not_of(" \t\r\"");
            return a == std::string::npos ? std::string{}
                                          : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

inline void apply_key_value(PipelineConfig& c, const std::string& key,
                            const std::string& val) {
    auto as_i = [&] { return std::stoi(val); };
    auto as_f = [&] { return std::stof(val); };
    auto as_d = [&] { return std::stod(val); };

    if (key == "budget") c.budget = as_i();
    else if (key == "seed") c.seed = std::stoull(val);
    else if (key == "detector.octaves") c.detector.octaves = as_i();
    else if (key == "detector.intervals") c.detector.intervals = as_i();
    else if (key == "detector.init_step") c.detector.init_step = as_i();
    else if (key == "detector.threshold") c.detector.threshold = as_f();
    else if (key == "ann.max_leaf_checks") c.ann.max_leaf_checks = as_i();
    else if (key == "ann.epsilon") c.ann.epsilon = as_f();
    else if (key == "ann.num_trees") c.ann.num_trees = as_i();
    else if (key == "ann.kd_leaf_size") c.ann.kd_leaf_size = as_i();
    else if (key == "ann.pq_m") c.ann.pq_m = as_i();
    else if (key == "ann.pq_kstar") c.ann.pq_kstar = as_i();
    else if (key == "ann.kmeans_iters") c.ann.kmeans_iters = as_i();
    else if (key == "ann.pq_rerank") c.ann.pq_rerank = as_i();
    else if (key == "ann.branching") c.ann.branching = as_i();
    else if (key == "ann.leaf_size") c.ann.leaf_size = as_i();
    else if (key == "k_per_keypoint") c.k_per_keypoint = as_i();
    else if (key == "max_results") c.max_results = as_i();
    else if (key == "ratio_threshold") c.ratio_threshold = as_f();
    else if (key == "top_n_matches") c.top_n_matches = as_i();
    else if (key == "ransac.max_iterations") c.ransac.max_iterations = as_i();
    else if (key == "ransac.inlier_threshold") c.ransac.inlier_threshold = as_d();
    else if (key == "ransac.confidence") c.ransac.confidence = as_d();
    else if (key == "mask.quant_levels") c.mask.quant_levels = as_i();
    else if (key == "mask.diff_threshold") c.mask.diff_threshold = as_i();
    else if (key == "mask.morph_kernel") c.mask.morph_kernel = as_i();
    else if (key == "mask.min_area") c.mask.min_area = as_i();
    else if (key == "mask.coverage_high") c.mask.coverage_high = as_d();
    else if (key == "mask.coverage_low") c.mask.coverage_low = as_d();
    else if (key == "mask.match_quality_max") c.mask.match_quality_max = as_d();
    else if (key == "max_components") c.max_components = as_i();
    else if (key == "min_kp") c.min_kp = as_i();
    else if (key == "redetect_factor") c.redetect_factor = as_f();
    else if (key == "refine_iterations") c.refine_iterations = as_i();
    else throw std::invalid_argument("unknown config key: " + key);
}

inline PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    PipelineConfig c;
    for (const auto& [k, v] : parse_key_values(in)) apply_key_value(c, k, v);
    return c;
}

}  // namespace provfilter
