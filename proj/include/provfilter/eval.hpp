#pragma once

// Evaluation harness: synthetic composite-corpus generation with ground
// truth, Recall@k over hosts and donors per tier, and indexing-backend
// benchmarks.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "provfilter/image_io.hpp"
#include "provfilter/pipeline.hpp"

namespace provfilter {

struct InsufficientBaseImages : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingGroundTruth : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SpliceRecord {
    std::string donor_id;
    Rect rect;                       // in query coordinates
    std::vector<std::string> transform_log;
};

struct ProvenanceGroundTruth {
    std::string query_id;
    std::string host_id;
    std::vector<SpliceRecord> splices;

    std::vector<std::string> donor_ids() const {
        std::vector<std::string> out;
        for (const auto& s : splices) out.push_back(s.donor_id);
        return out;
    }
};

struct ManifestEntry {
    std::string image_id;
    std::string path;
    std::string role;  // distractor | host | donor | query
    std::optional<ProvenanceGroundTruth> truth;  // queries only
};

// ---- synthetic base images ----

// Procedural textured image: smooth gradient background plus random
// ellipses, rectangles and line segments, mild noise. Distinct seeds give
// visually distinct, keypoint-rich images.
inline RasterImage synth_base_image(int w, int h, uint64_t seed) {
    std::mt19937 rng(uint32_t(seed * 2654435761u + 3));
    std::uniform_int_distribution<int> color(0, 255);
    RasterImage img(w, h, 3);

    int c00[3], c10[3], c01[3], c11[3];
    for (int c = 0; c < 3; ++c) {
        c00[c] = color(rng);
        c10[c] = color(rng);
        c01[c] = color(rng);
        c11[c] = color(rng);
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double fx = double(x) / (w - 1), fy = double(y) / (h - 1);
            for (int c = 0; c < 3; ++c) {
                double v = (1 - fx) * (1 - fy) * c00[c] + fx * (1 - fy) * c10[c] +
                           (1 - fx) * fy * c01[c] + fx * fy * c11[c];
                img.at(x, y, c) = uint8_t(v);
            }
        }

    std::uniform_int_distribution<int> n_shapes_d(40, 70);
    std::uniform_int_distribution<int> px(0, w - 1), py(0, h - 1);
    std::uniform_int_distribution<int> radius(3, std::max(4, w / 8));
    std::uniform_int_distribution<int> kind_d(0, 2);
    int n_shapes = n_shapes_d(rng);
    for (int s = 0; s < n_shapes; ++s) {
        int kind = kind_d(rng);
        uint8_t col[3] = {uint8_t(color(rng)), uint8_t(color(rng)),
                          uint8_t(color(rng))};
        int cx = px(rng), cy = py(rng);
        if (kind == 0) {  // ellipse
            int rx = radius(rng), ry = radius(rng);
            for (int y = std::max(0, cy - ry); y <= std::min(h - 1, cy + ry); ++y)
                for (int x = std::max(0, cx - rx); x <= std::min(w - 1, cx + rx); ++x) {
                    double dx = double(x - cx) / rx, dy = double(y - cy) / ry;
                    if (dx * dx + dy * dy <= 1.0)
                        for (int c = 0; c < 3; ++c) img.at(x, y, c) = col[c];
                }
        } else if (kind == 1) {  // rectangle
            int rw = radius(rng), rh = radius(rng);
            for (int y = std::max(0, cy); y <= std::min(h - 1, cy + rh); ++y)
                for (int x = std::max(0, cx); x <= std::min(w - 1, cx + rw); ++x)
                    for (int c = 0; c < 3; ++c) img.at(x, y, c) = col[c];
        } else {  // thick line segment
            int ex = px(rng), ey = py(rng);
            int steps = std::max(std::abs(ex - cx), std::abs(ey - cy)) + 1;
            for (int t = 0; t <= steps; ++t) {
                int x = cx + (ex - cx) * t / steps;
                int y = cy + (ey - cy) * t / steps;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        int xx = x + dx, yy = y + dy;
                        if (xx >= 0 && yy >= 0 && xx < w && yy < h)
                            for (int c = 0; c < 3; ++c) img.at(xx, yy, c) = col[c];
                    }
            }
        }
    }

    std::uniform_int_distribution<int> noise(-4, 4);
    for (auto& v : img.pixels)
        v = uint8_t(std::clamp(int(v) + noise(rng), 0, 255));
    return img;
}

inline std::vector<std::string> write_synth_base_images(
    const std::string& dir, int count, int w, int h, uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> paths;
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "base%05d.png", i);
        std::string path = dir + "/" + name;
        save_image(synth_base_image(w, h, seed + uint64_t(i)), path);
        paths.push_back(path);
    }
    return paths;
}

// ---- composite generation ----

namespace detail {

struct PatchBuffer {
    RasterImage image;
    std::vector<uint8_t> valid;
    int width() const { return image.width; }
    int height() const { return image.height; }
};

inline PatchBuffer cut_patch(const RasterImage& src, const Rect& r) {
    PatchBuffer p;
    p.image = RasterImage(r.w, r.h, src.channels);
    p.valid.assign(size_t(r.w) * r.h, 1);
    for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x)
            for (int c = 0; c < src.channels; ++c)
                p.image.at(x, y, c) = src.at(r.x + x, r.y + y, c);
    return p;
}

inline PatchBuffer scale_patch(const PatchBuffer& p, double factor) {
    int nw = std::max(8, int(std::lround(p.width() * factor)));
    int nh = std::max(8, int(std::lround(p.height() * factor)));
    PatchBuffer out;
    out.image = RasterImage(nw, nh, p.image.channels);
    out.valid.assign(size_t(nw) * nh, 1);
    for (int y = 0; y < nh; ++y)
        for (int x = 0; x < nw; ++x) {
            double sx = (x + 0.5) * p.width() / nw - 0.5;
            double sy = (y + 0.5) * p.height() / nh - 0.5;
            sx = std::clamp(sx, 0.0, double(p.width() - 1));
            sy = std::clamp(sy, 0.0, double(p.height() - 1));
            int x0 = int(sx), y0 = int(sy);
            int x1 = std::min(x0 + 1, p.width() - 1);
            int y1 = std::min(y0 + 1, p.height() - 1);
            double fx = sx - x0, fy = sy - y0;
            for (int c = 0; c < p.image.channels; ++c) {
                double v = (1 - fx) * (1 - fy) * p.image.at(x0, y0, c) +
                           fx * (1 - fy) * p.image.at(x1, y0, c) +
                           (1 - fx) * fy * p.image.at(x0, y1, c) +
                           fx * fy * p.image.at(x1, y1, c);
                out.image.at(x, y, c) = uint8_t(std::lround(v));
            }
        }
    return out;
}

inline PatchBuffer rotate_patch(const PatchBuffer& p, double radians) {
    double co = std::cos(radians), si = std::sin(radians);
    double cx = (p.width() - 1) / 2.0, cy = (p.height() - 1) / 2.0;
    double hw = std::abs(p.width() * co) + std::abs(p.height() * si);
    double hh = std::abs(p.width() * si) + std::abs(p.height() * co);
    int nw = int(std::ceil(hw)), nh = int(std::ceil(hh));
    PatchBuffer out;
    out.image = RasterImage(nw, nh, p.image.channels);
    out.valid.assign(size_t(nw) * nh, 0);
    double ncx = (nw - 1) / 2.0, ncy = (nh - 1) / 2.0;
    for (int y = 0; y < nh; ++y)
        for (int x = 0; x < nw; ++x) {
            // inverse rotation back into the source patch
            double dx = x - ncx, dy = y - ncy;
            double sx = co * dx + si * dy + cx;
            double sy = -si * dx + co * dy + cy;
            if (sx < 0 || sy < 0 || sx > p.width() - 1 || sy > p.height() - 1)
                continue;
            int x0 = int(sx), y0 = int(sy);
            int x1 = std::min(x0 + 1, p.width() - 1);
            int y1 = std::min(y0 + 1, p.height() - 1);
            double fx = sx - x0, fy = sy - y0;
            if (!p.valid[size_t(y0) * p.width() + x0]) continue;
            for (int c = 0; c < p.image.channels; ++c) {
                double v = (1 - fx) * (1 - fy) * p.image.at(x0, y0, c) +
                           fx * (1 - fy) * p.image.at(x1, y0, c) +
                           (1 - fx) * fy * p.image.at(x0, y1, c) +
                           fx * fy * p.image.at(x1, y1, c);
                out.image.at(x, y, c) = uint8_t(std::lround(v));
            }
            out.valid[size_t(y) * nw + x] = 1;
        }
    return out;
}

inline void brighten_patch(PatchBuffer& p, double factor) {
    for (auto& v : p.image.pixels)
        v = uint8_t(std::clamp(int(std::lround(v * factor)), 0, 255));
}

inline void jpeg_patch(PatchBuffer& p, int quality) {
    p.image = jpeg_roundtrip(p.image, quality);
}

// Pastes valid pixels; returns bounding box of pasted pixels.
inline Rect paste_patch(RasterImage& host, const PatchBuffer& p, int ox, int oy) {
    int x0 = host.width, y0 = host.height, x1 = -1, y1 = -1;
    for (int y = 0; y < p.height(); ++y)
        for (int x = 0; x < p.width(); ++x) {
            if (!p.valid[size_t(y) * p.width() + x]) continue;
            int hx = ox + x, hy = oy + y;
            if (hx < 0 || hy < 0 || hx >= host.width || hy >= host.height)
                continue;
            for (int c = 0; c < host.channels; ++c)
                host.at(hx, hy, c) = p.image.at(x, y, c);
            x0 = std::min(x0, hx);
            y0 = std::min(y0, hy);
            x1 = std::max(x1, hx);
            y1 = std::max(y1, hy);
        }
    if (x1 < 0) return {};
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

}  // namespace detail

struct GeneratorOptions {
    int n_distractors = 500;
    int n_composites = 20;
    int donors_per_composite = 1;
    uint64_t seed = 0;
    double min_area_frac = 0.05;  // donor cut, fraction of host area
    double max_area_frac = 0.25;
};

// Builds composites from base images: host + spliced donor patches with
// random transforms, query re-compressed as JPEG. Deterministic per seed.
inline std::vector<ManifestEntry> generate_corpus(
    const std::vector<std::string>& base_paths, const GeneratorOptions& opts,
    const std::string& out_dir) {
    const int needed =
        opts.n_distractors +
        opts.n_composites * (1 + opts.donors_per_composite);
    if (int(base_paths.size()) < needed)
        throw InsufficientBaseImages(
            "need " + std::to_string(needed) + " base images, have " +
            std::to_string(base_paths.size()));

    std::filesystem::create_directories(out_dir + "/queries");
    std::mt19937 rng(uint32_t(opts.seed * 2654435761u + 11));

    std::vector<size_t> order(base_paths.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<ManifestEntry> manifest;
    size_t cursor = 0;
    auto take = [&](const std::string& role) {
        ManifestEntry e;
        size_t idx = order[cursor++];
        e.image_id = std::filesystem::path(base_paths[idx]).stem().string();
        e.path = base_paths[idx];
        e.role = role;
        manifest.push_back(e);
        return manifest.size() - 1;
    };

    std::vector<size_t> hosts, donors;
    for (int i = 0; i < opts.n_composites; ++i) hosts.push_back(take("host"));
    for (int i = 0; i < opts.n_composites * opts.donors_per_composite; ++i)
        donors.push_back(take("donor"));
    for (int i = 0; i < opts.n_distractors; ++i) take("distractor");

    std::uniform_real_distribution<double> area_frac(opts.min_area_frac,
                                                     opts.max_area_frac);
    std::uniform_real_distribution<double> aspect(0.6, 1.6);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> scale_d(0.5, 2.0);
    std::uniform_real_distribution<double> rot_d(-30.0 * std::numbers::pi / 180,
                                                 30.0 * std::numbers::pi / 180);
    std::uniform_real_distribution<double> bright_d(0.8, 1.2);
    std::uniform_int_distribution<int> jpeg_d(70, 95);

    size_t donor_cursor = 0;
    for (int qi = 0; qi < opts.n_composites; ++qi) {
        const ManifestEntry& host_e = manifest[hosts[qi]];
        RasterImage query = load_image(host_e.path);

        ProvenanceGroundTruth truth;
        char qname[32];
        std::snprintf(qname, sizeof(qname), "query%04d", qi);
        truth.query_id = qname;
        truth.host_id = host_e.image_id;

        for (int di = 0; di < opts.donors_per_composite; ++di) {
            const ManifestEntry& donor_e = manifest[donors[donor_cursor++]];
            RasterImage donor = load_image(donor_e.path);

            double frac = area_frac(rng);
            double target_area = frac * query.width * query.height;
            double asp = aspect(rng);
            int pw = std::min(donor.width,
                              std::max(16, int(std::sqrt(target_area * asp))));
            int ph = std::min(donor.height,
                              std::max(16, int(std::sqrt(target_area / asp))));
            std::uniform_int_distribution<int> rx(0, donor.width - pw);
            std::uniform_int_distribution<int> ry(0, donor.height - ph);
            detail::PatchBuffer patch =
                detail::cut_patch(donor, {rx(rng), ry(rng), pw, ph});

            SpliceRecord splice;
            splice.donor_id = donor_e.image_id;
            if (unit(rng) < 0.5) {
                double f = scale_d(rng);
                // keep the scaled patch pasteable
                double max_f = 0.9 * std::min(double(query.width) / patch.width(),
                                              double(query.height) / patch.height());
                f = std::min(f, max_f);
                if (f > 0) {
                    patch = detail::scale_patch(patch, f);
                    splice.transform_log.push_back("scale " + std::to_string(f));
                }
            }
            if (unit(rng) < 0.5) {
                double a = rot_d(rng);
                patch = detail::rotate_patch(patch, a);
                splice.transform_log.push_back("rotate " + std::to_string(a));
            }
            if (unit(rng) < 0.5) {
                double b = bright_d(rng);
                detail::brighten_patch(patch, b);
                splice.transform_log.push_back("brightness " + std::to_string(b));
            }
            if (unit(rng) < 0.5) {
                int q = jpeg_d(rng);
                detail::jpeg_patch(patch, q);
                splice.transform_log.push_back("jpeg " + std::to_string(q));
            }

            int max_ox = std::max(0, query.width - patch.width());
            int max_oy = std::max(0, query.height - patch.height());
            std::uniform_int_distribution<int> ox_d(0, max_ox), oy_d(0, max_oy);
            splice.rect = detail::paste_patch(query, patch, ox_d(rng), oy_d(rng));
            if (splice.rect.w > 0) truth.splices.push_back(std::move(splice));
        }

        query = jpeg_roundtrip(query, jpeg_d(rng));
        std::string qpath = out_dir + "/queries/" + truth.query_id + ".png";
        save_image(query, qpath);

        ManifestEntry qe;
        qe.image_id = truth.query_id;
        qe.path = qpath;
        qe.role = "query";
        qe.truth = std::move(truth);
        manifest.push_back(std::move(qe));
    }
    return manifest;
}

// ---- manifest I/O (JSON lines) ----

inline nlohmann::ordered_json manifest_entry_to_json(const ManifestEntry& e) {
    nlohmann::ordered_json j;
    j["image_id"] = e.image_id;
    j["path"] = e.path;
    j["role"] = e.role;
    if (e.truth) {
        nlohmann::ordered_json t;
        t["host_id"] = e.truth->host_id;
        t["splices"] = nlohmann::ordered_json::array();
        for (const auto& s : e.truth->splices)
            t["splices"].push_back({{"donor_id", s.donor_id},
                                    {"x", s.rect.x},
                                    {"y", s.rect.y},
                                    {"w", s.rect.w},
                                    {"h", s.rect.h},
                                    {"transforms", s.transform_log}});
        j["truth"] = t;
    }
    return j;
}

inline void write_manifest(const std::vector<ManifestEntry>& manifest,
                           const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path);
    for (const auto& e : manifest) out << manifest_entry_to_json(e).dump() << '\n';
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read manifest: " + path);
    std::vector<ManifestEntry> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest parse error at line " +
                              std::to_string(line_no) + ": " + e.what());
        }
        ManifestEntry e;
        e.image_id = j.at("image_id").get<std::string>();
        e.path = j.at("path").get<std::string>();
        e.role = j.at("role").get<std::string>();
        if (j.contains("truth")) {
            ProvenanceGroundTruth t;
            t.query_id = e.image_id;
            t.host_id = j["truth"].at("host_id").get<std::string>();
            for (const auto& s : j["truth"].at("splices")) {
                SpliceRecord sp;
                sp.donor_id = s.at("donor_id").get<std::string>();
                sp.rect = {s.at("x").get<int>(), s.at("y").get<int>(),
                           s.at("w").get<int>(), s.at("h").get<int>()};
                for (const auto& tr : s.at("transforms"))
                    sp.transform_log.push_back(tr.get<std::string>());
                t.splices.push_back(std::move(sp));
            }
            e.truth = std::move(t);
        }
        out.push_back(std::move(e));
    }
    return out;
}

// ---- recall ----

enum class EvalRole { host, donor };
enum class EvalList { tier1, final };

inline const RankedList& list_for(const ProvenanceResult& r, EvalList which) {
    return which == EvalList::tier1 ? r.tier1 : r.final;
}

// host: fraction of queries with host in top-k. donor: micro-averaged
// over (query, donor) pairs.
inline double recall_at_k(const std::vector<ProvenanceResult>& results,
                          const std::map<std::string, ProvenanceGroundTruth>& truth,
                          int k, EvalRole role, EvalList which) {
    int hits = 0, total = 0;
    for (const auto& r : results) {
        auto it = truth.find(r.query_id);
        if (it == truth.end())
            throw MissingGroundTruth("no ground truth for " + r.query_id);
        const auto& t = it->second;
        const RankedList& list = list_for(r, which);
        if (role == EvalRole::host) {
            ++total;
            int rank = list.rank_of(t.host_id);
            if (rank > 0 && rank <= k) ++hits;
        } else {
            for (const auto& s : t.splices) {
                ++total;
                int rank = list.rank_of(s.donor_id);
                if (rank > 0 && rank <= k) ++hits;
            }
        }
    }
    return total ? double(hits) / total : 0.0;
}

inline const std::vector<int>& recall_ks() {
    static const std::vector<int> ks = {1, 5, 10, 20, 50, 100};
    return ks;
}

struct EvalReport {
    // [tier1|final][host|donor][k] -> recall
    std::map<std::string, std::map<std::string, std::map<int, double>>> recalls;
    nlohmann::ordered_json per_query = nlohmann::ordered_json::array();

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["recalls"] = recalls;
        j["queries"] = per_query;
        return j;
    }
};

inline EvalReport make_report(
    const std::vector<ProvenanceResult>& results,
    const std::map<std::string, ProvenanceGroundTruth>& truth) {
    EvalReport rep;
    std::vector<ProvenanceResult> ok;
    for (const auto& r : results)
        if (!r.failed()) ok.push_back(r);
    for (auto which : {EvalList::tier1, EvalList::final}) {
        std::string wname = which == EvalList::tier1 ? "tier1" : "final";
        for (auto role : {EvalRole::host, EvalRole::donor}) {
            std::string rname = role == EvalRole::host ? "host" : "donor";
            for (int k : recall_ks())
                rep.recalls[wname][rname][k] = recall_at_k(ok, truth, k, role, which);
        }
    }
    for (const auto& r : results) {
        nlohmann::ordered_json row;
        row["query_id"] = r.query_id;
        row["error"] = r.error;
        if (r.failed()) {
            rep.per_query.push_back(row);
            continue;
        }
        const auto& t = truth.at(r.query_id);
        row["verdict"] = to_string(r.verdict);
        row["r_best"] = r.r_best;
        row["host_id"] = t.host_id;
        row["host_rank_tier1"] = r.tier1.rank_of(t.host_id);
        row["host_rank_final"] = r.final.rank_of(t.host_id);
        nlohmann::ordered_json donors = nlohmann::ordered_json::array();
        for (const auto& s : t.splices)
            donors.push_back({{"donor_id", s.donor_id},
                              {"rank_tier1", r.tier1.rank_of(s.donor_id)},
                              {"rank_final", r.final.rank_of(s.donor_id)}});
        row["donors"] = donors;
        rep.per_query.push_back(row);
    }
    return rep;
}

inline void write_report_tsv(const EvalReport& rep, std::ostream& os) {
    os << "query_id\tverdict\thost_id\thost_rank_tier1\thost_rank_final\t"
          "donor_id\tdonor_rank_tier1\tdonor_rank_final\n";
    for (const auto& row : rep.per_query) {
        if (!row.value("error", std::string{}).empty()) continue;
        std::string prefix = row["query_id"].get<std::string>() + "\t" +
                             row["verdict"].get<std::string>() + "\t" +
                             row["host_id"].get<std::string>() + "\t" +
                             std::to_string(row["host_rank_tier1"].get<int>()) +
                             "\t" +
                             std::to_string(row["host_rank_final"].get<int>());
        if (row["donors"].empty()) {
            os << prefix << "\t-\t0\t0\n";
        } else {
            for (const auto& d : row["donors"])
                os << prefix << '\t' << d["donor_id"].get<std::string>() << '\t'
                   << d["rank_tier1"].get<int>() << '\t'
                   << d["rank_final"].get<int>() << '\n';
        }
    }
}

// ---- backend benchmarks ----

struct BenchRow {
    AnnBackend backend;
    double build_s = 0;
    double query_s = 0;  // median per query
    uint64_t memory_bytes = 0;
    double recall_at_1 = 0;  // vs brute
};

inline std::vector<BenchRow> bench_backends(
    const std::vector<DescriptorRecord>& records,
    const std::vector<std::pair<AnnBackend, AnnParams>>& backends,
    const std::vector<Descriptor>& queries, uint64_t seed,
    int repetitions = 5) {
    AnnIndex oracle = AnnIndex::build(records, AnnBackend::brute, {}, seed);
    std::vector<std::vector<Neighbor>> exact(queries.size());
    for (size_t i = 0; i < queries.size(); ++i) exact[i] = oracle.knn(queries[i], 1);

    std::vector<BenchRow> rows;
    for (const auto& [backend, params] : backends) {
        BenchRow row;
        row.backend = backend;
        AnnIndex idx = AnnIndex::build(records, backend, params, seed);
        row.build_s = idx.stats().build_seconds;
        row.memory_bytes = idx.stats().memory_bytes;

        int hits = 0;
        std::vector<double> times;
        for (int rep = 0; rep < repetitions; ++rep) {
            auto t0 = std::chrono::steady_clock::now();
            for (size_t i = 0; i < queries.size(); ++i) {
                auto nn = idx.knn(queries[i], 1);
                if (rep == 0 && !nn.empty() && !exact[i].empty() &&
                    nn[0].global_id == exact[i][0].global_id)
                    ++hits;
            }
            double dt = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
            times.push_back(dt / double(queries.size()));
        }
        std::sort(times.begin(), times.end());
        row.query_s = times[times.size() / 2];
        row.recall_at_1 = queries.empty() ? 0 : double(hits) / queries.size();
        rows.push_back(row);
    }
    return rows;
}

}  // namespace provfilter
