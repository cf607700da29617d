// provfilter: two-tier provenance filtering over an image collection.
//
// Subcommands:
//   gen    generate a synthetic composite corpus with ground truth
//   index  extract features for a corpus manifest and build an ANN index
//   query  run the two-tier search for a single query image
//   eval   run all manifest queries and report Recall@k per tier
//   bench  compare indexing backends on a corpus

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "provfilter/eval.hpp"

namespace pf = provfilter;
namespace fs = std::filesystem;

namespace {

struct LoadedCorpus {
    pf::CorpusStore store;
    std::vector<pf::ManifestEntry> manifest;
};

// Feature extraction over every gallery (non-query) entry, parallel.
void extract_gallery_features(const std::vector<pf::ManifestEntry>& manifest,
                              pf::CorpusStore& store,
                              const pf::PipelineConfig& cfg) {
    std::vector<const pf::ManifestEntry*> gallery;
    for (const auto& e : manifest)
        if (e.role != "query") gallery.push_back(&e);
    std::vector<pf::FeatureSet> sets(gallery.size());
    pf::parallel_for(gallery.size(), [&](size_t i) {
        pf::RasterImage img = pf::load_image(gallery[i]->path);
        sets[i] = pf::detect_and_describe(img, cfg.budget, cfg.detector,
                                          gallery[i]->image_id);
    });
    for (size_t i = 0; i < gallery.size(); ++i) {
        store.add(gallery[i]->image_id, gallery[i]->path);
        store.add_features(std::move(sets[i]));
    }
}

std::vector<pf::DescriptorRecord> records_from_store(const pf::CorpusStore& store) {
    std::vector<const pf::FeatureSet*> ordered;
    for (const auto& [id, fsq] : store.features()) ordered.push_back(&fsq);
    std::sort(ordered.begin(), ordered.end(),
              [](auto* a, auto* b) { return a->image_id < b->image_id; });
    std::vector<pf::DescriptorRecord> records;
    uint32_t gid = 0;
    for (const auto* fsq : ordered)
        for (size_t i = 0; i < fsq->size(); ++i)
            records.push_back({gid++, fsq->image_id, uint32_t(i),
                               fsq->descriptors[i]});
    return records;
}

void save_corpus_paths(const pf::CorpusStore& store,
                       const std::vector<pf::ManifestEntry>& manifest,
                       const std::string& path) {
    std::ofstream out(path);
    for (const auto& e : manifest)
        if (e.role != "query")
            out << e.image_id << '\t' << e.path << '\t' << e.role << '\n';
}

LoadedCorpus load_corpus_sidecars(const std::string& index_path) {
    LoadedCorpus lc;
    std::ifstream in(index_path + ".corpus");
    if (!in) throw pf::IoError("missing corpus sidecar: " + index_path + ".corpus");
    std::string line;
    while (std::getline(in, line)) {
        auto t1 = line.find('\t');
        auto t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) continue;
        pf::ManifestEntry e;
        e.image_id = line.substr(0, t1);
        e.path = line.substr(t1 + 1, t2 - t1 - 1);
        e.role = line.substr(t2 + 1);
        lc.store.add(e.image_id, e.path);
        lc.manifest.push_back(std::move(e));
    }
    lc.store.load_features(index_path + ".features");
    return lc;
}

void write_query_outputs(const pf::ProvenanceResult& res,
                         const std::string& out_dir) {
    fs::create_directories(out_dir);
    {
        std::ofstream out(out_dir + "/" + res.query_id + ".json");
        out << pf::result_to_json(res).dump(2) << '\n';
    }
    {
        std::ofstream out(out_dir + "/" + res.query_id + ".ranked.tsv");
        pf::write_ranked_list(out, res.tier1);
        for (const auto& l : res.tier2) pf::write_ranked_list(out, l);
        pf::write_ranked_list(out, res.final);
    }
    if (res.mask)
        pf::save_image(pf::mask_to_image(*res.mask),
                       out_dir + "/" + res.query_id + ".mask.png");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-tier provenance filtering"};
    app.require_subcommand(1);

    // --- gen ---
    auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
    std::string gen_base, gen_out = "corpus";
    pf::GeneratorOptions gopts;
    int synth_count = 0, synth_w = 256, synth_h = 256;
    gen->add_option("--base", gen_base, "directory of base images")->required();
    gen->add_option("--distractors", gopts.n_distractors, "distractor count");
    gen->add_option("--composites", gopts.n_composites, "composite query count");
    gen->add_option("--donors", gopts.donors_per_composite, "donors per composite");
    gen->add_option("--seed", gopts.seed, "RNG seed");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--synth", synth_count,
                    "generate this many synthetic base images first");
    gen->add_option("--width", synth_w, "synthetic base image width");
    gen->add_option("--height", synth_h, "synthetic base image height");

    // --- index ---
    auto* index_cmd = app.add_subcommand("index", "build an ANN index");
    std::string idx_corpus, idx_backend = "kdforest", idx_out;
    std::vector<std::string> idx_params;
    pf::PipelineConfig idx_cfg;
    index_cmd->add_option("--corpus", idx_corpus, "corpus manifest")->required();
    index_cmd->add_option("--backend", idx_backend,
                          "brute|kdtree|kdforest|pq|hkmeans");
    index_cmd->add_option("--out", idx_out, "index output file")->required();
    index_cmd->add_option("--budget", idx_cfg.budget, "keypoints per image");
    index_cmd->add_option("--seed", idx_cfg.seed, "RNG seed");
    index_cmd->add_option("--params", idx_params, "extra config key=value pairs");

    // --- query ---
    auto* query_cmd = app.add_subcommand("query", "run a single query");
    std::string q_index, q_image, q_config, q_out = "results";
    query_cmd->add_option("--index", q_index, "index file")->required();
    query_cmd->add_option("--image", q_image, "query image")->required();
    query_cmd->add_option("--config", q_config, "config file");
    query_cmd->add_option("--out", q_out, "output directory");

    // --- eval ---
    auto* eval_cmd = app.add_subcommand("eval", "evaluate manifest queries");
    std::string e_index, e_manifest, e_config, e_out = "report.json";
    eval_cmd->add_option("--index", e_index, "index file")->required();
    eval_cmd->add_option("--manifest", e_manifest, "corpus manifest")->required();
    eval_cmd->add_option("--config", e_config, "config file");
    eval_cmd->add_option("--out", e_out, "report output (JSON; TSV alongside)");

    // --- bench ---
    auto* bench_cmd = app.add_subcommand("bench", "benchmark backends");
    std::string b_corpus, b_backends = "brute,kdtree,kdforest,pq,hkmeans",
                b_out = "bench.tsv";
    pf::PipelineConfig b_cfg;
    bench_cmd->add_option("--corpus", b_corpus, "corpus manifest")->required();
    bench_cmd->add_option("--backends", b_backends, "comma-separated backends");
    bench_cmd->add_option("--budget", b_cfg.budget, "keypoints per image");
    bench_cmd->add_option("--seed", b_cfg.seed, "RNG seed");
    bench_cmd->add_option("--out", b_out, "output TSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            std::vector<std::string> base_paths;
            if (synth_count > 0) {
                base_paths = pf::write_synth_base_images(gen_base, synth_count,
                                                         synth_w, synth_h,
                                                         gopts.seed + 1000003);
            } else {
                for (const auto& e : fs::directory_iterator(gen_base))
                    if (e.is_regular_file()) base_paths.push_back(e.path().string());
                std::sort(base_paths.begin(), base_paths.end());
            }
            auto manifest = pf::generate_corpus(base_paths, gopts, gen_out);
            pf::write_manifest(manifest, gen_out + "/manifest.jsonl");
            std::cout << "wrote " << manifest.size() << " manifest entries to "
                      << gen_out << "/manifest.jsonl\n";
        } else if (index_cmd->parsed()) {
            for (const auto& kv : idx_params) {
                auto eq = kv.find('=');
                if (eq == std::string::npos)
                    throw pf::InvalidParams("bad --params entry: " + kv);
                pf::apply_key_value(idx_cfg, kv.substr(0, eq), kv.substr(eq + 1));
            }
            auto manifest = pf::read_manifest(idx_corpus);
            pf::CorpusStore store;
            extract_gallery_features(manifest, store, idx_cfg);
            auto records = records_from_store(store);
            auto idx = pf::AnnIndex::build(records,
                                           pf::backend_from_string(idx_backend),
                                           idx_cfg.ann, idx_cfg.seed);
            idx.save(idx_out);
            store.save_features(idx_out + ".features");
            save_corpus_paths(store, manifest, idx_out + ".corpus");
            auto st = idx.stats();
            std::cout << "indexed " << st.n << " descriptors ("
                      << pf::to_string(st.backend) << ", "
                      << st.memory_bytes / (1024.0 * 1024.0) << " MiB, "
                      << st.build_seconds << " s)\n";
        } else if (query_cmd->parsed()) {
            pf::PipelineConfig cfg;
            if (!q_config.empty()) cfg = pf::load_config(q_config);
            auto idx = pf::AnnIndex::load(q_index);
            auto lc = load_corpus_sidecars(q_index);
            pf::RasterImage img = pf::load_image(q_image);
            std::string qid = fs::path(q_image).stem().string();
            auto res = pf::run_query(img, qid, idx, lc.store, cfg);
            write_query_outputs(res, q_out);
            std::cout << "verdict " << pf::to_string(res.verdict) << ", r_best "
                      << res.r_best << ", results in " << q_out << "\n";
        } else if (eval_cmd->parsed()) {
            pf::PipelineConfig cfg;
            if (!e_config.empty()) cfg = pf::load_config(e_config);
            auto idx = pf::AnnIndex::load(e_index);
            auto lc = load_corpus_sidecars(e_index);
            auto manifest = pf::read_manifest(e_manifest);
            std::vector<pf::QueryJob> jobs;
            std::map<std::string, pf::ProvenanceGroundTruth> truth;
            for (const auto& e : manifest)
                if (e.role == "query" && e.truth) {
                    jobs.push_back({e.image_id, e.path});
                    truth[e.image_id] = *e.truth;
                }
            auto results = pf::run_batch(jobs, idx, lc.store, cfg);
            auto report = pf::make_report(results, truth);
            {
                std::ofstream out(e_out);
                out << report.to_json().dump(2) << '\n';
            }
            {
                std::ofstream out(e_out + ".tsv");
                pf::write_report_tsv(report, out);
            }
            for (const auto& which : {"tier1", "final"})
                for (const auto& role : {"host", "donor"})
                    std::cout << which << " " << role << " recall@10 = "
                              << report.recalls[which][role][10] << "\n";
        } else if (bench_cmd->parsed()) {
            auto manifest = pf::read_manifest(b_corpus);
            pf::CorpusStore store;
            extract_gallery_features(manifest, store, b_cfg);
            auto records = records_from_store(store);

            // query descriptors: manifest queries if present, else a sample
            std::vector<pf::Descriptor> queries;
            for (const auto& e : manifest) {
                if (e.role != "query") continue;
                pf::RasterImage img = pf::load_image(e.path);
                auto fsq = pf::detect_and_describe(img, b_cfg.budget,
                                                   b_cfg.detector, e.image_id);
                for (const auto& d : fsq.descriptors) queries.push_back(d);
            }
            if (queries.empty())
                for (size_t i = 0; i < records.size(); i += 97)
                    queries.push_back(records[i].vector);
            if (queries.size() > 1000) queries.resize(1000);

            std::vector<std::pair<pf::AnnBackend, pf::AnnParams>> backends;
            std::stringstream ss(b_backends);
            std::string tag;
            while (std::getline(ss, tag, ','))
                backends.push_back({pf::backend_from_string(tag), b_cfg.ann});
            auto rows = pf::bench_backends(records, backends, queries, b_cfg.seed);
            std::ofstream out(b_out);
            out << "backend\tbuild_s\tquery_s\tmemory_bytes\trecall_at_1\n";
            for (const auto& r : rows) {
                out << pf::to_string(r.backend) << '\t' << r.build_s << '\t'
                    << r.query_s << '\t' << r.memory_bytes << '\t'
                    << r.recall_at_1 << '\n';
                std::cout << pf::to_string(r.backend) << ": query "
                          << r.query_s * 1e3 << " ms, memory "
                          << r.memory_bytes / (1024.0 * 1024.0)
                          << " MiB, recall@1 " << r.recall_at_1 << "\n";
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
