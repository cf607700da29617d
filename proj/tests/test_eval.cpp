#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "provfilter/eval.hpp"

using namespace provfilter;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Hand-built results + truth for recall arithmetic.
ProvenanceResult fake_result(const std::string& qid,
                             const std::vector<std::string>& tier1,
                             const std::vector<std::string>& final_list) {
    ProvenanceResult r;
    r.query_id = qid;
    auto fill = [&](RankedList& l, const std::vector<std::string>& ids) {
        l.query_id = qid;
        for (size_t i = 0; i < ids.size(); ++i)
            l.entries.push_back(
                {ids[i], int(ids.size() - i), 1.0 - 0.1 * double(i), 0.1});
    };
    fill(r.tier1, tier1);
    fill(r.final, final_list);
    return r;
}

}  // namespace

TEST_CASE("synthetic base images are keypoint rich and seed distinct") {
    RasterImage a = synth_base_image(128, 128, 1);
    RasterImage b = synth_base_image(128, 128, 1);
    RasterImage c = synth_base_image(128, 128, 2);
    CHECK(a.pixels == b.pixels);
    CHECK(a.pixels != c.pixels);
    CHECK(detect_and_describe(a, 2000).size() > 50);
}

TEST_CASE("generate_corpus assigns roles and in-bounds splices") {
    testutil::TempDir tmp;
    auto bases = write_synth_base_images(tmp.file("bases"), 14, 128, 128, 10);
    GeneratorOptions opts;
    opts.n_distractors = 8;
    opts.n_composites = 2;
    opts.seed = 5;
    auto manifest = generate_corpus(bases, opts, tmp.str());

    int hosts = 0, donors = 0, distractors = 0, queries = 0;
    for (const auto& e : manifest) {
        if (e.role == "host") ++hosts;
        else if (e.role == "donor") ++donors;
        else if (e.role == "distractor") ++distractors;
        else if (e.role == "query") ++queries;
    }
    CHECK(hosts == 2);
    CHECK(donors == 2);
    CHECK(distractors == 8);
    CHECK(queries == 2);

    for (const auto& e : manifest) {
        if (e.role != "query") continue;
        REQUIRE(e.truth.has_value());
        RasterImage q = load_image(e.path);
        CHECK(q.width == 128);
        for (const auto& s : e.truth->splices) {
            CHECK(s.rect.w > 0);
            CHECK(s.rect.h > 0);
            CHECK(s.rect.x >= 0);
            CHECK(s.rect.y >= 0);
            CHECK(s.rect.x1() <= q.width);
            CHECK(s.rect.y1() <= q.height);
        }
    }
}

TEST_CASE("generate_corpus demands enough base images") {
    testutil::TempDir tmp;
    auto bases = write_synth_base_images(tmp.file("bases"), 3, 64, 64, 1);
    GeneratorOptions opts;
    opts.n_distractors = 5;
    opts.n_composites = 2;
    CHECK_THROWS_AS(generate_corpus(bases, opts, tmp.str()),
                    InsufficientBaseImages);
}

TEST_CASE("same seed gives a byte-identical manifest and query images") {
    testutil::TempDir tmp;
    auto bases = write_synth_base_images(tmp.file("bases"), 12, 96, 96, 3);
    GeneratorOptions opts;
    opts.n_distractors = 6;
    opts.n_composites = 2;
    opts.seed = 11;
    auto m1 = generate_corpus(bases, opts, tmp.file("run1"));
    auto m2 = generate_corpus(bases, opts, tmp.file("run2"));
    write_manifest(m1, tmp.file("m1.jsonl"));
    write_manifest(m2, tmp.file("m2.jsonl"));
    std::string a = slurp(tmp.file("m1.jsonl"));
    std::string b = slurp(tmp.file("m2.jsonl"));
    // manifests differ only in the run directory inside paths
    size_t pos;
    while ((pos = a.find("run1")) != std::string::npos) a.replace(pos, 4, "runX");
    while ((pos = b.find("run2")) != std::string::npos) b.replace(pos, 4, "runX");
    CHECK(a == b);
    CHECK(slurp(tmp.file("run1/queries/query0000.png")) ==
          slurp(tmp.file("run2/queries/query0000.png")));
}

TEST_CASE("manifest round trips through JSON lines") {
    testutil::TempDir tmp;
    std::vector<ManifestEntry> manifest;
    ManifestEntry d;
    d.image_id = "img1";
    d.path = "/x/img1.png";
    d.role = "distractor";
    manifest.push_back(d);
    ManifestEntry q;
    q.image_id = "query0000";
    q.path = "/x/q.png";
    q.role = "query";
    ProvenanceGroundTruth t;
    t.query_id = "query0000";
    t.host_id = "img9";
    t.splices.push_back({"img4", {5, 6, 20, 30}, {"rotate 0.3", "jpeg 80"}});
    q.truth = t;
    manifest.push_back(q);

    write_manifest(manifest, tmp.file("m.jsonl"));
    auto back = read_manifest(tmp.file("m.jsonl"));
    REQUIRE(back.size() == 2);
    CHECK(back[0].image_id == "img1");
    CHECK(!back[0].truth.has_value());
    REQUIRE(back[1].truth.has_value());
    CHECK(back[1].truth->host_id == "img9");
    REQUIRE(back[1].truth->splices.size() == 1);
    CHECK(back[1].truth->splices[0].donor_id == "img4");
    CHECK(back[1].truth->splices[0].rect.w == 20);
    CHECK(back[1].truth->splices[0].transform_log.size() == 2);
}

TEST_CASE("read_manifest reports the offending line") {
    testutil::TempDir tmp;
    std::ofstream out(tmp.file("bad.jsonl"));
    out << R"({"image_id":"a","path":"/a","role":"distractor"})" << "\n";
    out << "not json\n";
    out.close();
    try {
        read_manifest(tmp.file("bad.jsonl"));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("recall arithmetic on a hand-built fixture") {
    std::map<std::string, ProvenanceGroundTruth> truth;
    truth["q1"] = {"q1", "H1", {{"D1", {}, {}}}};
    truth["q2"] = {"q2", "H2", {{"D2", {}, {}}, {"D3", {}, {}}}};
    truth["q3"] = {"q3", "H3", {}};

    std::vector<ProvenanceResult> results = {
        // host at rank 1, donor at rank 3
        fake_result("q1", {"H1", "X", "D1"}, {"H1", "D1", "X"}),
        // host at rank 2, D2 at rank 1, D3 missing
        fake_result("q2", {"D2", "H2", "Y"}, {"D2", "H2", "D3"}),
        // host missing entirely
        fake_result("q3", {"A", "B"}, {"A", "B"}),
    };

    CHECK(recall_at_k(results, truth, 1, EvalRole::host, EvalList::tier1) ==
          Catch::Approx(1.0 / 3.0));
    CHECK(recall_at_k(results, truth, 2, EvalRole::host, EvalList::tier1) ==
          Catch::Approx(2.0 / 3.0));
    // donors: q1/D1 rank 3, q2/D2 rank 1, q2/D3 absent -> 3 pairs
    CHECK(recall_at_k(results, truth, 1, EvalRole::donor, EvalList::tier1) ==
          Catch::Approx(1.0 / 3.0));
    CHECK(recall_at_k(results, truth, 3, EvalRole::donor, EvalList::tier1) ==
          Catch::Approx(2.0 / 3.0));
    CHECK(recall_at_k(results, truth, 3, EvalRole::donor, EvalList::final) ==
          Catch::Approx(1.0));

    // monotone in k
    double prev = 0;
    for (int k : recall_ks()) {
        double r = recall_at_k(results, truth, k, EvalRole::host, EvalList::final);
        CHECK(r >= prev);
        prev = r;
    }

    std::vector<ProvenanceResult> orphan = {fake_result("q9", {"A"}, {"A"})};
    CHECK_THROWS_AS(
        recall_at_k(orphan, truth, 1, EvalRole::host, EvalList::tier1),
        MissingGroundTruth);
}

TEST_CASE("make_report skips failed queries in recall but lists them") {
    std::map<std::string, ProvenanceGroundTruth> truth;
    truth["q1"] = {"q1", "H1", {}};
    truth["q2"] = {"q2", "H2", {}};
    std::vector<ProvenanceResult> results = {
        fake_result("q1", {"H1"}, {"H1"}),
    };
    ProvenanceResult bad;
    bad.query_id = "q2";
    bad.error = "boom";
    results.push_back(bad);

    EvalReport rep = make_report(results, truth);
    CHECK(rep.recalls["tier1"]["host"][1] == Catch::Approx(1.0));
    REQUIRE(rep.per_query.size() == 2);
    CHECK(rep.per_query[1]["error"] == "boom");

    std::ostringstream os;
    write_report_tsv(rep, os);
    std::string tsv = os.str();
    CHECK(tsv.find("q1\t") != std::string::npos);
    CHECK(tsv.find("q2\t") == std::string::npos);  // failed row skipped
}

TEST_CASE("bench_backends reports sane rows") {
    std::mt19937 rng(8);
    std::normal_distribution<float> g(0.f, 1.f);
    std::vector<DescriptorRecord> recs(300);
    for (size_t i = 0; i < recs.size(); ++i) {
        recs[i].global_id = uint32_t(i);
        recs[i].image_id = "img" + std::to_string(i % 10);
        float norm = 0;
        for (auto& v : recs[i].vector) {
            v = g(rng);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : recs[i].vector) v /= norm;
    }
    std::vector<Descriptor> queries(recs.begin()->vector.size() ? 20 : 0);
    for (size_t i = 0; i < queries.size(); ++i) queries[i] = recs[i * 3].vector;

    auto rows = bench_backends(
        recs,
        {{AnnBackend::brute, {}}, {AnnBackend::kdtree, {}}},
        queries, 1, 3);
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) {
        CHECK(row.query_s >= 0);
        CHECK(row.memory_bytes > 0);
        CHECK(row.recall_at_1 >= 0.9);  // queries are exact copies
    }
}
