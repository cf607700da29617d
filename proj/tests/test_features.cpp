#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "provfilter/eval.hpp"
#include "provfilter/features.hpp"
#include "provfilter/geometry.hpp"
#include "provfilter/mask.hpp"

using namespace provfilter;

namespace {

RasterImage rotate90(const RasterImage& img) {
    RasterImage out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(img.height - 1 - y, x, c) = img.at(x, y, c);
    return out;
}

// mutual nearest-neighbor NNDR matches between two feature sets
std::vector<Match> mutual_matches(const FeatureSet& a, const FeatureSet& b,
                                  float ratio) {
    auto ab = match_nndr(a, b, ratio);
    auto ba = match_nndr(b, a, ratio);
    std::vector<Match> out;
    for (const auto& m : ab)
        for (const auto& r : ba)
            if (r.query_kp == m.target_kp && r.target_kp == m.query_kp) {
                out.push_back(m);
                break;
            }
    return out;
}

}  // namespace

TEST_CASE("constant image has no keypoints") {
    RasterImage flat(64, 64, 1, 128);
    CHECK(detect_and_describe(flat, 2000).empty());
}

TEST_CASE("tiny images yield empty sets, not errors") {
    RasterImage small(16, 16, 1, 0);
    CHECK(detect_and_describe(small, 100).empty());
}

TEST_CASE("budget caps keypoints and keeps the strongest") {
    RasterImage img = synth_base_image(128, 128, 5);
    FeatureSet all = detect_and_describe(img, 2000);
    REQUIRE(all.size() > 10);
    FeatureSet one = detect_and_describe(img, 1);
    REQUIRE(one.size() == 1);
    CHECK(one.keypoints[0].x == all.keypoints[0].x);
    CHECK(one.keypoints[0].response == all.keypoints[0].response);
    for (size_t i = 1; i < all.size(); ++i)
        CHECK(all.keypoints[i].response <= all.keypoints[i - 1].response);
}

TEST_CASE("detection is deterministic and well-formed") {
    RasterImage img = synth_base_image(160, 120, 17);
    FeatureSet a = detect_and_describe(img, 500);
    FeatureSet b = detect_and_describe(img, 500);
    REQUIRE(a.size() == b.size());
    REQUIRE(!a.empty());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a.keypoints[i].x == b.keypoints[i].x);
        CHECK(a.descriptors[i] == b.descriptors[i]);
        CHECK(a.keypoints[i].response > 0);
        CHECK(a.keypoints[i].x >= 0);
        CHECK(a.keypoints[i].x < img.width);
        CHECK(a.keypoints[i].y >= 0);
        CHECK(a.keypoints[i].y < img.height);
        double norm = 0;
        for (float v : a.descriptors[i]) norm += double(v) * v;
        CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
    }
}

TEST_CASE("descriptors survive a 90 degree rotation") {
    RasterImage img = synth_base_image(200, 200, 23);
    FeatureSet fs = detect_and_describe(img, 500);
    FeatureSet fr = detect_and_describe(rotate90(img), 500);
    REQUIRE(fs.size() > 20);
    auto matches = mutual_matches(fs, fr, 0.8f);
    CHECK(double(matches.size()) >= 0.5 * double(fs.size()));
}

TEST_CASE("keypoints shift with an integer translation") {
    const int dx = 8, dy = 7;
    RasterImage content = synth_base_image(192, 192, 31);
    RasterImage a(256, 256, 3, 90), b(256, 256, 3, 90);
    for (int y = 0; y < 192; ++y)
        for (int x = 0; x < 192; ++x)
            for (int c = 0; c < 3; ++c) {
                a.at(x + 24, y + 24, c) = content.at(x, y, c);
                b.at(x + 24 + dx, y + 24 + dy, c) = content.at(x, y, c);
            }
    FeatureSet fa = detect_and_describe(a, 500);
    FeatureSet fb = detect_and_describe(b, 500);
    auto matches = mutual_matches(fa, fb, 0.8f);
    REQUIRE(matches.size() > 10);
    int good = 0;
    for (const auto& m : matches) {
        float ddx = fb.keypoints[m.target_kp].x - fa.keypoints[m.query_kp].x;
        float ddy = fb.keypoints[m.target_kp].y - fa.keypoints[m.query_kp].y;
        if (std::abs(ddx - dx) <= 1.f && std::abs(ddy - dy) <= 1.f) ++good;
    }
    CHECK(double(good) >= 0.75 * double(matches.size()));
}

TEST_CASE("keypoints_in_mask filters by foreground membership") {
    RasterImage img = synth_base_image(128, 128, 3);
    FeatureSet fs = detect_and_describe(img, 300);
    REQUIRE(!fs.empty());

    ContextMask all_fg;
    all_fg.width = 128;
    all_fg.height = 128;
    all_fg.bits.assign(128 * 128, 1);
    CHECK(keypoints_in_mask(fs, all_fg, 128, 128).size() == fs.size());

    ContextMask all_bg = all_fg;
    all_bg.bits.assign(128 * 128, 0);
    CHECK(keypoints_in_mask(fs, all_bg, 128, 128).empty());

    ContextMask random_mask = all_fg;
    std::mt19937 rng(9);
    for (auto& b : random_mask.bits) b = rng() & 1;
    FeatureSet sub = keypoints_in_mask(fs, random_mask, 128, 128);
    size_t expected = 0;
    for (const auto& kp : fs.keypoints) {
        int x = std::clamp(int(std::lround(kp.x)), 0, 127);
        int y = std::clamp(int(std::lround(kp.y)), 0, 127);
        if (random_mask.at(x, y)) ++expected;
    }
    CHECK(sub.size() == expected);

    ContextMask wrong;
    wrong.width = 64;
    wrong.height = 64;
    wrong.bits.assign(64 * 64, 1);
    CHECK_THROWS_AS(keypoints_in_mask(fs, wrong, 128, 128), DimensionMismatch);
}

TEST_CASE("redetect_in_regions with the whole frame equals detection") {
    RasterImage img = synth_base_image(128, 128, 11);
    FeatureSet full = detect_and_describe(img, 400);
    FeatureSet re = redetect_in_regions(img, {{0, 0, 128, 128}}, 400, {}, 1.0f);
    REQUIRE(re.size() == full.size());
    for (size_t i = 0; i < re.size(); ++i) {
        CHECK(re.keypoints[i].x == full.keypoints[i].x);
        CHECK(re.descriptors[i] == full.descriptors[i]);
    }
}

TEST_CASE("redetect_in_regions in a flat area finds nothing") {
    RasterImage img(128, 128, 1, 100);
    // textured bottom half, flat top half
    RasterImage tex = synth_base_image(128, 64, 13);
    RasterImage gray = to_grayscale(tex);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 128; ++x) img.at(x, y + 64) = gray.at(x, y);
    CHECK(redetect_in_regions(img, {{0, 0, 128, 40}}, 100).empty());
}

TEST_CASE("redetect_in_regions keeps keypoints inside the region") {
    RasterImage img(160, 160, 1, 100);
    RasterImage tex = to_grayscale(synth_base_image(64, 64, 19));
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) img.at(x + 48, y + 48) = tex.at(x, y);
    Rect patch{48, 48, 64, 64};
    FeatureSet fs = redetect_in_regions(img, {patch}, 200);
    REQUIRE(!fs.empty());
    for (const auto& kp : fs.keypoints) {
        CHECK(patch.contains(int(std::lround(kp.x)), int(std::lround(kp.y))));
    }
}

TEST_CASE("feature set round trips through the binary format") {
    testutil::TempDir tmp;
    RasterImage img = synth_base_image(128, 128, 29);
    FeatureSet fs = detect_and_describe(img, 200, {}, "img_a");
    {
        BinaryWriter w(tmp.file("a.pffs"));
        write_feature_set(w, fs);
        w.close();
    }
    BinaryReader r(tmp.file("a.pffs"));
    FeatureSet back = read_feature_set(r);
    REQUIRE(back.image_id == "img_a");
    REQUIRE(back.size() == fs.size());
    for (size_t i = 0; i < fs.size(); ++i) {
        CHECK(back.keypoints[i].x == fs.keypoints[i].x);
        CHECK(back.descriptors[i] == fs.descriptors[i]);
    }
}
