#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "provfilter/geometry.hpp"

using namespace provfilter;

namespace {

Descriptor random_unit_descriptor(std::mt19937& rng) {
    std::normal_distribution<float> g(0.f, 1.f);
    Descriptor d;
    float norm = 0;
    for (auto& v : d) {
        v = g(rng);
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : d) v /= norm;
    return d;
}

FeatureSet random_feature_set(int n, uint32_t seed, int span = 200) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> pos(10.f, float(span));
    FeatureSet fs;
    for (int i = 0; i < n; ++i) {
        Keypoint kp;
        kp.x = pos(rng);
        kp.y = pos(rng);
        kp.scale = 2.f;
        fs.keypoints.push_back(kp);
        fs.descriptors.push_back(random_unit_descriptor(rng));
    }
    return fs;
}

Eigen::Matrix3d make_h(double a, double b, double tx, double c, double d,
                       double ty) {
    Eigen::Matrix3d h;
    h << a, b, tx, c, d, ty, 0, 0, 1;
    return h;
}

}  // namespace

TEST_CASE("matching a set against itself gives zero-distance matches") {
    FeatureSet fs = random_feature_set(30, 1);
    auto matches = match_nndr(fs, fs, 0.8f);
    REQUIRE(matches.size() == 30);
    for (const auto& m : matches) {
        CHECK(m.query_kp == m.target_kp);
        CHECK(m.distance == 0.f);
        CHECK(m.ratio == 0.f);  // exact hit short-circuits the ratio
    }
}

TEST_CASE("noisy copies still match under the ratio test") {
    FeatureSet fs = random_feature_set(20, 2);
    FeatureSet noisy = fs;
    std::mt19937 rng(3);
    std::normal_distribution<float> g(0.f, 0.01f);
    for (auto& d : noisy.descriptors)
        for (auto& v : d) v += g(rng);
    auto matches = match_nndr(fs, noisy, 0.8f);
    CHECK(matches.size() >= 18);
    int correct = 0;
    for (const auto& m : matches)
        if (m.query_kp == m.target_kp) ++correct;
    CHECK(correct >= 18);
}

TEST_CASE("matches are one-to-one on the target side") {
    FeatureSet fs_t = random_feature_set(10, 4);
    // two query keypoints sharing each target descriptor
    FeatureSet fs_q;
    for (int rep = 0; rep < 2; ++rep)
        for (size_t i = 0; i < fs_t.size(); ++i) {
            fs_q.keypoints.push_back(fs_t.keypoints[i]);
            fs_q.descriptors.push_back(fs_t.descriptors[i]);
        }
    auto matches = match_nndr(fs_q, fs_t, 0.8f);
    std::vector<int> seen(fs_t.size(), 0);
    for (const auto& m : matches) ++seen[m.target_kp];
    for (int s : seen) CHECK(s <= 1);
}

TEST_CASE("top_matches keeps the n best and rejects tiny inputs") {
    std::vector<Match> matches;
    for (int i = 0; i < 30; ++i)
        matches.push_back({i, i, float(30 - i), 0.5f});
    auto top = top_matches(matches, 25);
    REQUIRE(top.size() == 25);
    for (size_t i = 1; i < top.size(); ++i)
        CHECK(top[i].distance >= top[i - 1].distance);
    CHECK(top[0].distance == 1.f);

    auto all = top_matches(std::vector<Match>(matches.begin(),
                                              matches.begin() + 10));
    CHECK(all.size() == 10);

    CHECK_THROWS_AS(top_matches({{0, 0, 1.f, 0.5f},
                                 {1, 1, 1.f, 0.5f},
                                 {2, 2, 1.f, 0.5f}}),
                    InsufficientMatches);
}

TEST_CASE("mean_match_distance") {
    CHECK(mean_match_distance({{0, 0, 1.f, 0}, {1, 1, 3.f, 0}}) ==
          Catch::Approx(2.0));
    CHECK(mean_match_distance({}) == std::numeric_limits<double>::max());
}

TEST_CASE("homography recovery on clean correspondences") {
    Eigen::Matrix3d truth = make_h(1.1, 0.05, 12.0, -0.04, 0.95, -7.0);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> pos(0.0, 300.0);
    std::vector<Match> matches;
    std::vector<Keypoint> kps_q, kps_t;
    for (int i = 0; i < 25; ++i) {
        double x = pos(rng), y = pos(rng);
        Eigen::Vector3d p = truth * Eigen::Vector3d(x, y, 1.0);
        Keypoint t, q;
        t.x = float(x);
        t.y = float(y);
        q.x = float(p.x() / p.z());
        q.y = float(p.y() / p.z());
        kps_t.push_back(t);
        kps_q.push_back(q);
        matches.push_back({i, i, 0.1f, 0.5f});
    }
    Homography h = estimate_homography(matches, kps_q, kps_t, 9);
    CHECK(h.inlier_count == 25);
    // keypoint coordinates are floats, which bounds the achievable fit
    CHECK(h.mean_reprojection_error < 1e-3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(h.matrix(r, c) == Catch::Approx(truth(r, c)).margin(1e-3));
}

TEST_CASE("homography recovery with 20 percent outliers") {
    Eigen::Matrix3d truth = make_h(0.9, -0.1, 40.0, 0.12, 1.05, 15.0);
    std::mt19937 rng(6);
    std::uniform_real_distribution<double> pos(0.0, 400.0);
    std::vector<Match> matches;
    std::vector<Keypoint> kps_q, kps_t;
    for (int i = 0; i < 50; ++i) {
        double x = pos(rng), y = pos(rng);
        Keypoint t, q;
        t.x = float(x);
        t.y = float(y);
        if (i % 5 == 0) {  // outlier: random destination
            q.x = float(pos(rng));
            q.y = float(pos(rng));
        } else {
            Eigen::Vector3d p = truth * Eigen::Vector3d(x, y, 1.0);
            q.x = float(p.x() / p.z());
            q.y = float(p.y() / p.z());
        }
        kps_t.push_back(t);
        kps_q.push_back(q);
        matches.push_back({i, i, 0.1f, 0.5f});
    }
    Homography h = estimate_homography(matches, kps_q, kps_t, 11);
    CHECK(h.inlier_count >= 40);
    std::uniform_real_distribution<double> probe(0.0, 400.0);
    for (int i = 0; i < 20; ++i) {
        double x = probe(rng), y = probe(rng);
        Eigen::Vector3d p = truth * Eigen::Vector3d(x, y, 1.0);
        Eigen::Vector2d got = h.apply(x, y);
        CHECK((got - Eigen::Vector2d(p.x() / p.z(), p.y() / p.z())).norm() <
              0.5);
    }
}

TEST_CASE("collinear correspondences are degenerate") {
    std::vector<Match> matches;
    std::vector<Keypoint> kps_q, kps_t;
    for (int i = 0; i < 6; ++i) {  // all on the line y = 2x
        Keypoint p;
        p.x = float(10 * i);
        p.y = float(20 * i);
        kps_t.push_back(p);
        kps_q.push_back(p);
        matches.push_back({i, i, 0.1f, 0.5f});
    }
    CHECK_THROWS_AS(estimate_homography(matches, kps_q, kps_t, 1),
                    DegenerateGeometry);
}

TEST_CASE("estimate_homography requires four matches") {
    std::vector<Keypoint> kps(3);
    CHECK_THROWS_AS(
        estimate_homography({{0, 0, 0, 0}, {1, 1, 0, 0}, {2, 2, 0, 0}}, kps,
                            kps, 0),
        InsufficientMatches);
}

TEST_CASE("estimate_homography is deterministic per seed") {
    FeatureSet fs = random_feature_set(40, 12);
    std::vector<Match> matches;
    for (int i = 0; i < 40; ++i) matches.push_back({i, i, 0.1f, 0.5f});
    Homography a = estimate_homography(matches, fs.keypoints, fs.keypoints, 3);
    Homography b = estimate_homography(matches, fs.keypoints, fs.keypoints, 3);
    CHECK(a.matrix == b.matrix);
    CHECK(a.inlier_count == b.inlier_count);
}

TEST_CASE("warp under identity reproduces the image") {
    std::mt19937 rng(7);
    RasterImage img(40, 30, 3);
    for (auto& v : img.pixels) v = uint8_t(rng() & 0xff);
    WarpResult out = warp(img, Homography{}, 40, 30);
    CHECK(out.image.pixels == img.pixels);
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 40; ++x) CHECK(out.is_valid(x, y));
}

TEST_CASE("warp under pure translation shifts content and flags the gap") {
    RasterImage img(20, 20, 1);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) img.at(x, y) = uint8_t(10 * x + y);
    Homography h;
    h.matrix = make_h(1, 0, 5, 0, 1, 3);
    WarpResult out = warp(img, h, 20, 20);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) {
            if (x >= 5 && y >= 3) {
                CHECK(out.is_valid(x, y));
                CHECK(out.image.at(x, y) == img.at(x - 5, y - 3));
            } else {
                CHECK(!out.is_valid(x, y));
                CHECK(out.image.at(x, y) == 0);
            }
        }
}

TEST_CASE("warp that maps fully outside yields an all-invalid result") {
    RasterImage img(16, 16, 1, 50);
    Homography h;
    h.matrix = make_h(1, 0, 1000, 0, 1, 1000);
    WarpResult out = warp(img, h, 16, 16);
    for (auto v : out.valid) CHECK(v == 0);
}

TEST_CASE("warp round trip is close to the original") {
    RasterImage img(64, 64, 1);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            img.at(x, y) = uint8_t(128 + 100 * std::sin(x * 0.3) *
                                             std::cos(y * 0.25));
    Homography fwd;
    fwd.matrix = make_h(1.02, 0.03, 2.0, -0.02, 0.98, 1.5);
    WarpResult mid = warp(img, fwd, 64, 64);
    Homography back;
    back.matrix = fwd.matrix.inverse();
    WarpResult rt = warp(mid.image, back, 64, 64);
    int checked = 0;
    for (int y = 8; y < 56; ++y)
        for (int x = 8; x < 56; ++x) {
            if (!mid.is_valid(x, y) || !rt.is_valid(x, y)) continue;
            CHECK(std::abs(int(rt.image.at(x, y)) - int(img.at(x, y))) <= 4);
            ++checked;
        }
    CHECK(checked > 1000);
}

TEST_CASE("warp rejects singular homographies") {
    RasterImage img(8, 8, 1, 1);
    Homography h;
    h.matrix.setZero();
    CHECK_THROWS_AS(warp(img, h, 8, 8), DegenerateGeometry);
}
