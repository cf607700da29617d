#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"
#include "provfilter/eval.hpp"
#include "provfilter/mask.hpp"

using namespace provfilter;

namespace {

double rect_iou(const Rect& a, const Rect& b) {
    int x0 = std::max(a.x, b.x), y0 = std::max(a.y, b.y);
    int x1 = std::min(a.x1(), b.x1()), y1 = std::min(a.y1(), b.y1());
    int inter = std::max(0, x1 - x0) * std::max(0, y1 - y0);
    int uni = a.area() + b.area() - inter;
    return uni > 0 ? double(inter) / uni : 0.0;
}

}  // namespace

TEST_CASE("quantize_colors at 256 levels is the identity") {
    RasterImage img = testutil::random_image(16, 16, 3, 1);
    CHECK(quantize_colors(img, 256).pixels == img.pixels);
}

TEST_CASE("quantize_colors maps values to bin centers") {
    RasterImage img(1, 1, 1);
    img.at(0, 0) = 0;
    CHECK(quantize_colors(img, 32).at(0, 0) == 4);  // bin width 8, center 4
    img.at(0, 0) = 255;
    CHECK(quantize_colors(img, 32).at(0, 0) == 252);
    img.at(0, 0) = 100;
    CHECK(quantize_colors(img, 2).at(0, 0) == 64);  // below 128 -> low bin
    img.at(0, 0) = 200;
    CHECK(quantize_colors(img, 2).at(0, 0) == 192);
    CHECK_THROWS_AS(quantize_colors(img, 1), std::invalid_argument);
}

TEST_CASE("identical images produce an empty mask") {
    RasterImage img = synth_base_image(96, 96, 2);
    ContextMask mask = compute_mask(img, img, {});
    CHECK(mask.coverage == 0.0);
    CHECK(mask.components.empty());
}

TEST_CASE("a pasted square is recovered with IoU above 0.5") {
    RasterImage host = synth_base_image(128, 128, 3);
    RasterImage query = host;
    Rect splice{40, 30, 50, 50};
    for (int y = 0; y < splice.h; ++y)
        for (int x = 0; x < splice.w; ++x)
            for (int c = 0; c < 3; ++c)
                query.at(splice.x + x, splice.y + y, c) =
                    uint8_t((x * 5 + y * 3 + c * 90) & 0xff);
    ContextMask mask = compute_mask(query, host, {});
    REQUIRE(!mask.components.empty());
    CHECK(rect_iou(mask.components[0].bbox, splice) > 0.5);
    CHECK(mask.coverage > 0.05);
    CHECK(mask.coverage < 0.5);
}

TEST_CASE("isolated speckles are removed by the opening") {
    RasterImage host(64, 64, 1, 100);
    RasterImage query = host;
    std::mt19937 rng(4);
    for (int i = 0; i < 30; ++i)  // single-pixel outliers
        query.at(int(rng() % 64), int(rng() % 64)) = 255;
    ContextMask mask = compute_mask(query, host, {});
    CHECK(mask.coverage == 0.0);
}

TEST_CASE("invalid warp pixels count as background") {
    RasterImage host(64, 64, 1, 40);
    RasterImage query(64, 64, 1, 200);  // everything differs
    std::vector<uint8_t> validity(64 * 64, 0);
    for (int y = 0; y < 64; ++y)  // only the left half was covered
        for (int x = 0; x < 32; ++x) validity[size_t(y) * 64 + x] = 1;
    ContextMask mask = compute_mask(query, host, validity);
    for (int y = 0; y < 64; ++y)
        for (int x = 34; x < 64; ++x) CHECK(!mask.at(x, y));
    CHECK(mask.coverage > 0.3);
}

TEST_CASE("components come back area-descending and above min_area") {
    RasterImage host(128, 128, 1, 60);
    RasterImage query = host;
    auto fill = [&](Rect r) {
        for (int y = r.y; y < r.y1(); ++y)
            for (int x = r.x; x < r.x1(); ++x) query.at(x, y) = 220;
    };
    fill({10, 10, 40, 40});   // large
    fill({80, 80, 20, 20});   // medium
    fill({100, 10, 6, 6});    // below min_area after morphology
    ContextMask mask = compute_mask(query, host, {});
    REQUIRE(mask.components.size() == 2);
    CHECK(mask.components[0].area > mask.components[1].area);
    for (const auto& c : mask.components) CHECK(c.area >= 64);
}

TEST_CASE("classify_mask verdicts") {
    ContextMask mask;
    mask.width = mask.height = 10;
    mask.bits.assign(100, 0);

    SECTION("failed registration is unrelated") {
        CHECK(classify_mask(mask, 0.1, false) == MaskVerdict::unrelated);
    }
    SECTION("poor match quality is unrelated") {
        mask.coverage = 0.4;
        CHECK(classify_mask(mask, 0.95, true) == MaskVerdict::unrelated);
    }
    SECTION("near-full coverage is a near duplicate") {
        mask.coverage = 0.95;
        CHECK(classify_mask(mask, 0.1, true) == MaskVerdict::near_duplicate);
    }
    SECTION("near-empty coverage is a near duplicate") {
        mask.coverage = 0.001;
        CHECK(classify_mask(mask, 0.1, true) == MaskVerdict::near_duplicate);
    }
    SECTION("moderate coverage with a good match is a composite") {
        mask.coverage = 0.2;
        CHECK(classify_mask(mask, 0.1, true) == MaskVerdict::composite);
    }
}

TEST_CASE("mask_to_image uses 0/255") {
    ContextMask mask;
    mask.width = 2;
    mask.height = 1;
    mask.bits = {1, 0};
    RasterImage img = mask_to_image(mask);
    CHECK(img.at(0, 0) == 255);
    CHECK(img.at(1, 0) == 0);
}
