#pragma once

// Raster images, grayscale conversion and summed-area tables.
// Images are immutable by convention once handed to other modules.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace provfilter {

struct DimensionMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RasterImage {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 (gray) or 3 (RGB)
    std::vector<uint8_t> pixels;  // row-major, interleaved

    RasterImage() = default;
    RasterImage(int w, int h, int c, uint8_t fill = 0)
        : width(w), height(h), channels(c),
          pixels(size_t(w) * h * c, fill) {}

    uint8_t& at(int x, int y, int c = 0) {
        return pixels[(size_t(y) * width + x) * channels + c];
    }
    uint8_t at(int x, int y, int c = 0) const {
        return pixels[(size_t(y) * width + x) * channels + c];
    }

    bool empty() const { return pixels.empty(); }

    bool same_size(const RasterImage& o) const {
        return width == o.width && height == o.height;
    }
};

// ITU-R BT.601 luma weights; no-op on single-channel input.
inline RasterImage to_grayscale(const RasterImage& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3)
        throw std::invalid_argument("to_grayscale: expected 1 or 3 channels");
    RasterImage gray(img.width, img.height, 1);
    const uint8_t* src = img.pixels.data();
    uint8_t* dst = gray.pixels.data();
    size_t n = size_t(img.width) * img.height;
    for (size_t i = 0; i < n; ++i) {
        double v = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] +
                   0.114 * src[3 * i + 2];
        dst[i] = uint8_t(std::lround(v));
    }
    return gray;
}

// Summed-area table with an extra zero row/column, 64-bit accumulators.
class IntegralImage {
  public:
    IntegralImage() = default;

    explicit IntegralImage(const RasterImage& gray)
        : width_(gray.width), height_(gray.height),
          sums_(size_t(gray.width + 1) * (gray.height + 1), 0) {
        if (gray.channels != 1)
            throw std::invalid_argument("integral: single-channel input required");
        const int w = width_;
        for (int y = 0; y < height_; ++y) {
            int64_t row = 0;
            const uint8_t* src = &gray.pixels[size_t(y) * w];
            const int64_t* above = &sums_[size_t(y) * (w + 1) + 1];
            int64_t* cur = &sums_[size_t(y + 1) * (w + 1) + 1];
            for (int x = 0; x < w; ++x) {
                row += src[x];
                cur[x] = above[x] + row;
            }
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }

    // Sum over the half-open rectangle [x0,x1) x [y0,y1), clipped to bounds.
    int64_t box_sum(int x0, int y0, int x1, int y1) const {
        x0 = std::clamp(x0, 0, width_);
        x1 = std::clamp(x1, 0, width_);
        y0 = std::clamp(y0, 0, height_);
        y1 = std::clamp(y1, 0, height_);
        if (x0 >= x1 || y0 >= y1) return 0;
        const size_t stride = width_ + 1;
        return sums_[y1 * stride + x1] - sums_[y0 * stride + x1] -
               sums_[y1 * stride + x0] + sums_[y0 * stride + x0];
    }

  private:
    int width_ = 0;
    int height_ = 0;
    std::vector<int64_t> sums_;
};

inline IntegralImage integral(const RasterImage& gray) {
    return IntegralImage(gray);
}

struct Rect {
    int x = 0, y = 0, w = 0, h = 0;

    int x1() const { return x + w; }
    int y1() const { return y + h; }
    int area() const { return w * h; }

    bool contains(int px, int py) const {
        return px >= x && px < x + w && py >= y && py < y + h;
    }

    Rect clipped(int img_w, int img_h) const {
        int nx0 = std::clamp(x, 0, img_w);
        int ny0 = std::clamp(y, 0, img_h);
        int nx1 = std::clamp(x + w, 0, img_w);
        int ny1 = std::clamp(y + h, 0, img_h);
        return {nx0, ny0, std::max(0, nx1 - nx0), std::max(0, ny1 - ny0)};
    }
};

inline int64_t box_sum(const IntegralImage& ii, const Rect& r) {
    return ii.box_sum(r.x, r.y, r.x + r.w, r.y + r.h);
}

}  // namespace provfilter
