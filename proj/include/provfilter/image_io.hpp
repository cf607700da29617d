#pragma once

// Image decode/encode (PNG, JPEG, binary PPM) via OpenCV imgcodecs.
// 16-bit sources are rescaled to [0,255]; alpha is dropped on load.

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <filesystem>
#include <string>

#include "provfilter/image.hpp"
#include "provfilter/serial.hpp"

namespace provfilter {

inline RasterImage from_cv(const cv::Mat& m) {
    cv::Mat src = m;
    if (src.depth() == CV_16U) {
        src.convertTo(src, CV_8U, 255.0 / 65535.0);
    } else if (src.depth() != CV_8U) {
        src.convertTo(src, CV_8U);
    }
    if (src.channels() == 4) cv::cvtColor(src, src, cv::COLOR_BGRA2BGR);

    RasterImage out(src.cols, src.rows, src.channels() == 1 ? 1 : 3);
    for (int y = 0; y < src.rows; ++y) {
        const uint8_t* row = src.ptr<uint8_t>(y);
        for (int x = 0; x < src.cols; ++x) {
            if (out.channels == 1) {
                out.at(x, y) = row[x];
            } else {
                // OpenCV stores BGR
                out.at(x, y, 0) = row[3 * x + 2];
                out.at(x, y, 1) = row[3 * x + 1];
                out.at(x, y, 2) = row[3 * x + 0];
            }
        }
    }
    return out;
}

inline cv::Mat to_cv(const RasterImage& img) {
    cv::Mat m(img.height, img.width, img.channels == 1 ? CV_8UC1 : CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        uint8_t* row = m.ptr<uint8_t>(y);
        for (int x = 0; x < img.width; ++x) {
            if (img.channels == 1) {
                row[x] = img.at(x, y);
            } else {
                row[3 * x + 2] = img.at(x, y, 0);
                row[3 * x + 1] = img.at(x, y, 1);
                row[3 * x + 0] = img.at(x, y, 2);
            }
        }
    }
    return m;
}

inline RasterImage load_image(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw IoError("no such file: " + path);
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (m.empty()) throw FormatError("undecodable image: " + path);
    return from_cv(m);
}

inline void save_image(const RasterImage& img, const std::string& path) {
    if (!cv::imwrite(path, to_cv(img)))
        throw IoError("cannot write image: " + path);
}

inline void save_jpeg(const RasterImage& img, const std::string& path,
                      int quality) {
    if (!cv::imwrite(path, to_cv(img),
                     {cv::IMWRITE_JPEG_QUALITY, quality}))
        throw IoError("cannot write jpeg: " + path);
}

// In-memory JPEG round trip, used by the corpus generator to simulate
// re-compression without touching disk.
inline RasterImage jpeg_roundtrip(const RasterImage& img, int quality) {
    std::vector<uchar> buf;
    cv::imencode(".jpg", to_cv(img), buf, {cv::IMWRITE_JPEG_QUALITY, quality});
    cv::Mat m = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
    return from_cv(m);
}

}  // namespace provfilter
