#include "ppd/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <filesystem>

#include "ppd/error.hpp"

namespace ppd::io {
namespace {

std::string ext_for(Container c) { return c == Container::kJpeg ? ".jpg" : ".png"; }

std::vector<int> params_for(Container c, int quality) {
    if (c == Container::kJpeg) return {cv::IMWRITE_JPEG_QUALITY, std::clamp(quality, 1, 100)};
    return {cv::IMWRITE_PNG_COMPRESSION, 3};
}

cv::Mat to_bgr(const RgbImage& img) {
    cv::Mat m(img.height, img.width, CV_8UC3);
    for (int r = 0; r < img.height; ++r) {
        auto* row = m.ptr<std::uint8_t>(r);
        for (int c = 0; c < img.width; ++c) {
            const auto* p = img.at(r, c);
            row[c * 3] = p[2];
            row[c * 3 + 1] = p[1];
            row[c * 3 + 2] = p[0];
        }
    }
    return m;
}

RgbImage from_bgr(const cv::Mat& m) {
    RgbImage img(m.cols, m.rows);
    for (int r = 0; r < m.rows; ++r) {
        const auto* row = m.ptr<std::uint8_t>(r);
        for (int c = 0; c < m.cols; ++c) {
            auto* p = img.at(r, c);
            p[0] = row[c * 3 + 2];
            p[1] = row[c * 3 + 1];
            p[2] = row[c * 3];
        }
    }
    return img;
}

cv::Mat decode(std::span<const std::uint8_t> bytes, int flags) {
    if (bytes.empty()) throw DecodeError("empty image payload");
    const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
    cv::Mat m;
    try {
        m = cv::imdecode(buf, flags);
    } catch (const cv::Exception& e) {
        throw DecodeError(std::string("image decode failed: ") + e.what());
    }
    if (m.empty()) throw DecodeError("image payload is not a readable PNG/JPEG");
    return m;
}

void require_file(const std::string& path) {
    if (!std::filesystem::is_regular_file(path)) throw InvalidInput("no such file: " + path);
}

Container container_for(const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") return Container::kPng;
    if (ext == ".jpg" || ext == ".jpeg") return Container::kJpeg;
    throw InvalidInput("unsupported image extension '" + ext + "' (use .png or .jpg)");
}

void write_bytes(const std::string& path, const cv::Mat& m, const std::vector<int>& params) {
    bool ok = false;
    try {
        ok = cv::imwrite(path, m, params);
    } catch (const cv::Exception& e) {
        throw InvalidInput("cannot write " + path + ": " + e.what());
    }
    if (!ok) throw InvalidInput("cannot write " + path);
}

}  // namespace

std::vector<std::uint8_t> encode_rgb(const RgbImage& img, Container c, int quality) {
    if (img.width <= 0 || img.height <= 0) throw InvalidInput("encode_rgb: empty image");
    std::vector<std::uint8_t> out;
    cv::imencode(ext_for(c), to_bgr(img), out, params_for(c, quality));
    return out;
}

std::vector<std::uint8_t> encode_codes(const codec::EncodedDepthMap& e, Container c, int quality) {
    if (e.width <= 0 || e.height <= 0) throw InvalidInput("encode_codes: empty map");
    const cv::Mat m(e.height, e.width, CV_8UC1, const_cast<std::uint8_t*>(e.codes.data()));
    std::vector<std::uint8_t> out;
    cv::imencode(ext_for(c), m, out, params_for(c, quality));
    return out;
}

RgbImage decode_rgb(std::span<const std::uint8_t> bytes) {
    const cv::Mat m = decode(bytes, cv::IMREAD_COLOR);
    return from_bgr(m);
}

codec::EncodedDepthMap decode_codes(std::span<const std::uint8_t> bytes) {
    const cv::Mat m = decode(bytes, cv::IMREAD_GRAYSCALE);
    codec::EncodedDepthMap e{m.cols, m.rows, std::vector<std::uint8_t>(static_cast<std::size_t>(m.cols) * m.rows)};
    for (int r = 0; r < m.rows; ++r) std::copy_n(m.ptr<std::uint8_t>(r), m.cols, &e.codes[static_cast<std::size_t>(r) * m.cols]);
    return e;
}

RgbImage read_rgb(const std::string& path) {
    require_file(path);
    const cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw DecodeError("cannot decode image: " + path);
    return from_bgr(m);
}

void write_rgb(const std::string& path, const RgbImage& img, int quality) {
    const auto c = container_for(path);
    write_bytes(path, to_bgr(img), params_for(c, quality));
}

codec::EncodedDepthMap read_codes(const std::string& path) {
    require_file(path);
    const cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw DecodeError("cannot decode depth image: " + path);
    if (raw.channels() != 1 || raw.depth() != CV_8U) {
        throw DecodeError("depth image must be 8-bit single channel: " + path);
    }
    codec::EncodedDepthMap e{raw.cols, raw.rows, std::vector<std::uint8_t>(static_cast<std::size_t>(raw.cols) * raw.rows)};
    for (int r = 0; r < raw.rows; ++r) std::copy_n(raw.ptr<std::uint8_t>(r), raw.cols, &e.codes[static_cast<std::size_t>(r) * raw.cols]);
    return e;
}

void write_codes(const std::string& path, const codec::EncodedDepthMap& e) {
    const auto c = container_for(path);
    const cv::Mat m(e.height, e.width, CV_8UC1, const_cast<std::uint8_t*>(e.codes.data()));
    write_bytes(path, m, params_for(c, 95));
}

void write_mask(const std::string& path, int width, int height, std::span<const std::uint8_t> mask) {
    if (mask.size() != static_cast<std::size_t>(width) * height) throw InvalidInput("mask size mismatch");
    cv::Mat m(height, width, CV_8UC1);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) m.at<std::uint8_t>(r, c) = mask[static_cast<std::size_t>(r) * width + c] ? 255 : 0;
    write_bytes(path, m, params_for(Container::kPng, 0));
}

}  // namespace ppd::io
