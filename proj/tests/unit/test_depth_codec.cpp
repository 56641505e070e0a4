#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ppd/depth_codec.hpp"
#include "ppd/error.hpp"

using namespace ppd::codec;

namespace {
const CodecParams kParams{};
}

TEST(DepthCodec, EndpointsArePinned) {
    EXPECT_EQ(encode_depth(1.0, kParams), 0);
    EXPECT_EQ(encode_depth(20.0, kParams), 255);
    EXPECT_NEAR(code_value(1.0, kParams), 0.0, 0.01);
    EXPECT_NEAR(code_value(20.0, kParams), 255.0, 0.01);
    EXPECT_NO_THROW(kParams.validate());
}

TEST(DepthCodec, SaturatesAndWraps) {
    EXPECT_EQ(encode_depth(50.0, kParams), 255);
    CodecParams wrap = kParams;
    wrap.overflow = OverflowMode::kWrap;
    const double y = std::round(code_value(50.0, wrap));
    EXPECT_EQ(encode_depth(50.0, wrap), static_cast<int>(static_cast<long long>(y) & 0xFF));
    EXPECT_LT(encode_depth(50.0, wrap), 255);
}

TEST(DepthCodec, BelowRangeIsFlagged) {
    const auto r = encode_depth_checked(0.5, kParams);
    EXPECT_EQ(r.code, 0);
    EXPECT_TRUE(r.below_range);
    EXPECT_FALSE(encode_depth_checked(1.0, kParams).below_range);
}

TEST(DepthCodec, RejectsNonPositiveOrNonFinite) {
    EXPECT_THROW(encode_depth(0.0, kParams), ppd::InvalidInput);
    EXPECT_THROW(encode_depth(-1.0, kParams), ppd::InvalidInput);
    EXPECT_THROW(encode_depth(NAN, kParams), ppd::InvalidInput);
    EXPECT_THROW(encode_depth(INFINITY, kParams), ppd::InvalidInput);
}

TEST(DepthCodec, DecodeEndpoints) {
    EXPECT_NEAR(decode_depth(0, kParams), 1.0, 1e-3);
    EXPECT_NEAR(decode_depth(255, kParams), 20.0, 5e-3);
    for (int c = 1; c < 256; ++c) {
        EXPECT_GT(decode_depth(static_cast<std::uint8_t>(c), kParams),
                  decode_depth(static_cast<std::uint8_t>(c - 1), kParams));
    }
}

TEST(DepthCodec, RoundTripSweepWithinHalfStep) {
    // Brute-force sweep: the nearest code is at most half a code unit away,
    // measured with the local step at the decoded value's side of the curve.
    int prev = 0;
    for (int i = 0; i <= 10000; ++i) {
        const double d = 1.0 + 19.0 * i / 10000.0;
        const auto code = encode_depth(d, kParams);
        ASSERT_GE(code, prev) << "monotonicity broken at " << d;
        prev = code;
        const double back = decode_depth(code, kParams);
        const double step = quantization_step(std::clamp(std::max(d, back), 1.0, 20.0), kParams);
        ASSERT_LE(std::abs(back - d), 0.5 * step + 1e-9) << d;
        ASSERT_LE(std::abs(back - d), quantization_step(d, kParams)) << d;
    }
}

TEST(DepthCodec, QuantizationStep) {
    EXPECT_NEAR(quantization_step(1.0, kParams), 0.010, 1e-12);
    EXPECT_NEAR(quantization_step(20.0, kParams), 0.0126194 * 19 + 0.01, 1e-12);
    EXPECT_THROW(quantization_step(0.9, kParams), ppd::InvalidInput);
    EXPECT_THROW(quantization_step(20.1, kParams), ppd::InvalidInput);
    // The step is the derivative of the inverse: compare with a central difference.
    for (double d = 1.5; d < 20.0; d += 1.5) {
        const double y = code_value(d, kParams);
        const double h = 1e-4;
        const auto inv = [&](double code) { return 1.0 + (std::exp(kParams.a * (code - kParams.c)) - 0.01) / kParams.a; };
        const double deriv = (inv(y + h) - inv(y - h)) / (2 * h);
        EXPECT_NEAR(deriv, quantization_step(d, kParams), 1e-7);
    }
}

TEST(DepthCodec, MapsEncodeElementwise) {
    ppd::DepthMap dm(4, 3, 1.0, 0.8, 1.0f);
    auto e = encode_map(dm, kParams);
    for (auto c : e.codes) EXPECT_EQ(c, 0);

    dm.at(0, 0) = ppd::DepthMap::kInvalid;
    dm.at(1, 2) = 7.25f;
    dm.at(2, 3) = 100.0f;
    e = encode_map(dm, kParams);
    EXPECT_EQ(e.codes[0], 255);
    EXPECT_EQ(e.codes[1 * 4 + 2], encode_depth(7.25, kParams));
    EXPECT_EQ(e.codes[2 * 4 + 3], 255);

    const auto d = decode_map(e, kParams, 1.0, 0.8);
    EXPECT_EQ(d.width, 4);
    EXPECT_DOUBLE_EQ(d.fov_h, 1.0);
    EXPECT_NEAR(d.at(1, 2), 7.25, quantization_step(7.25, kParams));

    ppd::DepthMap empty;
    EXPECT_THROW(encode_map(empty, kParams), ppd::InvalidInput);
}

TEST(DepthCodec, SinglePixelAndAll255) {
    EncodedDepthMap one{1, 1, {0}};
    EXPECT_NEAR(decode_map(one, kParams).data[0], 1.0, 1e-3);
    EncodedDepthMap far{3, 2, std::vector<std::uint8_t>(6, 255)};
    for (float v : decode_map(far, kParams).data) EXPECT_NEAR(v, 20.0, 5e-3);
}

TEST(Bandwidth, UncompressedRows) {
    const auto rgb = bandwidth_estimate({1, 376, 672, 3, 30.0});
    const auto depth = bandwidth_estimate({4, 376, 672, 1, 30.0});
    EXPECT_DOUBLE_EQ(rgb.bytes_per_s, 376.0 * 672 * 3 * 30);
    EXPECT_NEAR(rgb.mb_per_s, 22.74, 0.01);
    EXPECT_NEAR(rgb.mib_per_s, 21.69, 0.01);
    EXPECT_NEAR(depth.mib_per_s, 28.92, 0.01);
    EXPECT_NEAR(rgb.mib_per_s + depth.mib_per_s, 50.61, 0.01);
    EXPECT_EQ(bandwidth_estimate({1, 376, 672, 3, 0.0}).mb_per_s, 0.0);
}

TEST(DepthCodec, LoadParamsFromFile) {
    const std::string path = ::testing::TempDir() + "codec.cfg";
    {
        std::ofstream f(path);
        f << "overflow_mode = wrap\n";
    }
    EXPECT_EQ(load_params(path).overflow, OverflowMode::kWrap);
    {
        std::ofstream f(path);
        f << "a = 0.5\n";
    }
    EXPECT_THROW(load_params(path), ppd::InvalidInput);
    std::remove(path.c_str());
}
