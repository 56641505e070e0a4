#include <gtest/gtest.h>

#include <random>

#include "ppd/image_io.hpp"
#include "ppd/wire.hpp"

using namespace ppd;
using namespace ppd::wire;

namespace {

FrameMsg golden_frame() {
    FrameMsg f;
    f.seq = 42;
    f.t0_us = 1'234'567;
    f.speed = 2.7777777f;
    f.accel = -0.5f;
    f.fov_h = 1.5184364f;
    f.fov_v = 0.9272952f;
    f.pitch = 0.0872665f;
    f.rgb_payload = {1, 2, 3};
    f.depth_payload = {9, 8};
    return f;
}

std::string hex(std::span<const std::uint8_t> b) {
    static const char* d = "0123456789abcdef";
    std::string s;
    for (auto v : b) {
        s += d[v >> 4];
        s += d[v & 15];
    }
    return s;
}

}  // namespace

TEST(FrameCodec, GoldenHeaderBytes) {
    const auto bytes = encode_frame(golden_frame());
    ASSERT_EQ(bytes.size(), kFrameHeaderSize + 5);
    EXPECT_EQ(hex(bytes), "5050444601002a0000000000000087d61200000000001cc73140000000bf205cc23f38636d3fc7b8b23d03000000020000000102030908");
}

TEST(FrameCodec, RoundTripRandomHeaders) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> u(-10.0f, 10.0f);
    for (int i = 0; i < 500; ++i) {
        FrameMsg f;
        f.seq = rng();
        f.t0_us = rng() >> 8;
        f.speed = u(rng);
        f.accel = u(rng);
        f.fov_h = u(rng);
        f.fov_v = u(rng);
        f.pitch = u(rng);
        f.rgb_payload.resize(rng() % 64);
        f.depth_payload.resize(rng() % 64);
        for (auto& b : f.rgb_payload) b = static_cast<std::uint8_t>(rng());
        for (auto& b : f.depth_payload) b = static_cast<std::uint8_t>(rng());
        const auto g = decode_frame(encode_frame(f));
        EXPECT_EQ(g.seq, f.seq);
        EXPECT_EQ(g.t0_us, f.t0_us);
        EXPECT_EQ(g.speed, f.speed);
        EXPECT_EQ(g.accel, f.accel);
        EXPECT_EQ(g.fov_h, f.fov_h);
        EXPECT_EQ(g.fov_v, f.fov_v);
        EXPECT_EQ(g.pitch, f.pitch);
        EXPECT_EQ(g.rgb_payload, f.rgb_payload);
        EXPECT_EQ(g.depth_payload, f.depth_payload);
    }
}

TEST(FrameCodec, RejectsTruncationMagicAndTrailing) {
    auto bytes = encode_frame(golden_frame());
    for (std::size_t n = 0; n < bytes.size(); ++n) {
        EXPECT_THROW(decode_frame(std::span(bytes.data(), n)), DecodeError) << n;
    }
    auto longer = bytes;
    longer.push_back(0);
    EXPECT_THROW(decode_frame(longer), DecodeError);
    bytes[0] ^= 1;
    EXPECT_THROW(decode_frame(bytes), DecodeError);
}

TEST(CommandCodec, GoldenBytes) {
    const auto c = CommandMsg::make(0.1, 12.5, 0.085, 0.15);
    EXPECT_EQ(hex(encode_command(c)), "5050434d010000009a9999999999b93f20bcbe0000000000c3f5285c8fc2b53f333333333333c33f");
}

TEST(CommandCodec, RoundTrip) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> steer(-0.6, 0.6), p(0.0, 0.2);
    for (int i = 0; i < 500; ++i) {
        double a = p(rng), b = p(rng);
        if (a > b) std::swap(a, b);
        CommandMsg c{steer(rng), rng() >> 4, a, b};
        const auto bytes = encode_command(c);
        static_assert(std::tuple_size_v<decltype(bytes)> == 40);
        const auto d = decode_command(bytes);
        EXPECT_EQ(d.steer, c.steer);
        EXPECT_EQ(d.ts_us, c.ts_us);
        EXPECT_EQ(d.p95, c.p95);
        EXPECT_EQ(d.p999, c.p999);
    }
}

TEST(CommandCodec, Invariants) {
    EXPECT_THROW(CommandMsg::make(0.0, 1.0, 0.12, 0.10), InvalidInput);
    EXPECT_THROW(CommandMsg::make(0.0, 1.0, 0.10, 0.25), InvalidInput);
    EXPECT_THROW(CommandMsg::make(0.0, -1.0, 0.05, 0.10), InvalidInput);
    EXPECT_NO_THROW(CommandMsg::make(0.0, 1.0, 0.2, 0.2));

    auto bytes = encode_command(CommandMsg::make(0.0, 1.0, 0.05, 0.1));
    EXPECT_THROW(decode_command(std::span(bytes.data(), 39)), DecodeError);
    auto bad = bytes;
    bad[4] = 7;  // version
    EXPECT_THROW(decode_command(bad), DecodeError);
    // p95 field (offset 24) overwritten with p999's bytes scaled up: 0.3 s
    const auto big = CommandMsg{0.0, 1, 0.3, 0.3};
    std::array<std::uint8_t, 40> forged = bytes;
    const auto probe = std::bit_cast<std::array<std::uint8_t, 8>>(big.p999);
    std::copy(probe.begin(), probe.end(), forged.begin() + 32);
    EXPECT_THROW(decode_command(forged), DecodeError);
}

TEST(Channel, ConstantDelay) {
    DelayedChannel<int> ch(constant_delay(0.050));
    EXPECT_EQ(ch.send(1, 1'000'000), 1'050'000);
    EXPECT_TRUE(ch.poll(1'049'999).empty());
    const auto out = ch.poll(1'050'000);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].msg, 1);
    EXPECT_EQ(out[0].sent, 1'000'000);
    EXPECT_EQ(ch.in_flight(), 0u);
}

TEST(Channel, FifoDespiteShorterLaterDelay) {
    DelayedChannel<int> ch(trace_delay({0.080, 0.010}));
    const auto r1 = ch.send(1, 0);
    const auto r2 = ch.send(2, 1000);
    EXPECT_EQ(r1, 80'000);
    EXPECT_EQ(r2, 80'000);
    const auto out = ch.poll(80'000);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].msg, 1);
    EXPECT_EQ(out[1].msg, 2);
}

TEST(Channel, TraceReplayReproducesDelays) {
    const std::vector<double> trace{0.101, 0.154, 0.087, 0.299, 0.120, 0.113};
    DelayedChannel<int> ch(trace_delay(trace));
    // Send 1 s apart so the FIFO rule never engages.
    for (int i = 0; i < 12; ++i) {
        const Micros now = Micros{i} * 1'000'000;
        const Micros rel = ch.send(i, now);
        EXPECT_EQ(rel - now, to_micros(trace[static_cast<std::size_t>(i) % trace.size()]));
    }
}

TEST(Channel, NoLossNoDuplicationUnderGev) {
    DelayedChannel<int> ch(gev_delay({0.1, 0.15, 0.02}, 3));
    int next_expected = 0;
    Micros last_release = 0;
    for (Micros now = 0; now < 2'000'000; now += 1000) {
        if (now % 20'000 == 0) ch.send(static_cast<int>(now / 20'000), now);
        for (const auto& d : ch.poll(now)) {
            EXPECT_EQ(d.msg, next_expected++);
            EXPECT_GE(d.released, d.sent);
            EXPECT_GE(d.released, last_release);
            EXPECT_LE(d.released, now);
            last_release = d.released;
        }
    }
    for (const auto& d : ch.poll(1'000'000'000)) EXPECT_EQ(d.msg, next_expected++);
    EXPECT_EQ(next_expected, 100);
}

TEST(Channel, Validation) {
    EXPECT_THROW(constant_delay(-0.1), InvalidInput);
    EXPECT_THROW(trace_delay({}), InvalidInput);
    EXPECT_THROW(trace_delay({0.1, -0.2}), InvalidInput);
    EXPECT_THROW(DelayedChannel<int>(DelaySource{}), InvalidInput);
}

TEST(ImageContainers, PngIsLossless) {
    RgbImage img(17, 9);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>(i * 37);
    EXPECT_EQ(io::decode_rgb(io::encode_rgb(img, io::Container::kPng)), img);

    codec::EncodedDepthMap e{5, 4, std::vector<std::uint8_t>(20)};
    for (std::size_t i = 0; i < 20; ++i) e.codes[i] = static_cast<std::uint8_t>(i * 13);
    const auto back = io::decode_codes(io::encode_codes(e, io::Container::kPng));
    EXPECT_EQ(back.codes, e.codes);
    EXPECT_EQ(back.width, 5);
}

TEST(ImageContainers, JpegIsCloseAndMalformedThrows) {
    RgbImage img(64, 32);
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 64; ++c) {
            auto* p = img.at(r, c);
            p[0] = static_cast<std::uint8_t>(c * 4);
            p[1] = static_cast<std::uint8_t>(r * 8);
            p[2] = 128;
        }
    const auto back = io::decode_rgb(io::encode_rgb(img, io::Container::kJpeg, 80));
    ASSERT_EQ(back.width, 64);
    double err = 0;
    for (std::size_t i = 0; i < img.data.size(); ++i) err += std::abs(int(img.data[i]) - int(back.data[i]));
    EXPECT_LT(err / img.data.size(), 4.0);

    const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5};
    EXPECT_THROW(io::decode_rgb(junk), DecodeError);
    EXPECT_THROW(io::decode_rgb(std::span<const std::uint8_t>{}), DecodeError);
    EXPECT_THROW(io::read_rgb("/nonexistent/x.png"), InvalidInput);
}
