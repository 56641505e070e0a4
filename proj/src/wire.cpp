#include "ppd/wire.hpp"

#include <bit>
#include <cstring>
#include <memory>
#include <string>

namespace ppd::wire {
namespace {

class Writer {
public:
    explicit Writer(std::uint8_t* out) : p_(out) {}

    template <class U>
    void put(U v) {
        if constexpr (std::is_floating_point_v<U>) {
            using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
            put(std::bit_cast<Bits>(v));
        } else {
            for (std::size_t i = 0; i < sizeof(U); ++i) *p_++ = static_cast<std::uint8_t>(v >> (8 * i));
        }
    }

private:
    std::uint8_t* p_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    template <class U>
    U get() {
        if constexpr (std::is_floating_point_v<U>) {
            using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
            return std::bit_cast<U>(get<Bits>());
        } else {
            if (pos_ + sizeof(U) > in_.size()) throw DecodeError("truncated message");
            U v = 0;
            for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(in_[pos_ + i]) << (8 * i));
            pos_ += sizeof(U);
            return v;
        }
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_frame(const FrameMsg& f) {
    if (f.rgb_payload.size() > UINT32_MAX || f.depth_payload.size() > UINT32_MAX) {
        throw InvalidInput("encode_frame: payload exceeds 4 GiB");
    }
    std::vector<std::uint8_t> out(kFrameHeaderSize + f.rgb_payload.size() + f.depth_payload.size());
    Writer w(out.data());
    w.put(kFrameMagic);
    w.put(kVersion);
    w.put(f.seq);
    w.put(f.t0_us);
    w.put(f.speed);
    w.put(f.accel);
    w.put(f.fov_h);
    w.put(f.fov_v);
    w.put(f.pitch);
    w.put(static_cast<std::uint32_t>(f.rgb_payload.size()));
    w.put(static_cast<std::uint32_t>(f.depth_payload.size()));
    std::copy(f.rgb_payload.begin(), f.rgb_payload.end(), out.begin() + kFrameHeaderSize);
    std::copy(f.depth_payload.begin(), f.depth_payload.end(),
              out.begin() + static_cast<std::ptrdiff_t>(kFrameHeaderSize + f.rgb_payload.size()));
    return out;
}

FrameMsg decode_frame(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.get<std::uint32_t>() != kFrameMagic) throw DecodeError("frame: bad magic");
    if (const auto v = r.get<std::uint16_t>(); v != kVersion) {
        throw DecodeError("frame: unsupported version " + std::to_string(v));
    }
    FrameMsg f;
    f.seq = r.get<std::uint64_t>();
    f.t0_us = r.get<std::uint64_t>();
    f.speed = r.get<float>();
    f.accel = r.get<float>();
    f.fov_h = r.get<float>();
    f.fov_v = r.get<float>();
    f.pitch = r.get<float>();
    const std::size_t rgb_len = r.get<std::uint32_t>();
    const std::size_t depth_len = r.get<std::uint32_t>();
    if (bytes.size() < kFrameHeaderSize + rgb_len + depth_len) throw DecodeError("frame: truncated payload");
    if (bytes.size() > kFrameHeaderSize + rgb_len + depth_len) throw DecodeError("frame: trailing bytes");
    const auto* p = bytes.data() + kFrameHeaderSize;
    f.rgb_payload.assign(p, p + rgb_len);
    f.depth_payload.assign(p + rgb_len, p + rgb_len + depth_len);
    return f;
}

CommandMsg CommandMsg::make(double steer, double ts_station, double p95, double p999) {
    if (!std::isfinite(ts_station) || ts_station < 0.0) throw InvalidInput("CommandMsg: negative or non-finite timestamp");
    CommandMsg c{steer, static_cast<std::uint64_t>(to_micros(ts_station)), p95, p999};
    c.validate();
    return c;
}

void CommandMsg::validate() const {
    if (!std::isfinite(steer)) throw InvalidInput("CommandMsg: non-finite steer");
    if (!(p95 >= 0.0 && p95 <= p999)) throw InvalidInput("CommandMsg: requires 0 <= p95 <= p999");
    if (!(p999 <= delay::kMaxP999)) throw InvalidInput("CommandMsg: p999 above 0.2 s");
}

std::array<std::uint8_t, kCommandSize> encode_command(const CommandMsg& c) {
    c.validate();
    std::array<std::uint8_t, kCommandSize> out{};
    Writer w(out.data());
    w.put(kCommandMagic);
    w.put(kVersion);
    w.put(std::uint16_t{0});
    w.put(c.steer);
    w.put(c.ts_us);
    w.put(c.p95);
    w.put(c.p999);
    return out;
}

CommandMsg decode_command(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != kCommandSize) {
        throw DecodeError("command: expected 40 bytes, got " + std::to_string(bytes.size()));
    }
    Reader r(bytes);
    if (r.get<std::uint32_t>() != kCommandMagic) throw DecodeError("command: bad magic");
    if (const auto v = r.get<std::uint16_t>(); v != kVersion) {
        throw DecodeError("command: unsupported version " + std::to_string(v));
    }
    r.get<std::uint16_t>();
    CommandMsg c;
    c.steer = r.get<double>();
    c.ts_us = r.get<std::uint64_t>();
    c.p95 = r.get<double>();
    c.p999 = r.get<double>();
    try {
        c.validate();
    } catch (const InvalidInput& e) {
        throw DecodeError(e.what());
    }
    return c;
}

DelaySource constant_delay(double seconds) {
    if (!std::isfinite(seconds) || seconds < 0.0) throw InvalidInput("constant_delay: delay must be >= 0");
    return [seconds] { return seconds; };
}

DelaySource gev_delay(const delay::GevParams& p, std::uint64_t seed) {
    if (!(p.sigma > 0.0)) throw InvalidInput("gev_delay: sigma must be > 0");
    auto sampler = std::make_shared<delay::GevSampler>(p, seed);
    return [sampler] { return (*sampler)(); };
}

DelaySource trace_delay(std::vector<double> delays) {
    if (delays.empty()) throw InvalidInput("trace_delay: empty trace");
    for (double d : delays) {
        if (!std::isfinite(d) || d < 0.0) throw InvalidInput("trace_delay: delays must be finite and >= 0");
    }
    auto state = std::make_shared<std::pair<std::vector<double>, std::size_t>>(std::move(delays), 0);
    return [state] {
        auto& [v, i] = *state;
        const double d = v[i];
        i = (i + 1) % v.size();
        return d;
    };
}

}  // namespace ppd::wire
