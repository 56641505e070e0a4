#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ppd/delay_model.hpp"
#include "ppd/error.hpp"

namespace ppd::wire {

/// Simulation clock tick, integer microseconds.
using Micros = std::int64_t;

inline Micros to_micros(double seconds) { return static_cast<Micros>(std::llround(seconds * 1e6)); }
inline double to_seconds(Micros us) { return static_cast<double>(us) * 1e-6; }

inline constexpr std::uint32_t kFrameMagic = 0x46445050;    // "PPDF" little-endian
inline constexpr std::uint32_t kCommandMagic = 0x4d435050;  // "PPCM"
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 50;
inline constexpr std::size_t kCommandSize = 40;

struct FrameMsg {
    std::uint64_t seq = 0;
    std::uint64_t t0_us = 0;  ///< capture time
    float speed = 0.0f;
    float accel = 0.0f;
    float fov_h = 0.0f;
    float fov_v = 0.0f;
    float pitch = 0.0f;
    std::vector<std::uint8_t> rgb_payload;
    std::vector<std::uint8_t> depth_payload;

    double t0() const { return to_seconds(static_cast<Micros>(t0_us)); }
};

/// Header fields are little-endian regardless of host order.
std::vector<std::uint8_t> encode_frame(const FrameMsg& f);
/// Throws DecodeError on bad magic/version, truncation or trailing bytes.
FrameMsg decode_frame(std::span<const std::uint8_t> bytes);

struct CommandMsg {
    double steer = 0.0;          ///< front-wheel angle, rad
    std::uint64_t ts_us = 0;     ///< station timestamp
    double p95 = 0.0;            ///< uplink delay estimates, s
    double p999 = delay::kMaxP999;

    /// Throws InvalidInput unless 0 <= p95 <= p999 <= 0.2 s and steer is finite.
    static CommandMsg make(double steer, double ts_station, double p95, double p999);
    void validate() const;
    double ts_station() const { return to_seconds(static_cast<Micros>(ts_us)); }
};

std::array<std::uint8_t, kCommandSize> encode_command(const CommandMsg& c);
/// Throws DecodeError on wrong size/magic/version or a message that fails validate().
CommandMsg decode_command(std::span<const std::uint8_t> bytes);

/// Produces one delay in seconds per message sent.
using DelaySource = std::function<double()>;

DelaySource constant_delay(double seconds);
DelaySource gev_delay(const delay::GevParams& p, std::uint64_t seed);
/// Replays `delays` in order, wrapping at the end. Throws on an empty trace.
DelaySource trace_delay(std::vector<double> delays);

template <class T>
struct Delivery {
    T msg;
    Micros sent = 0;
    Micros released = 0;
};

/// One-producer/one-consumer link with per-message delay. A message is released
/// at send + delay, pushed later if needed so delivery order equals send order.
template <class T>
class DelayedChannel {
public:
    explicit DelayedChannel(DelaySource source) : source_(std::move(source)) {
        if (!source_) throw InvalidInput("DelayedChannel: null delay source");
    }

    /// Returns the release time assigned to `msg`.
    Micros send(T msg, Micros now) {
        const double d = source_();
        if (!std::isfinite(d)) throw InvalidInput("DelayedChannel: non-finite delay sample");
        Micros release = now + to_micros(d > 0.0 ? d : 0.0);
        if (!queue_.empty() && release < last_release_) release = last_release_;
        last_release_ = release;
        queue_.push_back(Delivery<T>{std::move(msg), now, release});
        return release;
    }

    std::vector<Delivery<T>> poll(Micros now) {
        std::vector<Delivery<T>> out;
        while (!queue_.empty() && queue_.front().released <= now) {
            out.push_back(std::move(queue_.front()));
            queue_.pop_front();
        }
        return out;
    }

    std::optional<Micros> next_release() const {
        if (queue_.empty()) return std::nullopt;
        return queue_.front().released;
    }
    std::size_t in_flight() const { return queue_.size(); }
    void clear() { queue_.clear(); }

private:
    DelaySource source_;
    std::deque<Delivery<T>> queue_;
    Micros last_release_ = 0;
};

}  // namespace ppd::wire
