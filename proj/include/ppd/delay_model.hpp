#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ppd::delay {

/// Generalized extreme value parameters (shape xi, location mu, scale sigma).
/// Times are in seconds.
struct GevParams {
    double xi = 0.1;
    double mu = 0.0;
    double sigma = 0.001;

    /// Lower support bound for xi > 0, -inf otherwise.
    double lower_bound() const;
};

/// Density; zero outside the support 1 + xi (t - mu) / sigma > 0.
double gev_pdf(double t, const GevParams& p);
double gev_cdf(double t, const GevParams& p);
/// Inverse CDF. Throws InvalidInput unless 0 < prob < 1.
double gev_quantile(double prob, const GevParams& p);
/// Sum of log-densities; -inf if any sample lies outside the support.
double gev_log_likelihood(std::span<const double> samples, const GevParams& p);
double gev_mean(const GevParams& p);

/// Inverse-transform sampler. Uses its own uniform mapping so draws are
/// identical across standard library implementations.
class GevSampler {
public:
    GevSampler(GevParams params, std::uint64_t seed) : params_(params), rng_(seed) {}
    double operator()();
    const GevParams& params() const { return params_; }

private:
    GevParams params_;
    std::mt19937_64 rng_;
};

/// Uniform in (0, 1) built from the top 53 bits of the engine output.
double uniform_open01(std::mt19937_64& rng);

struct FitResult {
    GevParams params;
    GevParams initial;         ///< probability-weighted-moment starting point
    double log_likelihood = 0.0;
    double initial_log_likelihood = 0.0;
    bool degenerate = false;   ///< all samples equal, point-mass surrogate returned
    int iterations = 0;
};

inline constexpr double kMinShape = -0.5;
inline constexpr double kMaxShape = 1.0;
inline constexpr std::size_t kMinFitSamples = 20;

/// Probability-weighted-moment estimate, shape clamped into the fitting range.
GevParams pwm_estimate(std::span<const double> samples);

/// Maximum-likelihood fit via Nelder-Mead simplex started from the PWM
/// estimate. Shape is restricted to (kMinShape, kMaxShape).
/// Throws InvalidInput with fewer than kMinFitSamples samples.
FitResult fit_gev(std::span<const double> samples);

struct DelaySample {
    double timestamp = 0.0;
    double delay = 0.0;
};

/// Ring buffer of the most recent uplink delays.
class DelayWindow {
public:
    explicit DelayWindow(std::size_t capacity = 50);

    /// Throws InvalidInput if `timestamp` precedes the newest sample.
    void push(double timestamp, double delay);
    std::size_t size() const { return samples_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return samples_.empty(); }
    void clear() { samples_.clear(); }
    /// Copy of the delays, oldest first.
    std::vector<double> snapshot() const;
    const std::deque<DelaySample>& samples() const { return samples_; }

private:
    std::size_t capacity_;
    std::deque<DelaySample> samples_;
};

inline constexpr double kMaxP999 = 0.200;

struct PercentileEstimate {
    double p95 = 0.0;
    double p999 = kMaxP999;
    double fitted_at = -1.0;
    bool valid = false;
    bool degenerate_fit = false;
    GevParams params{};
};

/// Fits the window and returns p95/p99.9; p99.9 is capped at kMaxP999 and
/// p95 never exceeds the reported p99.9. With fewer than kMinFitSamples
/// samples the previous estimate is returned unchanged. A window of identical
/// delays reports that delay for both percentiles.
PercentileEstimate refresh_percentiles(const DelayWindow& w, double now, const PercentileEstimate& previous);

/// Hold-and-apply: the vehicle actuates a command at station timestamp + p95.
double schedule_actuation(double cmd_ts, const PercentileEstimate& est);

enum class WatchdogState { kOk, kEmergencyStop };

/// Emergency stop iff now - last_cmd_ts > min(p999, 200 ms).
WatchdogState watchdog_check(double last_cmd_ts, double now, const PercentileEstimate& est);
double watchdog_threshold(const PercentileEstimate& est);

/// Hold-and-apply replayed over a command stream: each sample is one command
/// sent at `timestamp` that takes `delay` to arrive. The station refits every
/// `refit_period` seconds on the latest `window` delays; a command is on time
/// when its delay does not exceed the p95 in force when it was sent.
struct HoldReplay {
    std::size_t commands = 0;
    std::size_t evaluated = 0;  ///< commands sent while an estimate was valid
    std::size_t on_time = 0;
    double on_time_rate = 0.0;
    double p95_mean = 0.0;
    double p95_jitter = 0.0;  ///< standard deviation of the refitted p95 values
    std::vector<PercentileEstimate> estimates;
};
HoldReplay replay_hold_and_apply(std::span<const DelaySample> stream, std::size_t window = 50,
                                 double refit_period = 1.0);

/// `timestamp_s,delay_s` rows; a header row is skipped if present.
std::vector<DelaySample> read_trace_csv(const std::string& path);
void write_trace_csv(const std::string& path, std::span<const DelaySample> rows);

}  // namespace ppd::delay
