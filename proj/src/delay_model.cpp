#include "ppd/delay_model.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "ppd/config.hpp"
#include "ppd/error.hpp"

namespace ppd::delay {
namespace {

constexpr double kGumbelEps = 1e-12;

bool is_gumbel(double xi) { return std::abs(xi) < kGumbelEps; }

// Reduced variate z = 1 + xi (t - mu) / sigma.
double reduced(double t, const GevParams& p) { return 1.0 + p.xi * (t - p.mu) / p.sigma; }

GevParams pwm_params_for_shape(double k, double b0, double l2) {
    // Hosking's parameterisation uses k = -xi.
    GevParams p;
    if (std::abs(k) < 1e-9) {
        p.xi = 0.0;
        p.sigma = l2 / std::numbers::ln2;
        p.mu = b0 - std::numbers::egamma * p.sigma;
        return p;
    }
    const double g = std::tgamma(1.0 + k);
    p.xi = -k;
    p.sigma = l2 * k / (g * (1.0 - std::pow(2.0, -k)));
    p.mu = b0 + p.sigma * (g - 1.0) / k;
    return p;
}

// Simplex coordinates: logit-mapped shape, location, log scale.
double shape_from_free(double u) { return kMinShape + (kMaxShape - kMinShape) / (1.0 + std::exp(-u)); }
double free_from_shape(double xi) {
    const double s = (xi - kMinShape) / (kMaxShape - kMinShape);
    return std::log(s / (1.0 - s));
}

struct Objective {
    std::span<const double> samples;
};

double negative_mean_ll(const gsl_vector* v, void* data) {
    const auto* obj = static_cast<const Objective*>(data);
    const GevParams p{shape_from_free(gsl_vector_get(v, 0)), gsl_vector_get(v, 1), std::exp(gsl_vector_get(v, 2))};
    const double ll = gev_log_likelihood(obj->samples, p);
    if (!std::isfinite(ll)) return 1e100;
    return -ll / static_cast<double>(obj->samples.size());
}

}  // namespace

double GevParams::lower_bound() const {
    return xi > 0.0 ? mu - sigma / xi : -std::numeric_limits<double>::infinity();
}

double gev_pdf(double t, const GevParams& p) {
    if (is_gumbel(p.xi)) {
        const double s = (t - p.mu) / p.sigma;
        return std::exp(-s - std::exp(-s)) / p.sigma;
    }
    const double z = reduced(t, p);
    if (z <= 0.0) return 0.0;
    const double zp = std::pow(z, -1.0 / p.xi);
    return zp / z * std::exp(-zp) / p.sigma;
}

double gev_cdf(double t, const GevParams& p) {
    if (is_gumbel(p.xi)) return std::exp(-std::exp(-(t - p.mu) / p.sigma));
    const double z = reduced(t, p);
    if (z <= 0.0) return p.xi > 0.0 ? 0.0 : 1.0;
    return std::exp(-std::pow(z, -1.0 / p.xi));
}

double gev_quantile(double prob, const GevParams& p) {
    if (!(prob > 0.0 && prob < 1.0)) throw InvalidInput("gev_quantile: probability must lie in (0, 1)");
    const double y = -std::log(prob);
    if (is_gumbel(p.xi)) return p.mu - p.sigma * std::log(y);
    return p.mu + p.sigma / p.xi * (std::pow(y, -p.xi) - 1.0);
}

double gev_log_likelihood(std::span<const double> samples, const GevParams& p) {
    if (!(p.sigma > 0.0)) return -std::numeric_limits<double>::infinity();
    const double log_sigma = std::log(p.sigma);
    double ll = 0.0;
    if (is_gumbel(p.xi)) {
        for (const double t : samples) {
            const double s = (t - p.mu) / p.sigma;
            ll += -log_sigma - s - std::exp(-s);
        }
        return ll;
    }
    const double inv = 1.0 / p.xi;
    for (const double t : samples) {
        const double z = reduced(t, p);
        if (z <= 0.0) return -std::numeric_limits<double>::infinity();
        const double lz = std::log(z);
        ll += -log_sigma - (1.0 + inv) * lz - std::exp(-inv * lz);
    }
    return ll;
}

double gev_mean(const GevParams& p) {
    if (p.xi >= 1.0) return std::numeric_limits<double>::infinity();
    if (is_gumbel(p.xi)) return p.mu + p.sigma * std::numbers::egamma;
    return p.mu + p.sigma * (std::tgamma(1.0 - p.xi) - 1.0) / p.xi;
}

double uniform_open01(std::mt19937_64& rng) {
    // (k + 0.5) / 2^53 never hits 0 or 1.
    const std::uint64_t k = rng() >> 11;
    return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

double GevSampler::operator()() { return gev_quantile(uniform_open01(rng_), params_); }

GevParams pwm_estimate(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 3) throw InvalidInput("pwm_estimate: need at least 3 samples");
    std::vector<double> x(samples.begin(), samples.end());
    std::sort(x.begin(), x.end());

    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    const double nd = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double j = static_cast<double>(i);
        b0 += x[i];
        b1 += j / (nd - 1.0) * x[i];
        b2 += j * (j - 1.0) / ((nd - 1.0) * (nd - 2.0)) * x[i];
    }
    b0 /= nd;
    b1 /= nd;
    b2 /= nd;

    const double l2 = 2.0 * b1 - b0;
    const double denom = 3.0 * b2 - b0;
    double k = 0.0;
    if (std::abs(denom) > 0.0) {
        const double c = l2 / denom - std::numbers::ln2 / std::log(3.0);
        k = 7.8590 * c + 2.9554 * c * c;
    }
    // Keep the starting shape strictly inside the fitting range.
    k = std::clamp(k, -(kMaxShape - 0.01), -(kMinShape + 0.01));
    GevParams p = pwm_params_for_shape(k, b0, l2);

    // PWM can put the smallest sample below the lower support bound; walk the
    // shape toward Gumbel (unbounded support) until every sample is feasible.
    for (int i = 0; i < 60 && !std::isfinite(gev_log_likelihood(x, p)); ++i) {
        k *= 0.5;
        p = pwm_params_for_shape(i == 59 ? 0.0 : k, b0, l2);
    }
    return p;
}

FitResult fit_gev(std::span<const double> samples) {
    if (samples.size() < kMinFitSamples) {
        throw InvalidInput("fit_gev: need at least " + std::to_string(kMinFitSamples) + " samples");
    }
    FitResult result;
    const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
    if (*hi - *lo <= 1e-12 * std::max(1.0, std::abs(*lo))) {
        result.params = GevParams{0.1, *lo, 0.001};
        result.initial = result.params;
        result.degenerate = true;
        result.log_likelihood = result.initial_log_likelihood = gev_log_likelihood(samples, result.params);
        return result;
    }

    result.initial = pwm_estimate(samples);
    if (is_gumbel(result.initial.xi)) result.initial.xi = 1e-6;
    result.initial_log_likelihood = gev_log_likelihood(samples, result.initial);

    static const bool handler_off = (gsl_set_error_handler_off(), true);
    (void)handler_off;

    Objective obj{samples};
    gsl_multimin_function fn{&negative_mean_ll, 3, &obj};

    gsl_vector* x = gsl_vector_alloc(3);
    gsl_vector_set(x, 0, free_from_shape(result.initial.xi));
    gsl_vector_set(x, 1, result.initial.mu);
    gsl_vector_set(x, 2, std::log(result.initial.sigma));
    gsl_vector* step = gsl_vector_alloc(3);
    gsl_vector_set(step, 0, 0.5);
    gsl_vector_set(step, 1, 0.5 * result.initial.sigma);
    gsl_vector_set(step, 2, 0.3);

    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3);
    gsl_multimin_fminimizer_set(s, &fn, x, step);
    int status = GSL_CONTINUE;
    int iter = 0;
    while (status == GSL_CONTINUE && iter < 5000) {
        ++iter;
        if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
        status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-9);
    }
    const GevParams fitted{shape_from_free(gsl_vector_get(s->x, 0)), gsl_vector_get(s->x, 1),
                           std::exp(gsl_vector_get(s->x, 2))};
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(step);
    gsl_vector_free(x);

    const double ll = gev_log_likelihood(samples, fitted);
    result.iterations = iter;
    if (std::isfinite(ll) && ll >= result.initial_log_likelihood) {
        result.params = fitted;
        result.log_likelihood = ll;
    } else {
        result.params = result.initial;
        result.log_likelihood = result.initial_log_likelihood;
    }
    return result;
}

DelayWindow::DelayWindow(std::size_t capacity) : capacity_(capacity) {
    if (capacity < kMinFitSamples) throw InvalidInput("DelayWindow: capacity must be >= 20");
}

void DelayWindow::push(double timestamp, double delay) {
    if (!samples_.empty() && timestamp < samples_.back().timestamp) {
        throw InvalidInput("DelayWindow: timestamps must be nondecreasing");
    }
    samples_.push_back({timestamp, delay});
    while (samples_.size() > capacity_) samples_.pop_front();
}

std::vector<double> DelayWindow::snapshot() const {
    std::vector<double> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.delay);
    return out;
}

PercentileEstimate refresh_percentiles(const DelayWindow& w, double now, const PercentileEstimate& previous) {
    if (w.size() < kMinFitSamples) return previous;
    const auto fit = fit_gev(w.snapshot());
    PercentileEstimate est;
    est.params = fit.params;
    est.degenerate_fit = fit.degenerate;
    if (fit.degenerate) {
        // Every sample identical: both percentiles are that delay.
        est.p999 = std::min(std::max(fit.params.mu, 0.0), kMaxP999);
        est.p95 = est.p999;
    } else {
        est.p999 = std::min(gev_quantile(0.999, fit.params), kMaxP999);
        est.p95 = std::clamp(gev_quantile(0.95, fit.params), 0.0, est.p999);
    }
    est.fitted_at = now;
    est.valid = true;
    return est;
}

double schedule_actuation(double cmd_ts, const PercentileEstimate& est) { return cmd_ts + est.p95; }

double watchdog_threshold(const PercentileEstimate& est) { return std::min(est.p999, kMaxP999); }

WatchdogState watchdog_check(double last_cmd_ts, double now, const PercentileEstimate& est) {
    return now - last_cmd_ts > watchdog_threshold(est) ? WatchdogState::kEmergencyStop : WatchdogState::kOk;
}

HoldReplay replay_hold_and_apply(std::span<const DelaySample> stream, std::size_t window, double refit_period) {
    if (window < kMinFitSamples) throw InvalidInput("replay: window smaller than the minimum fit size");
    if (!(refit_period > 0.0)) throw InvalidInput("replay: refit period must be positive");
    HoldReplay r;
    DelayWindow w(window);
    PercentileEstimate est;
    double last_fit = -std::numeric_limits<double>::infinity();
    for (const auto& s : stream) {
        if (s.timestamp - last_fit >= refit_period - 1e-9 && w.size() >= kMinFitSamples) {
            est = refresh_percentiles(w, s.timestamp, est);
            r.estimates.push_back(est);
            last_fit = s.timestamp;
        }
        ++r.commands;
        if (est.valid) {
            ++r.evaluated;
            if (s.delay <= est.p95) ++r.on_time;
        }
        w.push(s.timestamp, s.delay);
    }
    if (r.evaluated > 0) r.on_time_rate = static_cast<double>(r.on_time) / static_cast<double>(r.evaluated);
    if (!r.estimates.empty()) {
        double sum = 0.0, sq = 0.0;
        for (const auto& e : r.estimates) sum += e.p95;
        r.p95_mean = sum / static_cast<double>(r.estimates.size());
        for (const auto& e : r.estimates) sq += (e.p95 - r.p95_mean) * (e.p95 - r.p95_mean);
        r.p95_jitter = std::sqrt(sq / static_cast<double>(r.estimates.size()));
    }
    return r;
}

std::vector<DelaySample> read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open delay trace: " + path);
    std::vector<DelaySample> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != 2) throw InvalidInput(path + ":" + std::to_string(line_no) + ": expected 2 fields");
        try {
            rows.push_back({std::stod(fields[0]), std::stod(fields[1])});
        } catch (const std::exception&) {
            if (line_no == 1) continue;  // header
            throw InvalidInput(path + ":" + std::to_string(line_no) + ": not numeric");
        }
        if (rows.back().delay < 0.0) throw InvalidInput(path + ":" + std::to_string(line_no) + ": negative delay");
    }
    return rows;
}

void write_trace_csv(const std::string& path, std::span<const DelaySample> rows) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write delay trace: " + path);
    out.precision(17);
    out << "timestamp_s,delay_s\n";
    for (const auto& r : rows) out << r.timestamp << ',' << r.delay << '\n';
}

}  // namespace ppd::delay
