#pragma once

/**
 * @file envelopes.hpp
 * @brief Gevrey derivative-bound envelopes and their propagation.
 *
 * An envelope (s, scale, rate) stands for the bound family
 *
 *     ||D^n M|| <= (n!)^s * scale * rate^n,
 *
 * optionally multiplied by gamma^alpha for mixed partials in parameters.
 * All bound values are handled as natural logarithms: (n!)^s leaves the
 * double range near n = 170 and the implicit-map rates grow quickly.
 */

#include "gevrey/combinatorics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gevrey {

inline constexpr double exact_check_tolerance = 1e-9;
inline constexpr double measured_check_tolerance = 1e-6;

namespace detail {
inline double safe_log(double x) {
    return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity();
}
}  // namespace detail

struct GevreyEnvelope {
    double s = 1.0;
    double scale = 1.0;
    double rate = 1.0;

    bool well_formed() const noexcept {
        return std::isfinite(s) && std::isfinite(scale) && std::isfinite(rate) && s >= 1.0 &&
               scale >= 0.0 && rate >= 0.0;
    }

    /// log((n!)^s * scale * rate^n); -inf when the bound is zero.
    double log_bound(unsigned n) const {
        const double rate_term = n == 0 ? 0.0 : static_cast<double>(n) * detail::safe_log(rate);
        return s * log_factorial(n) + detail::safe_log(scale) + rate_term;
    }

    double bound(unsigned n) const { return std::exp(log_bound(n)); }
};

/// c * k^{-vartheta} weights beyond the stored prefix.
struct AlgebraicDecay {
    double c = 0.0;
    double vartheta = 2.0;
    double operator()(unsigned k) const { return c * std::pow(static_cast<double>(k), -vartheta); }
};

struct ParametricEnvelope {
    GevreyEnvelope base;
    std::vector<double> weights;  // gamma_1 .. gamma_p
    std::optional<AlgebraicDecay> tail;

    double gamma(unsigned k) const {
        if (k >= 1 && k <= weights.size()) return weights[k - 1];
        return tail ? (*tail)(k) : 0.0;
    }

    double log_bound(const MultiIndex& alpha) const {
        double out = base.log_bound(alpha.order());
        for (const auto& [k, e] : alpha.entries())
            out += static_cast<double>(e) * detail::safe_log(gamma(k));
        return out;
    }

    double bound(const MultiIndex& alpha) const { return std::exp(log_bound(alpha)); }
};

/// Bound on the inverse linearization, normalized to alpha >= 1.
class StabilityConstant {
public:
    explicit StabilityConstant(double alpha) : alpha_(alpha) {
        if (!(alpha >= 1.0) || !std::isfinite(alpha))
            throw std::invalid_argument("stability constant must satisfy alpha >= 1");
    }
    double value() const noexcept { return alpha_; }

private:
    double alpha_;
};

namespace detail {
inline void require_normalized(const GevreyEnvelope& env) {
    if (!env.well_formed()) throw std::invalid_argument("envelope constants are missing or invalid");
    if (env.scale < 1.0 || env.rate < 1.0)
        throw std::invalid_argument("residual envelope needs scale >= 1 and rate >= 1");
}
}  // namespace detail

/// log of (n!)^s alpha^{2n-1} sigma^{2n-1} digamma^{3n-2} kappa_n, the
/// order-by-order bound on D^n S* before kappa_n is replaced by its
/// geometric majorant.
inline double lemma_bound(unsigned n, StabilityConstant alpha, const GevreyEnvelope& env_R) {
    if (n == 0) throw std::domain_error("lemma_bound: order must be >= 1");
    detail::require_normalized(env_R);
    const double nd = static_cast<double>(n);
    return env_R.s * log_factorial(n) + (2.0 * nd - 1.0) * std::log(alpha.value()) +
           (2.0 * nd - 1.0) * std::log(env_R.scale) + (3.0 * nd - 2.0) * std::log(env_R.rate) +
           log_of(schroeder_hipparchus(n));
}

/// Envelope of the implicit solution map given the residual envelope.
inline GevreyEnvelope implicit_envelope(StabilityConstant alpha, const GevreyEnvelope& env_R) {
    detail::require_normalized(env_R);
    const double a = alpha.value();
    const double sigma = env_R.scale;
    const double digamma = env_R.rate;
    return GevreyEnvelope{
        env_R.s,
        1.0 / (c_kappa * a * sigma * digamma * digamma),
        c_kappa * a * a * sigma * sigma * digamma * digamma * digamma,
    };
}

/// Guaranteed Taylor radius of an analytic (s = 1) map.
inline double convergence_radius(const GevreyEnvelope& env) {
    if (env.s != 1.0)
        throw std::domain_error("no positive radius guaranteed for non-analytic class");
    if (!(env.rate > 0.0)) throw std::domain_error("convergence_radius: rate must be positive");
    return 1.0 / env.rate;
}

/// Envelope of outer o inner. Not symmetric in its arguments.
inline GevreyEnvelope compose_envelopes(const GevreyEnvelope& inner, const GevreyEnvelope& outer) {
    const double t = outer.rate * inner.scale;
    return GevreyEnvelope{
        std::max(inner.s, outer.s),
        outer.scale * t / (t + 1.0),
        (t + 1.0) * inner.rate,
    };
}

/// Weighted envelope of M o P for a parameter map P with weighted mixed
/// partials and a Gevrey map M. The weight sequence carries over unchanged.
inline ParametricEnvelope compose_parametric(const ParametricEnvelope& inner,
                                             const GevreyEnvelope& outer) {
    ParametricEnvelope out = inner;
    out.base = compose_envelopes(inner.base, outer);
    return out;
}

// ---------------------------------------------------------------------------
// Empirical checks
// ---------------------------------------------------------------------------

struct OrderNorm {
    std::string key;
    unsigned order = 0;
    double norm = 0.0;
};

struct MultiIndexNorm {
    MultiIndex alpha;
    double norm = 0.0;
};

struct CheckEntry {
    std::string key;
    double measured = 0.0;
    double bound = 0.0;
    double ratio = 0.0;
    bool pass = true;
};

struct EnvelopeReport {
    std::vector<CheckEntry> entries;
    double tolerance = 0.0;
    bool passed = true;
    double worst_ratio = 0.0;
    std::optional<std::string> first_failure;
};

namespace detail {
inline CheckEntry make_entry(std::string key, double measured, double log_bound, double tol) {
    if (!(measured >= 0.0)) throw std::invalid_argument("measured norm must be a nonnegative number");
    CheckEntry e;
    e.key = std::move(key);
    e.measured = measured;
    e.bound = std::exp(log_bound);
    if (measured == 0.0)
        e.ratio = 0.0;
    else if (log_bound == -std::numeric_limits<double>::infinity())
        e.ratio = std::numeric_limits<double>::infinity();
    else
        e.ratio = std::exp(std::log(measured) - log_bound);
    e.pass = e.ratio <= 1.0 + tol;
    return e;
}

inline void tally(EnvelopeReport& report, CheckEntry entry) {
    report.worst_ratio = std::max(report.worst_ratio, entry.ratio);
    if (!entry.pass) {
        report.passed = false;
        if (!report.first_failure) report.first_failure = entry.key;
    }
    report.entries.push_back(std::move(entry));
}
}  // namespace detail

inline EnvelopeReport envelope_check(const std::vector<OrderNorm>& table, const GevreyEnvelope& env,
                                     double tolerance = measured_check_tolerance) {
    if (table.empty()) throw std::invalid_argument("envelope_check: empty table");
    if (!env.well_formed()) throw std::invalid_argument("envelope constants are missing or invalid");
    EnvelopeReport report;
    report.tolerance = tolerance;
    for (const auto& row : table)
        detail::tally(report, detail::make_entry(row.key, row.norm, env.log_bound(row.order), tolerance));
    return report;
}

inline EnvelopeReport envelope_check(const std::vector<MultiIndexNorm>& table,
                                     const ParametricEnvelope& env,
                                     double tolerance = measured_check_tolerance) {
    if (table.empty()) throw std::invalid_argument("envelope_check: empty table");
    if (!env.base.well_formed()) throw std::invalid_argument("envelope constants are missing or invalid");
    EnvelopeReport report;
    report.tolerance = tolerance;
    for (const auto& row : table)
        detail::tally(report, detail::make_entry(row.alpha.to_string(), row.norm,
                                                 env.log_bound(row.alpha), tolerance));
    return report;
}

}  // namespace gevrey
