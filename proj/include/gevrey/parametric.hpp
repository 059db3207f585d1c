#pragma once

/**
 * @file parametric.hpp
 * @brief Parametric domain mapping of the 1D model problem and mixed
 * partial derivatives of the parameters-to-solution map.
 *
 * The reference interval is deformed by
 *
 *     V[y](x) = x + sum_{k<=p} y_k gamma_k sin(k pi x) / (k pi),
 *     gamma_k = c k^{-vartheta},  y in [-1/2, 1/2]^p,
 *
 * and the problem on V[y]([0, 1]) is pulled back to [0, 1]:
 *
 *     A~ = a^ / V',  b~ = V' b^,  f~ = V' f^,  g~ = g^.
 *
 * V' is affine in y, so all y-dependence beyond first order comes from
 * 1/V', whose partials follow from differentiating V' * (1/V') = 1.
 */

#include "gevrey/envelopes.hpp"
#include "gevrey/errors.hpp"
#include "gevrey/implicit_diff.hpp"
#include "gevrey/pde1d.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gevrey::parametric {

using pde1d::P1Space;
using pde1d::PdeData;
using pde1d::PdeOracle;
using Parameter = std::vector<double>;

inline constexpr unsigned max_parameters = 8;

// ---------------------------------------------------------------------------
// Domain map
// ---------------------------------------------------------------------------

class DomainMap1D {
public:
    DomainMap1D(unsigned p, double c, double vartheta) : p_(p), c_(c), vartheta_(vartheta) {
        if (p == 0 || p > max_parameters)
            throw ConfigError("number of parameters must be between 1 and " + std::to_string(max_parameters));
        if (!(c > 0.0)) throw ConfigError("weight constant c must be positive");
        if (!(vartheta > 1.0)) throw ConfigError("weight decay vartheta must exceed 1");
        double total = 0.0;
        for (unsigned k = 1; k <= p; ++k) total += gamma(k);
        // sup |psi_k'| = 1 and |y_k| <= 1/2, so V' stays in [1/2, 3/2].
        if (total > 1.0 + 1e-15)
            throw ConfigError("weights too large: sum of gamma_k must not exceed 1 (got " +
                              format_number(total) + ")");
    }

    unsigned p() const noexcept { return p_; }
    double c() const noexcept { return c_; }
    double vartheta() const noexcept { return vartheta_; }
    static constexpr double c_V = 2.0;

    double gamma(unsigned k) const { return c_ * std::pow(static_cast<double>(k), -vartheta_); }
    std::vector<double> weights() const {
        std::vector<double> w(p_);
        for (unsigned k = 1; k <= p_; ++k) w[k - 1] = gamma(k);
        return w;
    }

    static double psi(unsigned k, double x) {
        const double kp = k * std::numbers::pi;
        return std::sin(kp * x) / kp;
    }
    static double dpsi(unsigned k, double x) { return std::cos(k * std::numbers::pi * x); }

    double map(const Parameter& y, double x) const {
        double v = x;
        for (unsigned k = 1; k <= p_; ++k) v += y[k - 1] * gamma(k) * psi(k, x);
        return v;
    }

    double jacobian(const Parameter& y, double x) const {
        double v = 1.0;
        for (unsigned k = 1; k <= p_; ++k) v += y[k - 1] * gamma(k) * dpsi(k, x);
        return v;
    }

    /// dV'/dy_k = gamma_k psi_k'.
    double jacobian_partial(unsigned k, double x) const { return gamma(k) * dpsi(k, x); }

    void check_parameter(const Parameter& y) const {
        if (y.size() != p_) throw std::domain_error("parameter vector has wrong dimension");
        for (double v : y)
            if (!(std::abs(v) <= 0.5)) throw std::domain_error("parameter outside the box [-1/2, 1/2]^p");
    }

    void check_support(const MultiIndex& alpha) const {
        if (alpha.max_coordinate() > p_)
            throw std::domain_error("multi-index uses an inactive coordinate");
    }

private:
    unsigned p_;
    double c_;
    double vartheta_;
};

/// `count` points uniform in [-1/2, 1/2]^p from mt19937_64(seed), using the
/// top 53 bits of each draw.
inline std::vector<Parameter> sample_parameters(unsigned p, unsigned count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Parameter> out(count, Parameter(p));
    for (auto& y : out)
        for (auto& v : y) v = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    return out;
}

// ---------------------------------------------------------------------------
// Pullback and data partials
// ---------------------------------------------------------------------------

namespace detail {
inline PdeData pullback_raw(const DomainMap1D& map, const P1Space& space, const PdeData& hat,
                            const Parameter& y) {
    PdeData out = hat;
    for (Eigen::Index q = 0; q < space.qp_count(); ++q) {
        const double w = map.jacobian(y, space.x(q));
        if (!(w > 0.0)) throw std::domain_error("domain map is not orientation preserving");
        out.a[q] = hat.a[q] / w;
        out.b[q] = hat.b[q] * w;
        out.f[q] = hat.f[q] * w;
    }
    return out;
}
}  // namespace detail

inline PdeData pullback(const DomainMap1D& map, const P1Space& space, const PdeData& hat,
                        const Parameter& y) {
    map.check_parameter(y);
    return detail::pullback_raw(map, space, hat, y);
}

/// Mixed partials in y of the packed data d~[y], memoized per multi-index.
class DataMapPartials {
public:
    DataMapPartials(const PdeOracle& oracle, const DomainMap1D& map, PdeData hat, Parameter y)
        : oracle_(&oracle), map_(&map), hat_(std::move(hat)), y_(std::move(y)) {
        map.check_parameter(y_);
        const auto& space = oracle.space();
        const auto nq = space.qp_count();
        w_ = Vector(nq);
        for (Eigen::Index q = 0; q < nq; ++q) w_[q] = map.jacobian(y_, space.x(q));
        reciprocal_.emplace(MultiIndex{}, w_.cwiseInverse());
    }

    const Parameter& y() const noexcept { return y_; }
    const PdeData& hat() const noexcept { return hat_; }

    /// partial^alpha (1 / V') at the quadrature points:
    /// W R_alpha = -sum_k alpha_k (dW/dy_k) R_{alpha - e_k}.
    const Vector& reciprocal(const MultiIndex& alpha) {
        if (auto it = reciprocal_.find(alpha); it != reciprocal_.end()) return it->second;
        map_->check_support(alpha);
        const auto& space = oracle_->space();
        Vector acc = Vector::Zero(space.qp_count());
        for (const auto& [k, e] : alpha.entries()) {
            MultiIndex lower = alpha;
            lower -= MultiIndex::unit(k);
            const Vector& prev = reciprocal(lower);
            for (Eigen::Index q = 0; q < space.qp_count(); ++q)
                acc[q] -= static_cast<double>(e) * map_->jacobian_partial(k, space.x(q)) * prev[q];
        }
        acc = acc.cwiseQuotient(w_);
        return reciprocal_.emplace(alpha, std::move(acc)).first->second;
    }

    const Vector& operator()(const MultiIndex& alpha) {
        if (auto it = data_.find(alpha); it != data_.end()) return it->second;
        map_->check_support(alpha);
        const auto& space = oracle_->space();
        const auto nq = space.qp_count();
        Vector d = Vector::Zero(oracle_->data_dim());
        d.segment(0, nq) = hat_.a.cwiseProduct(reciprocal(alpha));
        if (alpha.is_zero()) {
            d.segment(nq, nq) = hat_.b.cwiseProduct(w_);
            d.segment(2 * nq, nq) = hat_.f.cwiseProduct(w_);
            d[3 * nq] = hat_.g;
        } else if (alpha.order() == 1) {
            const unsigned k = alpha.entries().begin()->first;
            for (Eigen::Index q = 0; q < nq; ++q) {
                const double dw = map_->jacobian_partial(k, space.x(q));
                d[nq + q] = hat_.b[q] * dw;
                d[2 * nq + q] = hat_.f[q] * dw;
            }
        }
        return data_.emplace(alpha, std::move(d)).first->second;
    }

private:
    const PdeOracle* oracle_;
    const DomainMap1D* map_;
    PdeData hat_;
    Parameter y_;
    Vector w_;
    std::map<MultiIndex, Vector> reciprocal_;
    std::map<MultiIndex, Vector> data_;
};

inline Vector data_map_partials(const PdeOracle& oracle, const DomainMap1D& map, const PdeData& hat,
                                const Parameter& y, const MultiIndex& alpha) {
    DataMapPartials partials(oracle, map, hat, y);
    return partials(alpha);
}

// ---------------------------------------------------------------------------
// Parametric solution derivatives
// ---------------------------------------------------------------------------

/// Memoized partials of u^[y] = S(d~[y]) keyed by multi-index. The data
/// partials come from a user-supplied provider (packed data vectors).
class ParametricTable {
public:
    using DataProvider = std::function<Vector(const MultiIndex&)>;

    ParametricTable(DataProvider data, Vector solution) : provider_(std::move(data)) {
        data_.emplace(MultiIndex{}, provider_(MultiIndex{}));
        entries_.emplace(MultiIndex{}, std::move(solution));
    }

    const Vector& base_data() const { return data_.at(MultiIndex{}); }
    const Vector& solution() const { return entries_.at(MultiIndex{}); }
    const std::map<MultiIndex, Vector>& entries() const noexcept { return entries_; }

    const Vector& data_partial(const MultiIndex& alpha) {
        if (auto it = data_.find(alpha); it != data_.end()) return it->second;
        return data_.emplace(alpha, provider_(alpha)).first->second;
    }

    bool contains(const MultiIndex& alpha) const { return entries_.count(alpha) != 0; }
    const Vector& at(const MultiIndex& alpha) const {
        auto it = entries_.find(alpha);
        if (it == entries_.end())
            throw ContractViolation("parametric table has no entry for " + alpha.to_string());
        return it->second;
    }
    void insert(const MultiIndex& alpha, Vector value) { entries_[alpha] = std::move(value); }

private:
    DataProvider provider_;
    std::map<MultiIndex, Vector> data_;
    std::map<MultiIndex, Vector> entries_;
};

/// partial^alpha u^ from R(d~(y), u^(y)) = 0:
///
///   J partial^alpha u^ = -( D_1R[partial^alpha d~]
///       + alpha! sum_{r>=2} 1/r! sum_{beta in C(alpha, r)}
///           D^rR[(partial^{beta_j} d~, partial^{beta_j} u^) / beta_j!] )
///
/// where J = D_2R; the r = 1 term carrying partial^alpha u^ is the one
/// moved to the left.
template <ResidualOracle Oracle>
Vector parametric_solution_derivative(const Oracle& oracle, ParametricTable& table, const MultiIndex& alpha) {
    if (alpha.is_zero()) return table.solution();
    for (const auto& beta : nonzero_sub_indices(alpha))
        if (beta != alpha && !table.contains(beta))
            throw ContractViolation("parametric table is missing lower entry " + beta.to_string());

    const Vector& d = table.base_data();
    const Vector& u = table.solution();
    const Direction first{table.data_partial(alpha), Vector::Zero(oracle.state_dim())};
    Vector rhs = oracle.apply_derivative(d, u, std::span<const Direction>(&first, 1));

    const unsigned n = alpha.order();
    const auto cap = oracle.max_derivative_order();
    const double alpha_fact = alpha.factorial().template convert_to<double>();
    std::vector<Direction> args;
    for (unsigned r = 2; r <= n; ++r) {
        if (cap && r > *cap) break;
        const double weight = alpha_fact / factorial(r).template convert_to<double>();
        Vector acc = Vector::Zero(oracle.state_dim());
        for (const auto& comp : multi_index_compositions(alpha, r)) {
            args.clear();
            for (const auto& beta : comp.parts) {
                const double inv = 1.0 / beta.factorial().template convert_to<double>();
                args.push_back({inv * table.data_partial(beta), inv * table.at(beta)});
            }
            acc += oracle.apply_derivative(d, u, std::span<const Direction>(args));
        }
        rhs += weight * acc;
    }
    return -oracle.solve_linearized(d, u, rhs);
}

/// Fills all partials with 1 <= |alpha| <= max_order over `dim` coordinates.
template <ResidualOracle Oracle>
void fill_parametric_table(const Oracle& oracle, ParametricTable& table, unsigned dim, unsigned max_order) {
    for (const auto& alpha : multi_indices_up_to(dim, max_order)) {
        if (alpha.is_zero() || table.contains(alpha)) continue;
        table.insert(alpha, parametric_solution_derivative(oracle, table, alpha));
    }
}

/// Newton solve at d~[y] plus a table ready for parametric derivatives.
struct ParametricPoint {
    Parameter y;
    std::shared_ptr<DataMapPartials> partials;
    ParametricTable table;
    pde1d::PdeSolveResult solve;
};

inline ParametricPoint parametric_point(const PdeOracle& oracle, const DomainMap1D& map, const PdeData& hat,
                                        const Parameter& y, std::optional<Vector> u0 = {}) {
    auto partials = std::make_shared<DataMapPartials>(oracle, map, hat, y);
    const PdeData tilde = pullback(map, oracle.space(), hat, y);
    auto solve = pde1d::newton_solve(oracle, tilde, std::move(u0));
    ParametricTable table([partials](const MultiIndex& a) { return (*partials)(a); }, solve.u);
    return ParametricPoint{y, partials, std::move(table), std::move(solve)};
}

/// y -> u^[y] without the box check, for finite differences that step
/// slightly outside [-1/2, 1/2]^p. One extra Newton step polishes the
/// solve below the default tolerance.
inline Vector solve_at(const PdeOracle& oracle, const DomainMap1D& map, const PdeData& hat,
                       const Parameter& y, const Vector& u0) {
    const PdeData tilde = detail::pullback_raw(map, oracle.space(), hat, y);
    const Vector d = oracle.pack(tilde);
    Vector u = solve_residual(oracle, d, u0).u;
    u -= oracle.solve_linearized(d, u, oracle.eval(d, u));
    return u;
}

// ---------------------------------------------------------------------------
// Envelopes and bound verification
// ---------------------------------------------------------------------------

/// Weighted envelope of y -> d~[y] for |alpha| >= 0:
/// partial^alpha (1/V') = (-1)^|alpha| |alpha|! (dV')^alpha / V'^{|alpha|+1}
/// with |dV'/dy_k| <= gamma_k and V' >= 1/2 gives s = 1, rate 2 and
///   scale = max(1, 2 ||a^||_inf, 3/2 ||b^||_inf, 3/2 ||f^||_{L2}, ||g^||).
/// ||f||_{H^-1} <= ||f||_{L2} under the full H^1 norm.
inline ParametricEnvelope data_envelope(const PdeOracle& oracle, const DomainMap1D& map, const PdeData& hat) {
    const auto& space = oracle.space();
    const double scale = std::max({1.0, 2.0 * hat.a.lpNorm<Eigen::Infinity>(), 1.5 * hat.b.lpNorm<Eigen::Infinity>(),
                                   1.5 * space.l2_norm(hat.f), oracle.flux_norm(hat.g)});
    ParametricEnvelope env;
    env.base = GevreyEnvelope{1.0, scale, 2.0};
    env.weights = map.weights();
    env.tail = AlgebraicDecay{map.c(), map.vartheta()};
    return env;
}

struct SolutionEnvelope {
    ParametricEnvelope data;       // y -> d~
    GevreyEnvelope solution_map;   // d -> S(d)
    ParametricEnvelope composed;   // y -> u^, before the order-0 adjustment
    ParametricEnvelope envelope;   // final bound
    double alpha = 1.0;
    double sigma = 1.0;
    double solution_bound = 0.0;
};

/// compose_parametric(data envelope, implicit_envelope(alpha, (1, sigma, 1))),
/// with the scale raised to cover the a priori bound on ||u^|| and the rate
/// kept >= 1.
inline SolutionEnvelope solution_envelope(const ParametricEnvelope& data, double alpha, double sigma,
                                          double solution_bound) {
    SolutionEnvelope out;
    out.data = data;
    out.alpha = alpha;
    out.sigma = sigma;
    out.solution_bound = solution_bound;
    out.solution_map = implicit_envelope(StabilityConstant(alpha), GevreyEnvelope{1.0, sigma, 1.0});
    out.composed = compose_parametric(data, out.solution_map);
    out.envelope = out.composed;
    out.envelope.base.scale = std::max({1.0, out.composed.base.scale, solution_bound});
    out.envelope.base.rate = std::max(1.0, out.composed.base.rate);
    return out;
}

struct DuboundsConfig {
    unsigned mesh_n = 256;
    pde1d::RightBoundary bc = pde1d::RightBoundary::dirichlet;
    unsigned p = 4;
    double c = 0.5;
    double vartheta = 2.0;
    unsigned max_order = 4;
    unsigned y_samples = 5;
    std::uint64_t seed = 1;
};

struct DuboundsRow {
    MultiIndex alpha;
    unsigned y_id = 0;
    double measured = 0.0;
    double bound = 0.0;
    double ratio = 0.0;
};

struct DuboundsRun {
    std::vector<Parameter> samples;
    std::vector<std::vector<MultiIndexNorm>> norms;  // per sample
    SolutionEnvelope envelope;
    std::vector<DuboundsRow> rows;
    bool passed = true;
    double worst_ratio = 0.0;
};

/// Checks ||partial^alpha u^[y]||_{H^1} <= (|alpha|!)^s mu kappa^|alpha| gamma^alpha
/// for every sample and alpha in the table.
inline std::vector<DuboundsRow> verify_dubounds(const std::vector<std::vector<MultiIndexNorm>>& norms,
                                                const ParametricEnvelope& env, bool& passed, double& worst) {
    std::vector<DuboundsRow> rows;
    passed = true;
    worst = 0.0;
    for (std::size_t s = 0; s < norms.size(); ++s) {
        const auto report = envelope_check(norms[s], env, 0.0);
        for (std::size_t i = 0; i < norms[s].size(); ++i) {
            const auto& e = report.entries[i];
            rows.push_back({norms[s][i].alpha, static_cast<unsigned>(s), e.measured, e.bound, e.ratio});
        }
        passed = passed && report.passed;
        worst = std::max(worst, report.worst_ratio);
    }
    return rows;
}

/// Full pipeline: solve and differentiate at each sample, estimate the
/// stability and residual constants there, build the composed envelope
/// from their maxima, and check every measured norm against it.
///
/// Samples are independent and may run on up to `threads` workers; results
/// are reduced in sample order, so the output does not depend on `threads`.
inline DuboundsRun run_dubounds(const PdeOracle& oracle, const DomainMap1D& map, const PdeData& hat,
                                const std::vector<Parameter>& samples, unsigned max_order,
                                unsigned threads = 1) {
    struct PerSample {
        std::vector<MultiIndexNorm> norms;
        double alpha = 1.0;
        double sigma = 1.0;
        double sbound = 0.0;
        std::exception_ptr error;
    };
    std::vector<PerSample> per(samples.size());
    auto work = [&](std::size_t i) {
        try {
            auto point = parametric_point(oracle, map, hat, samples[i]);
            fill_parametric_table(oracle, point.table, map.p(), max_order);
            auto& norms = per[i].norms;
            for (const auto& [a, v] : point.table.entries()) norms.push_back({a, oracle.state_norm(v)});
            std::stable_sort(norms.begin(), norms.end(), [](const auto& l, const auto& r) {
                return l.alpha.order() < r.alpha.order() ||
                       (l.alpha.order() == r.alpha.order() && l.alpha.to_string() < r.alpha.to_string());
            });
            const auto c = pde1d::estimate_constants(oracle, point.table.base_data(), point.solve.u);
            per[i].alpha = c.alpha_guaranteed;
            per[i].sigma = c.sigma;
            per[i].sbound = point.solve.injectivity_bound;
        } catch (...) {
            per[i].error = std::current_exception();
        }
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(samples.size())));
    if (threads == 1) {
        for (std::size_t i = 0; i < samples.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next++) < samples.size();) work(i);
            });
        for (auto& th : pool) th.join();
    }

    DuboundsRun run;
    run.samples = samples;
    double alpha = 1.0;
    double sigma = 1.0;
    double sbound = 0.0;
    for (auto& s : per) {
        if (s.error) std::rethrow_exception(s.error);
        alpha = std::max(alpha, s.alpha);
        sigma = std::max(sigma, s.sigma);
        sbound = std::max(sbound, s.sbound);
        run.norms.push_back(std::move(s.norms));
    }
    run.envelope = solution_envelope(data_envelope(oracle, map, hat), alpha, sigma, sbound);
    run.rows = verify_dubounds(run.norms, run.envelope.envelope, run.passed, run.worst_ratio);
    return run;
}

// ---------------------------------------------------------------------------
// Empirical rate fit
// ---------------------------------------------------------------------------

struct RateFit {
    double s = 0.0;
    double rate = 0.0;
    double scale = 0.0;
};

/// Least squares of log(||partial^alpha|| / gamma^alpha) against
/// s log(|alpha|!) + |alpha| log(rate) + log(scale), over alpha != 0 with
/// nonzero norm.
template <class Weight>
RateFit gevrey_rate_fit(const std::vector<MultiIndexNorm>& table, Weight&& gamma) {
    unsigned top = 0;
    std::vector<std::array<double, 4>> rows;
    for (const auto& e : table) {
        if (e.alpha.is_zero() || !(e.norm > 0.0)) continue;
        const unsigned n = e.alpha.order();
        top = std::max(top, n);
        const double target = std::log(e.norm) - std::log(e.alpha.weight_power(gamma));
        rows.push_back({log_factorial(n), static_cast<double>(n), 1.0, target});
    }
    if (top < 4) throw std::domain_error("rate fit is degenerate: nonzero entries must reach order 4");
    Eigen::MatrixXd A(rows.size(), 3);
    Vector b(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        A.row(i) << rows[i][0], rows[i][1], rows[i][2];
        b[i] = rows[i][3];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < 3) throw std::domain_error("rate fit is degenerate: design matrix has rank < 3");
    const Vector x = qr.solve(b);
    return RateFit{x[0], std::exp(x[1]), std::exp(x[2])};
}

}  // namespace gevrey::parametric
