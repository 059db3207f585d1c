#pragma once

/**
 * @file implicit_diff.hpp
 * @brief Arbitrary-order derivatives of an implicitly defined solution map.
 *
 * Given a residual R(d, u) and a point with R(d, S(d)) = 0, the n-th
 * derivative of S in directions h_1..h_n follows from differentiating
 * R(d, S(d)) = 0 n times:
 *
 *   D^n S[h_1..h_n] = -(D_2 R)^{-1} sum_{pi, |pi| >= 2} D^{|pi|} R[g(B_1), ..., g(B_r)]
 *
 * where pi runs over the set partitions of {1..n} and
 * g(B) = (h_k, DS[h_k]) for a singleton B = {k}, (0, D^{|B|}S[h_B]) otherwise.
 * The identity map contributes only to singleton blocks. Every entry is
 * computed from strictly lower-order entries of a DerivativeTable.
 */

#include "gevrey/combinatorics.hpp"
#include "gevrey/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gevrey {

using Vector = Eigen::VectorXd;

/// One argument (delta d, delta u) of a multilinear derivative of R.
struct Direction {
    Vector data;
    Vector state;
};

/// What the engine needs from a residual R : D x U -> R'.
///
/// apply_derivative(d, u, args) evaluates D^r R(d, u)[args...] with
/// r = args.size() >= 1; it must be symmetric and multilinear in args.
/// solve_linearized applies (D_2 R(d, u))^{-1}. max_derivative_order
/// returns the r beyond which D^r R vanishes identically, if any.
template <class O>
concept ResidualOracle = requires(const O& o, const Vector& d, const Vector& u,
                                  std::span<const Direction> args) {
    { o.data_dim() } -> std::convertible_to<Eigen::Index>;
    { o.state_dim() } -> std::convertible_to<Eigen::Index>;
    { o.eval(d, u) } -> std::convertible_to<Vector>;
    { o.apply_derivative(d, u, args) } -> std::convertible_to<Vector>;
    { o.solve_linearized(d, u, d) } -> std::convertible_to<Vector>;
    { o.max_derivative_order() } -> std::convertible_to<std::optional<unsigned>>;
    { o.residual_norm(u) } -> std::convertible_to<double>;
    { o.state_norm(u) } -> std::convertible_to<double>;
};

// ---------------------------------------------------------------------------
// Newton solve
// ---------------------------------------------------------------------------

struct NewtonOptions {
    double tolerance = 1e-12;
    unsigned max_iterations = 100;
    unsigned max_halvings = 30;
};

struct NewtonResult {
    Vector u;
    double residual_norm = 0.0;
    unsigned iterations = 0;
};

/// Damped Newton: the step is halved while the residual norm fails to
/// decrease. Throws NumericalFailure when the tolerance is not reached.
template <ResidualOracle Oracle>
NewtonResult solve_residual(const Oracle& oracle, const Vector& d, Vector u0,
                            const NewtonOptions& opts = {}) {
    NewtonResult out{std::move(u0), 0.0, 0};
    Vector r = oracle.eval(d, out.u);
    double norm = oracle.residual_norm(r);
    while (!(norm <= opts.tolerance)) {
        if (out.iterations == opts.max_iterations || !std::isfinite(norm))
            throw NumericalFailure("Newton iteration did not converge (residual " +
                                       format_number(norm) + ")",
                                   norm);
        const Vector step = oracle.solve_linearized(d, out.u, r);
        double lambda = 1.0;
        Vector trial = out.u - step;
        Vector trial_r = oracle.eval(d, trial);
        double trial_norm = oracle.residual_norm(trial_r);
        unsigned halvings = 0;
        while (!(trial_norm < norm) && halvings < opts.max_halvings) {
            lambda *= 0.5;
            ++halvings;
            trial = out.u - lambda * step;
            trial_r = oracle.eval(d, trial);
            trial_norm = oracle.residual_norm(trial_r);
        }
        if (!(trial_norm < norm))
            throw NumericalFailure("line search stalled at residual " + format_number(norm), norm);
        out.u = std::move(trial);
        r = std::move(trial_r);
        norm = trial_norm;
        ++out.iterations;
    }
    out.residual_norm = norm;
    return out;
}

// ---------------------------------------------------------------------------
// Derivative table
// ---------------------------------------------------------------------------

/// Sorted multiset of direction indices (0-based).
using DirectionKey = std::vector<unsigned>;

inline std::string key_to_string(const DirectionKey& key) {
    if (key.empty()) return "u";
    std::string out;
    for (auto k : key) {
        if (!out.empty()) out += '*';
        out += 'h' + std::to_string(k + 1);
    }
    return out;
}

/// Memoized solution derivatives D^k S(d)[h_key] at a fixed base point.
/// The empty key holds the solution itself.
class DerivativeTable {
public:
    DerivativeTable(Vector base_data, Vector solution, std::vector<Vector> directions)
        : base_data_(std::move(base_data)), directions_(std::move(directions)) {
        entries_.emplace(DirectionKey{}, std::move(solution));
    }

    const Vector& base_data() const noexcept { return base_data_; }
    const Vector& solution() const { return entries_.at({}); }
    const std::vector<Vector>& directions() const noexcept { return directions_; }
    const std::map<DirectionKey, Vector>& entries() const noexcept { return entries_; }

    bool contains(const DirectionKey& key) const { return entries_.count(key) != 0; }

    const Vector& at(const DirectionKey& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end())
            throw ContractViolation("derivative table has no entry for " + key_to_string(key));
        return it->second;
    }

    void insert(DirectionKey key, Vector value) {
        std::sort(key.begin(), key.end());
        for (auto k : key)
            if (k >= directions_.size()) throw ContractViolation("direction index out of range");
        entries_[std::move(key)] = std::move(value);
    }

private:
    Vector base_data_;
    std::vector<Vector> directions_;
    std::map<DirectionKey, Vector> entries_;
};

template <ResidualOracle Oracle>
Vector first_derivative(const Oracle& oracle, const Vector& d, const Vector& u, const Vector& h) {
    const Direction arg{h, Vector::Zero(oracle.state_dim())};
    return -oracle.solve_linearized(d, u, oracle.apply_derivative(d, u, std::span(&arg, 1)));
}

namespace detail {
inline DirectionKey sub_key(const DirectionKey& key, const std::vector<unsigned>& block) {
    DirectionKey out;
    out.reserve(block.size());
    for (auto pos : block) out.push_back(key[pos - 1]);
    std::sort(out.begin(), out.end());
    return out;
}
}  // namespace detail

/// Sum over set partitions with >= 2 blocks of D^r R[g(B_1), ..., g(B_r)]
/// for the multiset `key`; the right-hand side of the order-|key| step.
template <ResidualOracle Oracle>
Vector partition_sum(const Oracle& oracle, const DerivativeTable& table, const DirectionKey& key) {
    const auto& d = table.base_data();
    const auto& u = table.solution();
    const auto n = static_cast<unsigned>(key.size());
    const auto cap = oracle.max_derivative_order();
    const Vector zero_data = Vector::Zero(oracle.data_dim());

    Vector sum = Vector::Zero(oracle.state_dim());
    std::vector<Direction> args;
    for_each_set_partition(n, 2, [&](const SetPartition& pi) {
        if (cap && pi.size() > *cap) return;
        args.clear();
        for (const auto& block : pi.blocks) {
            if (block.size() == 1) {
                const unsigned k = key[block.front() - 1];
                args.push_back({table.directions().at(k), table.at({k})});
            } else {
                args.push_back({zero_data, table.at(detail::sub_key(key, block))});
            }
        }
        sum += oracle.apply_derivative(d, u, std::span<const Direction>(args));
    });
    return sum;
}

/// D^n S[h_key] for n >= 2 from the lower-order entries of `table`.
template <ResidualOracle Oracle>
Vector higher_derivative(const Oracle& oracle, const DerivativeTable& table, DirectionKey key) {
    if (key.size() < 2) throw ContractViolation("higher_derivative needs at least two directions");
    std::sort(key.begin(), key.end());
    const Vector rhs = partition_sum(oracle, table, key);
    return -oracle.solve_linearized(table.base_data(), table.solution(), rhs);
}

/// All nondecreasing index sequences of length `order` over `count` directions.
inline std::vector<DirectionKey> keys_of_order(unsigned count, unsigned order) {
    std::vector<DirectionKey> out;
    DirectionKey key(order);
    std::function<void(unsigned, unsigned)> rec = [&](unsigned slot, unsigned from) {
        if (slot == order) {
            out.push_back(key);
            return;
        }
        for (unsigned k = from; k < count; ++k) {
            key[slot] = k;
            rec(slot + 1, k);
        }
    };
    if (count > 0 || order == 0) rec(0, 0);
    return out;
}

/// Fills a table with D^k S[h_key] for every multiset of direction indices
/// of size 1..max_order. `u` must solve R(d, u) = 0.
template <ResidualOracle Oracle>
DerivativeTable derivative_table(const Oracle& oracle, const Vector& d, const Vector& u,
                                 const std::vector<Vector>& directions, unsigned max_order) {
    DerivativeTable table(d, u, directions);
    const auto count = static_cast<unsigned>(directions.size());
    for (unsigned order = 1; order <= max_order; ++order) {
        for (const auto& key : keys_of_order(count, order)) {
            Vector value = order == 1 ? first_derivative(oracle, d, u, directions[key.front()])
                                      : higher_derivative(oracle, table, key);
            table.insert(key, std::move(value));
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Reference form
// ---------------------------------------------------------------------------

namespace reference {

/// The uncollapsed recursion: sum over permutations sigma of {1..n}, block
/// counts r >= 2 and compositions i in C(n, r), weighted by
/// 1/(r! i_1! ... i_r!). n! terms; only meant for small n.
template <ResidualOracle Oracle>
Vector higher_derivative_permutation_sum(const Oracle& oracle, const DerivativeTable& table,
                                         DirectionKey key) {
    const auto n = static_cast<unsigned>(key.size());
    if (n < 2) throw ContractViolation("reference recursion needs at least two directions");
    const auto& d = table.base_data();
    const auto& u = table.solution();
    const Vector zero_data = Vector::Zero(oracle.data_dim());

    std::vector<unsigned> sigma(n);
    std::iota(sigma.begin(), sigma.end(), 0u);
    Vector sum = Vector::Zero(oracle.state_dim());
    std::vector<Direction> args;
    do {
        for (unsigned r = 2; r <= n; ++r) {
            for (const auto& comp : compositions(n, r)) {
                args.clear();
                double weight = 1.0 / factorial(r).convert_to<double>();
                unsigned pos = 0;
                for (auto len : comp.parts) {
                    DirectionKey sub;
                    for (unsigned j = 0; j < len; ++j) sub.push_back(key[sigma[pos + j]]);
                    std::sort(sub.begin(), sub.end());
                    pos += len;
                    const double inv = 1.0 / factorial(len).convert_to<double>();
                    Vector data = len == 1 ? Vector(table.directions().at(sub.front())) : zero_data;
                    args.push_back({inv * data, inv * table.at(sub)});
                }
                sum += weight * oracle.apply_derivative(d, u, std::span<const Direction>(args));
            }
        }
    } while (std::next_permutation(sigma.begin(), sigma.end()));
    return -oracle.solve_linearized(d, u, sum);
}

}  // namespace reference

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

struct FdEstimate {
    Vector estimate;
    double error_indicator = 0.0;
};

struct EuclideanNorm {
    double operator()(const Vector& v) const { return v.norm(); }
};

/// Mixed directional derivative D^n F(d)[h_1..h_n] of a black-box map from
/// the 2^n-point central stencil, Richardson-extrapolated in step^2 over
/// `steps` (largest first). The indicator is the larger of the last two
/// extrapolation corrections, measured in `norm`.
template <class Map, class Norm = EuclideanNorm>
FdEstimate finite_difference_check(Map&& map, const Vector& d, const std::vector<Vector>& directions,
                                   const std::vector<double>& steps, Norm norm = {}) {
    const auto n = static_cast<unsigned>(directions.size());
    if (steps.empty()) throw std::invalid_argument("finite_difference_check: no steps");

    auto stencil = [&](double eps) -> Vector {
        Vector acc;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            Vector point = d;
            double sign = 1.0;
            for (unsigned i = 0; i < n; ++i) {
                const bool minus = (mask >> i) & 1u;
                point += (minus ? -eps : eps) * directions[i];
                if (minus) sign = -sign;
            }
            Vector value = map(point);
            if (acc.size() == 0) acc = Vector::Zero(value.size());
            acc += sign * value;
        }
        return acc / std::pow(2.0 * eps, static_cast<double>(n));
    };

    const std::size_t m = steps.size();
    std::vector<std::vector<Vector>> tab(m);
    for (std::size_t i = 0; i < m; ++i) {
        tab[i].push_back(stencil(steps[i]));
        const double xi = steps[i] * steps[i];
        for (std::size_t j = 1; j <= i; ++j) {
            const double xj = steps[i - j] * steps[i - j];
            tab[i].push_back((xj * tab[i][j - 1] - xi * tab[i - 1][j - 1]) / (xj - xi));
        }
    }
    FdEstimate out;
    out.estimate = tab[m - 1][m - 1];
    if (m >= 2) {
        out.error_indicator = std::max(norm(Vector(tab[m - 1][m - 1] - tab[m - 1][m - 2])),
                                       norm(Vector(tab[m - 1][m - 1] - tab[m - 2][m - 2])));
    }
    return out;
}

}  // namespace gevrey
