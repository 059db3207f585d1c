#pragma once

/**
 * @file combinatorics.hpp
 * @brief Exact integer combinatorics behind the implicit-derivative recursion.
 *
 * Compositions C(n, r), multi-index compositions C(alpha, r), set partitions,
 * the Schroeder-Hipparchus numbers and the two counting identities that the
 * Gevrey bounds lean on. Everything that can overflow is an arbitrary
 * precision integer (boost::multiprecision::cpp_int); comparisons that only
 * need magnitudes go through log space.
 */

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <compare>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gevrey {

using BigInt = boost::multiprecision::cpp_int;

/// 3 + sqrt(8), the growth constant of the Schroeder-Hipparchus numbers.
inline constexpr double c_kappa = 3.0 + 2.0 * std::numbers::sqrt2;

inline BigInt factorial(unsigned n) {
    BigInt out = 1;
    for (unsigned k = 2; k <= n; ++k) out *= k;
    return out;
}

inline BigInt binomial(unsigned n, unsigned k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    BigInt out = 1;
    for (unsigned j = 1; j <= k; ++j) {
        out *= n - k + j;
        out /= j;
    }
    return out;
}

/// Natural log of a positive big integer, accurate to double precision
/// even far beyond the range of double.
inline double log_of(const BigInt& x) {
    if (x <= 0) throw std::domain_error("log_of: argument must be positive");
    const auto bits = boost::multiprecision::msb(x);
    if (bits < 1000) return std::log(x.convert_to<double>());
    const auto shift = bits - 60;
    const BigInt top = x >> shift;
    return std::log(top.convert_to<double>()) + static_cast<double>(shift) * std::numbers::ln2;
}

inline double log_factorial(unsigned n) { return std::lgamma(static_cast<double>(n) + 1.0); }

// ---------------------------------------------------------------------------
// MultiIndex
// ---------------------------------------------------------------------------

/// Finitely supported sequence of naturals indexed by coordinates 1, 2, ...
///
/// Stored sparsely in ascending coordinate order; zero exponents are never
/// stored, so equal multi-indices have identical representations.
class MultiIndex {
public:
    using Coordinate = unsigned;
    using Storage = std::map<Coordinate, unsigned>;

    MultiIndex() = default;

    static MultiIndex unit(Coordinate k, unsigned exponent = 1) {
        MultiIndex m;
        m.set(k, exponent);
        return m;
    }

    /// Dense constructor: exponents[i] belongs to coordinate i + 1.
    static MultiIndex from_dense(const std::vector<unsigned>& exponents) {
        MultiIndex m;
        for (std::size_t i = 0; i < exponents.size(); ++i)
            m.set(static_cast<Coordinate>(i + 1), exponents[i]);
        return m;
    }

    void set(Coordinate k, unsigned exponent) {
        if (k == 0) throw std::invalid_argument("MultiIndex coordinates start at 1");
        if (exponent == 0)
            entries_.erase(k);
        else
            entries_[k] = exponent;
    }

    unsigned operator[](Coordinate k) const {
        auto it = entries_.find(k);
        return it == entries_.end() ? 0u : it->second;
    }

    const Storage& entries() const noexcept { return entries_; }
    bool is_zero() const noexcept { return entries_.empty(); }
    Coordinate max_coordinate() const noexcept {
        return entries_.empty() ? 0 : entries_.rbegin()->first;
    }

    unsigned order() const noexcept {
        unsigned n = 0;
        for (const auto& [k, e] : entries_) n += e;
        return n;
    }

    BigInt factorial() const {
        BigInt out = 1;
        for (const auto& [k, e] : entries_) out *= gevrey::factorial(e);
        return out;
    }

    /// Componentwise beta <= alpha.
    bool dominates(const MultiIndex& beta) const {
        for (const auto& [k, e] : beta.entries_)
            if ((*this)[k] < e) return false;
        return true;
    }

    MultiIndex& operator+=(const MultiIndex& rhs) {
        for (const auto& [k, e] : rhs.entries_) entries_[k] += e;
        return *this;
    }

    MultiIndex& operator-=(const MultiIndex& rhs) {
        if (!dominates(rhs)) throw std::domain_error("MultiIndex subtraction would go negative");
        for (const auto& [k, e] : rhs.entries_) set(k, (*this)[k] - e);
        return *this;
    }

    friend MultiIndex operator+(MultiIndex a, const MultiIndex& b) { return a += b; }
    friend MultiIndex operator-(MultiIndex a, const MultiIndex& b) { return a -= b; }

    friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
    friend auto operator<=>(const MultiIndex& a, const MultiIndex& b) {
        return a.entries_ <=> b.entries_;
    }

    /// gamma^alpha where gamma(k) gives the weight of coordinate k.
    template <class Weight>
    double weight_power(Weight&& gamma) const {
        double out = 1.0;
        for (const auto& [k, e] : entries_) out *= std::pow(gamma(k), static_cast<double>(e));
        return out;
    }

    /// "0", "e1", "e1+2e3", ...
    std::string to_string() const {
        if (entries_.empty()) return "0";
        std::string out;
        for (const auto& [k, e] : entries_) {
            if (!out.empty()) out += '+';
            if (e != 1) out += std::to_string(e);
            out += 'e';
            out += std::to_string(k);
        }
        return out;
    }

    static MultiIndex parse(std::string_view text) {
        MultiIndex m;
        if (text == "0") return m;
        std::size_t pos = 0;
        while (pos < text.size()) {
            auto end = text.find('+', pos);
            if (end == std::string_view::npos) end = text.size();
            const auto term = text.substr(pos, end - pos);
            const auto e_at = term.find('e');
            if (e_at == std::string_view::npos || e_at + 1 >= term.size())
                throw std::invalid_argument("malformed multi-index term: " + std::string(term));
            const unsigned exponent =
                e_at == 0 ? 1u : static_cast<unsigned>(std::stoul(std::string(term.substr(0, e_at))));
            const auto coord = static_cast<Coordinate>(std::stoul(std::string(term.substr(e_at + 1))));
            m.set(coord, m[coord] + exponent);
            pos = end + 1;
        }
        return m;
    }

private:
    Storage entries_;
};

inline BigInt binomial(const MultiIndex& alpha, const MultiIndex& beta) {
    BigInt out = 1;
    for (const auto& [k, e] : alpha.entries()) out *= binomial(e, beta[k]);
    for (const auto& [k, e] : beta.entries())
        if (alpha[k] == 0) return 0;
    return out;
}

/// All multi-indices over coordinates 1..dim with 0 <= |alpha| <= max_order,
/// graded by order, lexicographic (first coordinate fastest-varying last)
/// within an order.
inline std::vector<MultiIndex> multi_indices_up_to(unsigned dim, unsigned max_order) {
    if (dim == 0) return {MultiIndex{}};
    std::vector<MultiIndex> out;
    std::vector<unsigned> dense(dim, 0);
    std::function<void(unsigned, unsigned)> fill = [&](unsigned coord, unsigned left) {
        if (coord + 1 == dim) {
            dense[coord] = left;
            out.push_back(MultiIndex::from_dense(dense));
            return;
        }
        for (unsigned e = left + 1; e-- > 0;) {
            dense[coord] = e;
            fill(coord + 1, left - e);
        }
    };
    for (unsigned order = 0; order <= max_order; ++order) fill(0, order);
    return out;
}

// ---------------------------------------------------------------------------
// Compositions
// ---------------------------------------------------------------------------

struct Composition {
    std::vector<unsigned> parts;

    unsigned total() const noexcept {
        unsigned n = 0;
        for (auto p : parts) n += p;
        return n;
    }
    unsigned size() const noexcept { return static_cast<unsigned>(parts.size()); }
    friend bool operator==(const Composition&, const Composition&) = default;
};

/// Ordered r-tuples of positive integers summing to n, in lexicographic order.
/// Returns an empty list when r == 0 or r > n.
inline std::vector<Composition> compositions(unsigned n, unsigned r) {
    std::vector<Composition> out;
    if (r == 0 || r > n) return out;
    std::vector<unsigned> parts(r);
    std::function<void(unsigned, unsigned)> rec = [&](unsigned slot, unsigned left) {
        if (slot + 1 == r) {
            parts[slot] = left;
            out.push_back(Composition{parts});
            return;
        }
        const unsigned slots_after = r - slot - 1;
        for (unsigned p = 1; p + slots_after <= left; ++p) {
            parts[slot] = p;
            rec(slot + 1, left - p);
        }
    };
    rec(0, n);
    return out;
}

struct MultiIndexComposition {
    std::vector<MultiIndex> parts;
    friend bool operator==(const MultiIndexComposition&, const MultiIndexComposition&) = default;
};

/// Nonzero beta <= alpha, in lexicographic order of the exponent vectors.
inline std::vector<MultiIndex> nonzero_sub_indices(const MultiIndex& alpha) {
    std::vector<std::pair<MultiIndex::Coordinate, unsigned>> coords(alpha.entries().begin(),
                                                                     alpha.entries().end());
    std::vector<MultiIndex> out;
    MultiIndex current;
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (i == coords.size()) {
            if (!current.is_zero()) out.push_back(current);
            return;
        }
        for (unsigned e = 0; e <= coords[i].second; ++e) {
            current.set(coords[i].first, e);
            rec(i + 1);
        }
        current.set(coords[i].first, 0);
    };
    rec(0);
    return out;
}

/// Ordered r-tuples of nonzero multi-indices summing to alpha, each once.
inline std::vector<MultiIndexComposition> multi_index_compositions(const MultiIndex& alpha,
                                                                   unsigned r) {
    std::vector<MultiIndexComposition> out;
    if (r == 0 || alpha.is_zero() || r > alpha.order()) return out;
    std::vector<MultiIndex> parts(r);
    std::function<void(unsigned, const MultiIndex&)> rec = [&](unsigned slot,
                                                               const MultiIndex& left) {
        if (slot + 1 == r) {
            parts[slot] = left;
            out.push_back(MultiIndexComposition{parts});
            return;
        }
        const unsigned slots_after = r - slot - 1;
        for (const auto& beta : nonzero_sub_indices(left)) {
            if (left.order() - beta.order() < slots_after) continue;
            parts[slot] = beta;
            rec(slot + 1, left - beta);
        }
    };
    rec(0, alpha);
    return out;
}

// ---------------------------------------------------------------------------
// Set partitions
// ---------------------------------------------------------------------------

/// Partition of {1, ..., n}; blocks are sorted internally and ordered by
/// their smallest element.
struct SetPartition {
    std::vector<std::vector<unsigned>> blocks;
    std::size_t size() const noexcept { return blocks.size(); }
};

/// Enumerates the partitions of {1..n} with at least min_blocks blocks via
/// restricted growth strings. Single consumer; call next() until empty.
class SetPartitionGenerator {
public:
    SetPartitionGenerator(unsigned n, unsigned min_blocks)
        : n_(n), min_blocks_(min_blocks), growth_(n, 0), prefix_max_(n, 0) {
        if (n == 0) throw std::domain_error("set partitions need n >= 1");
    }

    std::optional<SetPartition> next() {
        while (advance()) {
            const unsigned blocks = prefix_max_[n_ - 1] + 1;
            if (blocks >= min_blocks_) return materialize(blocks);
        }
        return std::nullopt;
    }

private:
    bool advance() {
        if (!started_) {
            started_ = true;
            return true;
        }
        // Rightmost position that can still grow.
        for (unsigned i = n_; i-- > 1;) {
            if (growth_[i] <= prefix_max_[i - 1]) {
                ++growth_[i];
                prefix_max_[i] = std::max(prefix_max_[i - 1], growth_[i]);
                for (unsigned j = i + 1; j < n_; ++j) {
                    growth_[j] = 0;
                    prefix_max_[j] = prefix_max_[j - 1];
                }
                return true;
            }
        }
        return false;
    }

    SetPartition materialize(unsigned blocks) const {
        SetPartition p;
        p.blocks.resize(blocks);
        for (unsigned i = 0; i < n_; ++i) p.blocks[growth_[i]].push_back(i + 1);
        return p;
    }

    unsigned n_;
    unsigned min_blocks_;
    std::vector<unsigned> growth_;
    std::vector<unsigned> prefix_max_;
    bool started_ = false;
};

template <class Visitor>
void for_each_set_partition(unsigned n, unsigned min_blocks, Visitor&& visit) {
    SetPartitionGenerator gen(n, min_blocks);
    while (auto p = gen.next()) visit(*p);
}

inline std::vector<SetPartition> set_partitions(unsigned n, unsigned min_blocks) {
    std::vector<SetPartition> out;
    for_each_set_partition(n, min_blocks, [&](const SetPartition& p) { out.push_back(p); });
    return out;
}

inline BigInt bell_number(unsigned n) {
    // Bell triangle.
    std::vector<BigInt> row{1};
    for (unsigned i = 1; i <= n; ++i) {
        std::vector<BigInt> next{row.back()};
        for (const auto& v : row) next.push_back(next.back() + v);
        row = std::move(next);
    }
    return row.front();
}

// ---------------------------------------------------------------------------
// Schroeder-Hipparchus numbers
// ---------------------------------------------------------------------------

/// kappa_0..kappa_max_n (kappa_0 unused, set to 0) via the three-term
/// recursion kappa_{n+1} = ((6n-3) kappa_n - (n-2) kappa_{n-1}) / (n+1).
inline std::vector<BigInt> schroeder_hipparchus_sequence(unsigned max_n) {
    std::vector<BigInt> kappa(max_n + 1, 0);
    if (max_n >= 1) kappa[1] = 1;
    if (max_n >= 2) kappa[2] = 1;
    for (unsigned n = 2; n + 1 <= max_n; ++n) {
        BigInt numer = BigInt(6 * n - 3) * kappa[n] - BigInt(n - 2) * kappa[n - 1];
        BigInt rem;
        BigInt quot;
        boost::multiprecision::divide_qr(numer, BigInt(n + 1), quot, rem);
        if (rem != 0) throw std::logic_error("three-term recursion lost exactness");
        kappa[n + 1] = std::move(quot);
    }
    return kappa;
}

inline BigInt schroeder_hipparchus(unsigned n) {
    if (n == 0) throw std::domain_error("schroeder_hipparchus: n must be >= 1");
    return schroeder_hipparchus_sequence(n)[n];
}

/// kappa_n from its defining sum over compositions with at least two parts.
/// Exponential in n; meant for cross-checking the recursion at small n.
inline BigInt schroeder_hipparchus_by_compositions(unsigned n) {
    if (n == 0) throw std::domain_error("schroeder_hipparchus: n must be >= 1");
    std::vector<BigInt> kappa(n + 1, 0);
    kappa[1] = 1;
    for (unsigned m = 2; m <= n; ++m) {
        BigInt sum = 0;
        for (unsigned r = 2; r <= m; ++r)
            for (const auto& c : compositions(m, r)) {
                BigInt prod = 1;
                for (auto part : c.parts) prod *= kappa[part];
                sum += prod;
            }
        kappa[m] = sum;
    }
    return kappa[n];
}

/// log of the leading asymptotic term
/// (1/4) sqrt((sqrt(18) - 4)/pi) n^{-3/2} c_kappa^n.
inline double log_schroeder_asymptotic(unsigned n) {
    const double lead = 0.25 * std::sqrt((std::sqrt(18.0) - 4.0) / std::numbers::pi);
    const double nd = static_cast<double>(n);
    return std::log(lead) - 1.5 * std::log(nd) + nd * std::log(c_kappa);
}

// ---------------------------------------------------------------------------
// Identities
// ---------------------------------------------------------------------------

/// r! * prod(i_j!) <= n! for a composition i of n into r parts.
inline bool factorial_inequality_check(const Composition& c) {
    BigInt lhs = factorial(c.size());
    for (auto p : c.parts) lhs *= factorial(p);
    return lhs <= factorial(c.total());
}

struct IdentitySides {
    BigInt lhs;
    BigInt rhs;
};

/// Both sides of alpha! * sum_{C(alpha,r)} prod |beta_j|!/beta_j!
///                = |alpha|! * binom(|alpha|-1, r-1).
inline IdentitySides hs22_identity_sides(const MultiIndex& alpha, unsigned r) {
    if (alpha.is_zero() || r == 0 || r > alpha.order())
        throw std::domain_error("composition identity needs alpha != 0 and 1 <= r <= |alpha|");
    BigInt sum = 0;
    for (const auto& comp : multi_index_compositions(alpha, r)) {
        BigInt term = 1;
        for (const auto& beta : comp.parts) term *= factorial(beta.order()) / beta.factorial();
        sum += term;
    }
    const unsigned n = alpha.order();
    return {alpha.factorial() * sum, factorial(n) * binomial(n - 1, r - 1)};
}

inline bool hs22_identity_check(const MultiIndex& alpha, unsigned r) {
    const auto sides = hs22_identity_sides(alpha, r);
    return sides.lhs == sides.rhs;
}

}  // namespace gevrey
