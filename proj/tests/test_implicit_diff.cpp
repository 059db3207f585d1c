#include "gevrey/envelopes.hpp"
#include "gevrey/implicit_diff.hpp"
#include "gevrey/pde1d.hpp"
#include "gevrey/scalar_problems.hpp"
#include "gevrey/testing/oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace gevrey;

namespace {

Vector scalar(double x) { return Vector::Constant(1, x); }

/// R(d, u) = u^2 + 1 has no real root.
struct RootlessOracle {
    Eigen::Index data_dim() const { return 1; }
    Eigen::Index state_dim() const { return 1; }
    Vector eval(const Vector&, const Vector& u) const { return scalar(u(0) * u(0) + 1.0); }
    Vector apply_derivative(const Vector&, const Vector& u, std::span<const Direction> args) const {
        if (args.size() == 1) return scalar(2.0 * u(0) * args[0].state(0));
        if (args.size() == 2) return scalar(2.0 * args[0].state(0) * args[1].state(0));
        return scalar(0.0);
    }
    Vector solve_linearized(const Vector&, const Vector& u, const Vector& rhs) const { return rhs / (2.0 * u(0)); }
    std::optional<unsigned> max_derivative_order() const { return 2; }
    double residual_norm(const Vector& r) const { return r.norm(); }
    double state_norm(const Vector& u) const { return u.norm(); }
};

struct SmallPde {
    pde1d::PdeOracle oracle{pde1d::Mesh1D::uniform(16, pde1d::RightBoundary::neumann), pde1d::Nonlinearity::cubic()};
    Vector d;
    Vector u;
    std::vector<Vector> directions;

    SmallPde() {
        const auto& sp = oracle.space();
        auto data = pde1d::PdeData::sample(
            sp, [](double x) { return 1.0 + 0.3 * x; }, [](double x) { return 1.0 + x * x; },
            [](double x) { return 2.0 + std::sin(3.0 * x); }, 0.5);
        d = oracle.pack(data);
        u = pde1d::newton_solve(oracle, data).u;
        const auto nq = sp.qp_count();
        auto dir = [&](auto fa, auto fb, auto ff, double g) {
            Vector h = Vector::Zero(oracle.data_dim());
            h.segment(0, nq) = sp.sample(fa);
            h.segment(nq, nq) = sp.sample(fb);
            h.segment(2 * nq, nq) = sp.sample(ff);
            h[3 * nq] = g;
            return h;
        };
        directions.push_back(dir([](double x) { return 0.2 * std::sin(3.14 * x); }, [](double) { return 0.0; },
                                 [](double x) { return x; }, 0.0));
        directions.push_back(dir([](double) { return 0.0; }, [](double x) { return 0.5 * x; },
                                 [](double x) { return std::cos(x); }, 0.3));
        directions.push_back(dir([](double x) { return 0.1 * x * x; }, [](double) { return 0.2; },
                                 [](double) { return 0.0; }, -0.2));
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// Newton
// ---------------------------------------------------------------------------

TEST(SolveResidual, Examples) {
    EXPECT_NEAR(solve_residual(ScalarQuadraticOracle{}, scalar(3.0), scalar(0.0)).u(0), 9.0, 1e-12);
    EXPECT_NEAR(solve_residual(ScalarCubicOracle{}, scalar(2.0), scalar(0.0)).u(0), 1.0, 1e-12);

    pde1d::PdeOracle pde(pde1d::Mesh1D::uniform(8), pde1d::Nonlinearity::cubic());
    auto zero = pde1d::PdeData::sample(pde.space(), [](double) { return 1.0; }, [](double) { return 1.0; },
                                       [](double) { return 0.0; });
    const auto res = solve_residual(pde, pde.pack(zero), Vector::Zero(pde.state_dim()));
    EXPECT_EQ(res.u.norm(), 0.0);
    EXPECT_EQ(res.iterations, 0u);
}

TEST(SolveResidual, FailureCarriesResidual) {
    try {
        solve_residual(RootlessOracle{}, scalar(0.0), scalar(0.5));
        FAIL() << "expected NumericalFailure";
    } catch (const NumericalFailure& e) {
        EXPECT_GE(e.last_residual(), 1.0);
    }
}

// ---------------------------------------------------------------------------
// First and higher derivatives
// ---------------------------------------------------------------------------

TEST(FirstDerivative, Examples) {
    EXPECT_NEAR(first_derivative(ScalarQuadraticOracle{}, scalar(3.0), scalar(9.0), scalar(1.0))(0), 6.0, 1e-14);
    EXPECT_NEAR(first_derivative(ScalarCubicOracle{}, scalar(0.0), scalar(0.0), scalar(1.0))(0), 1.0, 1e-14);

    // Linear PDE: DS[h] for a forcing perturbation solves the same PDE with forcing h.
    pde1d::PdeOracle pde(pde1d::Mesh1D::uniform(32), pde1d::Nonlinearity::none());
    const auto& sp = pde.space();
    auto data = pde1d::PdeData::sample(sp, [](double x) { return 1.0 + x; }, [](double) { return 0.0; },
                                       [](double) { return 1.0; });
    const Vector d = pde.pack(data);
    const Vector u = pde1d::newton_solve(pde, data).u;
    Vector h = Vector::Zero(pde.data_dim());
    const Vector hf = sp.sample([](double x) { return std::sin(5.0 * x); });
    h.segment(2 * sp.qp_count(), sp.qp_count()) = hf;
    const Vector ds = first_derivative(pde, d, u, h);
    auto data_h = data;
    data_h.f = hf;
    const Vector direct = pde1d::newton_solve(pde, data_h).u;
    EXPECT_LE((ds - direct).norm(), 1e-12 * direct.norm());
}

TEST(HigherDerivative, Examples) {
    {
        const ScalarQuadraticOracle q;
        const auto t = derivative_table(q, scalar(3.0), scalar(9.0), {scalar(1.0)}, 3);
        EXPECT_NEAR(t.at({0, 0})(0), 2.0, 1e-14);
        EXPECT_NEAR(t.at({0, 0, 0})(0), 0.0, 1e-14);
    }
    {
        const ScalarCubicOracle c;
        const auto t = derivative_table(c, scalar(0.0), scalar(0.0), {scalar(1.0)}, 3);
        EXPECT_NEAR(t.at({0, 0})(0), 0.0, 1e-14);
        EXPECT_NEAR(t.at({0, 0, 0})(0), -6.0, 1e-12);
    }
}

TEST(HigherDerivative, MissingLowerEntryIsContractViolation) {
    const ScalarCubicOracle c;
    DerivativeTable t(scalar(0.0), scalar(0.0), {scalar(1.0)});
    EXPECT_THROW(higher_derivative(c, t, {0, 0}), ContractViolation);
    EXPECT_THROW(higher_derivative(c, t, {0}), ContractViolation);
    EXPECT_THROW(t.insert({3}, scalar(0.0)), ContractViolation);
}

TEST(HigherDerivative, AffineResidualHasNoHigherDerivatives) {
    std::mt19937_64 rng(7);
    AffineOracle a;
    a.A = Eigen::MatrixXd::Identity(3, 3) * 2.0;
    a.B = Eigen::MatrixXd(3, 2);
    for (int i = 0; i < 6; ++i) a.B(i % 3, i / 3) = oracles::uniform(rng, -1, 1);
    a.A(0, 1) = 0.3;
    a.c = Vector::Ones(3);
    const Vector d = Vector::Ones(2);
    const Vector u = solve_residual(a, d, Vector::Zero(3)).u;
    const auto t = derivative_table(a, d, u, {Vector::Unit(2, 0), Vector::Unit(2, 1)}, 5);
    for (const auto& [key, v] : t.entries())
        if (key.size() >= 2) EXPECT_EQ(v.lpNorm<Eigen::Infinity>(), 0.0) << key_to_string(key);
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

TEST(DerivativeTable, Counts) {
    const ScalarCubicOracle c;
    const auto t1 = derivative_table(c, scalar(0.0), scalar(0.0), {scalar(1.0)}, 1);
    EXPECT_EQ(t1.entries().size(), 2u);
    EXPECT_TRUE(t1.contains({}));
    EXPECT_TRUE(t1.contains({0}));

    // Two directions up to order 3: all multisets of size 1..3, i.e. 2 + 3 + 4.
    SmallPde pde;
    const auto t = derivative_table(pde.oracle, pde.d, pde.u, {pde.directions[0], pde.directions[1]}, 3);
    EXPECT_EQ(t.entries().size(), 9u + 1u);
    EXPECT_EQ(keys_of_order(2, 3).size(), 4u);
    EXPECT_EQ(key_to_string({0, 0, 1}), "h1*h1*h2");
}

TEST(DerivativeTable, ScalarCubicMatchesSeriesInversion) {
    const auto fixed_point = oracles::cubic_inverse_series(9);
    for (unsigned n = 1; n <= 9; ++n)
        EXPECT_NEAR(fixed_point[n], oracles::cubic_inverse_coefficient(n), 1e-13) << n;
    const ScalarCubicOracle c;
    const auto t = derivative_table(c, scalar(0.0), scalar(0.0), {scalar(1.0)}, 9);
    for (unsigned n = 1; n <= 9; ++n) {
        const double expected = std::tgamma(n + 1.0) * fixed_point[n];
        const double got = t.at(DirectionKey(n, 0))(0);
        if (expected == 0.0)
            EXPECT_LE(std::abs(got), 1e-10) << n;
        else
            EXPECT_LE(std::abs(got - expected), 1e-10 * std::abs(expected)) << n;
    }
}

TEST(DerivativeTable, PermutationSymmetry) {
    SmallPde pde;
    const auto t = derivative_table(pde.oracle, pde.d, pde.u, pde.directions, 3);
    std::vector<unsigned> perm{2, 0, 1};
    std::vector<Vector> permuted;
    for (auto p : perm) permuted.push_back(pde.directions[p]);
    const auto tp = derivative_table(pde.oracle, pde.d, pde.u, permuted, 3);
    for (const auto& [key, v] : tp.entries()) {
        DirectionKey mapped;
        for (auto k : key) mapped.push_back(perm[k]);
        std::sort(mapped.begin(), mapped.end());
        EXPECT_LE((t.at(mapped) - v).norm(), 1e-12 * std::max(1e-300, v.norm())) << key_to_string(key);
    }
}

TEST(DerivativeTable, CollapsedMatchesLiteralSum) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        oracles::PolynomialSystemOracle poly(3, 10, 4, seed);
        std::mt19937_64 rng(seed + 100);
        Vector d(3), u(3);
        for (int i = 0; i < 3; ++i) {
            d[i] = oracles::uniform(rng, -0.5, 0.5);
            u[i] = oracles::uniform(rng, -0.5, 0.5);
        }
        poly.anchor(d, u);
        std::vector<Vector> dirs;
        for (int k = 0; k < 3; ++k) {
            Vector h(3);
            for (int i = 0; i < 3; ++i) h[i] = oracles::uniform(rng, -1, 1);
            dirs.push_back(h);
        }
        const auto t = derivative_table(poly, d, u, dirs, 4);
        for (unsigned n = 2; n <= 4; ++n)
            for (const auto& key : keys_of_order(3, n)) {
                const Vector lit = reference::higher_derivative_permutation_sum(poly, t, key);
                EXPECT_LE((lit - t.at(key)).norm(), 1e-12 * lit.norm()) << key_to_string(key);
            }
    }
}

TEST(DerivativeTable, PolynomialTailStaysFinite) {
    SmallPde pde;
    const auto t = derivative_table(pde.oracle, pde.d, pde.u, {pde.directions[0]}, 7);
    for (const auto& [key, v] : t.entries()) EXPECT_TRUE(v.allFinite()) << key_to_string(key);
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

TEST(FiniteDifference, Examples) {
    auto square = [](const Vector& x) { return Vector(x.array().square()); };
    auto fd = finite_difference_check(square, scalar(3.0), {scalar(1.0)}, {0.1, 0.05});
    EXPECT_NEAR(fd.estimate(0), 6.0, 1e-8);

    // Steps stay well inside the radius 2/(3 sqrt 3) of the inverse series.
    auto cubic_inverse = [](const Vector& x) {
        return solve_residual(ScalarCubicOracle{}, x, scalar(0.0), NewtonOptions{1e-15, 100, 30}).u;
    };
    fd = finite_difference_check(cubic_inverse, scalar(0.0), {scalar(1), scalar(1), scalar(1)}, {0.04, 0.02, 0.01});
    EXPECT_NEAR(fd.estimate(0), -6.0, 1e-4);

    auto constant = [](const Vector&) { return scalar(4.0); };
    fd = finite_difference_check(constant, scalar(1.0), {scalar(1), scalar(1)}, {0.1, 0.05});
    EXPECT_EQ(fd.estimate(0), 0.0);
}

TEST(FiniteDifference, ScalarCubicTableAgrees) {
    const ScalarCubicOracle c;
    const double d0 = 0.7;
    const Vector u0 = solve_residual(c, scalar(d0), scalar(0.0)).u;
    const auto t = derivative_table(c, scalar(d0), u0, {scalar(1.0)}, 3);
    auto map = [&](const Vector& x) { return solve_residual(c, x, u0).u; };
    for (unsigned n = 1; n <= 3; ++n) {
        const auto fd = finite_difference_check(map, scalar(d0), std::vector<Vector>(n, scalar(1.0)), {0.2, 0.1, 0.05});
        EXPECT_LE(std::abs(fd.estimate(0) - t.at(DirectionKey(n, 0))(0)), fd.error_indicator) << n;
    }
}

TEST(FiniteDifference, PdeTableAgrees) {
    SmallPde pde;
    const auto t = derivative_table(pde.oracle, pde.d, pde.u, pde.directions, 3);
    auto map = [&](const Vector& x) { return solve_residual(pde.oracle, x, pde.u).u; };
    auto norm = [&](const Vector& v) { return pde.oracle.state_norm(v); };
    for (const auto& [key, v] : t.entries()) {
        if (key.empty()) continue;
        std::vector<Vector> dirs;
        for (auto k : key) dirs.push_back(pde.directions[k]);
        const double base = 0.6 / key.size();
        const auto fd = finite_difference_check(map, pde.d, dirs, {base, base / 2, base / 4}, norm);
        EXPECT_LE(norm(fd.estimate - v), fd.error_indicator) << key_to_string(key);
        EXPECT_LE(fd.error_indicator, 1e-3 * norm(v)) << key_to_string(key);
    }
}

// ---------------------------------------------------------------------------
// Bound compliance at a single data point
// ---------------------------------------------------------------------------

TEST(BoundCompliance, PdeTableWithinImplicitEnvelope) {
    SmallPde pde;
    std::vector<Vector> unit;
    for (const auto& h : pde.directions) unit.push_back(h / pde.oracle.data_norm(h));
    const auto t = derivative_table(pde.oracle, pde.d, pde.u, unit, 5);
    const auto c = pde1d::estimate_constants(pde.oracle, pde.d, pde.u);
    const auto env = implicit_envelope(StabilityConstant(std::max(1.0, c.alpha_guaranteed)), {1.0, c.sigma, c.digamma});
    std::vector<OrderNorm> norms;
    for (const auto& [key, v] : t.entries())
        if (!key.empty()) norms.push_back({key_to_string(key), static_cast<unsigned>(key.size()), pde.oracle.state_norm(v)});
    const auto report = envelope_check(norms, env);
    EXPECT_TRUE(report.passed) << "worst ratio " << report.worst_ratio;
}

// ---------------------------------------------------------------------------
// Oracle contract
// ---------------------------------------------------------------------------

TEST(OracleContract, SymmetricMultilinearAndInvertible) {
    SmallPde pde;
    std::mt19937_64 rng(11);
    auto random_state = [&] {
        Vector v(pde.oracle.state_dim());
        for (auto& x : v) x = oracles::uniform(rng, -1, 1);
        return v;
    };
    for (unsigned r = 1; r <= 4; ++r) {
        std::vector<Direction> args;
        for (unsigned k = 0; k < r; ++k) args.push_back({pde.directions[k % 3], random_state()});
        const Vector base = pde.oracle.apply_derivative(pde.d, pde.u, args);
        std::vector<Direction> rev(args.rbegin(), args.rend());
        const Vector swapped = pde.oracle.apply_derivative(pde.d, pde.u, rev);
        EXPECT_LE((base - swapped).norm(), 1e-12 * base.norm()) << r;
        auto scaled = args;
        scaled[0].data *= 2.5;
        scaled[0].state *= 2.5;
        EXPECT_LE((pde.oracle.apply_derivative(pde.d, pde.u, scaled) - 2.5 * base).norm(), 1e-12 * base.norm()) << r;
    }
    const Vector w = random_state();
    const Direction dw{Vector::Zero(pde.oracle.data_dim()), w};
    const Vector jw = pde.oracle.apply_derivative(pde.d, pde.u, std::span(&dw, 1));
    EXPECT_LE((pde.oracle.solve_linearized(pde.d, pde.u, jw) - w).norm(), 1e-10 * w.norm());
}
