#include "gevrey/envelopes.hpp"
#include "gevrey/implicit_diff.hpp"
#include "gevrey/scalar_problems.hpp"
#include "gevrey/testing/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace gevrey;

namespace {
const double ck = 3.0 + std::sqrt(8.0);
}

TEST(Envelope, BoundInLogSpace) {
    const GevreyEnvelope env{1.5, 2.0, 3.0};
    EXPECT_NEAR(env.bound(0), 2.0, 1e-14);
    EXPECT_NEAR(env.bound(3), std::pow(6.0, 1.5) * 2.0 * 27.0, 1e-9);
    const double lb = GevreyEnvelope{2.0, 1.0, 5.0}.log_bound(200);
    EXPECT_TRUE(std::isfinite(lb));
    EXPECT_NEAR(lb, 2.0 * std::lgamma(201.0) + 200.0 * std::log(5.0), 1e-9 * lb);
    EXPECT_TRUE(std::isfinite(GevreyEnvelope{1.0, 1e-300, 1e-3}.log_bound(200)));
}

TEST(Envelope, StabilityConstantNormalization) {
    EXPECT_THROW(StabilityConstant(0.5), std::invalid_argument);
    EXPECT_NO_THROW(StabilityConstant(1.0));
}

TEST(LemmaBound, Examples) {
    const StabilityConstant one(1.0);
    EXPECT_NEAR(std::exp(lemma_bound(1, one, {1.0, 1.0, 1.0})), 1.0, 1e-14);
    EXPECT_NEAR(std::exp(lemma_bound(2, one, {1.0, 1.0, 1.0})), 2.0, 1e-13);
    EXPECT_NEAR(std::exp(lemma_bound(3, StabilityConstant(2.0), {1.0, 1.0, 1.0})), 576.0, 1e-10);
    EXPECT_THROW(lemma_bound(0, one, {1.0, 1.0, 1.0}), std::domain_error);
    EXPECT_THROW(lemma_bound(2, one, {1.0, 0.5, 1.0}), std::invalid_argument);
}

TEST(ImplicitEnvelope, Examples) {
    const auto id = implicit_envelope(StabilityConstant(1.0), {1.0, 1.0, 1.0});
    EXPECT_NEAR(id.scale, 1.0 / ck, 1e-15);
    EXPECT_NEAR(id.scale, 0.17157287525381, 1e-12);
    EXPECT_NEAR(id.rate, 5.82842712474619, 1e-12);

    const auto e = implicit_envelope(StabilityConstant(2.0), {1.0, 3.0, 1.0});
    EXPECT_NEAR(e.scale, 1.0 / (6.0 * ck), 1e-15);
    EXPECT_NEAR(e.rate, 36.0 * ck, 1e-12);

    const auto base = implicit_envelope(StabilityConstant(1.7), {1.0, 2.3, 1.4});
    const auto doubled = implicit_envelope(StabilityConstant(1.7), {1.0, 2.3, 2.8});
    EXPECT_NEAR(doubled.rate / base.rate, 8.0, 1e-12);
    EXPECT_NEAR(base.scale / doubled.scale, 4.0, 1e-12);
    EXPECT_THROW(implicit_envelope(StabilityConstant(1.0), {1.0, 1.0, 0.5}), std::invalid_argument);
}

TEST(ImplicitEnvelope, DominatesLemmaBoundOnGrid) {
    for (double a : {1.0, 2.0, 4.0})
        for (double sg : {1.0, 2.0, 4.0})
            for (double dg : {1.0, 2.0, 4.0})
                for (double s : {1.0, 1.5, 2.0}) {
                    const GevreyEnvelope r{s, sg, dg};
                    const auto env = implicit_envelope(StabilityConstant(a), r);
                    for (unsigned n = 1; n <= 50; ++n)
                        EXPECT_LE(lemma_bound(n, StabilityConstant(a), r), env.log_bound(n) + 1e-9);
                }
}

TEST(Radius, Examples) {
    EXPECT_NEAR(convergence_radius({1.0, 1.0, ck}), 0.171572875253810, 1e-13);
    EXPECT_DOUBLE_EQ(convergence_radius({1.0, 1.0, 1.0}), 1.0);
    EXPECT_THROW(convergence_radius({2.0, 1.0, 1.0}), std::domain_error);
}

TEST(Compose, HandEvaluatedFormulas) {
    const auto id = compose_envelopes({1.0, 1.0, 1.0}, {1.0, 1.0, 1.0});
    EXPECT_DOUBLE_EQ(id.scale, 0.5);
    EXPECT_DOUBLE_EQ(id.rate, 2.0);
    const auto constant = compose_envelopes({1.0, 0.0, 3.0}, {1.0, 2.0, 5.0});
    EXPECT_DOUBLE_EQ(constant.scale, 0.0);
    EXPECT_DOUBLE_EQ(constant.rate, 3.0);
    EXPECT_DOUBLE_EQ(compose_envelopes({1.0, 1.0, 1.0}, {2.0, 1.0, 1.0}).s, 2.0);

    // mu = mu2 nu2 mu1 / (nu2 mu1 + 1), nu = (nu2 mu1 + 1) nu1 with
    // (mu1, nu1) = (2, 3), (mu2, nu2) = (5, 7): t = 14.
    const auto g = compose_envelopes({1.0, 2.0, 3.0}, {1.0, 5.0, 7.0});
    EXPECT_NEAR(g.scale, 5.0 * 14.0 / 15.0, 1e-14);
    EXPECT_NEAR(g.rate, 45.0, 1e-14);
}

TEST(Compose, NotCommutative) {
    const GevreyEnvelope a{1.0, 2.0, 3.0};
    const GevreyEnvelope b{1.0, 5.0, 7.0};
    const auto ab = compose_envelopes(a, b);
    const auto ba = compose_envelopes(b, a);
    // b after a: (70/15, 45); a after b: t = 15, (30/16, 112).
    EXPECT_NEAR(ba.scale, 2.0 * 15.0 / 16.0, 1e-14);
    EXPECT_NEAR(ba.rate, 112.0, 1e-14);
    EXPECT_NE(ab.rate, ba.rate);
}

TEST(Compose, Parametric) {
    ParametricEnvelope p;
    p.base = {1.0, 1.0, 1.0};
    p.weights = {0.5, 0.25};
    const auto q = compose_parametric(p, {1.0, 1.0, 1.0});
    EXPECT_DOUBLE_EQ(q.base.scale, 0.5);
    EXPECT_DOUBLE_EQ(q.base.rate, 2.0);
    EXPECT_EQ(q.weights, p.weights);

    p.base.s = 1.5;
    EXPECT_DOUBLE_EQ(compose_parametric(p, {1.0, 1.0, 1.0}).base.s, 1.5);

    // Inactive coordinates carry weight 0, so any alpha touching them has bound 0.
    EXPECT_EQ(q.bound(MultiIndex::unit(3)), 0.0);
    EXPECT_GT(q.bound(MultiIndex::unit(2)), 0.0);

    // gamma = 1 on one coordinate: same |alpha| dependence as compose_envelopes.
    ParametricEnvelope single;
    single.base = {1.0, 2.0, 3.0};
    single.weights = {1.0};
    const auto ps = compose_parametric(single, {1.0, 5.0, 7.0});
    const auto plain = compose_envelopes(single.base, {1.0, 5.0, 7.0});
    for (unsigned n = 0; n <= 10; ++n) EXPECT_NEAR(ps.log_bound(MultiIndex::unit(1, n)), plain.log_bound(n), 1e-12);

    ParametricEnvelope tail;
    tail.base = {1.0, 1.0, 1.0};
    tail.weights = {0.5};
    tail.tail = AlgebraicDecay{0.5, 2.0};
    EXPECT_DOUBLE_EQ(tail.gamma(1), 0.5);
    EXPECT_DOUBLE_EQ(tail.gamma(4), 0.5 / 16.0);
}

TEST(EnvelopeCheck, Reports) {
    const GevreyEnvelope env{1.0, 1.0, 2.0};
    std::vector<OrderNorm> zeros{{"a", 1, 0.0}, {"b", 2, 0.0}};
    auto r = envelope_check(zeros, env);
    EXPECT_TRUE(r.passed);
    for (const auto& e : r.entries) EXPECT_EQ(e.ratio, 0.0);

    std::vector<OrderNorm> bad{{"ok", 1, 1.0}, {"h1*h2", 2, 100.0}};
    r = envelope_check(bad, env, exact_check_tolerance);
    EXPECT_FALSE(r.passed);
    ASSERT_TRUE(r.first_failure.has_value());
    EXPECT_EQ(*r.first_failure, "h1*h2");

    EXPECT_THROW(envelope_check(std::vector<OrderNorm>{}, env), std::invalid_argument);
    EXPECT_THROW(envelope_check(zeros, GevreyEnvelope{1.0, NAN, 1.0}), std::invalid_argument);

    ParametricEnvelope p{{1.0, 1.0, 1.0}, {0.5}, std::nullopt};
    std::vector<MultiIndexNorm> mi{{MultiIndex::unit(1, 2), 1.0}};
    r = envelope_check(mi, p);
    EXPECT_FALSE(r.passed);  // bound 2 * 0.25 = 0.5
    EXPECT_EQ(*r.first_failure, "2e1");
}

TEST(EnvelopeCheck, ScalarCubicPipeline) {
    // R = u^3 + u - d at d = 0: D_2R = 1 so alpha = 1; with product max
    // norm ||DR|| <= 2, D^2R = 6u = 0, ||D^3R|| = 6, so (sigma, digamma) = (2, 1)
    // gives n! sigma digamma^n >= ||D^nR|| for all n.
    const ScalarCubicOracle oracle;
    const Vector d = Vector::Zero(1);
    const auto table = derivative_table(oracle, d, Vector::Zero(1), {Vector::Ones(1)}, 9);
    std::vector<OrderNorm> norms;
    for (const auto& [key, v] : table.entries())
        if (!key.empty()) norms.push_back({key_to_string(key), static_cast<unsigned>(key.size()), v.norm()});
    const auto env = implicit_envelope(StabilityConstant(1.0), {1.0, 2.0, 1.0});
    const auto report = envelope_check(norms, env, exact_check_tolerance);
    EXPECT_TRUE(report.passed) << report.worst_ratio;
    EXPECT_GT(report.worst_ratio, 0.0);
}
