#pragma once

/**
 * @file pde1d.hpp
 * @brief Semilinear elliptic model problem on the unit interval.
 *
 *     -(a u')' + b N(u) = f  in (0, 1),   u(0) = 0,
 *     u(1) = 0  or  u'(1) = g,
 *
 * discretized with P1 elements and 3-point Gauss quadrature. The weak
 * residual
 *
 *     R(d, u)(v) = <a u', v'> + <b N(u), v> - <f, v> - g v(1)
 *
 * is a ResidualOracle over the data d = (a, b, f, g), where a, b and f are
 * stored by their values at the quadrature points. Norms are the discrete
 * H^1 norm (mass + stiffness) on states and its dual on residuals.
 */

#include "gevrey/errors.hpp"
#include "gevrey/implicit_diff.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gevrey::pde1d {

using SparseMatrix = Eigen::SparseMatrix<double>;
using ScalarField = std::function<double(double)>;

enum class RightBoundary { dirichlet, neumann };

// ---------------------------------------------------------------------------
// Mesh and P1 space
// ---------------------------------------------------------------------------

class Mesh1D {
public:
    Mesh1D(std::vector<double> nodes, RightBoundary right) : nodes_(std::move(nodes)), right_(right) {
        if (nodes_.size() < 2) throw ConfigError("mesh needs at least one element");
        if (nodes_.front() != 0.0 || nodes_.back() != 1.0)
            throw ConfigError("mesh must span exactly [0, 1]");
        for (std::size_t i = 1; i < nodes_.size(); ++i)
            if (!(nodes_[i] > nodes_[i - 1])) throw ConfigError("mesh nodes must be strictly increasing");
    }

    static Mesh1D uniform(unsigned elements, RightBoundary right = RightBoundary::dirichlet) {
        if (elements == 0) throw ConfigError("mesh needs at least one element");
        std::vector<double> nodes(elements + 1);
        for (unsigned i = 0; i <= elements; ++i) nodes[i] = static_cast<double>(i) / elements;
        nodes.back() = 1.0;
        return Mesh1D(std::move(nodes), right);
    }

    const std::vector<double>& nodes() const noexcept { return nodes_; }
    unsigned element_count() const noexcept { return static_cast<unsigned>(nodes_.size() - 1); }
    RightBoundary right() const noexcept { return right_; }
    double h(unsigned e) const { return nodes_[e + 1] - nodes_[e]; }

    /// Free (non-Dirichlet) nodes: 1..N-1, plus N when the right end is Neumann.
    unsigned free_count() const noexcept {
        return element_count() - (right_ == RightBoundary::dirichlet ? 1u : 0u);
    }
    int free_index(unsigned node) const noexcept {
        if (node == 0 || node > free_count()) return -1;
        return static_cast<int>(node) - 1;
    }

private:
    std::vector<double> nodes_;
    RightBoundary right_;
};

class P1Space {
public:
    static constexpr unsigned points_per_element = 3;

    explicit P1Space(Mesh1D mesh) : mesh_(std::move(mesh)) {
        const std::array<double, 3> xi{0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)};
        const std::array<double, 3> w{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
        const unsigned ne = mesh_.element_count();
        x_.resize(ne * 3);
        w_.resize(ne * 3);
        t_.resize(ne * 3);
        for (unsigned e = 0; e < ne; ++e)
            for (unsigned j = 0; j < 3; ++j) {
                x_[3 * e + j] = mesh_.nodes()[e] + xi[j] * mesh_.h(e);
                w_[3 * e + j] = w[j] * mesh_.h(e);
                t_[3 * e + j] = xi[j];
            }
    }

    const Mesh1D& mesh() const noexcept { return mesh_; }
    Eigen::Index qp_count() const noexcept { return static_cast<Eigen::Index>(x_.size()); }
    Eigen::Index dofs() const noexcept { return mesh_.free_count(); }
    double x(Eigen::Index q) const { return x_[q]; }
    double weight(Eigen::Index q) const { return w_[q]; }

    Vector sample(const ScalarField& fn) const {
        Vector out(qp_count());
        for (Eigen::Index q = 0; q < qp_count(); ++q) out[q] = fn(x_[q]);
        return out;
    }

    /// Nodal interpolant restricted to the free nodes.
    Vector interpolant(const ScalarField& fn) const {
        Vector out(dofs());
        for (Eigen::Index i = 0; i < dofs(); ++i) out[i] = fn(mesh_.nodes()[i + 1]);
        return out;
    }

    /// Nodal values on all mesh nodes (Dirichlet nodes are zero).
    Vector full_nodal(const Vector& u) const {
        Vector out = Vector::Zero(mesh_.nodes().size());
        out.segment(1, dofs()) = u;
        return out;
    }

    struct Traces {
        Vector value;
        Vector grad;
    };

    Traces interpolate(const Vector& u) const {
        Traces out{Vector(qp_count()), Vector(qp_count())};
        for (unsigned e = 0; e < mesh_.element_count(); ++e) {
            const double ul = node_value(u, e);
            const double ur = node_value(u, e + 1);
            const double slope = (ur - ul) / mesh_.h(e);
            for (unsigned j = 0; j < 3; ++j) {
                const auto q = 3 * e + j;
                out.value[q] = ul + t_[q] * (ur - ul);
                out.grad[q] = slope;
            }
        }
        return out;
    }

    /// (sum_q w_q F_q phi_i(x_q))_i
    Vector load(const Vector& field) const {
        Vector out = Vector::Zero(dofs());
        for (unsigned e = 0; e < mesh_.element_count(); ++e) {
            double left = 0.0;
            double right = 0.0;
            for (unsigned j = 0; j < 3; ++j) {
                const auto q = 3 * e + j;
                left += w_[q] * field[q] * (1.0 - t_[q]);
                right += w_[q] * field[q] * t_[q];
            }
            scatter(out, e, left, right);
        }
        return out;
    }

    /// (sum_q w_q G_q phi_i'(x_q))_i
    Vector grad_load(const Vector& field) const {
        Vector out = Vector::Zero(dofs());
        for (unsigned e = 0; e < mesh_.element_count(); ++e) {
            double acc = 0.0;
            for (unsigned j = 0; j < 3; ++j) acc += w_[3 * e + j] * field[3 * e + j];
            acc /= mesh_.h(e);
            scatter(out, e, -acc, acc);
        }
        return out;
    }

    /// Matrix of (w, v) -> <stiff w', v'> + <mass w, v> for quadrature fields.
    SparseMatrix assemble(const Vector& stiff, const Vector& mass) const {
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(4 * mesh_.element_count());
        for (unsigned e = 0; e < mesh_.element_count(); ++e) {
            const double h = mesh_.h(e);
            std::array<std::array<double, 2>, 2> local{};
            for (unsigned j = 0; j < 3; ++j) {
                const auto q = 3 * e + j;
                const std::array<double, 2> phi{1.0 - t_[q], t_[q]};
                const std::array<double, 2> dphi{-1.0 / h, 1.0 / h};
                for (int r = 0; r < 2; ++r)
                    for (int c = 0; c < 2; ++c)
                        local[r][c] += w_[q] * (stiff[q] * dphi[r] * dphi[c] + mass[q] * phi[r] * phi[c]);
            }
            for (int r = 0; r < 2; ++r) {
                const int ir = mesh_.free_index(e + r);
                if (ir < 0) continue;
                for (int c = 0; c < 2; ++c) {
                    const int ic = mesh_.free_index(e + c);
                    if (ic >= 0) triplets.emplace_back(ir, ic, local[r][c]);
                }
            }
        }
        SparseMatrix m(dofs(), dofs());
        m.setFromTriplets(triplets.begin(), triplets.end());
        return m;
    }

    /// Quadrature L^2 norm of a quadrature-point field.
    double l2_norm(const Vector& field) const {
        double acc = 0.0;
        for (Eigen::Index q = 0; q < qp_count(); ++q) acc += w_[q] * field[q] * field[q];
        return std::sqrt(acc);
    }

private:
    double node_value(const Vector& u, unsigned node) const {
        const int i = mesh_.free_index(node);
        return i < 0 ? 0.0 : u[i];
    }

    void scatter(Vector& out, unsigned e, double left, double right) const {
        if (int i = mesh_.free_index(e); i >= 0) out[i] += left;
        if (int i = mesh_.free_index(e + 1); i >= 0) out[i] += right;
    }

    Mesh1D mesh_;
    std::vector<double> x_;
    std::vector<double> w_;
    std::vector<double> t_;  // local coordinate in [0, 1]
};

// ---------------------------------------------------------------------------
// Nonlinearity
// ---------------------------------------------------------------------------

/// Scalar monotone nonlinearity N with all derivatives available.
///
/// Polynomials N(z) = sum_{j>=1} theta_j z^j (so N(0) = 0) of degree at most
/// floor(q - 1), and the analytic 2 + tanh(z). Anything else is rejected.
class Nonlinearity {
public:
    enum class Kind { polynomial, tanh_shifted };

    static Nonlinearity polynomial(std::vector<double> theta, std::optional<double> q = {}) {
        while (!theta.empty() && theta.back() == 0.0) theta.pop_back();
        Nonlinearity nl(Kind::polynomial);
        nl.theta_ = std::move(theta);
        const auto degree = static_cast<double>(nl.theta_.size());
        nl.q_ = q.value_or(std::max(2.0, degree + 1.0));
        if (nl.q_ < 2.0) throw ConfigError("growth exponent q must be >= 2");
        if (degree > std::floor(nl.q_ - 1.0))
            throw ConfigError("polynomial degree exceeds floor(q - 1) for q = " + format_number(nl.q_));
        nl.validate_polynomial();
        return nl;
    }

    static Nonlinearity cubic() { return polynomial({0.0, 0.0, 1.0}); }
    static Nonlinearity none() { return polynomial({}); }

    static Nonlinearity tanh_shifted() {
        Nonlinearity nl(Kind::tanh_shifted);
        nl.q_ = 2.0;
        // d^n/dz^n tanh = P_n(tanh z), P_0(T) = T, P_{n+1} = P_n' (1 - T^2).
        nl.tanh_polys_.push_back({0.0, 1.0});
        for (unsigned n = 0; n < max_tanh_order; ++n) {
            const auto& p = nl.tanh_polys_.back();
            std::vector<double> dp(p.size() > 1 ? p.size() - 1 : 1, 0.0);
            for (std::size_t j = 1; j < p.size(); ++j) dp[j - 1] = static_cast<double>(j) * p[j];
            std::vector<double> next(dp.size() + 2, 0.0);
            for (std::size_t j = 0; j < dp.size(); ++j) {
                next[j] += dp[j];
                next[j + 2] -= dp[j];
            }
            nl.tanh_polys_.push_back(std::move(next));
        }
        return nl;
    }

    /// exp(z) is monotone and analytic but violates every polynomial growth
    /// bound, so it is never admissible.
    [[noreturn]] static Nonlinearity exponential() {
        throw ConfigError(
            "exp nonlinearity rejected: the polynomial growth condition |N(z)| <= c (1 + |z|^(q-1)) "
            "cannot be satisfied by exp for any finite q");
    }

    Kind kind() const noexcept { return kind_; }
    const std::vector<double>& coefficients() const noexcept { return theta_; }
    double growth_exponent() const noexcept { return q_; }

    std::optional<unsigned> degree() const {
        if (kind_ == Kind::polynomial) return static_cast<unsigned>(theta_.size());
        return std::nullopt;
    }

    /// c_N with |N(z)| <= c_N (1 + |z|^{q-1}).
    double growth_constant() const {
        if (kind_ == Kind::tanh_shifted) return 3.0;
        double c = 0.0;
        for (double t : theta_) c += std::abs(t);
        return c;
    }

    double operator()(double z) const { return derivative(0, z); }

    double derivative(unsigned n, double z) const {
        if (kind_ == Kind::tanh_shifted) {
            const double t = std::tanh(z);
            if (n == 0) return 2.0 + t;
            if (n > max_tanh_order) throw std::out_of_range("tanh derivative order too high");
            const auto& p = tanh_polys_[n];
            double acc = 0.0;
            for (std::size_t j = p.size(); j-- > 0;) acc = acc * t + p[j];
            return acc;
        }
        // theta_[j-1] multiplies z^j
        double acc = 0.0;
        for (std::size_t j = theta_.size(); j >= std::max<std::size_t>(n, 1); --j) {
            double coeff = theta_[j - 1];
            for (std::size_t m = 0; m < n; ++m) coeff *= static_cast<double>(j - m);
            acc = acc * z + coeff;
            if (j == 1) break;
        }
        // Horner above accumulated powers z^{j-n} down to j = max(n, 1).
        if (n == 0) acc *= z;
        return acc;
    }

    std::string describe() const {
        if (kind_ == Kind::tanh_shifted) return "2+tanh";
        std::string out;
        for (std::size_t j = 0; j < theta_.size(); ++j) {
            if (theta_[j] == 0.0) continue;
            if (!out.empty()) out += " + ";
            out += format_number(theta_[j]) + "*z^" + std::to_string(j + 1);
        }
        return out.empty() ? "0" : out;
    }

    static constexpr unsigned max_tanh_order = 48;

private:
    explicit Nonlinearity(Kind kind) : kind_(kind) {}

    void validate_polynomial() const {
        const auto J = theta_.size();
        if (J == 0) return;
        // N' must stay >= 0 at +-infinity: odd degree with a positive lead.
        if (J % 2 == 0 || theta_.back() < 0.0)
            throw ConfigError("nonlinearity " + describe() + " is not monotone");
        constexpr int grid = 4001;
        const double c = growth_constant();
        double scale = 0.0;
        for (int i = 0; i < grid; ++i) {
            const double z = -10.0 + 20.0 * i / (grid - 1);
            scale = std::max(scale, std::abs(derivative(1, z)));
        }
        for (int i = 0; i < grid; ++i) {
            const double z = -10.0 + 20.0 * i / (grid - 1);
            if (derivative(1, z) < -1e-12 * std::max(1.0, scale))
                throw ConfigError("nonlinearity " + describe() + " is not monotone (N' < 0 at " +
                                  format_number(z) + ")");
            if (std::abs(derivative(0, z)) > c * (1.0 + std::pow(std::abs(z), q_ - 1.0)) * (1.0 + 1e-12))
                throw ConfigError("nonlinearity violates its polynomial growth bound");
        }
        std::mt19937_64 rng(0x5eed);
        for (int i = 0; i < 256; ++i) {
            const double z1 = -10.0 + 20.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
            const double z2 = -10.0 + 20.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
            const double gap = (derivative(0, z1) - derivative(0, z2)) * (z1 - z2);
            if (gap < -1e-12 * std::max(1.0, scale) * (z1 - z2) * (z1 - z2))
                throw ConfigError("nonlinearity " + describe() + " is not monotone");
        }
    }

    Kind kind_;
    std::vector<double> theta_;
    double q_ = 2.0;
    std::vector<std::vector<double>> tanh_polys_;
};

/// (N^{(n)} o u) * u_1 * ... * u_n at quadrature points.
inline Vector nemyckii_derivative(const Nonlinearity& nl, unsigned n, const Vector& u,
                                  std::span<const Vector> args) {
    if (args.size() != n) throw ContractViolation("nemyckii_derivative: need exactly n arguments");
    Vector out(u.size());
    for (Eigen::Index q = 0; q < u.size(); ++q) {
        double v = nl.derivative(n, u[q]);
        for (const auto& a : args) v *= a[q];
        out[q] = v;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

struct PdeData {
    Vector a;  // diffusion at quadrature points
    Vector b;  // reaction weight at quadrature points
    Vector f;  // forcing at quadrature points
    double g = 0.0;  // Neumann flux at x = 1 (ignored for Dirichlet)

    static PdeData sample(const P1Space& space, const ScalarField& a, const ScalarField& b,
                          const ScalarField& f, double g = 0.0) {
        return PdeData{space.sample(a), space.sample(b), space.sample(f), g};
    }

    static PdeData zero(const P1Space& space) {
        const auto n = space.qp_count();
        return PdeData{Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), 0.0};
    }

    void validate(const P1Space& space) const {
        const auto n = space.qp_count();
        if (a.size() != n || b.size() != n || f.size() != n)
            throw ConfigError("data fields do not match the quadrature layout");
        if (!(a.minCoeff() > 0.0)) throw ConfigError("diffusion coefficient must be bounded below by a positive constant");
        if (b.minCoeff() < 0.0) throw ConfigError("reaction coefficient must be nonnegative");
    }
};

// ---------------------------------------------------------------------------
// Residual oracle
// ---------------------------------------------------------------------------

class PdeOracle {
public:
    PdeOracle(Mesh1D mesh, Nonlinearity nl) : space_(std::move(mesh)), nl_(std::move(nl)) {
        const auto nq = space_.qp_count();
        stiffness_ = space_.assemble(Vector::Ones(nq), Vector::Zero(nq));
        gram_ = space_.assemble(Vector::Ones(nq), Vector::Ones(nq));
        gram_solver_.compute(gram_);
        if (gram_solver_.info() != Eigen::Success) throw NumericalFailure("H1 Gram matrix factorization failed", 0.0);

        // c_PF^2 = max ||v||^2_{H1} / |v|^2_{H1} = 1 / lambda_min(K, G).
        const Eigen::MatrixXd K = Eigen::MatrixXd(stiffness_);
        const Eigen::MatrixXd G = Eigen::MatrixXd(gram_);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, G, Eigen::EigenvaluesOnly);
        if (eig.info() != Eigen::Success) throw NumericalFailure("Poincare eigenproblem failed", 0.0);
        c_pf_ = std::sqrt(1.0 / eig.eigenvalues().minCoeff());

        // sup_v |v_i| / ||v||_{H1} = sqrt((G^{-1})_{ii}); P1 maxima sit at nodes.
        const Eigen::MatrixXd Ginv = G.llt().solve(Eigen::MatrixXd::Identity(G.rows(), G.cols()));
        c_inf_ = std::sqrt(Ginv.diagonal().maxCoeff());
    }

    const P1Space& space() const noexcept { return space_; }
    const Mesh1D& mesh() const noexcept { return space_.mesh(); }
    const Nonlinearity& nonlinearity() const noexcept { return nl_; }
    bool neumann() const noexcept { return mesh().right() == RightBoundary::neumann; }

    Eigen::Index data_dim() const noexcept { return 3 * space_.qp_count() + 1; }
    Eigen::Index state_dim() const noexcept { return space_.dofs(); }

    Vector pack(const PdeData& data) const {
        const auto nq = space_.qp_count();
        Vector d(data_dim());
        d << data.a, data.b, data.f, Vector::Constant(1, data.g);
        (void)nq;
        return d;
    }

    PdeData unpack(const Vector& d) const {
        const auto nq = space_.qp_count();
        return PdeData{d.segment(0, nq), d.segment(nq, nq), d.segment(2 * nq, nq), d[3 * nq]};
    }

    Vector eval(const Vector& d, const Vector& u) const {
        const auto nq = space_.qp_count();
        const auto tr = space_.interpolate(u);
        Vector reaction(nq);
        for (Eigen::Index q = 0; q < nq; ++q) reaction[q] = d[nq + q] * nl_(tr.value[q]) - d[2 * nq + q];
        Vector out = space_.grad_load(d.segment(0, nq).cwiseProduct(tr.grad)) + space_.load(reaction);
        if (neumann()) out[state_dim() - 1] -= d[3 * nq];
        return out;
    }

    /// D^r R(d, u)[args...]: the A-u bilinear terms (r <= 2), the
    /// f and g terms (r = 1) and the b N(u) terms
    ///   b N^{(r)}(u) u_1..u_r + sum_k b_k N^{(r-1)}(u) prod_{j != k} u_j.
    Vector apply_derivative(const Vector& d, const Vector& u, std::span<const Direction> args) const {
        const auto r = static_cast<unsigned>(args.size());
        if (r == 0) return eval(d, u);
        if (auto cap = max_derivative_order(); cap && r > *cap) return Vector::Zero(state_dim());

        const auto nq = space_.qp_count();
        const auto base = space_.interpolate(u);
        std::vector<P1Space::Traces> du;
        du.reserve(r);
        for (const auto& a : args) du.push_back(space_.interpolate(a.state));
        auto coeff_a = [&](unsigned k) { return args[k].data.segment(0, nq); };
        auto coeff_b = [&](unsigned k) { return args[k].data.segment(nq, nq); };

        Vector grad_field = Vector::Zero(nq);
        if (r == 1)
            grad_field = coeff_a(0).cwiseProduct(base.grad) + d.segment(0, nq).cwiseProduct(du[0].grad);
        else if (r == 2)
            grad_field = coeff_a(0).cwiseProduct(du[1].grad) + coeff_a(1).cwiseProduct(du[0].grad);

        Vector value_field(nq);
        for (Eigen::Index q = 0; q < nq; ++q) {
            const double z = base.value[q];
            double all = 1.0;
            for (unsigned k = 0; k < r; ++k) all *= du[k].value[q];
            double acc = d[nq + q] * nl_.derivative(r, z) * all;
            const double lower = nl_.derivative(r - 1, z);
            for (unsigned k = 0; k < r; ++k) {
                const double bk = coeff_b(k)[q];
                if (bk == 0.0) continue;
                double rest = 1.0;
                for (unsigned j = 0; j < r; ++j)
                    if (j != k) rest *= du[j].value[q];
                acc += bk * lower * rest;
            }
            if (r == 1) acc -= args[0].data[2 * nq + q];
            value_field[q] = acc;
        }

        Vector out = space_.grad_load(grad_field) + space_.load(value_field);
        if (r == 1 && neumann()) out[state_dim() - 1] -= args[0].data[3 * nq];
        return out;
    }

    SparseMatrix linearization(const Vector& d, const Vector& u) const {
        const auto nq = space_.qp_count();
        const auto tr = space_.interpolate(u);
        Vector mass(nq);
        for (Eigen::Index q = 0; q < nq; ++q) mass[q] = d[nq + q] * nl_.derivative(1, tr.value[q]);
        return space_.assemble(d.segment(0, nq), mass);
    }

    Vector solve_linearized(const Vector& d, const Vector& u, const Vector& rhs) const {
        Eigen::SimplicialLDLT<SparseMatrix> solver(linearization(d, u));
        if (solver.info() != Eigen::Success) throw NumericalFailure("linearization is singular", 0.0);
        return solver.solve(rhs);
    }

    /// D^r R == 0 for r >= max(2, J + 1) + 1 with a degree-J polynomial.
    std::optional<unsigned> max_derivative_order() const {
        if (auto J = nl_.degree()) return std::max(2u, *J + 1);
        return std::nullopt;
    }

    double state_norm(const Vector& u) const { return std::sqrt(u.dot(gram_ * u)); }
    double seminorm(const Vector& u) const { return std::sqrt(u.dot(stiffness_ * u)); }
    double residual_norm(const Vector& r) const { return std::sqrt(std::max(0.0, r.dot(gram_solver_.solve(r)))); }

    /// max(||a||_inf, ||b||_inf, ||f||_{H^-1}, ||g||), the product-space norm.
    double data_norm(const Vector& d) const {
        const auto nq = space_.qp_count();
        const double na = d.segment(0, nq).lpNorm<Eigen::Infinity>();
        const double nb = d.segment(nq, nq).lpNorm<Eigen::Infinity>();
        const double nf = residual_norm(space_.load(d.segment(2 * nq, nq)));
        return std::max({na, nb, nf, flux_norm(d[3 * nq])});
    }

    /// Dual norm of v -> g v(1).
    double flux_norm(double g) const {
        if (!neumann() || g == 0.0) return 0.0;
        Vector e = Vector::Zero(state_dim());
        e[state_dim() - 1] = 1.0;
        return std::abs(g) * std::sqrt(e.dot(gram_solver_.solve(e)));
    }

    double poincare_constant() const noexcept { return c_pf_; }
    double sup_embedding() const noexcept { return c_inf_; }
    const SparseMatrix& gram() const noexcept { return gram_; }
    const SparseMatrix& stiffness() const noexcept { return stiffness_; }

private:
    P1Space space_;
    Nonlinearity nl_;
    SparseMatrix stiffness_;
    SparseMatrix gram_;
    Eigen::SimplicialLDLT<SparseMatrix> gram_solver_;
    double c_pf_ = 1.0;
    double c_inf_ = 1.0;
};

static_assert(ResidualOracle<PdeOracle>);

inline Vector assemble_residual(const PdeOracle& oracle, const PdeData& data, const Vector& u) {
    return oracle.eval(oracle.pack(data), u);
}

inline Vector apply_residual_derivative(const PdeOracle& oracle, const PdeData& data, const Vector& u,
                                        std::span<const Direction> args) {
    return oracle.apply_derivative(oracle.pack(data), u, args);
}

// ---------------------------------------------------------------------------
// Solve and constants
// ---------------------------------------------------------------------------

/// Data with N(0) folded into the forcing: f - b N(0).
inline Vector effective_data(const PdeOracle& oracle, const Vector& d) {
    const auto nq = oracle.space().qp_count();
    Vector out = d;
    const double n0 = oracle.nonlinearity()(0.0);
    if (n0 != 0.0) out.segment(2 * nq, nq) -= n0 * d.segment(nq, nq);
    return out;
}

/// c_A = min(1, ess inf a).
inline double ellipticity_constant(const PdeOracle& oracle, const Vector& d) {
    return std::min(1.0, d.segment(0, oracle.space().qp_count()).minCoeff());
}

/// 2 c_PF^2 / c_A * ||d||, an a priori bound on the solution norm.
inline double injectivity_bound(const PdeOracle& oracle, const Vector& d) {
    const double cpf = oracle.poincare_constant();
    return 2.0 * cpf * cpf / ellipticity_constant(oracle, d) * oracle.data_norm(effective_data(oracle, d));
}

struct PdeSolveResult {
    Vector u;
    double residual_norm = 0.0;
    unsigned iterations = 0;
    double solution_norm = 0.0;
    double injectivity_bound = 0.0;
    bool injectivity_ok = true;
};

inline PdeSolveResult newton_solve(const PdeOracle& oracle, const PdeData& data,
                                   std::optional<Vector> u0 = {}, double tol = 1e-12) {
    data.validate(oracle.space());
    const Vector d = oracle.pack(data);
    auto res = solve_residual(oracle, d, u0.value_or(Vector::Zero(oracle.state_dim())),
                              NewtonOptions{tol, 100, 30});
    PdeSolveResult out;
    out.residual_norm = res.residual_norm;
    out.iterations = res.iterations;
    out.solution_norm = oracle.state_norm(res.u);
    out.injectivity_bound = injectivity_bound(oracle, d);
    out.injectivity_ok = out.solution_norm <= out.injectivity_bound * (1.0 + 1e-12);
    out.u = std::move(res.u);
    return out;
}

/// (R(d,u1) - R(d,u2))(u1 - u2) - c_PF^{-2} c_A ||u1 - u2||^2; >= 0 by
/// strong monotonicity.
inline double monotonicity_gap(const PdeOracle& oracle, const Vector& d, const Vector& u1,
                               const Vector& u2) {
    const Vector diff = u1 - u2;
    const double lhs = (oracle.eval(d, u1) - oracle.eval(d, u2)).dot(diff);
    const double cpf = oracle.poincare_constant();
    const double n = oracle.state_norm(diff);
    return lhs - ellipticity_constant(oracle, d) / (cpf * cpf) * n * n;
}

struct PdeConstants {
    double c_pf = 0.0;
    double c_a = 0.0;
    double c_inf = 0.0;
    double alpha_guaranteed = 0.0;
    double alpha_measured = 0.0;
    double sigma = 1.0;
    double digamma = 1.0;
    std::vector<double> derivative_bounds;  // [n-1] bounds ||D^n R(d, u)||
};

/// Largest generalized eigenvalue of (J^{-1}, G^{-1}), i.e. the
/// H^{-1} -> H^1 norm of the inverse linearization, by inverse iteration.
inline double inverse_linearization_norm(const PdeOracle& oracle, const Vector& d, const Vector& u) {
    const SparseMatrix J = oracle.linearization(d, u);
    Eigen::SimplicialLDLT<SparseMatrix> solver(J);
    if (solver.info() != Eigen::Success) throw NumericalFailure("linearization is singular", 0.0);
    const auto& G = oracle.gram();
    Vector x = Vector::Ones(oracle.state_dim());
    double lambda = 0.0;
    for (int it = 0; it < 1000; ++it) {
        Vector y = solver.solve(G * x);
        y /= std::sqrt(y.dot(G * y));
        const double next = y.dot(J * y);  // Rayleigh quotient, G-normalized
        x = std::move(y);
        if (it > 0 && std::abs(next - lambda) <= 1e-14 * std::abs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return 1.0 / lambda;
}

/// Stability and residual-derivative constants at (d, u).
///
/// sigma bounds ||D^n R(d, u)|| <= n! sigma term by term from the explicit
/// derivative formulas, using sup norms of the data, the L^2 norm of N(u)
/// and the sup-norm embedding constant c_inf; digamma is fixed to 1.
inline PdeConstants estimate_constants(const PdeOracle& oracle, const Vector& d, const Vector& u) {
    PdeConstants c;
    const auto& space = oracle.space();
    const auto nq = space.qp_count();
    const auto& nl = oracle.nonlinearity();
    c.c_pf = oracle.poincare_constant();
    c.c_a = ellipticity_constant(oracle, d);
    c.c_inf = oracle.sup_embedding();
    c.alpha_guaranteed = c.c_pf * c.c_pf / c.c_a;
    c.alpha_measured = inverse_linearization_norm(oracle, d, u);

    const auto tr = space.interpolate(u);
    const Vector a = d.segment(0, nq);
    const Vector b = d.segment(nq, nq);
    auto sup_of = [&](unsigned n, bool weighted) {
        double s = 0.0;
        for (Eigen::Index q = 0; q < nq; ++q)
            s = std::max(s, std::abs((weighted ? b[q] : 1.0) * nl.derivative(n, tr.value[q])));
        return s;
    };

    const unsigned top = nl.degree() ? *oracle.max_derivative_order() : Nonlinearity::max_tanh_order;
    Vector n_of_u(nq);
    for (Eigen::Index q = 0; q < nq; ++q) n_of_u[q] = nl(tr.value[q]);

    double sigma = 1.0;
    for (unsigned n = 1; n <= top; ++n) {
        double bound = 0.0;
        if (n == 1) {
            bound = oracle.seminorm(u) + a.lpNorm<Eigen::Infinity>() + space.l2_norm(n_of_u) +
                    sup_of(1, true) + 1.0 + (oracle.neumann() ? 1.0 : 0.0);
        } else {
            bound = sup_of(n, true) * std::pow(c.c_inf, n - 1.0) +
                    n * sup_of(n - 1, false) * std::pow(c.c_inf, n - 2.0);
            if (n == 2) bound += 2.0;
        }
        c.derivative_bounds.push_back(bound);
        sigma = std::max(sigma, bound / std::tgamma(n + 1.0));
    }
    c.sigma = sigma;
    c.digamma = 1.0;
    return c;
}

}  // namespace gevrey::pde1d
