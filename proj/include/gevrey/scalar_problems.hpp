#pragma once

// Small residual oracles with closed-form solution maps. They exercise the
// implicit-derivative engine where every derivative is known by hand.

#include "gevrey/implicit_diff.hpp"

#include <cmath>
#include <optional>
#include <span>

namespace gevrey {

namespace detail {
inline double first(const Vector& v) { return v.size() == 0 ? 0.0 : v(0); }
inline Vector scalar(double x) { return Vector::Constant(1, x); }
}  // namespace detail

/// R(d, u) = u - d^2, so S(d) = d^2.
struct ScalarQuadraticOracle {
    Eigen::Index data_dim() const { return 1; }
    Eigen::Index state_dim() const { return 1; }

    Vector eval(const Vector& d, const Vector& u) const { return detail::scalar(u(0) - d(0) * d(0)); }

    Vector apply_derivative(const Vector& d, const Vector&, std::span<const Direction> args) const {
        switch (args.size()) {
            case 1: return detail::scalar(detail::first(args[0].state) - 2.0 * d(0) * detail::first(args[0].data));
            case 2: return detail::scalar(-2.0 * detail::first(args[0].data) * detail::first(args[1].data));
            default: return detail::scalar(0.0);
        }
    }

    Vector solve_linearized(const Vector&, const Vector&, const Vector& rhs) const { return rhs; }
    std::optional<unsigned> max_derivative_order() const { return 2; }
    double residual_norm(const Vector& r) const { return r.norm(); }
    double state_norm(const Vector& u) const { return u.norm(); }
};

/// R(d, u) = u^3 + u - d. S is the inverse of u -> u^3 + u.
struct ScalarCubicOracle {
    Eigen::Index data_dim() const { return 1; }
    Eigen::Index state_dim() const { return 1; }

    Vector eval(const Vector& d, const Vector& u) const {
        return detail::scalar(u(0) * u(0) * u(0) + u(0) - d(0));
    }

    Vector apply_derivative(const Vector&, const Vector& u, std::span<const Direction> args) const {
        const double x = u(0);
        double prod = 1.0;
        for (const auto& a : args) prod *= detail::first(a.state);
        switch (args.size()) {
            case 1:
                return detail::scalar((3.0 * x * x + 1.0) * detail::first(args[0].state) -
                                      detail::first(args[0].data));
            case 2: return detail::scalar(6.0 * x * prod);
            case 3: return detail::scalar(6.0 * prod);
            default: return detail::scalar(0.0);
        }
    }

    Vector solve_linearized(const Vector&, const Vector& u, const Vector& rhs) const {
        return rhs / (3.0 * u(0) * u(0) + 1.0);
    }
    std::optional<unsigned> max_derivative_order() const { return 3; }
    double residual_norm(const Vector& r) const { return r.norm(); }
    double state_norm(const Vector& u) const { return u.norm(); }
};

/// R(d, u) = A u - B d - c; every derivative of order >= 2 vanishes.
struct AffineOracle {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Vector c;

    Eigen::Index data_dim() const { return B.cols(); }
    Eigen::Index state_dim() const { return A.rows(); }

    Vector eval(const Vector& d, const Vector& u) const { return A * u - B * d - c; }

    Vector apply_derivative(const Vector&, const Vector&, std::span<const Direction> args) const {
        if (args.size() != 1) return Vector::Zero(A.rows());
        return A * args[0].state - B * args[0].data;
    }

    Vector solve_linearized(const Vector&, const Vector&, const Vector& rhs) const {
        return A.partialPivLu().solve(rhs);
    }
    std::optional<unsigned> max_derivative_order() const { return 1; }
    double residual_norm(const Vector& r) const { return r.norm(); }
    double state_norm(const Vector& u) const { return u.norm(); }
};

}  // namespace gevrey
