#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "errors.hpp"
#include "point_set.hpp"

namespace lddmm {

/// Isotropic Gaussian kernel K(x, y) = exp(-|x - y|^2 / (2 tau^2)).
/// tau is the landmark "size": the distance over which landmarks interact.
struct KernelParams {
    double tau = 1.0;

    void validate() const {
        if (!(tau > 0.0) || !std::isfinite(tau)) { throw InvalidInput("kernel width tau must be positive and finite"); }
    }
};

namespace detail {

// Plain sequential sum so that the value does not depend on argument order.
inline double squared_distance(const Eigen::Ref<const Vec> &x, const Eigen::Ref<const Vec> &y) {
    double r = 0.0;
    for (Eigen::Index c = 0; c < x.size(); ++c) {
        const double dx = x[c] - y[c];
        r += dx * dx;
    }
    return r;
}

inline double gaussian(double squared_dist, double tau) { return std::exp(-squared_dist / (2.0 * tau * tau)); }

inline void check_points(const Eigen::Ref<const Vec> &x, const Eigen::Ref<const Vec> &y) {
    if (x.size() != y.size()) { throw InvalidInput("kernel: points differ in dimension"); }
    if (!x.allFinite() || !y.allFinite()) { throw InvalidInput("kernel: non-finite point"); }
}

}  // namespace detail

inline double kernel_eval(const Eigen::Ref<const Vec> &x, const Eigen::Ref<const Vec> &y, const KernelParams &params) {
    params.validate();
    detail::check_points(x, y);
    return detail::gaussian(detail::squared_distance(x, y), params.tau);
}

/// Gradient in the first argument: -(x - y) / tau^2 * K(x, y).
inline Vec kernel_grad_x(const Eigen::Ref<const Vec> &x, const Eigen::Ref<const Vec> &y, const KernelParams &params) {
    params.validate();
    detail::check_points(x, y);
    const double k = detail::gaussian(detail::squared_distance(x, y), params.tau);
    return -(k / (params.tau * params.tau)) * (x - y);
}

/// Gram matrix G(i, j) = K(q^i, q^j). Exactly symmetric with unit diagonal.
inline Eigen::MatrixXd kernel_matrix(const LandmarkSet &q, const KernelParams &params) {
    params.validate();
    require_valid(q, "kernel_matrix");
    const Eigen::Index m = q.size();
    Eigen::MatrixXd g(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        g(j, j) = 1.0;
        for (Eigen::Index i = j + 1; i < m; ++i) {
            const double k = detail::gaussian(detail::squared_distance(q.point(i), q.point(j)), params.tau);
            g(i, j) = k;
            g(j, i) = k;
        }
    }
    return g;
}

}  // namespace lddmm
