#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "kernel.hpp"
#include "point_set.hpp"

namespace lddmm {

/// Uniform grid on [0, 1] with T steps of size 1/T.
class TimeGrid {
public:
    explicit TimeGrid(std::size_t steps = 15) : steps_(steps) {
        if (steps == 0) { throw InvalidInput("time grid needs at least one step"); }
    }

    std::size_t steps() const noexcept { return steps_; }
    double dt() const noexcept { return 1.0 / static_cast<double>(steps_); }
    double time(std::size_t k) const noexcept { return static_cast<double>(k) / static_cast<double>(steps_); }

    friend bool operator==(const TimeGrid &, const TimeGrid &) = default;

private:
    std::size_t steps_;
};

struct HamiltonianRhs {
    Coords dq;
    Coords dp;
};

/// The discrete trajectory t -> (q_t, p_t) produced by shoot(), T + 1 nodes.
struct GeodesicPath {
    std::vector<double> times;
    std::vector<LandmarkSet> q;
    std::vector<MomentumSet> p;
    std::vector<double> energies;  ///< |u_t|_V^2 at each node

    std::size_t size() const noexcept { return q.size(); }
    const LandmarkSet &endpoint() const { return q.back(); }
};

namespace detail {

// Unchecked right-hand side. dp is accumulated pairwise (i < j) so each
// interaction contributes with opposite signs to the two landmarks involved.
inline void hamiltonian_rhs_into(const Coords &q, const Coords &p, double tau, Coords &dq, Coords &dp) {
    const Eigen::Index d = q.rows();
    const Eigen::Index m = q.cols();
    const double inv_tau2 = 1.0 / (tau * tau);
    dq = p;  // K(q^j, q^j) = 1
    dp.setZero(d, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < j; ++i) {
            double r = 0.0;
            double pp = 0.0;
            for (Eigen::Index c = 0; c < d; ++c) {
                const double dx = q(c, j) - q(c, i);
                r += dx * dx;
                pp += p(c, i) * p(c, j);
            }
            const double k = gaussian(r, tau);
            const double w = pp * k * inv_tau2;
            for (Eigen::Index c = 0; c < d; ++c) {
                dq(c, j) += k * p(c, i);
                dq(c, i) += k * p(c, j);
                const double f = w * (q(c, j) - q(c, i));
                dp(c, j) += f;
                dp(c, i) -= f;
            }
        }
    }
}

inline double energy_unchecked(const Coords &q, const Coords &p, double tau) {
    const Eigen::Index d = q.rows();
    const Eigen::Index m = q.cols();
    double e = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            double r = 0.0;
            double pp = 0.0;
            for (Eigen::Index c = 0; c < d; ++c) {
                const double dx = q(c, i) - q(c, j);
                r += dx * dx;
                pp += p(c, i) * p(c, j);
            }
            e += pp * gaussian(r, tau);
        }
    }
    return e;
}

inline void check_shoot_inputs(const LandmarkSet &q0, const MomentumSet &p0, const KernelParams &params) {
    params.validate();
    require_valid(q0, "initial landmarks");
    require_valid(p0, "initial momentum");
    require_same_shape(q0, p0, "shoot");
}

// Simultaneous forward Euler on (q, p). The observer sees every node,
// including the initial one, as (k, q_k, p_k).
template <typename Observer>
void integrate_euler(Coords &q, Coords &p, const TimeGrid &grid, double tau, Observer &&observe) {
    const double dt = grid.dt();
    Coords dq;
    Coords dp;
    observe(std::size_t{0}, q, p);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        hamiltonian_rhs_into(q, p, tau, dq, dp);
        q.noalias() += dt * dq;
        p.noalias() += dt * dp;
        if (!q.allFinite() || !p.allFinite()) {
            throw BlowUpError(k + 1, "non-finite landmark or momentum coordinate");
        }
        observe(k + 1, q, p);
    }
}

}  // namespace detail

/// u(x) = sum_i K(q^i, x) p^i evaluated at each target point.
inline LandmarkSet velocity_at(const LandmarkSet &q, const MomentumSet &p, const LandmarkSet &targets,
                               const KernelParams &params) {
    params.validate();
    require_valid(q, "velocity_at landmarks");
    require_valid(targets, "velocity_at targets");
    require_same_shape(q, p, "velocity_at");
    if (targets.dim() != q.dim()) { throw InvalidInput("velocity_at: targets differ in dimension"); }
    LandmarkSet out(q.dim(), targets.size());
    for (Eigen::Index j = 0; j < targets.size(); ++j) {
        for (Eigen::Index i = 0; i < q.size(); ++i) {
            const double k = detail::gaussian(detail::squared_distance(q.point(i), targets.point(j)), params.tau);
            out.point(j) += k * p.point(i);
        }
    }
    return out;
}

/// (dq/dt, dp/dt) = (dH/dp, -dH/dq) for H = 1/2 sum_ij p^i.p^j K(q^i, q^j).
inline HamiltonianRhs hamiltonian_rhs(const LandmarkSet &q, const MomentumSet &p, const KernelParams &params) {
    params.validate();
    require_valid(q, "hamiltonian_rhs landmarks");
    require_valid(p, "hamiltonian_rhs momentum");
    require_same_shape(q, p, "hamiltonian_rhs");
    HamiltonianRhs rhs;
    detail::hamiltonian_rhs_into(q.coords(), p.coords(), params.tau, rhs.dq, rhs.dp);
    return rhs;
}

/// RKHS norm |u|_V^2 = sum_ij p^j K(q^i, q^j) p^i of the velocity generated by (q, p).
inline double path_energy(const LandmarkSet &q, const MomentumSet &p, const KernelParams &params) {
    params.validate();
    require_valid(q, "path_energy landmarks");
    require_valid(p, "path_energy momentum");
    require_same_shape(q, p, "path_energy");
    return detail::energy_unchecked(q.coords(), p.coords(), params.tau);
}

inline GeodesicPath shoot(const LandmarkSet &q0, const MomentumSet &p0, const TimeGrid &grid,
                          const KernelParams &params) {
    detail::check_shoot_inputs(q0, p0, params);
    GeodesicPath path;
    const std::size_t nodes = grid.steps() + 1;
    path.times.reserve(nodes);
    path.q.reserve(nodes);
    path.p.reserve(nodes);
    path.energies.reserve(nodes);
    Coords q = q0.coords();
    Coords p = p0.coords();
    detail::integrate_euler(q, p, grid, params.tau, [&](std::size_t k, const Coords &qk, const Coords &pk) {
        path.times.push_back(grid.time(k));
        path.q.emplace_back(qk);
        path.p.emplace_back(pk);
        path.energies.push_back(detail::energy_unchecked(qk, pk, params.tau));
    });
    return path;
}

/// The forward map p0 -> q(1): endpoint of shoot() without storing the path.
inline LandmarkSet forward(const LandmarkSet &q0, const MomentumSet &p0, const TimeGrid &grid,
                           const KernelParams &params) {
    detail::check_shoot_inputs(q0, p0, params);
    Coords q = q0.coords();
    Coords p = p0.coords();
    detail::integrate_euler(q, p, grid, params.tau, [](std::size_t, const Coords &, const Coords &) {});
    return LandmarkSet(std::move(q));
}

}  // namespace lddmm
