#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "config.hpp"
#include "errors.hpp"
#include "geodesic.hpp"
#include "parallel.hpp"
#include "point_set.hpp"
#include "record.hpp"

namespace lddmm {

/// N_E candidate initial momenta, all of the same shape, at filter iteration `generation`.
class Ensemble {
public:
    Ensemble() = default;

    explicit Ensemble(std::vector<MomentumSet> members, std::size_t generation = 0)
        : members_(std::move(members)), generation_(generation) {
        if (members_.size() < 2) { throw InvalidInput("ensemble needs at least two members"); }
        for (const auto &m : members_) {
            require_valid(m, "ensemble member");
            require_same_shape(m, members_.front(), "ensemble member");
        }
    }

    std::size_t size() const noexcept { return members_.size(); }
    Eigen::Index dim() const { return members_.front().dim(); }
    Eigen::Index landmarks() const { return members_.front().size(); }
    std::size_t generation() const noexcept { return generation_; }

    const MomentumSet &operator[](std::size_t j) const { return members_[j]; }
    const std::vector<MomentumSet> &members() const noexcept { return members_; }

    /// Stacked member momenta, one flattened member per column.
    Eigen::MatrixXd as_matrix() const {
        Eigen::MatrixXd out(dim() * landmarks(), static_cast<Eigen::Index>(size()));
        for (std::size_t j = 0; j < size(); ++j) { out.col(static_cast<Eigen::Index>(j)) = members_[j].flat(); }
        return out;
    }

    friend bool operator==(const Ensemble &, const Ensemble &) = default;

private:
    std::vector<MomentumSet> members_;
    std::size_t generation_ = 0;
};

namespace detail {

template <typename Tag>
PointSet<Tag> mean_of(const std::vector<PointSet<Tag>> &sets) {
    PointSet<Tag> acc = sets.front();
    for (std::size_t j = 1; j < sets.size(); ++j) { acc += sets[j]; }
    acc *= 1.0 / static_cast<double>(sets.size());
    return acc;
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

/// Componentwise mean over members, summed in member order.
inline MomentumSet ensemble_mean(const Ensemble &e) { return detail::mean_of(e.members()); }

struct EnsemblePrediction {
    std::vector<LandmarkSet> predictions;  ///< f[P^j] per member
    LandmarkSet mean;                      ///< F[P] = mean of predictions
};

/// Shoots every member from q0 (in parallel across members) and averages the endpoints.
inline EnsemblePrediction ensemble_forward(const Ensemble &e, const LandmarkSet &q0, const EnkfConfig &cfg) {
    require_valid(q0, "template");
    if (e.size() < 2) { throw InvalidInput("ensemble_forward: empty ensemble"); }
    require_same_shape(q0, e[0], "ensemble_forward");
    cfg.kernel.validate();
    EnsemblePrediction out;
    out.predictions.resize(e.size());
    parallel_for(e.size(), cfg.threads, [&](std::size_t j) {
        try {
            out.predictions[j] = forward(q0, e[j], cfg.time_grid, cfg.kernel);
        } catch (const BlowUpError &err) {
            throw MemberBlowUp(e.generation(), j, err.step(), err.what());
        }
    });
    out.mean = detail::mean_of(out.predictions);
    return out;
}

/// Scaled, mean-centred columns: Cov_QQ = Aq Aq^T and Cov_PQ = Ap Aq^T.
struct Anomalies {
    Eigen::MatrixXd ap;
    Eigen::MatrixXd aq;
};

inline Anomalies anomalies(const Ensemble &e, const std::vector<LandmarkSet> &predictions) {
    if (e.size() < 2) { throw InvalidInput("anomalies: need at least two members"); }
    if (predictions.size() != e.size()) { throw InvalidInput("anomalies: one prediction per member required"); }
    for (const auto &pred : predictions) { require_same_shape(pred, e[0], "anomalies"); }

    const double scale = 1.0 / std::sqrt(static_cast<double>(e.size() - 1));
    const MomentumSet p_mean = ensemble_mean(e);
    const LandmarkSet q_mean = detail::mean_of(predictions);
    const Eigen::Index n = e.dim() * e.landmarks();
    Anomalies a{Eigen::MatrixXd(n, static_cast<Eigen::Index>(e.size())),
                Eigen::MatrixXd(n, static_cast<Eigen::Index>(e.size()))};
    for (std::size_t j = 0; j < e.size(); ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        a.ap.col(col) = scale * (e[j].flat() - p_mean.flat());
        a.aq.col(col) = scale * (predictions[j].flat() - q_mean.flat());
    }
    return a;
}

enum class GainSolver {
    /// Cholesky of the dM x dM matrix Aq Aq^T + xi I.
    Dense,
    /// Push-through identity Ap Aq^T (Aq Aq^T + xi I)^-1 = Ap (Aq^T Aq + xi I)^-1 Aq^T,
    /// an N_E x N_E Cholesky. Requires xi > 0 when N_E > dM.
    EnsembleSpace,
};

/// K = Cov_PQ (Cov_QQ + xi I)^-1, factorised once and applied to any number of residuals.
class KalmanGain {
public:
    KalmanGain(Anomalies a, double xi, GainSolver solver = GainSolver::Dense)
        : a_(std::move(a)), solver_(solver) {
        if (a_.ap.rows() != a_.aq.rows() || a_.ap.cols() != a_.aq.cols()) {
            throw InvalidInput("kalman gain: anomaly matrices differ in shape");
        }
        if (!std::isfinite(xi) || xi < 0.0) { throw NumericalError("kalman gain: xi must be finite and >= 0"); }
        if (!a_.ap.allFinite() || !a_.aq.allFinite()) { throw NumericalError("kalman gain: non-finite anomalies"); }
        Eigen::MatrixXd system;
        if (solver_ == GainSolver::Dense) {
            system = a_.aq * a_.aq.transpose();
        } else {
            system = a_.aq.transpose() * a_.aq;
        }
        system.diagonal().array() += xi;
        llt_.compute(system);
        if (llt_.info() != Eigen::Success) {
            throw NumericalError("kalman gain: regularised covariance is not positive definite (xi = " +
                                 std::to_string(xi) + ")");
        }
    }

    Eigen::Index state_size() const { return a_.ap.rows(); }

    /// Applies the gain column-wise to flattened residuals (dM x k).
    Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd> &residuals) const {
        if (residuals.rows() != a_.aq.rows()) { throw InvalidInput("kalman gain: residual length mismatch"); }
        if (solver_ == GainSolver::Dense) {
            return a_.ap * (a_.aq.transpose() * llt_.solve(residuals));
        }
        return a_.ap * llt_.solve(a_.aq.transpose() * residuals);
    }

    MomentumSet apply(const LandmarkSet &residual) const {
        const Eigen::MatrixXd out = apply(Eigen::MatrixXd(residual.flat()));
        return MomentumSet::from_flat(out.col(0), residual.dim());
    }

private:
    Anomalies a_;
    GainSolver solver_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Cov_PQ (Cov_QQ + xi I)^-1 vec(residual), reshaped to d x M.
inline MomentumSet kalman_apply(const Eigen::MatrixXd &ap, const Eigen::MatrixXd &aq, double xi,
                                const LandmarkSet &residual, GainSolver solver = GainSolver::Dense) {
    return KalmanGain(Anomalies{ap, aq}, xi, solver).apply(residual);
}

/// Output of enkf_match: the last ensemble, its misfit history and a run record.
struct MatchResult {
    Ensemble final;
    MisfitTrace trace;
    RunRecord record;
    LandmarkSet final_prediction;  ///< F[P] of the final ensemble
};

/// Iterative ensemble Kalman matching of q0 onto q1.
///
/// At each iteration k the ensemble is shot once; E^k = |q1 - F[P^k]|^2 is
/// recorded, and the loop stops when sqrt(E^k) <= tolerance or k reaches
/// max_iterations. Otherwise every member moves by the shared gain applied
/// to its own residual q1 - f[P^{k,j}].
inline MatchResult enkf_match(const LandmarkSet &q0, const LandmarkSet &q1, const Ensemble &e0,
                              const EnkfConfig &cfg, GainSolver solver = GainSolver::Dense) {
    cfg.validate();
    require_valid(q0, "template");
    require_valid(q1, "target");
    require_same_shape(q0, q1, "enkf_match");
    if (e0.size() < 2) { throw InvalidInput("enkf_match: ensemble needs at least two members"); }
    require_same_shape(q0, e0[0], "enkf_match");

    using clock = std::chrono::steady_clock;
    RunRecord record;
    record.landmarks = static_cast<std::size_t>(q0.size());
    record.dim = static_cast<std::size_t>(q0.dim());
    record.ensemble_size = e0.size();
    record.config = cfg;

    MisfitTrace trace;
    Ensemble current = e0;
    LandmarkSet last_mean;
    MomentumSet p_mean = ensemble_mean(current);
    const Eigen::Index state = q0.dim() * q0.size();
    const auto members = static_cast<Eigen::Index>(current.size());

    for (std::size_t k = 0;; ++k) {
        auto t0 = clock::now();
        EnsemblePrediction pred = ensemble_forward(current, q0, cfg);
        record.timings.shoot += detail::seconds_since(t0);

        t0 = clock::now();
        const double misfit = (q1 - pred.mean).squared_norm();
        if (!std::isfinite(misfit)) { throw NumericalError("non-finite misfit at iteration " + std::to_string(k)); }
        trace.values.push_back(misfit);
        last_mean = pred.mean;
        if (std::sqrt(misfit) <= cfg.tolerance) {
            trace.converged = true;
            trace.iterations_run = k;
            record.timings.stats += detail::seconds_since(t0);
            break;
        }
        if (k == cfg.max_iterations) {
            trace.iterations_run = k;
            record.timings.stats += detail::seconds_since(t0);
            break;
        }
        Anomalies a = anomalies(current, pred.predictions);
        Eigen::MatrixXd residuals(state, members);
        for (Eigen::Index j = 0; j < members; ++j) {
            residuals.col(j) = q1.flat() - pred.predictions[static_cast<std::size_t>(j)].flat();
        }
        record.timings.stats += detail::seconds_since(t0);

        t0 = clock::now();
        const KalmanGain gain(std::move(a), cfg.xi, solver);
        record.timings.solve += detail::seconds_since(t0);

        t0 = clock::now();
        const Eigen::MatrixXd updates = gain.apply(residuals);
        std::vector<MomentumSet> next;
        next.reserve(current.size());
        for (Eigen::Index j = 0; j < members; ++j) {
            MomentumSet m = current[static_cast<std::size_t>(j)];
            m.flat() += updates.col(j);
            next.push_back(std::move(m));
        }
        current = Ensemble(std::move(next), k + 1);
        MomentumSet new_mean = ensemble_mean(current);
        record.mean_update_norms.push_back(std::sqrt((new_mean - p_mean).squared_norm()));
        p_mean = std::move(new_mean);
        record.timings.update += detail::seconds_since(t0);
    }

    record.trace = trace;
    record.final_mean_momentum = p_mean;
    return MatchResult{std::move(current), std::move(trace), std::move(record), std::move(last_mean)};
}

}  // namespace lddmm
