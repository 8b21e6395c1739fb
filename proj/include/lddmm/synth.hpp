#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

#include "config.hpp"
#include "enkf.hpp"
#include "errors.hpp"
#include "geodesic.hpp"
#include "point_set.hpp"
#include "random.hpp"

namespace lddmm {

/// Synthetic problem description. Targets come from N(0, std^2) momenta pushed
/// through the forward map; initial ensembles are componentwise U[low, high].
struct SynthSpec {
    std::size_t landmarks = 10;
    std::size_t dim = 2;
    std::uint64_t seed = 0;
    double target_momentum_std = 1.0;
    double ensemble_low = -1.0;
    double ensemble_high = 1.0;
    std::size_t ensemble_size = 10;

    // low == high and std == 0 are accepted as degenerate overrides
    void validate() const {
        if (landmarks < 1) { throw InvalidInput("synth: need at least one landmark"); }
        if (dim != 2) { throw InvalidInput("synth: the circle template is two-dimensional"); }
        if (ensemble_size < 2) { throw InvalidInput("synth: ensemble needs at least two members"); }
        if (!(ensemble_low <= ensemble_high)) { throw InvalidInput("synth: ensemble_low must not exceed ensemble_high"); }
        if (!(target_momentum_std >= 0.0) || !std::isfinite(target_momentum_std)) {
            throw InvalidInput("synth: target momentum std must be finite and non-negative");
        }
    }
};

/// M points evenly spaced on the unit circle, starting at (1, 0).
inline LandmarkSet circle_template(std::size_t count) {
    if (count < 1) { throw InvalidInput("circle_template: need at least one landmark"); }
    LandmarkSet q(2, static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
        q(0, static_cast<Eigen::Index>(i)) = std::cos(theta);
        q(1, static_cast<Eigen::Index>(i)) = std::sin(theta);
    }
    return q;
}

struct SynthTarget {
    LandmarkSet q0;
    LandmarkSet q1;
    MomentumSet true_p0;
};

/// Draws true_p0 from the target stream of spec.seed and shoots the circle template with it.
inline SynthTarget make_target(const SynthSpec &spec, const EnkfConfig &cfg) {
    spec.validate();
    SynthTarget t;
    t.q0 = circle_template(spec.landmarks);
    t.true_p0 = MomentumSet(t.q0.dim(), t.q0.size());
    auto stream = rng::substream(spec.seed, rng::target_momentum);
    // landmark-major, coordinate-minor
    for (Eigen::Index i = 0; i < t.true_p0.size(); ++i) {
        for (Eigen::Index c = 0; c < t.true_p0.dim(); ++c) {
            t.true_p0(c, i) = spec.target_momentum_std * stream.normal();
        }
    }
    t.q1 = forward(t.q0, t.true_p0, cfg.time_grid, cfg.kernel);
    return t;
}

/// Member j is drawn from its own substream, so it does not depend on how many
/// other members exist or in which order they are generated.
inline MomentumSet make_ensemble_member(const SynthSpec &spec, std::size_t j) {
    MomentumSet m(static_cast<Eigen::Index>(spec.dim), static_cast<Eigen::Index>(spec.landmarks));
    auto stream = rng::substream(spec.seed, rng::ensemble_member, j);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        for (Eigen::Index c = 0; c < m.dim(); ++c) { m(c, i) = stream.uniform(spec.ensemble_low, spec.ensemble_high); }
    }
    return m;
}

inline Ensemble make_initial_ensemble(const SynthSpec &spec) {
    spec.validate();
    std::vector<MomentumSet> members;
    members.reserve(spec.ensemble_size);
    for (std::size_t j = 0; j < spec.ensemble_size; ++j) { members.push_back(make_ensemble_member(spec, j)); }
    return Ensemble(std::move(members));
}

}  // namespace lddmm
