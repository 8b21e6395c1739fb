#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "point_set.hpp"

namespace lddmm {

/// Squared misfits E^k = |q1 - F[P^k]|^2 for every visited iteration k.
struct MisfitTrace {
    std::vector<double> values;
    bool converged = false;
    std::size_t iterations_run = 0;

    double initial() const { return values.front(); }
    double final() const { return values.back(); }
    /// E^last / E^0; 0 when the initial misfit is already zero.
    double reduction() const { return values.front() > 0.0 ? values.back() / values.front() : 0.0; }

    friend bool operator==(const MisfitTrace &, const MisfitTrace &) = default;
};

/// Wall-clock seconds spent in each phase of the filter loop.
struct PhaseTimings {
    double shoot = 0.0;
    double stats = 0.0;
    double solve = 0.0;
    double update = 0.0;

    double total() const { return shoot + stats + solve + update; }
};

/// Everything needed to report, compare or re-run one filter run.
struct RunRecord {
    // coordinates within a study; a standalone run uses study "single"
    std::string study = "single";
    std::size_t landmarks = 0;
    std::size_t ensemble_size = 0;
    std::size_t dim = 2;
    std::size_t target_index = 0;
    std::size_t repeat = 0;
    std::uint64_t target_seed = 0;
    std::uint64_t ensemble_seed = 0;
    std::string prng;

    EnkfConfig config;

    MisfitTrace trace;
    /// |mean(P^{k+1}) - mean(P^k)| for each applied update.
    std::vector<double> mean_update_norms;
    MomentumSet final_mean_momentum;
    PhaseTimings timings;

    std::string status = "ok";
    std::string error;

    bool ok() const { return status == "ok"; }
    bool converged() const { return trace.converged; }
};

}  // namespace lddmm
