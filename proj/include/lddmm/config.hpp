#pragma once

#include <cmath>
#include <cstddef>

#include "errors.hpp"
#include "geodesic.hpp"
#include "kernel.hpp"

namespace lddmm {

/// Filter settings. Defaults are the reference parameters: 50 Kalman
/// iterations, 15 Euler steps, xi = 1, tau = 1, absolute tolerance 1e-5.
struct EnkfConfig {
    std::size_t max_iterations = 50;
    double tolerance = 1e-5;
    double xi = 1.0;
    TimeGrid time_grid{15};
    KernelParams kernel{1.0};
    /// Worker threads for shooting ensemble members; 0 = hardware concurrency.
    /// Results do not depend on this value.
    std::size_t threads = 0;

    void validate() const {
        if (max_iterations == 0) { throw InvalidInput("max_iterations must be positive"); }
        if (!(tolerance > 0.0) || !std::isfinite(tolerance)) { throw InvalidInput("tolerance must be positive"); }
        if (!(xi >= 0.0) || !std::isfinite(xi)) { throw InvalidInput("xi must be non-negative and finite"); }
        kernel.validate();
    }
};

}  // namespace lddmm
