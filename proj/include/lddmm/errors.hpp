#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lddmm {

/// Raised when arguments violate a documented precondition (shape, sign, finiteness).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A dense factorisation or solve failed.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be read, written or parsed; the message names the path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite state produced while integrating the landmark ODEs.
class BlowUpError : public std::runtime_error {
public:
    BlowUpError(std::size_t step, const std::string &what)
        : std::runtime_error("geodesic blow-up at step " + std::to_string(step) + ": " + what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// A member of the ensemble failed to shoot; carries iteration and member indices.
class MemberBlowUp : public std::runtime_error {
public:
    MemberBlowUp(std::size_t iteration, std::size_t member, std::size_t step, const std::string &what)
        : std::runtime_error("iteration " + std::to_string(iteration) + ", member " + std::to_string(member) +
                             ": " + what),
          iteration_(iteration), member_(member), step_(step) {}

    std::size_t iteration() const noexcept { return iteration_; }
    std::size_t member() const noexcept { return member_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t iteration_;
    std::size_t member_;
    std::size_t step_;
};

}  // namespace lddmm
