#pragma once

#include <cmath>
#include <cstddef>

namespace charlab::detail {

/// Split an integration interval into fixed steps of dt plus one short
/// remainder step that lands exactly on the endpoint.
inline std::size_t full_steps(double length, double dt, double& remainder) {
    double raw = length / dt;
    auto steps = static_cast<std::size_t>(std::floor(raw + 1e-9));
    remainder = length - static_cast<double>(steps) * dt;
    if (remainder < 1e-9 * dt) remainder = 0.0;
    return steps;
}

}  // namespace charlab::detail
