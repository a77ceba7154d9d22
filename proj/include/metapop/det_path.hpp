/*
   Copyright 2026 The metapop Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "metapop/state.hpp"

namespace metapop {

/// Solution of the deterministic drift equation sampled on a grid, with the
/// drift stored at each grid point for cubic Hermite interpolation.
struct DeterministicPath {
    std::vector<double> times;
    std::vector<ScaledState> states;
    std::vector<std::vector<double>> derivatives;
    double tolerance = 0.0;
    std::int64_t accepted_steps = 0;
    std::int64_t rejected_steps = 0;
    std::int64_t clipped_count = 0;  ///< negative coordinates clipped to zero
    double clipped_mass = 0.0;       ///< mu-weighted mass removed by clipping

    double horizon() const { return times.empty() ? 0.0 : times.back(); }

    /// Interpolated state at t in [times.front(), times.back()].
    ScaledState at(double t) const {
        if (times.empty()) throw std::logic_error("DeterministicPath::at on empty path");
        if (t <= times.front()) return states.front();
        if (t >= times.back()) return states.back();
        auto it = std::upper_bound(times.begin(), times.end(), t);
        const std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
        ScaledState out = states[k];
        interpolate_into(k, t, out);
        return out;
    }

    /// As `at`, writing into an existing state of the right shape.
    void at(double t, ScaledState& out) const {
        if (t <= times.front()) {
            out = states.front();
            return;
        }
        if (t >= times.back()) {
            out = states.back();
            return;
        }
        auto it = std::upper_bound(times.begin(), times.end(), t);
        const std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
        interpolate_into(k, t, out);
    }

private:
    void interpolate_into(std::size_t k, double t, ScaledState& out) const {
        const double h = times[k + 1] - times[k];
        const double s = (t - times[k]) / h;
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
        const double h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s);
        const double h11 = s * s * (s - 1);
        const auto& a = states[k];
        const auto& b = states[k + 1];
        const auto& fa = derivatives[k];
        const auto& fb = derivatives[k + 1];
        for (std::size_t z = 0; z < a.size(); ++z)
            out[z] = std::max(0.0, h00 * a[z] + h10 * h * fa[z] + h01 * b[z] + h11 * h * fb[z]);
    }
};

}  // namespace metapop
