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
#include <utility>
#include <vector>

namespace metapop {

/// Type of one tagged patch: an interior index, or destroyed (absorbing).
struct PatchState {
    static constexpr int kDestroyed = -1;
    int type = kDestroyed;

    static PatchState destroyed() { return PatchState{kDestroyed}; }
    bool is_destroyed() const { return type == kDestroyed; }
    bool operator==(const PatchState&) const = default;
};

/// Right-continuous piecewise-constant path of one tagged unit.
template <class State>
struct TaggedPath {
    State initial{};
    std::vector<std::pair<double, State>> jumps;

    State at(double t) const {
        auto it = std::upper_bound(jumps.begin(), jumps.end(), t,
                                   [](double v, const std::pair<double, State>& j) { return v < j.first; });
        if (it == jumps.begin()) return initial;
        return std::prev(it)->second;
    }

    const State& final_state() const { return jumps.empty() ? initial : jumps.back().second; }
};

}  // namespace metapop
