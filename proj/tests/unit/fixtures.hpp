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

#include <cmath>
#include <memory>
#include <vector>

#include "metapop/metapop.hpp"

namespace fixtures {

using namespace metapop;

/// d = 1 model with only fixed rates: i -> i+1 at b, i -> i-1 at i m,
/// destruction at k, migration out at g i.
inline ModelDefinition linear_model(int cap, double b = 0.7, double m = 0.5, double k = 0.2, double g = 0.3,
                                    double gp = 0.1, double z = 0.4) {
    ModelDefinition md;
    md.name = "linear";
    md.space = std::make_shared<const TypeSpace>(1, cap);
    const auto& s = *md.space;
    md.fixed.resize(s);
    for (std::size_t i = 0; i < s.interior_count(); ++i) {
        const int a = s.animals(i);
        md.fixed.lambda[i].push_back({s.up(i, 0), a + 1, b});
        if (a >= 1) md.fixed.lambda[i].push_back({s.down(i, 0), a - 1, a * m});
        md.fixed.delta[i] = k;
        if (a >= 1) md.fixed.gamma[i] = g * a;
        md.fixed.gamma_prime[i] = gp;
    }
    md.fixed.zeta[0] = z;
    md.slot_reserve = {1.0};
    return md;
}

/// Random admissible scaled state with moderate mu-norm.
inline ScaledState random_state(const SpacePtr& space, Rng& rng, double density = 0.5) {
    ScaledState x(space);
    for (std::size_t k = 0; k < x.size(); ++k)
        if (rng.uniform() < density) x[k] = rng.uniform() / space->weight(k);
    return x;
}

/// Enumerable toy: d = 1, cap = 2, logistic patch births
/// beta_0 = b (5/3 - patch mass)_+, two migrant places.
inline ModelDefinition tiny_model() {
    ModelDefinition md;
    md.name = "tiny";
    md.space = std::make_shared<const TypeSpace>(1, 2);
    const auto& s = *md.space;
    md.fixed.resize(s);
    md.fixed.lambda[0] = {{1, 1, 0.6}};
    md.fixed.lambda[1] = {{2, 2, 0.5}, {0, 0, 0.4}};
    md.fixed.lambda[2] = {{1, 1, 0.8}};
    md.fixed.delta = {0.3, 0.35, 0.5};
    md.fixed.gamma = {0.0, 0.45, 0.6};
    md.fixed.gamma_prime = {0.0, 0.1, 0.2};
    md.fixed.zeta = {0.7};
    md.dependent.families = StateDependence::kBeta | StateDependence::kSigma;
    md.dependent.evaluate = [](const ScaledState& x, StateRates& r) {
        r.beta[0] = 1.2 * std::max(0.0, 5.0 / 3.0 - x.patch_mass());
        r.sigma[0] = 0.9;
        r.sigma[1] = 0.6;
        r.sigma[2] = 0.0;
    };
    md.slot_reserve = {2.0 / 3.0};
    return md;
}

/// Every state reachable from `init`, with the generator restricted to
/// them. States with an exhausted migrant pool are absorbing.
struct Enumerated {
    std::vector<PopulationState> states;
    std::vector<std::vector<std::pair<std::size_t, double>>> out;  // (target, rate)

    std::size_t index(const PopulationState& s) const {
        for (std::size_t k = 0; k < states.size(); ++k)
            if (states[k] == s) return k;
        return states.size();
    }
};

inline bool exhausted(const PopulationState& s) {
    for (int l = 0; l < s.space().varieties(); ++l)
        if (s.free_slots(l) == 0) return true;
    return false;
}

inline Enumerated enumerate_states(const ModelDefinition& m, const PopulationState& init) {
    Enumerated e;
    e.states.push_back(init);
    for (std::size_t k = 0; k < e.states.size(); ++k) {
        e.out.emplace_back();
        if (exhausted(e.states[k])) continue;
        const auto table = event_rate_table(m, e.states[k]);
        for (const auto& ev : table.events) {
            PopulationState t = e.states[k];
            apply_event(m, t, ev.event);
            std::size_t j = e.index(t);
            if (j == e.states.size()) e.states.push_back(t);
            e.out[k].push_back({j, ev.rate});
        }
    }
    return e;
}

}  // namespace fixtures
