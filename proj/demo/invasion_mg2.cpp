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

// Invasion of a two-variety patch model: branching predictions for a rare
// invader against the resident equilibrium.

#include <cstdio>

#include "metapop/metapop.hpp"

using namespace metapop;

int main() {
    const auto p = mg2_defaults();
    const auto xbar = resident_equilibrium(p);
    std::printf("resident equilibrium: occupied mass %.4f, migrants %.4f\n",
                xbar.patch_mass() - xbar[0], xbar[xbar.space().migrant_coord(0)]);

    Rng rng(7, 0);
    const auto rec = collect_offspring(p, xbar, 200.0, 5000, rng);
    const auto mbar = mean_offspring(rec);
    std::printf("mean offspring %.4f (se %.4f, tail bound %.2e)\n", mbar.mean, mbar.se, mbar.tail_bound);

    const auto rho = malthusian_rate(offspring_intensity(rec, 0.25), 3 * mbar.se);
    std::printf("malthusian rate %.4f\n", rho.rho);

    const auto q = extinction_prob(rec, rng);
    std::printf("extinction probability %.4f (se %.4f)\n", q.q, q.se);
    for (int K : {1, 2, 5, 10})
        std::printf("  establishment with %2d introductions: %.4f\n", K, establishment_probability(q.q, K));
}
