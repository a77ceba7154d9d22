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

// Host-parasite model: one stochastic run per N against the deterministic
// path, and the sup mu-distance between them.

#include <cstdio>

#include "metapop/metapop.hpp"

using namespace metapop;

int main() {
    const auto m = load_model("kretzschmar");
    const auto x0 = default_initial(m);
    const double T = 2.0;
    IntegrateOptions io;
    io.grid = uniform_grid(T, 41);
    const auto det = integrate(m.model, x0, T, io);
    std::printf("deterministic: host mass %.4f -> %.4f, phi %.4f -> %.4f\n", x0.patch_mass(),
                det.states.back().patch_mass(), kretzschmar_phi(x0, 1.0), kretzschmar_phi(det.states.back(), 1.0));

    Rng root(2024, 0);
    for (std::int64_t N : {200, 800, 3200, 12800}) {
        Rng rng = root.split(static_cast<std::uint64_t>(N));
        SimulationOptions opt;
        opt.grid = io.grid;
        const auto traj = simulate(m.model, PopulationState::from_scaled(x0, N, m.model.slot_reserve), T, rng, opt);
        std::printf("N=%6lld  events=%9lld  sup mu-error=%.4f  sqrt(N)*err=%.3f\n", static_cast<long long>(N),
                    static_cast<long long>(traj.event_count), sup_mu_error(traj, det),
                    std::sqrt(static_cast<double>(N)) * sup_mu_error(traj, det));
    }
}
