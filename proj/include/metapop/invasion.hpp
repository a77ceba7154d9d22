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

#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "metapop/models.hpp"
#include "metapop/tagged.hpp"

namespace metapop {

/// State of the invasion process W: the juvenile invader in migration, the
/// patch it settled in with i residents and j invaders, or extinct there.
/// `emitted` counts invader migrants that have left the patch.
struct WState {
    enum class Where { Migrant, Patch, Dead };
    Where where = Where::Migrant;
    int i = 0;
    int j = 0;
    int emitted = 0;

    static WState juvenile() { return {}; }
    static WState settled(int residents) { return {Where::Patch, residents, 1, 0}; }
    bool is_dead() const { return where == Where::Dead; }
    bool operator==(const WState&) const = default;
};

/// Life history of a p-individual: the patch colonized by one invader
/// migrant, whose offspring are the invader migrants leaving it. The
/// environment is the resident-only path; resident arrivals use its
/// migrant density, settlement of the juvenile its patch densities.
class WChain {
public:
    using State = WState;

    WChain(const MG2Params& p, SpacePtr space) : p_(p), space_(std::move(space)) {
        p_.check();
        if (space_->varieties() != 2 || space_->cap() != p_.cap)
            throw std::invalid_argument("WChain: environment space must be the two-variety space of the model");
        for (int i = 0; i <= p_.cap; ++i) resident_index_.push_back(*space_->index_of({i, 0}));
    }

    bool absorbing(const State& s) const { return s.is_dead(); }

    void channels(const State& s, const Environment& env, std::vector<Channel<State>>& out) const {
        out.clear();
        if (s.is_dead()) return;
        const auto& x = *env.x;
        State dead = s;
        dead.where = State::Where::Dead;
        if (s.where == State::Where::Migrant) {
            for (int i = 0; i + 1 <= p_.cap; ++i) {
                State to = s;
                to.where = State::Where::Patch;
                to.i = i;
                to.j = 1;
                out.push_back({to, p_.alpha * x[resident_index_[static_cast<std::size_t>(i)]] * p_.settle[1][static_cast<std::size_t>(i)]});
            }
            out.push_back({dead, p_.mu_D[1]});
            return;
        }
        const int i = s.i, j = s.j;
        const auto n = static_cast<std::size_t>(i + j);
        const bool room = i + j + 1 <= p_.cap;
        auto with = [&](int di, int dj, int dm) {
            State to = s;
            to.i += di;
            to.j += dj;
            to.emitted += dm;
            return to;
        };
        if (room) {
            out.push_back({with(0, 1, 0), j * p_.lambda[1][n] * (1 - p_.disp[1][n])});
            out.push_back({with(1, 0, 0), i * p_.lambda[0][n] * (1 - p_.disp[0][n]) + x.migrant(0) * p_.alpha * p_.settle[0][n]});
        }
        if (i >= 1) out.push_back({with(-1, 0, 0), i * p_.mu[0][n]});
        out.push_back({with(0, 0, 1), j * p_.lambda[1][n] * p_.disp[1][n]});
        if (j >= 2) out.push_back({with(0, -1, 0), j * p_.mu[1][n]});
        out.push_back({dead, (j == 1 ? p_.mu[1][n] : 0.0) + p_.gamma[n]});
    }

    const MG2Params& params() const { return p_; }

private:
    MG2Params p_;
    SpacePtr space_;
    std::vector<std::size_t> resident_index_;
};

struct WPath {
    TaggedPath<WState> path;
    std::vector<double> offspring_times;
    bool alive_at_horizon = false;
};

/// Simulates W up to `horizon` in the resident environment `driver`
/// (a path of the two-variety model carrying only first-variety mass).
/// By default the process starts from the juvenile migrant; `settled_in`
/// forces initial settlement into a patch with that many residents.
inline WPath simulate_W(const MG2Params& p, const ModelDefinition& model, Driver& driver, Rng& rng, double horizon,
                        std::optional<int> settled_in = std::nullopt) {
    const auto& space = model.types();
    {
        detail::EnvBuffers b(model);
        driver.window(0.0, b.x, b.rates);
        double invader = b.x.migrant(1) > 1e-9 ? b.x.migrant(1) : 0.0;
        for (std::size_t k = 0; k < space.interior_count(); ++k)
            if (space.count_of(k, 1) > 0 && b.x[k] > 1e-9) invader += b.x[k];
        if (invader > 0.0) throw std::invalid_argument("simulate_W: resident path carries second-variety mass");
    }
    WChain chain(p, model.space);
    WState init = WState::juvenile();
    if (settled_in) {
        if (*settled_in < 0 || *settled_in + 1 > p.cap) throw std::invalid_argument("simulate_W: settlement type out of range");
        init = WState::settled(*settled_in);
    }
    WPath out;
    out.path = simulate_chain(chain, model, driver, init, horizon, rng);
    int last = 0;
    for (const auto& [t, s] : out.path.jumps) {
        if (s.emitted > last) out.offspring_times.push_back(t);
        last = s.emitted;
    }
    out.alive_at_horizon = !out.path.final_state().is_dead();
    return out;
}

}  // namespace metapop
