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

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "metapop/model.hpp"
#include "metapop/state.hpp"

namespace metapop {

/// The six transition families plus migrant birth.
enum class EventKind {
    TypeChange,    ///< I: one patch changes type
    PatchBirth,    ///< II
    PatchDeath,    ///< III
    MigrationOut,  ///< IV: an animal leaves its patch into a free migrant place
    MigrantBirth,  ///< IV': a patch gives birth to a migrant
    Settlement,    ///< V: a migrant settles in a patch
    MigrantDeath,  ///< VI
};

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::TypeChange: return "type-change";
        case EventKind::PatchBirth: return "patch-birth";
        case EventKind::PatchDeath: return "patch-death";
        case EventKind::MigrationOut: return "migration-out";
        case EventKind::MigrantBirth: return "migrant-birth";
        case EventKind::Settlement: return "settlement";
        case EventKind::MigrantDeath: return "migrant-death";
    }
    return "?";
}

/// `from` is the patch type losing a patch (I, III, IV, V) or producing a
/// migrant (IV'); `to` the type gaining one (I, II, IV, V), kOverflow when it
/// lies above the cap, or kNoType.
struct Event {
    EventKind kind = EventKind::TypeChange;
    int from = kNoType;
    int to = kNoType;
    int variety = 0;

    bool operator==(const Event&) const = default;
    auto key() const { return std::make_tuple(static_cast<int>(kind), from, to, variety); }
    bool overflows() const { return to == kOverflow; }
};

struct RatedEvent {
    Event event;
    double rate = 0.0;
};

struct EventRateTable {
    std::vector<RatedEvent> events;  ///< positive-rate events inside the truncation
    double total = 0.0;              ///< sum of rates in `events`
    double truncation_rate = 0.0;    ///< summed rate of suppressed events leaving the cap
};

/// Enumerates every event with positive rate at `state`. Events that would
/// push a patch above the cap are excluded and their rate tallied.
inline EventRateTable event_rate_table(const ModelDefinition& model, const PopulationState& state) {
    const auto& space = model.types();
    const std::size_t n = space.interior_count();
    const int d = space.varieties();
    const double scale = static_cast<double>(state.scale());
    const ScaledState x = state.scaled();
    const StateRates dep = model.evaluate(x);
    check_rates(dep);

    std::map<std::tuple<int, int, int, int>, RatedEvent> acc;
    double lost = 0.0;
    auto add = [&](const Event& e, double rate) {
        if (!(rate > 0.0)) return;
        if (e.overflows()) {
            lost += rate;
            return;
        }
        auto [it, inserted] = acc.try_emplace(e.key(), RatedEvent{e, 0.0});
        it->second.rate += rate;
    };

    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = static_cast<double>(state.count(i));
        const int ii = static_cast<int>(i);
        add({EventKind::PatchBirth, kNoType, ii, 0}, scale * dep.beta[i]);
        if (xi == 0.0) continue;
        for (const auto& t : model.fixed.lambda[i]) add({EventKind::TypeChange, ii, t.to, 0}, xi * t.rate);
        add({EventKind::PatchDeath, ii, kNoType, 0}, xi * (model.fixed.delta[i] + dep.delta[i]));
        for (int l = 0; l < d; ++l) {
            const std::size_t il = i * static_cast<std::size_t>(d) + static_cast<std::size_t>(l);
            if (space.count_of(i, l) > 0)
                add({EventKind::MigrationOut, ii, space.down(i, l), l}, xi * (model.fixed.gamma[il] + dep.gamma[il]));
            add({EventKind::MigrantBirth, ii, kNoType, l}, xi * (model.fixed.gamma_prime[il] + dep.gamma_prime[il]));
        }
    }
    for (std::size_t p = 0; p < model.dependent.lambda_pattern.size(); ++p) {
        const auto& e = model.dependent.lambda_pattern[p];
        add({EventKind::TypeChange, e.from, e.to, 0}, static_cast<double>(state.count(static_cast<std::size_t>(e.from))) * dep.lambda[p]);
    }
    for (int l = 0; l < d; ++l) {
        const auto xl = static_cast<double>(state.migrants(l));
        if (xl == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) {
            const double rate = xl * x[i] * dep.sigma[static_cast<std::size_t>(l) * n + i];
            add({EventKind::Settlement, static_cast<int>(i), space.up(i, l), l}, rate);
        }
        add({EventKind::MigrantDeath, kNoType, kNoType, l}, xl * (model.fixed.zeta[static_cast<std::size_t>(l)] + dep.zeta[static_cast<std::size_t>(l)]));
    }

    EventRateTable table;
    table.truncation_rate = lost;
    for (auto& [key, ev] : acc) {
        table.total += ev.rate;
        table.events.push_back(ev);
    }
    return table;
}

/// Applies the increment of `e`. Overflowing events leave the state unchanged.
/// Throws std::logic_error if the event would make a count negative.
inline void apply_event(const ModelDefinition& model, PopulationState& state, const Event& e) {
    if (e.overflows()) return;
    const auto& space = model.types();
    auto dec = [&](std::size_t k) {
        if (state.count(k) <= 0) throw std::logic_error("apply_event: count would become negative");
        --state.count(k);
    };
    auto take_slot = [&](int l) {
        if (state.free_slots(l) <= 0) throw std::logic_error("apply_event: no free migrant place");
        --state.free_slots(l);
        ++state.count(space.migrant_coord(l));
    };
    auto release_slot = [&](int l) {
        dec(space.migrant_coord(l));
        ++state.free_slots(l);
    };
    switch (e.kind) {
        case EventKind::TypeChange:
            dec(static_cast<std::size_t>(e.from));
            ++state.count(static_cast<std::size_t>(e.to));
            break;
        case EventKind::PatchBirth: ++state.count(static_cast<std::size_t>(e.to)); break;
        case EventKind::PatchDeath: dec(static_cast<std::size_t>(e.from)); break;
        case EventKind::MigrationOut:
            dec(static_cast<std::size_t>(e.from));
            ++state.count(static_cast<std::size_t>(e.to));
            take_slot(e.variety);
            break;
        case EventKind::MigrantBirth: take_slot(e.variety); break;
        case EventKind::Settlement:
            dec(static_cast<std::size_t>(e.from));
            ++state.count(static_cast<std::size_t>(e.to));
            release_slot(e.variety);
            break;
        case EventKind::MigrantDeath: release_slot(e.variety); break;
    }
}

inline std::string describe(const TypeSpace& space, const Event& e) {
    auto name = [&](int k) -> std::string {
        if (k == kOverflow) return "overflow";
        if (k == kNoType) return "-";
        return space.label(static_cast<std::size_t>(k));
    };
    return std::string(to_string(e.kind)) + " " + name(e.from) + "->" + name(e.to) + " v" + std::to_string(e.variety);
}

}  // namespace metapop
