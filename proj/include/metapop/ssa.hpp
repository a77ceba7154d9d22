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
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "metapop/det_path.hpp"
#include "metapop/events.hpp"
#include "metapop/model.hpp"
#include "metapop/paths.hpp"
#include "metapop/rng.hpp"
#include "metapop/state.hpp"

namespace metapop {

/// Raised by `step` when no event has positive rate.
class Absorbed : public std::runtime_error {
public:
    Absorbed() : std::runtime_error("state is absorbing: total rate is zero") {}
};

class GridMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct StepResult {
    double dt = 0.0;
    Event event;
    PopulationState state;
};

/// One exact jump from `state`: exponential holding time at the total rate,
/// event chosen proportionally to its rate. Reference implementation built on
/// event_rate_table; `simulate` uses the incremental engine below.
inline StepResult step(const ModelDefinition& model, const PopulationState& state, Rng& rng) {
    const EventRateTable table = event_rate_table(model, state);
    if (!(table.total > 0.0)) throw Absorbed();
    StepResult out;
    out.dt = rng.exponential(table.total);
    double u = rng.uniform() * table.total;
    std::size_t pick = table.events.size() - 1;
    for (std::size_t k = 0; k < table.events.size(); ++k) {
        u -= table.events[k].rate;
        if (u < 0.0) {
            pick = k;
            break;
        }
    }
    out.event = table.events[pick].event;
    out.state = state;
    apply_event(model, out.state, out.event);
    return out;
}

enum class StopReason {
    Horizon,         ///< reached T (or the state became absorbing before T)
    SlotExhaustion,  ///< some variety ran out of free migrant places
    TruncationLoss,  ///< suppressed events exceeded the budget
    Condition,       ///< the caller's stop predicate fired
};

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::Horizon: return "horizon";
        case StopReason::SlotExhaustion: return "slot-exhaustion";
        case StopReason::TruncationLoss: return "truncation-loss";
        case StopReason::Condition: return "condition";
    }
    return "?";
}

struct SimulationOptions {
    /// Sampling times in [0, T], increasing. Empty means {0, T}.
    std::vector<double> grid;
    bool record_events = false;
    /// Suppressed events tolerated before aborting. Negative: suppress and
    /// tally without limit.
    std::int64_t truncation_budget = 0;
    /// Initial interior types of patches to follow individually.
    std::vector<int> tags;
    /// Checked after every event; returning true stops the run.
    std::function<bool(const PopulationState&)> stop_when;
    std::int64_t full_recompute_every = 10000;
};

struct TimedEvent {
    double time = 0.0;
    Event event;
};

/// Path of the full process. After a stop before T the process is frozen,
/// so the remaining snapshots repeat the stopped state.
struct Trajectory {
    PopulationState initial;
    std::vector<TimedEvent> events;
    std::vector<double> grid;
    std::vector<ScaledState> snapshots;
    StopReason stop_reason = StopReason::Horizon;
    double stop_time = 0.0;
    std::int64_t event_count = 0;
    std::int64_t truncation_loss = 0;
    PopulationState final_state;
    std::vector<TaggedPath<PatchState>> tagged;

    bool reached_horizon() const { return stop_reason == StopReason::Horizon; }
};

/// Uniform grid of `points` >= 2 times on [0, T].
inline std::vector<double> uniform_grid(double T, std::size_t points) {
    std::vector<double> g(points);
    for (std::size_t k = 0; k < points; ++k)
        g[k] = T * static_cast<double>(k) / static_cast<double>(points - 1);
    g.back() = T;
    return g;
}

namespace detail {

/// Incremental direct-method engine. Fixed-rate channels are grouped by the
/// coordinate whose count multiplies them, and group totals are updated only
/// for coordinates touched by the last event; state-dependent channels are
/// re-evaluated after every event.
class Engine {
public:
    Engine(const ModelDefinition& model, PopulationState state)
        : model_(model), space_(model.types()), state_(std::move(state)), x_(state_.scaled()),
          rates_(model.make_rates()) {
        const std::size_t n = space_.interior_count();
        const int d = space_.varieties();
        const auto coords = space_.size();
        groups_.resize(coords);
        group_unit_.assign(coords, 0.0);

        for (std::size_t i = 0; i < n; ++i) {
            const int ii = static_cast<int>(i);
            for (const auto& t : model_.fixed.lambda[i])
                if (t.rate > 0.0) groups_[i].push_back({{EventKind::TypeChange, ii, t.to, 0}, t.rate});
            if (model_.fixed.delta[i] > 0.0)
                groups_[i].push_back({{EventKind::PatchDeath, ii, kNoType, 0}, model_.fixed.delta[i]});
            for (int l = 0; l < d; ++l) {
                const std::size_t il = i * static_cast<std::size_t>(d) + static_cast<std::size_t>(l);
                if (model_.fixed.gamma[il] > 0.0 && space_.count_of(i, l) > 0)
                    groups_[i].push_back({{EventKind::MigrationOut, ii, space_.down(i, l), l}, model_.fixed.gamma[il]});
                if (model_.fixed.gamma_prime[il] > 0.0)
                    groups_[i].push_back({{EventKind::MigrantBirth, ii, kNoType, l}, model_.fixed.gamma_prime[il]});
            }
        }
        for (int l = 0; l < d; ++l)
            if (model_.fixed.zeta[static_cast<std::size_t>(l)] > 0.0)
                groups_[space_.migrant_coord(l)].push_back(
                    {{EventKind::MigrantDeath, kNoType, kNoType, l}, model_.fixed.zeta[static_cast<std::size_t>(l)]});
        for (std::size_t k = 0; k < coords; ++k)
            for (const auto& c : groups_[k]) group_unit_[k] += c.unit;

        build_dependent_channels();
        dep_rate_.assign(dep_.size(), 0.0);
        recompute_fixed_total();
    }

    const PopulationState& state() const { return state_; }
    PopulationState& mutable_state() { return state_; }

    /// Refreshes the state-dependent channel rates; returns the total rate.
    double refresh() {
        dep_total_ = 0.0;
        if (!dep_.empty()) {
            model_.evaluate(x_, rates_);
            const double scale = static_cast<double>(state_.scale());
            for (std::size_t c = 0; c < dep_.size(); ++c) {
                const auto& ch = dep_[c];
                double mult = 0.0;
                switch (ch.mult) {
                    case Mult::Count: mult = static_cast<double>(state_.count(ch.source)); break;
                    case Mult::Scale: mult = scale; break;
                    case Mult::Pair:
                        mult = static_cast<double>(state_.count(ch.source)) * x_[ch.partner];
                        break;
                }
                double r = 0.0;
                if (mult != 0.0) {
                    const double v = (*family_ptr(ch.family))[ch.index];
                    if (!(v >= 0.0) || !std::isfinite(v)) check_rates(rates_);
                    r = mult * v;
                }
                dep_rate_[c] = r;
                dep_total_ += r;
            }
        }
        return std::max(fixed_total_, 0.0) + dep_total_;
    }

    /// Draws the next event given the current total rate.
    Event select(double total, Rng& rng) const {
        double u = rng.uniform() * total;
        const double fixed = std::max(fixed_total_, 0.0);
        if (u < fixed || dep_total_ <= 0.0) {
            std::size_t last = groups_.size();
            for (std::size_t k = 0; k < groups_.size(); ++k) {
                if (group_unit_[k] == 0.0 || state_.count(k) == 0) continue;
                last = k;
                const double g = static_cast<double>(state_.count(k)) * group_unit_[k];
                if (u < g) return pick_in_group(k, u / static_cast<double>(state_.count(k)));
                u -= g;
            }
            if (last == groups_.size()) throw std::logic_error("Engine::select: empty fixed groups");
            return pick_in_group(last, group_unit_[last]);
        }
        u -= fixed;
        std::size_t last = dep_.size();
        for (std::size_t c = 0; c < dep_.size(); ++c) {
            if (dep_rate_[c] <= 0.0) continue;
            last = c;
            if (u < dep_rate_[c]) return dep_[c].event;
            u -= dep_rate_[c];
        }
        if (last == dep_.size()) throw std::logic_error("Engine::select: empty dependent channels");
        return dep_[last].event;
    }

    /// Applies a non-overflowing event and updates caches.
    void apply(const Event& e) {
        touched_.clear();
        switch (e.kind) {
            case EventKind::TypeChange:
            case EventKind::MigrationOut:
            case EventKind::Settlement:
                touched_.push_back(static_cast<std::size_t>(e.from));
                touched_.push_back(static_cast<std::size_t>(e.to));
                if (e.kind != EventKind::TypeChange) touched_.push_back(space_.migrant_coord(e.variety));
                break;
            case EventKind::PatchBirth: touched_.push_back(static_cast<std::size_t>(e.to)); break;
            case EventKind::PatchDeath: touched_.push_back(static_cast<std::size_t>(e.from)); break;
            case EventKind::MigrantBirth:
            case EventKind::MigrantDeath: touched_.push_back(space_.migrant_coord(e.variety)); break;
        }
        for (auto k : touched_) fixed_total_ -= static_cast<double>(state_.count(k)) * group_unit_[k];
        apply_event(model_, state_, e);
        const double inv = 1.0 / static_cast<double>(state_.scale());
        for (auto k : touched_) {
            fixed_total_ += static_cast<double>(state_.count(k)) * group_unit_[k];
            x_[k] = static_cast<double>(state_.count(k)) * inv;
        }
        if (++since_recompute_ >= recompute_every_) recompute_fixed_total();
    }

    void set_recompute_every(std::int64_t n) { recompute_every_ = std::max<std::int64_t>(1, n); }

    void recompute_fixed_total() {
        fixed_total_ = 0.0;
        for (std::size_t k = 0; k < groups_.size(); ++k)
            fixed_total_ += static_cast<double>(state_.count(k)) * group_unit_[k];
        since_recompute_ = 0;
    }

    const ScaledState& scaled() const { return x_; }

private:
    enum class Mult { Count, Scale, Pair };

    struct FixedChannel {
        Event event;
        double unit;
    };

    struct DepChannel {
        Event event;
        Mult mult;
        std::size_t source;   // coordinate whose count multiplies the rate
        std::size_t partner;  // Pair: interior coordinate whose density multiplies
        int family;
        std::size_t index;
    };

    const std::vector<double>* family_ptr(int f) const {
        switch (f) {
            case 0: return &rates_.lambda;
            case 1: return &rates_.beta;
            case 2: return &rates_.delta;
            case 3: return &rates_.gamma;
            case 4: return &rates_.gamma_prime;
            case 5: return &rates_.sigma;
            default: return &rates_.zeta;
        }
    }

    void build_dependent_channels() {
        const auto& dep = model_.dependent;
        if (!dep.evaluate) return;
        const std::size_t n = space_.interior_count();
        const int d = space_.varieties();
        using F = StateDependence;
        if (dep.uses(F::kLambda))
            for (std::size_t p = 0; p < dep.lambda_pattern.size(); ++p) {
                const auto& pe = dep.lambda_pattern[p];
                dep_.push_back({{EventKind::TypeChange, pe.from, pe.to, 0}, Mult::Count,
                                static_cast<std::size_t>(pe.from), 0, 0, p});
            }
        for (std::size_t i = 0; i < n; ++i) {
            const int ii = static_cast<int>(i);
            if (dep.uses(F::kBeta)) dep_.push_back({{EventKind::PatchBirth, kNoType, ii, 0}, Mult::Scale, i, 0, 1, i});
            if (dep.uses(F::kDelta)) dep_.push_back({{EventKind::PatchDeath, ii, kNoType, 0}, Mult::Count, i, 0, 2, i});
            for (int l = 0; l < d; ++l) {
                const std::size_t il = i * static_cast<std::size_t>(d) + static_cast<std::size_t>(l);
                if (dep.uses(F::kGamma) && space_.count_of(i, l) > 0)
                    dep_.push_back({{EventKind::MigrationOut, ii, space_.down(i, l), l}, Mult::Count, i, 0, 3, il});
                if (dep.uses(F::kGammaPrime))
                    dep_.push_back({{EventKind::MigrantBirth, ii, kNoType, l}, Mult::Count, i, 0, 4, il});
            }
        }
        for (int l = 0; l < d; ++l) {
            const std::size_t mc = space_.migrant_coord(l);
            if (dep.uses(F::kSigma))
                for (std::size_t i = 0; i < n; ++i)
                    dep_.push_back({{EventKind::Settlement, static_cast<int>(i), space_.up(i, l), l}, Mult::Pair, mc, i, 5,
                                    static_cast<std::size_t>(l) * n + i});
            if (dep.uses(F::kZeta))
                dep_.push_back({{EventKind::MigrantDeath, kNoType, kNoType, l}, Mult::Count, mc, 0, 6,
                                static_cast<std::size_t>(l)});
        }
    }

    Event pick_in_group(std::size_t k, double u) const {
        const auto& g = groups_[k];
        for (const auto& c : g) {
            if (u < c.unit) return c.event;
            u -= c.unit;
        }
        return g.back().event;
    }

    const ModelDefinition& model_;
    const TypeSpace& space_;
    PopulationState state_;
    ScaledState x_;
    StateRates rates_;
    std::vector<std::vector<FixedChannel>> groups_;
    std::vector<double> group_unit_;
    std::vector<DepChannel> dep_;
    std::vector<double> dep_rate_;
    double fixed_total_ = 0.0;
    double dep_total_ = 0.0;
    std::vector<std::size_t> touched_;
    std::int64_t since_recompute_ = 0;
    std::int64_t recompute_every_ = 10000;
};

}  // namespace detail

/// Simulates the full process on [0, T] from `init`, stopping early at the
/// first exhaustion of free migrant places, when suppressed events exceed
/// the budget, or when `options.stop_when` fires.
inline Trajectory simulate(const ModelDefinition& model, const PopulationState& init, double T, Rng& rng,
                           const SimulationOptions& options = {}) {
    const auto& space = model.types();
    const int d = space.varieties();
    for (int l = 0; l < d; ++l) {
        const double h = l < static_cast<int>(model.slot_reserve.size()) ? model.slot_reserve[static_cast<std::size_t>(l)] : 0.0;
        const auto need = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::ceil(h * static_cast<double>(init.scale()) - 1e-9)));
        if (init.free_slots(l) < need)
            throw std::invalid_argument("simulate: initial free migrant places below ceil(N h_l) for variety " +
                                        std::to_string(l));
    }

    Trajectory traj;
    traj.initial = init;
    traj.grid = options.grid.empty() ? std::vector<double>{0.0, T} : options.grid;
    for (std::size_t k = 0; k < traj.grid.size(); ++k) {
        if (traj.grid[k] < 0.0 || traj.grid[k] > T * (1 + 1e-12) || (k > 0 && traj.grid[k] <= traj.grid[k - 1]))
            throw std::invalid_argument("simulate: grid must be increasing within [0, T]");
    }
    traj.snapshots.reserve(traj.grid.size());

    detail::Engine engine(model, init);
    engine.set_recompute_every(options.full_recompute_every);

    std::vector<int> tag_type(options.tags);
    std::vector<int> tag_count(space.interior_count(), 0);
    traj.tagged.resize(tag_type.size());
    for (std::size_t k = 0; k < tag_type.size(); ++k) {
        const int ty = tag_type[k];
        if (ty < 0 || ty >= static_cast<int>(space.interior_count()))
            throw std::invalid_argument("simulate: tag type out of range");
        ++tag_count[static_cast<std::size_t>(ty)];
        traj.tagged[k].initial = PatchState{ty};
    }
    for (std::size_t i = 0; i < tag_count.size(); ++i)
        if (tag_count[i] > init.count(i)) throw std::invalid_argument("simulate: more tags than patches of a type");

    double t = 0.0;
    std::size_t next_grid = 0;
    auto flush_grid = [&](double until, bool inclusive) {
        while (next_grid < traj.grid.size() &&
               (traj.grid[next_grid] < until || (inclusive && traj.grid[next_grid] <= until))) {
            traj.snapshots.push_back(engine.scaled());
            ++next_grid;
        }
    };

    auto move_tag = [&](const Event& e, double when) {
        const int from = e.from;
        if (from < 0 || tag_count[static_cast<std::size_t>(from)] == 0) return;
        // The affected patch is uniform among the X_from patches of that type.
        const auto pop = static_cast<std::uint64_t>(engine.state().count(static_cast<std::size_t>(from)));
        const std::uint64_t r = rng.below(pop);
        if (r >= static_cast<std::uint64_t>(tag_count[static_cast<std::size_t>(from)])) return;
        std::uint64_t seen = 0;
        for (std::size_t k = 0; k < tag_type.size(); ++k) {
            if (tag_type[k] != from) continue;
            if (seen++ != r) continue;
            int next = PatchState::kDestroyed;
            if (e.kind != EventKind::PatchDeath) next = e.to;
            --tag_count[static_cast<std::size_t>(from)];
            if (next >= 0) ++tag_count[static_cast<std::size_t>(next)];
            tag_type[k] = next;
            traj.tagged[k].jumps.emplace_back(when, PatchState{next});
            return;
        }
    };

    traj.stop_reason = StopReason::Horizon;
    traj.stop_time = T;
    for (;;) {
        const double total = engine.refresh();
        if (!(total > 0.0)) break;
        const double dt = rng.exponential(total);
        if (t + dt > T) break;
        flush_grid(t + dt, false);
        t += dt;
        const Event e = engine.select(total, rng);
        ++traj.event_count;
        if (e.overflows()) {
            ++traj.truncation_loss;
            if (options.record_events) traj.events.push_back({t, e});
            if (options.truncation_budget >= 0 && traj.truncation_loss > options.truncation_budget) {
                traj.stop_reason = StopReason::TruncationLoss;
                traj.stop_time = t;
                break;
            }
            continue;
        }
        if (e.kind != EventKind::PatchBirth && e.kind != EventKind::MigrantBirth && e.kind != EventKind::MigrantDeath)
            move_tag(e, t);
        engine.apply(e);
        if (options.record_events) traj.events.push_back({t, e});
        if (e.kind == EventKind::MigrationOut || e.kind == EventKind::MigrantBirth) {
            if (engine.state().free_slots(e.variety) == 0) {
                traj.stop_reason = StopReason::SlotExhaustion;
                traj.stop_time = t;
                break;
            }
        }
        if (options.stop_when && options.stop_when(engine.state())) {
            traj.stop_reason = StopReason::Condition;
            traj.stop_time = t;
            break;
        }
    }
    flush_grid(T, true);
    traj.final_state = engine.state();
    return traj;
}

/// Grid approximation of sup_t ||x^N(t) - x(t)||_mu. The deterministic path
/// must be sampled on the trajectory's grid.
inline double sup_mu_error(const Trajectory& traj, const DeterministicPath& det) {
    if (traj.grid.size() != det.times.size())
        throw GridMismatch("sup_mu_error: grids differ in length");
    double worst = 0.0;
    for (std::size_t k = 0; k < traj.grid.size(); ++k) {
        if (std::abs(traj.grid[k] - det.times[k]) > 1e-12 * std::max(1.0, std::abs(det.times[k])))
            throw GridMismatch("sup_mu_error: grid times differ");
        const auto& a = traj.snapshots[k];
        const auto& b = det.states[k];
        if (a.size() != b.size()) throw GridMismatch("sup_mu_error: state shapes differ");
        double s = 0.0;
        for (std::size_t z = 0; z < a.size(); ++z) s += a.space().weight(z) * std::abs(a[z] - b[z]);
        worst = std::max(worst, s);
    }
    return worst;
}

}  // namespace metapop
