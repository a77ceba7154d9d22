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
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metapop/det_path.hpp"
#include "metapop/events.hpp"
#include "metapop/model.hpp"
#include "metapop/paths.hpp"
#include "metapop/rng.hpp"
#include "metapop/ssa.hpp"

namespace metapop {

/// An actual rate exceeded the majorant declared for its window.
class MajorantViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <class State>
struct Channel {
    State to;
    double rate = 0.0;
};

// ---------------------------------------------------------------------------
// Drivers: the environment path seen by a tagged unit.

/// Environment path x(t) with the state-dependent rates along it. A driver
/// is consumed sequentially by one simulation (queries must have
/// nondecreasing times); copies are cheap and independent.
class Driver {
public:
    virtual ~Driver() = default;
    virtual const SpacePtr& space() const = 0;
    /// Last time at which the path is defined.
    virtual double horizon() const = 0;
    /// True when the environment is constant on every window.
    virtual bool exact() const = 0;
    /// Writes an elementwise upper bound of x and of the rates on (t, end]
    /// and returns end > t (possibly infinite).
    virtual double window(double t, ScaledState& x, StateRates& rates) = 0;
    /// The environment at t, left-continuous. t must lie in the last window.
    virtual void value(double t, ScaledState& x, StateRates& rates) = 0;
};

/// Time-homogeneous environment.
class ConstantDriver : public Driver {
public:
    ConstantDriver(const ModelDefinition& model, ScaledState x, double horizon = std::numeric_limits<double>::infinity())
        : x_(std::move(x)), rates_(model.evaluate(x_)), horizon_(horizon) {
        check_rates(rates_);
    }
    const SpacePtr& space() const override { return x_.space_ptr(); }
    double horizon() const override { return horizon_; }
    bool exact() const override { return true; }
    double window(double, ScaledState& x, StateRates& r) override {
        x = x_;
        r = rates_;
        return std::numeric_limits<double>::infinity();
    }
    void value(double, ScaledState& x, StateRates& r) override {
        x = x_;
        r = rates_;
    }

private:
    ScaledState x_;
    StateRates rates_;
    double horizon_;
};

/// Deterministic path x(t). Each grid interval gets an envelope from the
/// maximum over a few interior samples, inflated by a safety factor.
class DeterministicDriver : public Driver {
public:
    struct Envelope {
        ScaledState x;
        StateRates rates;
    };

    DeterministicDriver(const ModelDefinition& model, std::shared_ptr<const DeterministicPath> path,
                        double inflation = 1.05, int samples = 4)
        : model_(&model), path_(std::move(path)) {
        if (!path_ || path_->times.size() < 2) throw std::invalid_argument("DeterministicDriver: path needs two grid points");
        auto envs = std::make_shared<std::vector<Envelope>>();
        ScaledState x(model.space);
        StateRates r = model.make_rates();
        for (std::size_t k = 0; k + 1 < path_->times.size(); ++k) {
            Envelope e{ScaledState(model.space), model.make_rates()};
            const double a = path_->times[k], h = path_->times[k + 1] - a;
            for (int s = 0; s <= samples; ++s) {
                path_->at(a + h * s / samples, x);
                model.evaluate(x, r);
                check_rates(r);
                for (std::size_t z = 0; z < x.size(); ++z) e.x[z] = std::max(e.x[z], x[z]);
                e.rates.max_with(r);
            }
            for (std::size_t z = 0; z < e.x.size(); ++z) e.x[z] = e.x[z] * inflation + 1e-12;
            for (auto* f : e.rates.families())
                for (double& v : *f) v = v * inflation + 1e-12;
            envs->push_back(std::move(e));
        }
        envelopes_ = std::move(envs);
        final_rates_ = model.evaluate(path_->states.back());
    }

    DeterministicDriver(const ModelDefinition& model, const DeterministicPath& path, double inflation = 1.05, int samples = 4)
        : DeterministicDriver(model, std::make_shared<const DeterministicPath>(path), inflation, samples) {}

    const SpacePtr& space() const override { return model_->space; }
    double horizon() const override { return path_->horizon(); }
    bool exact() const override { return false; }

    double window(double t, ScaledState& x, StateRates& r) override {
        const auto& times = path_->times;
        if (t >= times.back()) {
            x = path_->states.back();
            r = final_rates_;
            return std::numeric_limits<double>::infinity();
        }
        auto it = std::upper_bound(times.begin(), times.end(), t);
        const std::size_t k = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
        x = (*envelopes_)[k].x;
        r = (*envelopes_)[k].rates;
        return times[k + 1];
    }

    void value(double t, ScaledState& x, StateRates& r) override {
        path_->at(t, x);
        model_->evaluate(x, r);
    }

    const DeterministicPath& path() const { return *path_; }

private:
    const ModelDefinition* model_;
    std::shared_ptr<const DeterministicPath> path_;
    std::shared_ptr<const std::vector<Envelope>> envelopes_;
    StateRates final_rates_;
};

/// Piecewise-constant empirical path x^N(t), replayed from the event log of
/// a trajectory simulated with `record_events`.
class EmpiricalDriver : public Driver {
public:
    EmpiricalDriver(const ModelDefinition& model, std::shared_ptr<const Trajectory> traj)
        : model_(&model), traj_(std::move(traj)) {
        if (!traj_) throw std::invalid_argument("EmpiricalDriver: null trajectory");
        if (traj_->event_count > 0 && traj_->events.empty())
            throw std::invalid_argument("EmpiricalDriver: trajectory was simulated without record_events");
        state_ = traj_->initial;
        x_ = state_.scaled();
        rates_ = model.evaluate(x_);
    }
    EmpiricalDriver(const ModelDefinition& model, const Trajectory& traj)
        : EmpiricalDriver(model, std::make_shared<const Trajectory>(traj)) {}

    const SpacePtr& space() const override { return model_->space; }
    double horizon() const override { return traj_->grid.empty() ? traj_->stop_time : traj_->grid.back(); }
    bool exact() const override { return true; }

    double window(double t, ScaledState& x, StateRates& r) override {
        const auto& ev = traj_->events;
        bool moved = false;
        while (cursor_ < ev.size() && ev[cursor_].time <= t) {
            apply_event(*model_, state_, ev[cursor_].event);
            ++cursor_;
            moved = true;
        }
        if (moved) {
            x_ = state_.scaled();
            model_->evaluate(x_, rates_);
        }
        x = x_;
        r = rates_;
        return cursor_ < ev.size() ? ev[cursor_].time : std::numeric_limits<double>::infinity();
    }

    void value(double, ScaledState& x, StateRates& r) override {
        x = x_;
        r = rates_;
    }

private:
    const ModelDefinition* model_;
    std::shared_ptr<const Trajectory> traj_;
    PopulationState state_;
    ScaledState x_;
    StateRates rates_;
    std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Chains: the transition structure of one tagged unit.

/// Patch process Y: rates of a single patch given the environment.
class PatchChain {
public:
    using State = PatchState;

    explicit PatchChain(const ModelDefinition& model) : model_(&model) {
        const auto& space = model.types();
        const std::size_t n = space.interior_count();
        const auto d = static_cast<std::size_t>(space.varieties());
        const auto& dep = model.dependent;
        table_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto& chans = table_[i];
            auto slot = [&](int to) -> Spec& {
                for (auto& c : chans)
                    if (c.to == to) return c;
                chans.push_back(Spec{to, 0.0, {}});
                return chans.back();
            };
            for (const auto& t : model.fixed.lambda[i])
                if (t.to != kOverflow && t.rate > 0.0) slot(t.to).fixed += t.rate;
            if (dep.uses(StateDependence::kLambda))
                for (std::size_t p = 0; p < dep.lambda_pattern.size(); ++p) {
                    const auto& e = dep.lambda_pattern[p];
                    if (e.from == static_cast<int>(i) && e.to != kOverflow) slot(e.to).terms.push_back({Term::Lambda, p, -1});
                }
            for (std::size_t l = 0; l < d; ++l) {
                const std::size_t il = i * d + l;
                if (space.count_of(i, static_cast<int>(l)) > 0) {
                    const int to = space.down(i, static_cast<int>(l));
                    if (model.fixed.gamma[il] > 0.0) slot(to).fixed += model.fixed.gamma[il];
                    if (dep.uses(StateDependence::kGamma)) slot(to).terms.push_back({Term::Gamma, il, -1});
                }
                const int up = space.up(i, static_cast<int>(l));
                if (up != kOverflow && dep.uses(StateDependence::kSigma))
                    slot(up).terms.push_back({Term::Sigma, l * n + i, static_cast<int>(space.migrant_coord(static_cast<int>(l)))});
            }
            Spec& death = slot(PatchState::kDestroyed);
            death.fixed += model.fixed.delta[i];
            if (dep.uses(StateDependence::kDelta)) death.terms.push_back({Term::Delta, i, -1});
            std::erase_if(chans, [](const Spec& c) { return c.fixed == 0.0 && c.terms.empty(); });
        }
    }

    bool absorbing(const State& s) const { return s.is_destroyed(); }

    void channels(const State& s, const Environment& env, std::vector<Channel<State>>& out) const {
        out.clear();
        if (s.is_destroyed()) return;
        const auto& r = *env.rates;
        for (const auto& c : table_[static_cast<std::size_t>(s.type)]) {
            double q = c.fixed;
            for (const auto& t : c.terms) {
                double v = 0.0;
                switch (t.family) {
                    case Term::Lambda: v = r.lambda[t.index]; break;
                    case Term::Gamma: v = r.gamma[t.index]; break;
                    case Term::Sigma: v = r.sigma[t.index]; break;
                    case Term::Delta: v = r.delta[t.index]; break;
                }
                if (t.coord >= 0) v *= (*env.x)[static_cast<std::size_t>(t.coord)];
                q += v;
            }
            out.push_back({PatchState{c.to}, q});
        }
    }

    const ModelDefinition& model() const { return *model_; }

private:
    struct Term {
        enum Family { Lambda, Gamma, Sigma, Delta } family;
        std::size_t index;
        int coord;  ///< multiplying coordinate of x, or -1
    };
    struct Spec {
        int to;
        double fixed;
        std::vector<Term> terms;
    };
    const ModelDefinition* model_;
    std::vector<std::vector<Spec>> table_;
};

/// State of the life-history process Z: position plus offspring tally.
struct LifeState {
    enum class Where { Patch, Migrant, Dead };
    Where where = Where::Dead;
    int patch = kNoType;
    int variety = 0;
    std::vector<int> offspring;

    static LifeState in_patch(int patch, int variety, int varieties) {
        return {Where::Patch, patch, variety, std::vector<int>(static_cast<std::size_t>(varieties), 0)};
    }
    static LifeState migrant(int variety, int varieties) {
        return {Where::Migrant, kNoType, variety, std::vector<int>(static_cast<std::size_t>(varieties), 0)};
    }
    bool is_dead() const { return where == Where::Dead; }
    int total_offspring() const {
        int s = 0;
        for (int v : offspring) s += v;
        return s;
    }
    bool operator==(const LifeState&) const = default;
};

/// Life-history process Z of one animal. In-patch moves come from the
/// model's life-rate function; migration, settlement and migrant death are
/// derived from the patch scheme.
class LifeChain {
public:
    using State = LifeState;

    explicit LifeChain(const ModelDefinition& model) : model_(&model) {
        if (!model.life) throw std::invalid_argument("LifeChain: model defines no life-history rates");
    }

    bool absorbing(const State& s) const { return s.is_dead(); }

    void channels(const State& s, const Environment& env, std::vector<Channel<State>>& out) const {
        out.clear();
        const auto& space = model_->types();
        const std::size_t n = space.interior_count();
        const auto d = static_cast<std::size_t>(space.varieties());
        const auto& r = *env.rates;
        const auto& x = *env.x;
        if (s.is_dead()) return;
        const auto l = static_cast<std::size_t>(s.variety);
        if (s.where == LifeState::Where::Migrant) {
            for (std::size_t i = 0; i < n; ++i) {
                const int up = space.up(i, s.variety);
                if (up == kOverflow) continue;
                State to = s;
                to.where = LifeState::Where::Patch;
                to.patch = up;
                out.push_back({to, x[i] * r.sigma[l * n + i]});
            }
            State dead = s;
            dead.where = LifeState::Where::Dead;
            dead.patch = kNoType;
            out.push_back({dead, model_->fixed.zeta[l] + r.zeta[l]});
            return;
        }
        const auto i = static_cast<std::size_t>(s.patch);
        const int own = space.count_of(i, s.variety);
        if (own < 1) throw std::invalid_argument("life_rates: animal's variety has no animals in its patch");
        scratch_.clear();
        model_->life(i, s.variety, env, scratch_);
        for (const auto& t : scratch_) {
            State to = s;
            switch (t.kind) {
                case LifeMove::Offspring:
                    if (t.to_patch < 0) continue;
                    to.patch = t.to_patch;
                    for (std::size_t k = 0; k < d && k < t.offspring.size(); ++k) to.offspring[k] += t.offspring[k];
                    break;
                case LifeMove::Composition:
                    if (t.to_patch < 0) continue;
                    to.patch = t.to_patch;
                    break;
                case LifeMove::Variety:
                    if (t.to_patch < 0) continue;
                    to.patch = t.to_patch;
                    to.variety = t.to_variety;
                    break;
                case LifeMove::MigrantBirth: ++to.offspring[static_cast<std::size_t>(t.to_variety)]; break;
                case LifeMove::Death:
                    to.where = LifeState::Where::Dead;
                    to.patch = kNoType;
                    break;
            }
            out.push_back({std::move(to), t.rate()});
        }
        const double exit = model_->fixed.gamma[i * d + l] + r.gamma[i * d + l];
        if (exit > 0.0) {
            State to = s;
            to.where = LifeState::Where::Migrant;
            to.patch = kNoType;
            out.push_back({std::move(to), exit / own});
        }
    }

private:
    const ModelDefinition* model_;
    mutable std::vector<LifeTransition> scratch_;
};

namespace detail {

inline Environment env_of(const ScaledState& x, const StateRates& r) { return Environment{&x, &r}; }

template <class State>
double total_rate(const std::vector<Channel<State>>& c) {
    double s = 0.0;
    for (const auto& ch : c) s += ch.rate;
    return s;
}

template <class State>
std::size_t pick(const std::vector<Channel<State>>& c, double total, Rng& rng) {
    double u = rng.uniform() * total;
    for (std::size_t k = 0; k < c.size(); ++k) {
        u -= c[k].rate;
        if (u < 0.0) return k;
    }
    for (std::size_t k = c.size(); k-- > 0;)
        if (c[k].rate > 0.0) return k;
    return 0;
}

template <class State>
void check_majorant(const std::vector<Channel<State>>& actual, const std::vector<Channel<State>>& bound, double t) {
    if (actual.size() != bound.size())
        throw std::logic_error("tagged simulation: channel structure changed with the environment");
    for (std::size_t k = 0; k < actual.size(); ++k)
        if (actual[k].rate > bound[k].rate * (1 + 1e-9) + 1e-12)
            throw MajorantViolation("rate " + std::to_string(actual[k].rate) + " exceeds majorant " +
                                    std::to_string(bound[k].rate) + " at t = " + std::to_string(t));
}

/// Scratch buffers for one environment.
struct EnvBuffers {
    ScaledState x;
    StateRates rates;
    explicit EnvBuffers(const ModelDefinition& m) : x(m.space), rates(m.make_rates()) {}
};

/// Advances `s` from t to T by thinning against the driver's windows,
/// appending jumps to `path`.
template <class Chain>
void advance(const Chain& chain, const ModelDefinition& model, Driver& driver, typename Chain::State& s, double t,
             double T, Rng& rng, TaggedPath<typename Chain::State>& path) {
    using State = typename Chain::State;
    EnvBuffers bound(model), now(model);
    std::vector<Channel<State>> maj, act;
    double E = rng.exponential(1.0);
    while (t < T && !chain.absorbing(s)) {
        const double end = std::min(driver.window(t, bound.x, bound.rates), T);
        chain.channels(s, env_of(bound.x, bound.rates), maj);
        const double Q = total_rate(maj);
        if (!(Q > 0.0) || E >= Q * (end - t)) {
            if (Q > 0.0) E -= Q * (end - t);
            t = end;
            continue;
        }
        t += E / Q;
        E = rng.exponential(1.0);
        const std::size_t c = pick(maj, Q, rng);
        if (!driver.exact()) {
            driver.value(t, now.x, now.rates);
            chain.channels(s, env_of(now.x, now.rates), act);
            check_majorant(act, maj, t);
            if (rng.uniform() * maj[c].rate >= act[c].rate) continue;
        }
        s = maj[c].to;
        path.jumps.emplace_back(t, s);
    }
}

}  // namespace detail

/// Transition rates out of patch type i in the environment x, merged by
/// target (the destroyed state is PatchState::destroyed()).
inline std::vector<Channel<PatchState>> patch_rates(const ModelDefinition& model, const PatchState& i,
                                                    const ScaledState& x) {
    if (i.is_destroyed()) throw std::invalid_argument("patch_rates: patch is destroyed");
    const StateRates r = model.evaluate(x);
    check_rates(r);
    std::vector<Channel<PatchState>> out;
    PatchChain(model).channels(i, Environment{&x, &r}, out);
    std::erase_if(out, [](const Channel<PatchState>& c) { return !(c.rate > 0.0); });
    return out;
}

/// Transition rates of an animal's life history in the environment x.
inline std::vector<Channel<LifeState>> life_rates(const ModelDefinition& model, const LifeState& s, const ScaledState& x) {
    if (s.is_dead()) throw std::invalid_argument("life_rates: animal is dead");
    const StateRates r = model.evaluate(x);
    check_rates(r);
    std::vector<Channel<LifeState>> out;
    LifeChain(model).channels(s, Environment{&x, &r}, out);
    std::erase_if(out, [](const Channel<LifeState>& c) { return !(c.rate > 0.0); });
    return out;
}

/// Simulates any chain on [t0, T] in the environment given by `driver`.
template <class Chain>
TaggedPath<typename Chain::State> simulate_chain(const Chain& chain, const ModelDefinition& model, Driver& driver,
                                                 const typename Chain::State& init, double T, Rng& rng, double t0 = 0.0) {
    TaggedPath<typename Chain::State> path;
    path.initial = init;
    auto s = init;
    detail::advance(chain, model, driver, s, t0, T, rng, path);
    return path;
}

inline TaggedPath<PatchState> simulate_tagged(const ModelDefinition& model, Driver& driver, const PatchState& init,
                                              double T, Rng& rng) {
    return simulate_chain(PatchChain(model), model, driver, init, T, rng);
}

inline TaggedPath<LifeState> simulate_tagged(const ModelDefinition& model, Driver& driver, const LifeState& init,
                                             double T, Rng& rng) {
    return simulate_chain(LifeChain(model), model, driver, init, T, rng);
}

// ---------------------------------------------------------------------------
// Coupling.

/// Inputs of the decoupling bound, filled in by studies that measure them.
struct DecouplingInputs {
    double eps = std::numeric_limits<double>::quiet_NaN();
    double D = std::numeric_limits<double>::quiet_NaN();
    double P = std::numeric_limits<double>::quiet_NaN();
};

template <class State>
struct CouplingOutcome {
    std::optional<double> tau;   ///< first time the components differ
    TaggedPath<State> first;     ///< driven by the first driver
    TaggedPath<State> second;    ///< driven by the second driver
    double horizon = 0.0;
    DecouplingInputs inputs;
    bool coupled() const { return !tau.has_value(); }
};

/// Joint construction of the chain under two drivers: on the diagonal each
/// channel fires jointly at min(q1, q2) and for one component alone at the
/// excess; after the first mismatch the components run independently.
template <class Chain>
CouplingOutcome<typename Chain::State> couple_chains(const Chain& chain, const ModelDefinition& model, Driver& d1,
                                                     Driver& d2, const typename Chain::State& init, double T, Rng& rng) {
    using State = typename Chain::State;
    if (d1.space()->size() != d2.space()->size() || d1.space()->cap() != d2.space()->cap() ||
        d1.space()->varieties() != d2.space()->varieties())
        throw GridMismatch("couple: drivers live on different type spaces");
    if (d1.horizon() < T * (1 - 1e-12) || d2.horizon() < T * (1 - 1e-12))
        throw GridMismatch("couple: a driver ends before the horizon");

    CouplingOutcome<State> out;
    out.horizon = T;
    out.first.initial = out.second.initial = init;
    detail::EnvBuffers b1(model), b2(model), v1(model), v2(model);
    std::vector<Channel<State>> m1, m2, a1, a2;
    std::vector<double> M;
    State s = init;
    double t = 0.0;
    double E = rng.exponential(1.0);
    while (t < T && !chain.absorbing(s)) {
        const double end = std::min({d1.window(t, b1.x, b1.rates), d2.window(t, b2.x, b2.rates), T});
        chain.channels(s, detail::env_of(b1.x, b1.rates), m1);
        chain.channels(s, detail::env_of(b2.x, b2.rates), m2);
        if (m1.size() != m2.size()) throw std::logic_error("couple: channel structures differ between drivers");
        M.resize(m1.size());
        double Q = 0.0;
        for (std::size_t k = 0; k < M.size(); ++k) Q += (M[k] = std::max(m1[k].rate, m2[k].rate));
        if (!(Q > 0.0) || E >= Q * (end - t)) {
            if (Q > 0.0) E -= Q * (end - t);
            t = end;
            continue;
        }
        t += E / Q;
        E = rng.exponential(1.0);
        double u = rng.uniform() * Q;
        std::size_t c = 0;
        for (; c + 1 < M.size(); ++c) {
            u -= M[c];
            if (u < 0.0) break;
        }
        double q1 = m1[c].rate, q2 = m2[c].rate;
        if (!d1.exact()) {
            d1.value(t, v1.x, v1.rates);
            chain.channels(s, detail::env_of(v1.x, v1.rates), a1);
            detail::check_majorant(a1, m1, t);
            q1 = a1[c].rate;
        }
        if (!d2.exact()) {
            d2.value(t, v2.x, v2.rates);
            chain.channels(s, detail::env_of(v2.x, v2.rates), a2);
            detail::check_majorant(a2, m2, t);
            q2 = a2[c].rate;
        }
        const double w = rng.uniform() * M[c];
        if (w < std::min(q1, q2)) {
            s = m1[c].to;
            out.first.jumps.emplace_back(t, s);
            out.second.jumps.emplace_back(t, s);
        } else if (w < std::max(q1, q2)) {
            State s1 = s, s2 = s;
            if (q1 > q2) {
                s1 = m1[c].to;
                out.first.jumps.emplace_back(t, s1);
            } else {
                s2 = m2[c].to;
                out.second.jumps.emplace_back(t, s2);
            }
            out.tau = t;
            detail::advance(chain, model, d1, s1, t, T, rng, out.first);
            detail::advance(chain, model, d2, s2, t, T, rng, out.second);
            return out;
        }
    }
    return out;
}

/// Couples the tagged patch driven by an empirical path with the one driven
/// by the deterministic path.
inline CouplingOutcome<PatchState> couple(const ModelDefinition& model, Driver& empirical, Driver& deterministic,
                                          const PatchState& init, double T, Rng& rng) {
    return couple_chains(PatchChain(model), model, empirical, deterministic, init, T, rng);
}

inline CouplingOutcome<PatchState> couple(const ModelDefinition& model, const Trajectory& empirical,
                                          const DeterministicPath& det, const PatchState& init, double T, Rng& rng) {
    if (det.states.empty() || det.states.front().size() != model.types().size())
        throw GridMismatch("couple: deterministic path does not match the model");
    EmpiricalDriver d1(model, empirical);
    DeterministicDriver d2(model, det);
    return couple(model, d1, d2, init, T, rng);
}

/// K T eps D + P: bound on the probability that a group of K tagged patches
/// decouples from its independent approximation before T.
inline double decoupling_bound(double D, double eps, double T, double P, int K = 1) {
    if (D < 0 || eps < 0 || T < 0 || P < 0 || K < 0) throw std::invalid_argument("decoupling_bound: negative input");
    return K * T * eps * D + P;
}

/// As decoupling_bound for K animals starting in distinct patches, with the
/// extra T K^2 sigma+ / N for two of them meeting in one patch.
inline double decoupling_bound_individuals(double D, double eps, double T, double P, int K, double sigma_plus,
                                           double N) {
    if (sigma_plus < 0 || !(N > 0)) throw std::invalid_argument("decoupling_bound: bad sigma+ or N");
    return decoupling_bound(D, eps, T, P, K) + T * K * K * sigma_plus / N;
}

// ---------------------------------------------------------------------------
// Group independence.

struct IndependenceEstimate {
    double tv = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double se = 0.0;
    std::size_t samples = 0;
    std::size_t cells = 0;
    bool underpowered = false;
};

namespace detail {

inline double joint_product_tv(const std::vector<std::vector<int>>& tuples, const std::vector<std::size_t>& take,
                               int alphabet, std::size_t K) {
    const auto A = static_cast<std::size_t>(alphabet);
    std::size_t cells = 1;
    for (std::size_t k = 0; k < K; ++k) cells *= A;
    std::vector<double> joint(cells, 0.0), marg(K * A, 0.0);
    for (std::size_t s : take) {
        std::size_t code = 0;
        for (std::size_t k = 0; k < K; ++k) {
            const auto a = static_cast<std::size_t>(tuples[s][k]);
            code = code * A + a;
            marg[k * A + a] += 1.0;
        }
        joint[code] += 1.0;
    }
    const double n = static_cast<double>(take.size());
    double tv = 0.0;
    for (std::size_t code = 0; code < cells; ++code) {
        double prod = 1.0;
        std::size_t rest = code;
        for (std::size_t k = K; k-- > 0;) {
            prod *= marg[k * A + rest % A] / n;
            rest /= A;
        }
        tv += std::abs(joint[code] / n - prod);
    }
    return 0.5 * tv;
}

}  // namespace detail

/// Total variation between the empirical joint law of K-tuples of labels in
/// [0, alphabet) and the product of its empirical marginals. `clusters`
/// (optional, one id per tuple) groups tuples for the bootstrap, e.g. tuples
/// drawn from the same simulated population.
inline IndependenceEstimate group_independence(const std::vector<std::vector<int>>& tuples, int alphabet, Rng& rng,
                                               const std::vector<std::size_t>& clusters = {}, int bootstrap = 400,
                                               double level = 0.95) {
    if (tuples.empty()) throw std::invalid_argument("group_independence: no samples");
    const std::size_t K = tuples.front().size();
    if (K < 2) throw std::invalid_argument("group_independence: need K >= 2");
    if (alphabet < 1) throw std::invalid_argument("group_independence: empty alphabet");
    double cells_d = std::pow(static_cast<double>(alphabet), static_cast<double>(K));
    if (cells_d > 1e7) throw std::invalid_argument("group_independence: alphabet^K too large");
    for (const auto& t : tuples) {
        if (t.size() != K) throw std::invalid_argument("group_independence: tuples of different length");
        for (int a : t)
            if (a < 0 || a >= alphabet) throw std::invalid_argument("group_independence: label outside the alphabet");
    }
    if (!clusters.empty() && clusters.size() != tuples.size())
        throw std::invalid_argument("group_independence: one cluster id per tuple");

    IndependenceEstimate est;
    est.samples = tuples.size();
    est.cells = static_cast<std::size_t>(cells_d);
    est.underpowered = static_cast<double>(tuples.size()) < 10.0 * cells_d;
    std::vector<std::size_t> all(tuples.size());
    for (std::size_t s = 0; s < all.size(); ++s) all[s] = s;
    est.tv = detail::joint_product_tv(tuples, all, alphabet, K);

    std::vector<std::vector<std::size_t>> groups;
    if (clusters.empty()) {
        for (std::size_t s = 0; s < tuples.size(); ++s) groups.push_back({s});
    } else {
        std::vector<std::size_t> ids = clusters;
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        groups.resize(ids.size());
        for (std::size_t s = 0; s < tuples.size(); ++s) {
            const auto g = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), clusters[s]) - ids.begin());
            groups[g].push_back(s);
        }
    }
    std::vector<double> boot;
    std::vector<std::size_t> take;
    for (int b = 0; b < bootstrap; ++b) {
        take.clear();
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const auto& grp = groups[rng.below(groups.size())];
            take.insert(take.end(), grp.begin(), grp.end());
        }
        boot.push_back(detail::joint_product_tv(tuples, take, alphabet, K));
    }
    if (!boot.empty()) {
        std::sort(boot.begin(), boot.end());
        auto q = [&](double p) {
            const double pos = p * static_cast<double>(boot.size() - 1);
            const auto lo = static_cast<std::size_t>(std::floor(pos));
            const auto hi = std::min(lo + 1, boot.size() - 1);
            return boot[lo] + (pos - static_cast<double>(lo)) * (boot[hi] - boot[lo]);
        };
        est.ci_low = q((1 - level) / 2);
        est.ci_high = q((1 + level) / 2);
        double mean = 0.0, ss = 0.0;
        for (double v : boot) mean += v;
        mean /= static_cast<double>(boot.size());
        for (double v : boot) ss += (v - mean) * (v - mean);
        est.se = boot.size() > 1 ? std::sqrt(ss / static_cast<double>(boot.size() - 1)) : 0.0;
    }
    return est;
}

/// Labels of K tagged paths at time t under `projection`.
template <class State, class Projection>
std::vector<int> project_group(const std::vector<TaggedPath<State>>& group, double t, Projection&& projection) {
    std::vector<int> out;
    out.reserve(group.size());
    for (const auto& p : group) out.push_back(projection(p.at(t)));
    return out;
}

}  // namespace metapop
