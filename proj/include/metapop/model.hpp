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
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "metapop/rng.hpp"
#include "metapop/state.hpp"
#include "metapop/type_space.hpp"

namespace metapop {

/// Raised when a rate evaluator produces a negative or non-finite value.
class RateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fixed per-patch type-change rate i -> j. `to` is an interior index or
/// kOverflow; `to_animals` is the animal count of the target, kept so that
/// size weights of suppressed targets remain available to the audit.
struct FixedTransition {
    int to = kOverflow;
    int to_animals = 0;
    double rate = 0.0;
};

/// The x-independent part of the transition scheme.
struct FixedRates {
    std::vector<std::vector<FixedTransition>> lambda;  ///< per source type
    std::vector<double> delta;                         ///< patch destruction, per type
    std::vector<double> gamma;                         ///< migration out, [i * d + l]
    std::vector<double> gamma_prime;                   ///< migrant birth, [i * d + l]
    std::vector<double> zeta;                          ///< migrant death, per variety

    void resize(const TypeSpace& space) {
        const std::size_t n = space.interior_count();
        const auto d = static_cast<std::size_t>(space.varieties());
        lambda.resize(n);
        delta.assign(n, 0.0);
        gamma.assign(n * d, 0.0);
        gamma_prime.assign(n * d, 0.0);
        zeta.assign(d, 0.0);
    }
};

/// Entry of the sparsity pattern of the state-dependent type-change rates.
struct PatternEntry {
    int from = 0;
    int to = kOverflow;
    int to_animals = 0;
};

/// State-dependent rate components evaluated at one scaled state.
struct StateRates {
    std::vector<double> lambda;       ///< aligned with StateDependence::lambda_pattern
    std::vector<double> beta;         ///< patch creation per type (times N gives the rate)
    std::vector<double> delta;        ///< per type
    std::vector<double> gamma;        ///< [i * d + l]
    std::vector<double> gamma_prime;  ///< [i * d + l]
    std::vector<double> sigma;        ///< settlement, [l * n + i]
    std::vector<double> zeta;         ///< per variety

    void resize(const TypeSpace& space, std::size_t pattern_size) {
        const std::size_t n = space.interior_count();
        const auto d = static_cast<std::size_t>(space.varieties());
        lambda.assign(pattern_size, 0.0);
        beta.assign(n, 0.0);
        delta.assign(n, 0.0);
        gamma.assign(n * d, 0.0);
        gamma_prime.assign(n * d, 0.0);
        sigma.assign(n * d, 0.0);
        zeta.assign(d, 0.0);
    }

    void zero() {
        for (auto* v : families()) std::fill(v->begin(), v->end(), 0.0);
    }

    std::vector<std::vector<double>*> families() {
        return {&lambda, &beta, &delta, &gamma, &gamma_prime, &sigma, &zeta};
    }
    std::vector<const std::vector<double>*> families() const {
        return {&lambda, &beta, &delta, &gamma, &gamma_prime, &sigma, &zeta};
    }

    /// Elementwise max with `o` (same shape).
    void max_with(const StateRates& o) {
        auto mine = families();
        auto theirs = o.families();
        for (std::size_t f = 0; f < mine.size(); ++f)
            for (std::size_t k = 0; k < mine[f]->size(); ++k)
                (*mine[f])[k] = std::max((*mine[f])[k], (*theirs[f])[k]);
    }

    void scale(double factor) {
        for (auto* v : families())
            for (double& r : *v) r *= factor;
    }
};

/// Fills every family of `out` (pre-sized and zeroed) at the scaled state.
using Evaluator = std::function<void(const ScaledState&, StateRates&)>;

/// The x-dependent part of the transition scheme. An empty evaluator means
/// all state-dependent rates vanish.
struct StateDependence {
    std::vector<PatternEntry> lambda_pattern;
    Evaluator evaluate;
    /// Declared bound on every evaluator output for states with mu-norm at
    /// most `bound_radius`. Informational; the audit checks it at probes.
    double bound = std::numeric_limits<double>::infinity();
    double bound_radius = std::numeric_limits<double>::infinity();
    /// Families the evaluator may set (bitmask of StateDependence::Family).
    unsigned families = kAll;

    enum Family : unsigned {
        kLambda = 1u << 0,
        kBeta = 1u << 1,
        kDelta = 1u << 2,
        kGamma = 1u << 3,
        kGammaPrime = 1u << 4,
        kSigma = 1u << 5,
        kZeta = 1u << 6,
        kAll = 0x7fu,
    };
    bool uses(Family f) const { return static_cast<bool>(evaluate) && (families & f) != 0; }
};

/// The environment seen by a tagged unit: the scaled state and the
/// state-dependent rates evaluated there.
struct Environment {
    const ScaledState* x = nullptr;
    const StateRates* rates = nullptr;
};

/// Kinds of in-patch transitions of one animal's life history.
enum class LifeMove {
    Offspring,     ///< patch gains composition s, all of them children of the animal
    Composition,   ///< patch composition changes without involving the animal
    Variety,       ///< the animal changes variety
    MigrantBirth,  ///< the animal gives birth to a migrant
    Death,         ///< the animal dies (including destruction of its patch)
};

struct LifeTransition {
    LifeMove kind = LifeMove::Death;
    int to_patch = kNoType;   ///< new patch index (Offspring, Composition, Variety)
    int to_variety = 0;       ///< new variety (Variety) or child variety (MigrantBirth)
    Composition offspring;    ///< s for Offspring
    double fixed = 0.0;
    double dependent = 0.0;
    double rate() const { return fixed + dependent; }
};

/// In-patch life-history rates of an animal of variety `variety` in a patch
/// of type `patch`. Must be nondecreasing in every coordinate of the
/// environment (so that envelopes give rate majorants). Exit by migration,
/// settlement and migrant death are derived from the patch scheme.
using LifeRateFn =
    std::function<void(std::size_t patch, int variety, const Environment& env, std::vector<LifeTransition>& out)>;

/// Full parameterization of a truncated population model.
struct ModelDefinition {
    std::string name;
    SpacePtr space;
    FixedRates fixed;
    StateDependence dependent;
    std::vector<double> slot_reserve;  ///< h_l: free migrant places per unit N
    LifeRateFn life;                    ///< optional

    const TypeSpace& types() const { return *space; }
    int varieties() const { return space->varieties(); }
    std::size_t interior_count() const { return space->interior_count(); }

    bool has_state_dependence() const { return static_cast<bool>(dependent.evaluate); }

    StateRates make_rates() const {
        StateRates r;
        r.resize(*space, dependent.lambda_pattern.size());
        return r;
    }

    /// Evaluates the state-dependent components into `out` (resized as needed).
    void evaluate(const ScaledState& x, StateRates& out) const {
        if (out.beta.size() != space->interior_count() || out.lambda.size() != dependent.lambda_pattern.size())
            out.resize(*space, dependent.lambda_pattern.size());
        else
            out.zero();
        if (dependent.evaluate) dependent.evaluate(x, out);
    }

    StateRates evaluate(const ScaledState& x) const {
        StateRates r = make_rates();
        if (dependent.evaluate) dependent.evaluate(x, r);
        return r;
    }
};

using ModelPtr = std::shared_ptr<const ModelDefinition>;

/// Throws RateError if any evaluated component is negative or non-finite.
inline void check_rates(const StateRates& r) {
    static const char* names[] = {"lambda", "beta", "delta", "gamma", "gamma'", "sigma", "zeta"};
    auto fams = r.families();
    for (std::size_t f = 0; f < fams.size(); ++f)
        for (std::size_t k = 0; k < fams[f]->size(); ++k) {
            const double v = (*fams[f])[k];
            if (!std::isfinite(v) || v < 0.0) {
                std::ostringstream msg;
                msg << "rate evaluator returned " << v << " for " << names[f] << "[" << k << "]";
                throw RateError(msg.str());
            }
        }
}

enum class ViolationKind {
    CapTooSmall,
    DiagonalFixed,
    DiagonalDependent,
    MigrationFromEmpty,
    NegativeRate,
    NonFiniteRate,
    ShapeMismatch,
    BadReserve,
};

struct Violation {
    ViolationKind kind;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    bool has(ViolationKind k) const {
        for (const auto& v : violations)
            if (v.kind == k) return true;
        return false;
    }
    std::string summary() const {
        std::string s;
        for (const auto& v : violations) s += v.message + "\n";
        return s;
    }
};

namespace detail {

inline void check_value(ValidationReport& rep, double v, const std::string& what) {
    if (!std::isfinite(v))
        rep.violations.push_back({ViolationKind::NonFiniteRate, "non-finite rate: " + what});
    else if (v < 0.0)
        rep.violations.push_back({ViolationKind::NegativeRate, "negative rate: " + what});
}

/// Probe states for validation: origin, uniform spread, and a few random
/// sparse states of moderate mu-norm.
inline std::vector<ScaledState> validation_probes(const SpacePtr& space) {
    std::vector<ScaledState> probes;
    probes.emplace_back(space);
    ScaledState uniform(space);
    for (std::size_t k = 0; k < uniform.size(); ++k) uniform[k] = 1.0 / static_cast<double>(uniform.size());
    probes.push_back(uniform);
    Rng rng(0x5eed, 17);
    for (int p = 0; p < 6; ++p) {
        ScaledState x(space);
        for (std::size_t k = 0; k < x.size(); ++k)
            if (rng.uniform() < 0.4) x[k] = rng.uniform() / space->weight(k);
        probes.push_back(std::move(x));
    }
    return probes;
}

}  // namespace detail

/// Checks the structural constraints of the transition scheme. An empty
/// report means the model is admissible.
inline ValidationReport validate_model(const ModelDefinition& model) {
    ValidationReport rep;
    if (!model.space) {
        rep.violations.push_back({ViolationKind::ShapeMismatch, "model has no type space"});
        return rep;
    }
    const auto& space = *model.space;
    const std::size_t n = space.interior_count();
    const int d = space.varieties();
    if (space.cap() < 1)
        rep.violations.push_back({ViolationKind::CapTooSmall, "cap below 1 (cap = " + std::to_string(space.cap()) + ")"});

    const auto& f = model.fixed;
    if (f.lambda.size() != n || f.delta.size() != n || f.gamma.size() != n * d || f.gamma_prime.size() != n * d ||
        f.zeta.size() != static_cast<std::size_t>(d)) {
        rep.violations.push_back({ViolationKind::ShapeMismatch, "fixed-rate arrays do not match the type space"});
        return rep;
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& t : f.lambda[i]) {
            detail::check_value(rep, t.rate, "fixed lambda from " + space.label(i));
            if (t.to == static_cast<int>(i) && t.rate != 0.0)
                rep.violations.push_back(
                    {ViolationKind::DiagonalFixed, "diagonal λ̄ nonzero at " + space.label(i)});
        }
        detail::check_value(rep, f.delta[i], "fixed delta at " + space.label(i));
        for (int l = 0; l < d; ++l) {
            const double g = f.gamma[i * d + l];
            detail::check_value(rep, g, "fixed gamma at " + space.label(i));
            detail::check_value(rep, f.gamma_prime[i * d + l], "fixed gamma' at " + space.label(i));
            if (space.count_of(i, l) == 0 && g > 0.0)
                rep.violations.push_back({ViolationKind::MigrationFromEmpty,
                                          "γ̄ positive at i_l = 0 (type " + space.label(i) + ", variety " +
                                              std::to_string(l) + ")"});
        }
    }
    for (int l = 0; l < d; ++l) detail::check_value(rep, f.zeta[static_cast<std::size_t>(l)], "fixed zeta");

    for (const auto& p : model.dependent.lambda_pattern)
        if (p.from < 0 || p.from >= static_cast<int>(n) || (p.to != kOverflow && (p.to < 0 || p.to >= static_cast<int>(n))))
            rep.violations.push_back({ViolationKind::ShapeMismatch, "lambda pattern entry out of range"});

    if (!model.slot_reserve.empty()) {
        if (model.slot_reserve.size() != static_cast<std::size_t>(d))
            rep.violations.push_back({ViolationKind::BadReserve, "slot reserve size differs from variety count"});
        for (double h : model.slot_reserve)
            if (!(h >= 0.0) || !std::isfinite(h))
                rep.violations.push_back({ViolationKind::BadReserve, "slot reserve must be finite and nonnegative"});
    }

    if (model.has_state_dependence() && rep.ok()) {
        StateRates r = model.make_rates();
        for (const auto& x : detail::validation_probes(model.space)) {
            model.evaluate(x, r);
            auto fams = r.families();
            static const char* names[] = {"lambda", "beta", "delta", "gamma", "gamma'", "sigma", "zeta"};
            for (std::size_t fi = 0; fi < fams.size(); ++fi)
                for (double v : *fams[fi])
                    if (!std::isfinite(v) || v < 0.0) {
                        detail::check_value(rep, v, std::string("state-dependent ") + names[fi] + " at a probe state");
                        goto next_probe;
                    }
            for (std::size_t p = 0; p < model.dependent.lambda_pattern.size(); ++p)
                if (model.dependent.lambda_pattern[p].to == model.dependent.lambda_pattern[p].from && r.lambda[p] != 0.0)
                    rep.violations.push_back({ViolationKind::DiagonalDependent, "diagonal λ(x) nonzero"});
            for (std::size_t i = 0; i < n; ++i)
                for (int l = 0; l < d; ++l)
                    if (space.count_of(i, l) == 0 && r.gamma[i * d + l] > 0.0)
                        rep.violations.push_back({ViolationKind::MigrationFromEmpty,
                                                  "γ(x) positive at i_l = 0 (type " + space.label(i) + ")"});
        next_probe:;
        }
    }
    return rep;
}

}  // namespace metapop
