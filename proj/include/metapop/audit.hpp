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
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "metapop/det_path.hpp"
#include "metapop/det_solver.hpp"
#include "metapop/model.hpp"
#include "metapop/rng.hpp"
#include "metapop/state.hpp"

namespace metapop {

struct JumpMoments {
    double U = 0.0;
    double V = 0.0;
};

namespace detail {

/// One admissible jump at scaled rate `rate`: +e(to) - e(from), with size
/// weights nu_to / nu_from (0 = absent). Slot bookkeeping terms cancel.
struct Jump {
    double rate;
    double nu_to;
    double nu_from;
};

inline double nu_plus(const Jump& j, int r) {
    double s = 0.0;
    if (j.nu_to > 0.0) s += std::pow(j.nu_to, r);
    if (j.nu_from > 0.0) s -= std::pow(j.nu_from, r);
    return s;
}

inline void for_each_jump(const ModelDefinition& model, const ScaledState& x, const StateRates& dep,
                          const std::function<void(const Jump&)>& f) {
    const auto& space = model.types();
    const std::size_t n = space.interior_count();
    const auto d = static_cast<std::size_t>(space.varieties());
    auto nu_of = [&](int to, int to_animals) { return to == kOverflow ? to_animals + 1.0 : space.weight(static_cast<std::size_t>(to)); };
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i];
        const double nui = space.weight(i);
        if (dep.beta[i] != 0.0) f({dep.beta[i], nui, 0.0});
        if (xi == 0.0) continue;
        for (const auto& t : model.fixed.lambda[i]) f({xi * t.rate, nu_of(t.to, t.to_animals), nui});
        f({xi * (model.fixed.delta[i] + dep.delta[i]), 0.0, nui});
        for (std::size_t l = 0; l < d; ++l) {
            const std::size_t il = i * d + l;
            if (space.count_of(i, static_cast<int>(l)) > 0) {
                const auto down = static_cast<std::size_t>(space.down(i, static_cast<int>(l)));
                f({xi * (model.fixed.gamma[il] + dep.gamma[il]), space.weight(down), nui});
            }
            f({xi * (model.fixed.gamma_prime[il] + dep.gamma_prime[il]), 1.0, 1.0});
            const double xl = x[space.migrant_coord(static_cast<int>(l))];
            f({xl * xi * dep.sigma[l * n + i], nui + 1.0, nui});
        }
    }
    for (std::size_t p = 0; p < model.dependent.lambda_pattern.size(); ++p) {
        const auto& e = model.dependent.lambda_pattern[p];
        const double xi = x[static_cast<std::size_t>(e.from)];
        if (xi != 0.0) f({xi * dep.lambda[p], nu_of(e.to, e.to_animals), space.weight(static_cast<std::size_t>(e.from))});
    }
    for (std::size_t l = 0; l < d; ++l) {
        const double xl = x[space.migrant_coord(static_cast<int>(l))];
        f({xl * (model.fixed.zeta[l] + dep.zeta[l]), 1.0, 1.0});
    }
}

inline StateRates checked_rates(const ModelDefinition& model, const ScaledState& x) {
    StateRates r = model.evaluate(x);
    check_rates(r);
    return r;
}

/// Type-change rates out of i at x: (target weight, fixed part, dependent part).
struct LambdaEntry {
    double nu;
    double fixed;
    double dependent;
};

inline std::vector<std::vector<LambdaEntry>> lambda_entries(const ModelDefinition& model, const StateRates& dep) {
    const auto& space = model.types();
    std::vector<std::vector<LambdaEntry>> out(space.interior_count());
    auto nu_of = [&](int to, int to_animals) { return to == kOverflow ? to_animals + 1.0 : space.weight(static_cast<std::size_t>(to)); };
    for (std::size_t i = 0; i < out.size(); ++i)
        for (const auto& t : model.fixed.lambda[i]) out[i].push_back({nu_of(t.to, t.to_animals), t.rate, 0.0});
    for (std::size_t p = 0; p < model.dependent.lambda_pattern.size(); ++p) {
        const auto& e = model.dependent.lambda_pattern[p];
        out[static_cast<std::size_t>(e.from)].push_back({nu_of(e.to, e.to_animals), 0.0, dep.lambda[p]});
    }
    return out;
}

}  // namespace detail

/// U_r(x) = sum_J alpha_J(x) nu_r^+(J) and V_r(x) = sum_J alpha_J(x) nu_r^+(J)^2
/// over the jumps of all transition families, including those suppressed
/// by the truncation.
inline JumpMoments jump_moment_functionals(const ModelDefinition& model, const ScaledState& x, int r) {
    if (r < 0) throw std::invalid_argument("jump_moment_functionals: r must be >= 0");
    const StateRates dep = detail::checked_rates(model, x);
    JumpMoments m;
    detail::for_each_jump(model, x, dep, [&](const detail::Jump& j) {
        if (j.rate == 0.0) return;
        const double v = detail::nu_plus(j, r);
        m.U += j.rate * v;
        m.V += j.rate * v * v;
    });
    if (!std::isfinite(m.U) || !std::isfinite(m.V)) throw RateError("jump_moment_functionals: non-finite value");
    return m;
}

// ---------------------------------------------------------------------------
// Condition catalogue.

/// Ratio of one condition's left side to its right side (without the
/// constant) at a probe state, maximized over patch types.
struct ConditionValue {
    double ratio = 0.0;
    int type = kNoType;  ///< maximizing patch type, where relevant
};

inline std::vector<std::string> condition_catalogue(int r_max) {
    std::vector<std::string> ids = {"beta-cond", "lambda-cond-1a", "lambda-cond-1b", "sigma-cond",
                                    "delta-gamma-cond", "lambda-cond-2"};
    for (int r = 0; r <= r_max; ++r) ids.push_back("U-" + std::to_string(r));
    for (int r = 0; r <= r_max; ++r) ids.push_back("V-" + std::to_string(r));
    ids.push_back("A-mu-cond");
    return ids;
}

/// Evaluates condition `id` at x. `r` is the moment order for the
/// r-dependent conditions (lambda-cond-1b, lambda-cond-2; U-r and V-r carry
/// it in the id) and the largest order for beta-cond.
inline ConditionValue evaluate_condition(const ModelDefinition& model, const std::string& id, const ScaledState& x,
                                         int r) {
    const auto& space = model.types();
    const std::size_t n = space.interior_count();
    const auto d = static_cast<std::size_t>(space.varieties());
    const StateRates dep = detail::checked_rates(model, x);
    const double mass1 = x.l1_norm();
    ConditionValue out;
    auto keep = [&](double v, std::size_t i) {
        if (v > out.ratio) {
            out.ratio = v;
            out.type = static_cast<int>(i);
        }
    };

    if (id == "beta-cond") {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += dep.beta[j] * std::pow(space.weight(j), r);
        out.ratio = s / (mass1 + 1.0);
        return out;
    }
    if (id == "lambda-cond-1a" || id == "lambda-cond-1b" || id == "lambda-cond-2") {
        const auto entries = detail::lambda_entries(model, dep);
        for (std::size_t i = 0; i < n; ++i) {
            const double nui = space.weight(i);
            double lhs = 0.0;
            for (const auto& e : entries[i]) {
                const double rate = e.fixed + e.dependent;
                if (id == "lambda-cond-1a") {
                    lhs += e.fixed + rate * std::max(0.0, e.nu - nui);
                } else if (id == "lambda-cond-1b") {
                    lhs += rate * std::max(0.0, std::pow(e.nu, r) - std::pow(nui, r));
                } else {
                    const double dv = std::pow(e.nu, r) - std::pow(nui, r);
                    lhs += rate * dv * dv;
                }
            }
            double rhs = nui;
            if (id == "lambda-cond-1b") rhs = std::pow(nui, r) * (mass1 + 1.0);
            if (id == "lambda-cond-2") rhs = std::pow(nui, 2 * r + 1);
            keep(lhs / rhs, i);
        }
        return out;
    }
    if (id == "sigma-cond") {
        for (std::size_t l = 0; l < d; ++l) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                keep(dep.sigma[l * n + i], i);
                s += x[i] * dep.sigma[l * n + i];
            }
            if (s > out.ratio) {
                out.ratio = s;
                out.type = kNoType;
            }
        }
        return out;
    }
    if (id == "delta-gamma-cond") {
        for (std::size_t i = 0; i < n; ++i) {
            const double nui = space.weight(i);
            keep((model.fixed.delta[i] + dep.delta[i]) / nui, i);
            for (std::size_t l = 0; l < d; ++l) {
                keep((model.fixed.gamma[i * d + l] + dep.gamma[i * d + l]) / nui, i);
                keep((model.fixed.gamma_prime[i * d + l] + dep.gamma_prime[i * d + l]) / nui, i);
            }
        }
        return out;
    }
    if (id.size() > 2 && (id[0] == 'U' || id[0] == 'V') && id[1] == '-') {
        const int rr = std::stoi(id.substr(2));
        const auto m = jump_moment_functionals(model, x, rr);
        const double S0 = empirical_moment(x, 0);
        if (id[0] == 'U') {
            const double Sr = empirical_moment(x, rr);
            out.ratio = rr <= 1 ? m.U / (Sr + 1.0) : m.U / (Sr * (1.0 + S0) + 1.0);
        } else {
            out.ratio = m.V / (empirical_moment(x, rr == 0 ? 1 : 2 * rr + 1) + 1.0);
        }
        out.ratio = std::max(out.ratio, 0.0);
        return out;
    }
    if (id == "A-mu-cond") {
        const auto split = split_drift(model);
        out.ratio = split.w;
        out.type = static_cast<int>(split.witness);
        return out;
    }
    throw std::invalid_argument("evaluate_condition: unknown condition " + id);
}

struct ConditionEntry {
    std::string id;
    int r = 0;                   ///< order used (lambda-cond-1b / -2: the worst one)
    std::size_t probes = 0;
    double worst = 0.0;          ///< at the largest cap audited
    ScaledState witness;         ///< probe attaining `worst`
    int witness_type = kNoType;
    std::vector<double> by_cap;  ///< worst ratio at each audited cap
    bool grows = false;          ///< constant increases with the cap
    bool beyond_default = false; ///< r above 2d + 6: reported, not judged
    std::optional<double> declared;
    bool pass = true;
};

struct AuditReport {
    std::string model;
    std::vector<int> caps;
    std::vector<ConditionEntry> entries;
    double w = 0.0;
    double D_Y = std::numeric_limits<double>::quiet_NaN();
    double D_Z = std::numeric_limits<double>::quiet_NaN();
    double sigma_plus = std::numeric_limits<double>::quiet_NaN();

    bool passed() const {
        for (const auto& e : entries)
            if (!e.beyond_default && !e.pass) return false;
        return true;
    }
    const ConditionEntry* find(const std::string& id) const {
        for (const auto& e : entries)
            if (e.id == id) return &e;
        return nullptr;
    }
    std::vector<std::string> flagged() const {
        std::vector<std::string> ids;
        for (const auto& e : entries)
            if (e.grows || !e.pass) ids.push_back(e.id);
        return ids;
    }
};

struct AuditOptions {
    int r_max = -1;  ///< default 2d + 6
    std::map<std::string, double> declared;
    double growth_factor = 1.3;  ///< flag when c(2 cap) > growth_factor * c(cap)
};

namespace detail {

inline ConditionEntry audit_one(const ModelDefinition& model, const std::string& id,
                                const std::vector<ScaledState>& probes, int r_max) {
    ConditionEntry e;
    e.id = id;
    e.probes = probes.size();
    const bool per_r = id == "lambda-cond-1b" || id == "lambda-cond-2";
    const int r_lo = per_r ? 1 : r_max, r_hi = r_max;
    if (id == "A-mu-cond") {
        const auto v = evaluate_condition(model, id, probes.empty() ? ScaledState(model.space) : probes.front(), 0);
        e.worst = v.ratio;
        e.witness_type = v.type;
        e.witness = ScaledState(model.space);
        return e;
    }
    e.witness = probes.empty() ? ScaledState(model.space) : probes.front();
    for (const auto& x : probes)
        for (int r = r_lo; r <= r_hi; ++r) {
            const auto v = evaluate_condition(model, id, x, r);
            if (v.ratio > e.worst) {
                e.worst = v.ratio;
                e.witness = x;
                e.witness_type = v.type;
                e.r = r;
            }
        }
    if (!per_r) e.r = id == "beta-cond" ? r_max : 0;
    if (id[0] == 'U' || id[0] == 'V') e.r = std::stoi(id.substr(2));
    return e;
}

}  // namespace detail

/// Smallest constants making each catalogued inequality hold over the probe
/// states, with witnesses. One model, so no cap-growth judgement.
inline AuditReport audit_growth(const ModelDefinition& model, const std::vector<ScaledState>& probes,
                                const AuditOptions& opt = {}) {
    const int d = model.varieties();
    const int r_default = 2 * d + 6;
    const int r_max = opt.r_max < 0 ? r_default : opt.r_max;
    AuditReport rep;
    rep.model = model.name;
    rep.caps = {model.types().cap()};
    for (const auto& id : condition_catalogue(r_max)) {
        auto e = detail::audit_one(model, id, probes, r_max);
        e.by_cap = {e.worst};
        if ((id[0] == 'U' || id[0] == 'V') && id[1] == '-') e.beyond_default = e.r > r_default;
        if (auto it = opt.declared.find(id); it != opt.declared.end()) e.declared = it->second;
        e.pass = std::isfinite(e.worst) && (!e.declared || e.worst <= *e.declared);
        rep.entries.push_back(std::move(e));
    }
    rep.w = rep.find("A-mu-cond")->worst;
    return rep;
}

using ModelFactory = std::function<ModelDefinition(int cap)>;
using ProbeFactory = std::function<std::vector<ScaledState>(const ModelDefinition&)>;

/// Audits the model family at each cap and flags every condition whose
/// constant grows from one cap to the next by more than `growth_factor`.
inline AuditReport audit_growth(const ModelFactory& factory, const std::vector<int>& caps, const ProbeFactory& probes,
                                const AuditOptions& opt = {}) {
    if (caps.empty()) throw std::invalid_argument("audit_growth: no caps");
    std::vector<AuditReport> reports;
    for (int cap : caps) {
        const auto m = factory(cap);
        reports.push_back(audit_growth(m, probes(m), opt));
    }
    AuditReport rep = reports.back();
    rep.caps = caps;
    for (std::size_t k = 0; k < rep.entries.size(); ++k) {
        auto& e = rep.entries[k];
        e.by_cap.clear();
        for (const auto& r : reports) e.by_cap.push_back(r.entries[k].worst);
        for (std::size_t c = 1; c < e.by_cap.size(); ++c)
            if (e.by_cap[c] > opt.growth_factor * e.by_cap[c - 1] + 1e-12) e.grows = true;
        e.pass = e.pass && !e.grows;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Probes.

struct ProbeOptions {
    int count = 120;
    double radius = 4.0;   ///< mu-norm of the heavy-tail and random probes
    double delta = 0.1;    ///< tube radius around the path probes
    const DeterministicPath* path = nullptr;
    std::uint64_t seed = 0xa0d17;
};

/// Probe states: path points and perturbed path points (if a path is
/// given), random sparse states, and heavy-tail states that put their mass
/// on the largest patch types, all inside the mu-ball of the given radius.
inline std::vector<ScaledState> audit_probes(const ModelDefinition& model, const ProbeOptions& opt = {}) {
    const auto& space = model.types();
    const std::size_t n = space.interior_count();
    Rng rng(opt.seed, 3);
    std::vector<ScaledState> out;
    out.emplace_back(model.space);
    auto rescale = [&](ScaledState& x, double target) {
        const double m = mu_norm(x);
        if (m > 0.0)
            for (std::size_t k = 0; k < x.size(); ++k) x[k] *= target / m;
    };
    if (opt.path && !opt.path->states.empty() && opt.path->states.front().size() == space.size()) {
        for (int k = 0; k < opt.count / 3; ++k) {
            const double t = opt.path->times.front() + rng.uniform() * (opt.path->horizon() - opt.path->times.front());
            auto x = opt.path->at(t);
            out.push_back(x);
            ScaledState dx(model.space);
            for (std::size_t z = 0; z < dx.size(); ++z) dx[z] = rng.uniform();
            rescale(dx, opt.delta * rng.uniform());
            for (std::size_t z = 0; z < dx.size(); ++z) x[z] += dx[z];
            out.push_back(x);
        }
    }
    const int rest = std::max(2, opt.count - static_cast<int>(out.size()));
    for (int k = 0; k < rest; ++k) {
        ScaledState x(model.space);
        if (k % 2 == 0) {
            for (std::size_t z = 0; z < x.size(); ++z)
                if (rng.uniform() < 0.3) x[z] = rng.uniform();
        } else {
            // mass on a few of the largest types plus some light mass
            const int picks = 1 + static_cast<int>(rng.below(3));
            for (int p = 0; p < picks; ++p) {
                const std::size_t top = n - 1 - std::min<std::size_t>(n - 1, rng.below(std::max<std::size_t>(1, n / 4)));
                x[top] += rng.uniform() + 0.1;
            }
            x[0] += rng.uniform();
            for (int l = 0; l < space.varieties(); ++l) x[space.migrant_coord(l)] = rng.uniform();
        }
        rescale(x, opt.radius * (0.2 + 0.8 * rng.uniform()));
        out.push_back(std::move(x));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lipschitz constants of the state-dependent rates.

struct LipschitzEstimate {
    double D_Y = 0.0;
    double D_Z = 0.0;
    double sigma_plus = 0.0;
    std::size_t pairs = 0;
};

namespace detail {

/// Aggregate rate differences of a single patch of type i (D_Y) and of an
/// animal of variety l there (D_Z), between environments x and y.
inline double patch_rate_difference(const ModelDefinition& model, std::size_t i, const ScaledState& x,
                                    const StateRates& rx, const ScaledState& y, const StateRates& ry) {
    const auto& space = model.types();
    const std::size_t n = space.interior_count();
    const auto d = static_cast<std::size_t>(space.varieties());
    double s = std::abs(rx.delta[i] - ry.delta[i]);
    for (std::size_t p = 0; p < model.dependent.lambda_pattern.size(); ++p)
        if (model.dependent.lambda_pattern[p].from == static_cast<int>(i)) s += std::abs(rx.lambda[p] - ry.lambda[p]);
    for (std::size_t l = 0; l < d; ++l) {
        s += std::abs(rx.gamma[i * d + l] - ry.gamma[i * d + l]);
        const std::size_t D = space.migrant_coord(static_cast<int>(l));
        s += std::abs(x[D] * rx.sigma[l * n + i] - y[D] * ry.sigma[l * n + i]);
    }
    return s;
}

inline double life_rate_difference(const ModelDefinition& model, std::size_t i, int l, const ScaledState& x,
                                   const StateRates& rx, const ScaledState& y, const StateRates& ry) {
    const auto& space = model.types();
    const auto d = static_cast<std::size_t>(space.varieties());
    const auto ls = static_cast<std::size_t>(l);
    std::map<std::tuple<int, int, int, Composition>, double> diff;
    std::vector<LifeTransition> tx, ty;
    model.life(i, l, Environment{&x, &rx}, tx);
    model.life(i, l, Environment{&y, &ry}, ty);
    for (const auto& t : tx) diff[{static_cast<int>(t.kind), t.to_patch, t.to_variety, t.offspring}] += t.dependent;
    for (const auto& t : ty) diff[{static_cast<int>(t.kind), t.to_patch, t.to_variety, t.offspring}] -= t.dependent;
    double s = 0.0;
    for (const auto& [k, v] : diff) s += std::abs(v);
    s += std::abs(rx.gamma[i * d + ls] - ry.gamma[i * d + ls]);
    return s;
}

}  // namespace detail

/// Finite-difference estimates of D_Y and D_Z over probe pairs: the largest
/// aggregate rate difference per unit mu-distance. Also returns
/// sigma+ = the largest settlement rate seen at any probe.
inline LipschitzEstimate estimate_lipschitz(const ModelDefinition& model,
                                            const std::vector<std::pair<ScaledState, ScaledState>>& pairs) {
    const auto& space = model.types();
    const std::size_t n = space.interior_count();
    const int d = space.varieties();
    LipschitzEstimate est;
    est.pairs = pairs.size();
    for (const auto& [x, y] : pairs) {
        std::vector<double> diff(x.size());
        for (std::size_t z = 0; z < diff.size(); ++z) diff[z] = x[z] - y[z];
        const double dist = mu_norm(space, diff);
        if (!(dist > 0.0)) throw std::invalid_argument("estimate_lipschitz: degenerate probe pair");
        const StateRates rx = detail::checked_rates(model, x), ry = detail::checked_rates(model, y);
        for (double v : rx.sigma) est.sigma_plus = std::max(est.sigma_plus, v);
        for (double v : ry.sigma) est.sigma_plus = std::max(est.sigma_plus, v);
        for (std::size_t i = 0; i < n; ++i)
            est.D_Y = std::max(est.D_Y, detail::patch_rate_difference(model, i, x, rx, y, ry) / dist);
        for (int l = 0; l < d; ++l) {
            const auto ls = static_cast<std::size_t>(l);
            double zeta = std::abs(rx.zeta[ls] - ry.zeta[ls]);
            double best = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                // settlement of a variety-l migrant into i
                double s = std::abs(x[i] * rx.sigma[ls * n + i] - y[i] * ry.sigma[ls * n + i]);
                if (model.life && space.count_of(i, l) >= 1) s += detail::life_rate_difference(model, i, l, x, rx, y, ry);
                best = std::max(best, s);
            }
            est.D_Z = std::max(est.D_Z, (best + zeta) / dist);
        }
    }
    return est;
}

/// Probe pairs in the tube of radius delta around the path: a base point
/// near x(t) and a neighbour at mu-distance h * delta, displaced along a
/// single coordinate or a random direction.
inline std::vector<std::pair<ScaledState, ScaledState>> tube_pairs(const ModelDefinition& model,
                                                                   const DeterministicPath& path, double delta,
                                                                   int count, Rng& rng, double h = 1e-3) {
    if (path.states.empty()) throw std::invalid_argument("tube_pairs: empty path");
    const auto& space = model.types();
    std::vector<std::pair<ScaledState, ScaledState>> out;
    for (int k = 0; k < count; ++k) {
        const double t = path.times.front() + rng.uniform() * (path.horizon() - path.times.front());
        ScaledState x = path.at(t);
        ScaledState dx(model.space);
        for (std::size_t z = 0; z < dx.size(); ++z) dx[z] = rng.uniform();
        const double m = mu_norm(dx);
        const double shift = 0.5 * delta * rng.uniform();
        for (std::size_t z = 0; z < dx.size(); ++z) x[z] += dx[z] * shift / m;
        const double step = h * delta;
        if (k % 2 == 0) {
            const std::size_t z = static_cast<std::size_t>(k / 2) % space.size();
            ScaledState y = x;
            y[z] += step / space.weight(z);
            out.emplace_back(x, y);
        } else {
            ScaledState y = x;
            ScaledState v(model.space);
            for (std::size_t z = 0; z < v.size(); ++z) v[z] = rng.uniform() - 0.5;
            const double mv = mu_norm(v);
            for (std::size_t z = 0; z < v.size(); ++z) y[z] = std::max(0.0, y[z] + v[z] * step / mv);
            out.emplace_back(x, y);
        }
    }
    return out;
}

}  // namespace metapop
