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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "metapop/audit.hpp"
#include "metapop/branching.hpp"
#include "metapop/config.hpp"
#include "metapop/det_solver.hpp"
#include "metapop/parallel.hpp"
#include "metapop/ssa.hpp"
#include "metapop/stats.hpp"
#include "metapop/tagged.hpp"

namespace metapop {

/// The experiment ran but could not produce a valid result.
class ExperimentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentSpec {
    std::string model = "kretzschmar";
    std::optional<int> cap;
    std::string kind = "simulate";
    std::vector<std::int64_t> n = {1000};
    double horizon = 5.0;
    std::size_t replicas = 20;
    std::uint64_t seed = 1;
    double tol = 1e-9;               ///< integrator local error per unit time
    std::size_t grid_points = 101;
    double delta = 0.1;              ///< tube radius for Lipschitz probes
    int tag_type = 1;                ///< initial type of the coupled patch
    int pairs = 40;                  ///< tagged pairs per run (independence)
    std::size_t target_survivors = 10000;
    std::size_t max_runs = 1'000'000;
    int introductions = 1;           ///< K for invade
    int establish_at = 50;           ///< invader count counted as established
    double w_horizon = 200.0;        ///< horizon of W histories
    std::size_t w_replicas = 20000;
    double k2n_warn = 0.01;          ///< warn when K^2/N exceeds this
    std::vector<int> caps;           ///< audit caps; default {cap, 2 cap}
    std::optional<ScaledState> x0;   ///< initial density; default per family
    std::string out;
};

/// CSV table; every row carries the provenance columns.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string csv() const {
        std::ostringstream o;
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t k = 0; k < r.size(); ++k) {
                if (k) o << ',';
                const bool quote = r[k].find_first_of(",\"\n") != std::string::npos;
                if (!quote) {
                    o << r[k];
                    continue;
                }
                o << '"';
                for (char c : r[k]) o << (c == '"' ? "\"\"" : std::string(1, c));
                o << '"';
            }
            o << "\r\n";
        };
        line(header);
        for (const auto& r : rows) line(r);
        return o.str();
    }
};

inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream o;
    o.precision(12);
    o << v;
    return o.str();
}

struct ExperimentResult {
    std::string kind;
    Table table;
    Json report;  ///< includes "provenance"
    bool ok = true;
    std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------

inline ScaledState default_initial(const LoadedModel& m) {
    const auto& space = m.model.types();
    ScaledState x(m.model.space);
    auto put = [&](std::vector<int> c, double v) {
        if (auto k = space.index_of(c)) x[*k] = v;
    };
    if (m.family == "kretzschmar") {
        put({0}, 0.9);
        put({1}, 0.1);
    } else if (m.family == "metz-gyllenberg-1") {
        put({0}, 0.4);
        put({1}, 0.3);
        put({2}, 0.2);
        put({3}, 0.1);
        x[space.migrant_coord(0)] = 0.1;
    } else {
        put({0, 0}, 0.4);
        put({1, 0}, 0.3);
        put({2, 0}, 0.2);
        put({3, 0}, 0.1);
        x[space.migrant_coord(0)] = 0.1;
    }
    return x;
}

namespace detail {

inline Json provenance(const LoadedModel& m, const ExperimentSpec& s, const ScaledState* x0) {
    Json p = {{"model", m.model.name},
              {"family", m.family},
              {"model_hash", m.hash_hex()},
              {"seed", s.seed},
              {"cap", m.cap()},
              {"kind", s.kind},
              {"horizon", s.horizon},
              {"replicas", s.replicas},
              {"n", s.n},
              {"tolerances", {{"integrator", s.tol}, {"tube_delta", s.delta}}}};
    if (x0) {
        // moment of the rounded initial condition, S_{2d+6}(x_N(0))
        const int r = 2 * m.model.varieties() + 6;
        Json moments = Json::array();
        for (auto N : s.n) {
            const auto init = PopulationState::from_scaled(*x0, N, m.model.slot_reserve);
            moments.push_back({{"n", N}, {"value", empirical_moment(init.scaled(), r)}});
        }
        p["initial_moment"] = {{"r", r}, {"by_n", moments}};
    }
    return p;
}

inline Table with_provenance(std::vector<std::string> header, const std::vector<std::vector<std::string>>& rows,
                             const LoadedModel& m, const ExperimentSpec& s) {
    Table t;
    for (const char* h : {"model_hash", "seed", "cap", "tol"}) header.emplace_back(h);
    t.header = std::move(header);
    for (auto r : rows) {
        r.push_back(m.hash_hex());
        r.push_back(std::to_string(s.seed));
        r.push_back(std::to_string(m.cap()));
        r.push_back(fmt(s.tol));
        t.rows.push_back(std::move(r));
    }
    return t;
}

inline Rng stream(const ExperimentSpec& s, std::uint64_t purpose, std::uint64_t sub = 0) {
    return Rng(s.seed, purpose).split(sub);
}

inline void require_family(const LoadedModel& m, const std::string& family, const std::string& what) {
    if (m.family != family) throw ExperimentError(what + " needs a " + family + " model, got " + m.family);
}

inline void check_n(const ExperimentSpec& s, bool increasing) {
    if (s.replicas < 1) throw ExperimentError("replicas must be >= 1");
    if (s.n.empty()) throw ExperimentError("empty N list");
    for (std::size_t k = 0; k < s.n.size(); ++k) {
        if (s.n[k] < 1) throw ExperimentError("N must be >= 1");
        if (increasing && k > 0 && s.n[k] <= s.n[k - 1]) throw ExperimentError("N list must be strictly increasing");
    }
}

}  // namespace detail

inline ScaledState initial_of(const LoadedModel& m, const ExperimentSpec& s) {
    return s.x0 ? *s.x0 : default_initial(m);
}

// ---------------------------------------------------------------------------

inline ExperimentResult run_simulate(const LoadedModel& m, const ExperimentSpec& s) {
    detail::check_n(s, false);
    const auto x0 = initial_of(m, s);
    const auto N = s.n.front();
    Rng rng = detail::stream(s, 1);
    SimulationOptions opt;
    opt.grid = uniform_grid(s.horizon, s.grid_points);
    opt.truncation_budget = -1;
    const auto traj = simulate(m.model, PopulationState::from_scaled(x0, N, m.model.slot_reserve), s.horizon, rng, opt);
    std::vector<std::vector<std::string>> rows;
    const auto& space = m.model.types();
    for (std::size_t g = 0; g < traj.grid.size(); ++g)
        for (std::size_t k = 0; k < space.size(); ++k)
            if (traj.snapshots[g][k] != 0.0)
                rows.push_back({fmt(traj.grid[g]), space.label(k), fmt(traj.snapshots[g][k])});
    ExperimentResult r;
    r.kind = "simulate";
    r.table = detail::with_provenance({"t", "type", "x"}, rows, m, s);
    r.report = {{"provenance", detail::provenance(m, s, &x0)},
                {"stop_reason", to_string(traj.stop_reason)},
                {"stop_time", traj.stop_time},
                {"events", traj.event_count},
                {"truncation_loss", traj.truncation_loss}};
    return r;
}

struct ConvergeRow {
    std::int64_t n = 0;
    std::size_t used = 0, excluded = 0;
    double median = 0.0, q25 = 0.0, q75 = 0.0;
};

/// Sup-mu distance between simulated and deterministic paths on a grid,
/// for each N.
inline std::vector<ConvergeRow> converge_rows(const LoadedModel& m, const ExperimentSpec& s, const ScaledState& x0) {
    detail::check_n(s, true);
    IntegrateOptions io;
    io.tol = s.tol;
    io.grid = uniform_grid(s.horizon, s.grid_points);
    const auto det = integrate(m.model, x0, s.horizon, io);
    std::vector<ConvergeRow> rows;
    for (std::size_t a = 0; a < s.n.size(); ++a) {
        const auto N = s.n[a];
        const auto init = PopulationState::from_scaled(x0, N, m.model.slot_reserve);
        const Rng base = detail::stream(s, 2, a);
        const auto errs = parallel_map(s.replicas, [&](std::size_t k) {
            Rng rng = base.split(k);
            SimulationOptions opt;
            opt.grid = io.grid;
            opt.truncation_budget = -1;
            const auto traj = simulate(m.model, init, s.horizon, rng, opt);
            return traj.reached_horizon() ? sup_mu_error(traj, det) : std::numeric_limits<double>::quiet_NaN();
        });
        ConvergeRow row;
        row.n = N;
        std::vector<double> ok;
        for (double e : errs) {
            if (std::isnan(e)) {
                ++row.excluded;
            } else {
                ok.push_back(e);
                ++row.used;
            }
        }
        if (ok.empty()) throw ExperimentError("converge: every replica stopped early at N = " + std::to_string(N));
        row.median = median(ok);
        row.q25 = quantile(ok, 0.25);
        row.q75 = quantile(ok, 0.75);
        rows.push_back(row);
    }
    return rows;
}

inline ExperimentResult run_converge(const LoadedModel& m, const ExperimentSpec& s) {
    const auto x0 = initial_of(m, s);
    const auto rows = converge_rows(m, s, x0);
    std::vector<std::vector<std::string>> out;
    Json ratios = Json::array();
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        out.push_back({std::to_string(r.n), std::to_string(r.used), std::to_string(r.excluded), fmt(r.median),
                       fmt(r.q25), fmt(r.q75), fmt(r.q75 - r.q25)});
        if (k > 0) ratios.push_back(r.median / rows[k - 1].median);
    }
    ExperimentResult res;
    res.kind = "converge";
    res.table = detail::with_provenance({"n", "used", "excluded", "median", "q25", "q75", "iqr"}, out, m, s);
    res.report = {{"provenance", detail::provenance(m, s, &x0)}, {"median_ratios", ratios}};
    for (const auto& r : rows)
        if (r.excluded) res.warnings.push_back("N = " + std::to_string(r.n) + ": " + std::to_string(r.excluded) +
                                               " replicas stopped before the horizon and were excluded");
    return res;
}

struct CouplingRow {
    std::int64_t n = 0;
    std::size_t replicas = 0, coupled = 0, excluded = 0;
    double decoupled = 0.0, se = 0.0;
    double eps = 0.0, P = 0.0, D = 0.0, bound = 0.0;
    bool within_bound = false;  ///< decoupled <= bound + 3 se
};

/// Couples a tagged patch driven by the simulated environment with one
/// driven by the deterministic path. eps is the 0.9 quantile of the
/// sup-mu errors, P the fraction of replicas exceeding it, and D the
/// estimated D_Y on the tube of radius eps.
inline std::vector<CouplingRow> coupling_rows(const LoadedModel& m, const ExperimentSpec& s, const ScaledState& x0) {
    detail::check_n(s, true);
    IntegrateOptions io;
    io.tol = s.tol;
    io.grid = uniform_grid(s.horizon, s.grid_points);
    const auto det = integrate(m.model, x0, s.horizon, io);
    if (s.tag_type < 0 || s.tag_type >= static_cast<int>(m.model.interior_count()))
        throw ExperimentError("couple: tag type outside the type space");
    struct One {
        bool ok = false;
        double err = 0.0;
        bool coupled = false;
    };
    std::vector<CouplingRow> rows;
    for (std::size_t a = 0; a < s.n.size(); ++a) {
        const auto N = s.n[a];
        const auto init = PopulationState::from_scaled(x0, N, m.model.slot_reserve);
        const Rng base = detail::stream(s, 3, a);
        const auto res = parallel_map(s.replicas, [&](std::size_t k) {
            Rng rng = base.split(k);
            SimulationOptions opt;
            opt.grid = io.grid;
            opt.record_events = true;
            opt.truncation_budget = -1;
            const auto traj = simulate(m.model, init, s.horizon, rng, opt);
            One o;
            if (!traj.reached_horizon()) return o;
            o.ok = true;
            o.err = sup_mu_error(traj, det);
            o.coupled = couple(m.model, traj, det, PatchState{s.tag_type}, s.horizon, rng).coupled();
            return o;
        });
        CouplingRow row;
        row.n = N;
        std::vector<double> errs;
        for (const auto& o : res) {
            if (!o.ok) {
                ++row.excluded;
                continue;
            }
            ++row.replicas;
            errs.push_back(o.err);
            if (o.coupled) ++row.coupled;
        }
        if (errs.empty()) throw ExperimentError("couple: every replica stopped early");
        const double R = static_cast<double>(row.replicas);
        row.decoupled = 1.0 - static_cast<double>(row.coupled) / R;
        row.se = std::sqrt(std::max(row.decoupled * (1.0 - row.decoupled), 1.0 / R) / R);
        row.eps = quantile(errs, 0.9);
        row.P = static_cast<double>(std::count_if(errs.begin(), errs.end(), [&](double e) { return e > row.eps; })) / R;
        Rng lip = detail::stream(s, 4, a);
        row.D = estimate_lipschitz(m.model, tube_pairs(m.model, det, std::max(row.eps, 1e-6), 400, lip)).D_Y;
        row.bound = decoupling_bound(row.D, row.eps, s.horizon, row.P);
        row.within_bound = row.decoupled <= row.bound + 3.0 * row.se;
        rows.push_back(row);
    }
    return rows;
}

inline ExperimentResult run_couple(const LoadedModel& m, const ExperimentSpec& s) {
    const auto x0 = initial_of(m, s);
    const auto rows = coupling_rows(m, s, x0);
    std::vector<std::vector<std::string>> out;
    ExperimentResult res;
    res.kind = "couple";
    for (const auto& r : rows) {
        out.push_back({std::to_string(r.n), std::to_string(r.replicas), std::to_string(r.coupled),
                       std::to_string(r.excluded), fmt(r.decoupled), fmt(r.se), fmt(r.eps), fmt(r.P), fmt(r.D),
                       fmt(r.bound), r.within_bound ? "1" : "0"});
        res.ok = res.ok && r.within_bound;
    }
    res.table = detail::with_provenance(
        {"n", "replicas", "coupled", "excluded", "decoupled", "se", "eps", "P", "D_Y", "bound", "within_bound"}, out, m,
        s);
    res.report = {{"provenance", detail::provenance(m, s, &x0)}, {"bound_kind", "estimated"}};
    return res;
}

/// Parasite-count bucket of a tagged host: 0, 1, 2, >= 3, or 4 for a
/// destroyed patch.
inline int count_bucket(const TypeSpace& space, const PatchState& p) {
    if (p.is_destroyed()) return 4;
    return std::min(3, space.animals(static_cast<std::size_t>(p.type)));
}

struct IndependenceRow {
    std::int64_t n = 0;
    std::size_t runs = 0;
    IndependenceEstimate est;
};

/// Joint-vs-product TV of the buckets of pairs of tagged patches at the
/// horizon, with a bootstrap over runs.
inline std::vector<IndependenceRow> independence_rows(const LoadedModel& m, const ExperimentSpec& s,
                                                      const ScaledState& x0) {
    detail::check_n(s, true);
    const auto& space = m.model.types();
    std::vector<IndependenceRow> rows;
    for (std::size_t a = 0; a < s.n.size(); ++a) {
        const auto N = s.n[a];
        const auto init = PopulationState::from_scaled(x0, N, m.model.slot_reserve);
        // every tag starts in the most common initial type, so the pairs are
        // exchangeable and the pooled joint law is not a mixture over types
        std::size_t start = 0;
        for (std::size_t k = 1; k < space.interior_count(); ++k)
            if (init.count(k) > init.count(start)) start = k;
        const std::size_t want = 2 * static_cast<std::size_t>(s.pairs);
        if (static_cast<std::size_t>(init.count(start)) < want)
            throw ExperimentError("independence: fewer " + space.label(start) + " patches than tags at N = " +
                                  std::to_string(N));
        const std::vector<int> tags(want, static_cast<int>(start));
        const Rng base = detail::stream(s, 5, a);
        const auto runs = parallel_map(s.replicas, [&](std::size_t k) {
            Rng rng = base.split(k);
            SimulationOptions opt;
            opt.tags = tags;
            opt.truncation_budget = -1;
            const auto traj = simulate(m.model, init, s.horizon, rng, opt);
            std::vector<std::vector<int>> tuples;
            for (std::size_t p = 0; p + 1 < traj.tagged.size(); p += 2)
                tuples.push_back({count_bucket(space, traj.tagged[p].at(s.horizon)),
                                  count_bucket(space, traj.tagged[p + 1].at(s.horizon))});
            return tuples;
        });
        std::vector<std::vector<int>> tuples;
        std::vector<std::size_t> clusters;
        for (std::size_t k = 0; k < runs.size(); ++k)
            for (const auto& t : runs[k]) {
                tuples.push_back(t);
                clusters.push_back(k);
            }
        Rng boot = detail::stream(s, 6, a);
        IndependenceRow row;
        row.n = N;
        row.runs = runs.size();
        row.est = group_independence(tuples, 5, boot, clusters);
        rows.push_back(row);
    }
    return rows;
}

inline ExperimentResult run_independence(const LoadedModel& m, const ExperimentSpec& s) {
    const auto x0 = initial_of(m, s);
    const auto rows = independence_rows(m, s, x0);
    std::vector<std::vector<std::string>> out;
    ExperimentResult res;
    res.kind = "independence";
    for (const auto& r : rows) {
        out.push_back({std::to_string(r.n), std::to_string(r.runs), std::to_string(r.est.samples), fmt(r.est.tv),
                       fmt(r.est.ci_low), fmt(r.est.ci_high), r.est.underpowered ? "1" : "0"});
        if (r.est.underpowered) res.warnings.push_back("N = " + std::to_string(r.n) + ": underpowered");
    }
    res.table =
        detail::with_provenance({"n", "runs", "pairs", "tv", "ci_low", "ci_high", "underpowered"}, out, m, s);
    res.report = {{"provenance", detail::provenance(m, s, &x0)}, {"buckets", {"0", "1", "2", ">=3", "destroyed"}}};
    return res;
}

struct CohortResult {
    std::size_t runs = 0, survivors = 0;
    double mean = 0.0, se = 0.0, dispersion = 0.0;
    GoodnessOfFit gof;
    double predicted = 0.0;  ///< quadrature of the Poisson mean
    bool underpowered = false;
    std::vector<int> counts;
};

/// Hosts born parasite-free at time 0 in the deterministic environment;
/// parasite counts of the survivors at age T.
inline CohortResult cohort(const LoadedModel& m, const ExperimentSpec& s, const ScaledState& x0) {
    detail::require_family(m, "kretzschmar", "cohort");
    const auto& p = std::get<KretzschmarParams>(m.params);
    IntegrateOptions io;
    io.tol = s.tol;
    io.grid = uniform_grid(s.horizon, std::max<std::size_t>(s.grid_points, 2));
    const auto det = std::make_shared<const DeterministicPath>(integrate(m.model, x0, s.horizon, io));
    CohortResult c;
    c.predicted = simpson(
        [&](double t) { return p.lambda * kretzschmar_phi(det->at(t), p.c) * std::exp(-(p.mu + p.alpha) * (s.horizon - t)); },
        0.0, s.horizon, 4000);
    const auto& space = m.model.types();
    const Rng base = detail::stream(s, 7);
    const std::size_t batch = 4096;
    while (c.survivors < s.target_survivors && c.runs < s.max_runs) {
        const std::size_t start = c.runs;
        const auto finals = parallel_map(batch, [&](std::size_t k) {
            DeterministicDriver driver(m.model, det);
            Rng rng = base.split(start + k);
            const auto path = simulate_tagged(m.model, driver, PatchState{0}, s.horizon, rng);
            const auto f = path.final_state();
            return f.is_destroyed() ? -1 : space.animals(static_cast<std::size_t>(f.type));
        });
        c.runs += batch;
        for (int v : finals)
            if (v >= 0) c.counts.push_back(v);
        c.survivors = c.counts.size();
    }
    c.underpowered = c.survivors < s.target_survivors;
    std::vector<double> v(c.counts.begin(), c.counts.end());
    const auto ms = mean_se(v);
    c.mean = ms.mean;
    c.se = ms.se;
    c.dispersion = ms.mean > 0.0 ? ms.variance / ms.mean : std::numeric_limits<double>::quiet_NaN();
    c.gof = poisson_gof(c.counts);
    return c;
}

inline ExperimentResult run_cohort(const LoadedModel& m, const ExperimentSpec& s) {
    const auto x0 = initial_of(m, s);
    const auto c = cohort(m, s, x0);
    ExperimentResult res;
    res.kind = "cohort";
    res.table = detail::with_provenance(
        {"age", "runs", "survivors", "mean", "se", "dispersion", "chi2", "dof", "p_value", "predicted"},
        {{fmt(s.horizon), std::to_string(c.runs), std::to_string(c.survivors), fmt(c.mean), fmt(c.se),
          fmt(c.dispersion), fmt(c.gof.statistic), std::to_string(c.gof.dof), fmt(c.gof.p_value), fmt(c.predicted)}},
        m, s);
    res.report = {{"provenance", detail::provenance(m, s, &x0)}, {"underpowered", c.underpowered}};
    if (c.underpowered) res.warnings.push_back("cohort: too few survivors");
    return res;
}

struct InvasionResult {
    MeanEstimate mbar;
    MalthusResult malthus;
    ExtinctionEstimate q;
    std::size_t w_alive = 0;
    int K = 0;
    std::int64_t n = 0;
    std::size_t trials = 0, established = 0, extinct = 0, undecided = 0;
    double predicted = 0.0;  ///< 1 - q^K
    double frequency = 0.0;  ///< established / decided
    double se = 0.0;
    bool k2n_large = false;
};

inline std::int64_t invader_count(const PopulationState& st) {
    const auto& space = st.space();
    std::int64_t c = st.migrants(1);
    for (std::size_t k = 0; k < space.interior_count(); ++k)
        if (st.count(k)) c += st.count(k) * space.count_of(k, 1);
    return c;
}

/// Branching prediction for the invader and the establishment frequency
/// of K juveniles introduced into the resident equilibrium at scale N.
inline InvasionResult invasion(const LoadedModel& m, const ExperimentSpec& s) {
    detail::require_family(m, "metz-gyllenberg-2", "invade");
    const auto& p = std::get<MG2Params>(m.params);
    if (s.introductions < 0) throw ExperimentError("invade: negative number of introductions");
    InvasionResult r;
    r.K = s.introductions;
    r.n = s.n.front();
    const auto xbar = resident_equilibrium(p);
    Rng wr = detail::stream(s, 8);
    const auto rec = collect_offspring(p, xbar, s.w_horizon, s.w_replicas, wr);
    r.w_alive = rec.alive_at_horizon;
    r.mbar = mean_offspring(rec);
    r.malthus = malthusian_rate(offspring_intensity(rec, s.w_horizon / 2000.0), 2.0 * r.mbar.se);
    Rng qr = detail::stream(s, 9);
    r.q = extinction_prob(rec, qr);
    r.predicted = establishment_probability(r.q.q, r.K);
    r.k2n_large = static_cast<double>(r.K) * r.K / static_cast<double>(r.n) > s.k2n_warn;

    ScaledState x = xbar;
    x[m.model.types().migrant_coord(1)] = static_cast<double>(r.K) / static_cast<double>(r.n);
    const auto init = PopulationState::from_scaled(x, r.n, m.model.slot_reserve);
    const Rng base = detail::stream(s, 10);
    const int threshold = s.establish_at;
    const auto outcomes = parallel_map(s.replicas, [&](std::size_t k) {
        if (r.K == 0) return -1;
        Rng rng = base.split(k);
        SimulationOptions opt;
        opt.truncation_budget = -1;
        opt.stop_when = [threshold](const PopulationState& st) {
            const auto c = invader_count(st);
            return c == 0 || c >= threshold;
        };
        const auto traj = simulate(m.model, init, s.horizon, rng, opt);
        const auto c = invader_count(traj.final_state);
        if (c == 0) return -1;
        return c >= threshold ? 1 : 0;
    });
    r.trials = outcomes.size();
    for (int o : outcomes) (o > 0 ? r.established : o < 0 ? r.extinct : r.undecided)++;
    const double decided = static_cast<double>(r.established + r.extinct);
    r.frequency = decided > 0 ? static_cast<double>(r.established) / decided : 0.0;
    r.se = decided > 0 ? std::sqrt(std::max(r.frequency * (1 - r.frequency), 1.0 / decided) / decided) : 0.0;
    return r;
}

inline ExperimentResult run_invade(const LoadedModel& m, const ExperimentSpec& s) {
    const auto r = invasion(m, s);
    ExperimentResult res;
    res.kind = "invade";
    const char* status = r.malthus.status == Criticality::Supercritical ? "supercritical"
                         : r.malthus.status == Criticality::Critical   ? "critical"
                                                                        : "subcritical";
    res.table = detail::with_provenance(
        {"n", "K", "mbar", "mbar_se", "tail_bound", "status", "rho", "q", "q_se", "predicted", "trials", "established",
         "extinct", "undecided", "frequency", "frequency_se"},
        {{std::to_string(r.n), std::to_string(r.K), fmt(r.mbar.mean), fmt(r.mbar.se), fmt(r.mbar.tail_bound), status,
          fmt(r.malthus.rho), fmt(r.q.q), fmt(r.q.se), fmt(r.predicted), std::to_string(r.trials),
          std::to_string(r.established), std::to_string(r.extinct), std::to_string(r.undecided), fmt(r.frequency),
          fmt(r.se)}},
        m, s);
    res.report = {{"provenance", detail::provenance(m, s, nullptr)},
                  {"w_replicas", s.w_replicas},
                  {"w_horizon", s.w_horizon},
                  {"w_alive_at_horizon", r.w_alive}};
    if (r.k2n_large)
        res.warnings.push_back("K^2/N = " + fmt(static_cast<double>(r.K) * r.K / static_cast<double>(r.n)) +
                               ": the multi-individual coupling term is not negligible");
    if (r.undecided) res.warnings.push_back(std::to_string(r.undecided) + " invasions undecided at the horizon");
    return res;
}

inline Json to_json(const AuditReport& rep) {
    Json entries = Json::array();
    for (const auto& e : rep.entries) {
        Json w = Json::array();
        for (std::size_t k = 0; k < e.witness.size(); ++k)
            if (e.witness[k] != 0.0) w.push_back({{"type", e.witness.space().label(k)}, {"x", e.witness[k]}});
        entries.push_back({{"id", e.id},
                           {"r", e.r},
                           {"probes", e.probes},
                           {"worst", e.worst},
                           {"by_cap", e.by_cap},
                           {"grows", e.grows},
                           {"beyond_default", e.beyond_default},
                           {"pass", e.pass},
                           {"witness_type", e.witness_type},
                           {"witness", w}});
    }
    Json j = {{"model", rep.model}, {"caps", rep.caps}, {"w", rep.w}, {"entries", entries}, {"passed", rep.passed()}};
    for (auto [key, v] : {std::pair{"D_Y", rep.D_Y}, {"D_Z", rep.D_Z}, {"sigma_plus", rep.sigma_plus}})
        j[key] = std::isfinite(v) ? Json(v) : Json(nullptr);
    return j;
}

/// Condition audit at the configured caps plus Lipschitz estimates on the
/// tube around the deterministic path at the base cap.
inline AuditReport audit(const LoadedModel& m, const ExperimentSpec& s) {
    std::vector<int> caps = s.caps;
    if (caps.empty()) caps = {m.cap(), 2 * m.cap()};
    const auto seed = s.seed;
    auto factory = [&](int cap) { return with_cap(m, cap).model; };
    auto probes = [seed](const ModelDefinition& md) {
        ProbeOptions po;
        po.seed = seed;
        return audit_probes(md, po);
    };
    auto rep = audit_growth(factory, caps, probes);
    const auto x0 = initial_of(m, s);
    IntegrateOptions io;
    io.tol = s.tol;
    const auto det = integrate(m.model, x0, s.horizon, io);
    Rng rng = detail::stream(s, 11);
    const auto lip = estimate_lipschitz(m.model, tube_pairs(m.model, det, s.delta, 400, rng));
    rep.D_Y = lip.D_Y;
    rep.D_Z = lip.D_Z;
    rep.sigma_plus = lip.sigma_plus;
    return rep;
}

inline ExperimentResult run_audit(const LoadedModel& m, const ExperimentSpec& s) {
    const auto rep = audit(m, s);
    ExperimentResult res;
    res.kind = "audit";
    std::vector<std::vector<std::string>> rows;
    for (const auto& e : rep.entries) {
        std::string by;
        for (double v : e.by_cap) by += (by.empty() ? "" : ";") + fmt(v);
        rows.push_back({e.id, std::to_string(e.r), fmt(e.worst), by, e.grows ? "1" : "0", e.pass ? "1" : "0",
                        e.beyond_default ? "1" : "0"});
    }
    res.table = detail::with_provenance({"condition", "r", "worst", "by_cap", "grows", "pass", "beyond_default"}, rows, m, s);
    res.report = to_json(rep);
    res.report["provenance"] = detail::provenance(m, s, nullptr);
    res.ok = rep.passed();
    return res;
}

inline ExperimentResult run_experiment(const LoadedModel& m, const ExperimentSpec& s) {
    if (s.kind == "simulate") return run_simulate(m, s);
    if (s.kind == "converge") return run_converge(m, s);
    if (s.kind == "couple") return run_couple(m, s);
    if (s.kind == "independence") return run_independence(m, s);
    if (s.kind == "cohort") return run_cohort(m, s);
    if (s.kind == "invade") return run_invade(m, s);
    if (s.kind == "audit") return run_audit(m, s);
    throw ExperimentError("unknown experiment kind " + s.kind);
}

/// Writes <dir>/<kind>.csv and <dir>/<kind>.json.
inline void write_result(const ExperimentResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / (r.kind + ".csv"), std::ios::binary) << r.table.csv();
    Json j = r.report;
    j["ok"] = r.ok;
    j["warnings"] = r.warnings;
    std::ofstream(dir / (r.kind + ".json"), std::ios::binary) << j.dump(2) << "\n";
}

}  // namespace metapop
