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
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "metapop/det_solver.hpp"
#include "metapop/invasion.hpp"
#include "metapop/models.hpp"
#include "metapop/parallel.hpp"
#include "metapop/rng.hpp"
#include "metapop/tagged.hpp"

namespace metapop {

class FixedPointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Offspring birth times of independent W life histories.
struct OffspringRecord {
    std::vector<std::vector<double>> times;  ///< per replica, sorted
    double horizon = 0.0;
    std::size_t alive_at_horizon = 0;
    /// Bound on the expected offspring still to come for one history alive
    /// at the horizon (infinite when the catastrophe rate can vanish).
    double tail_per_survivor = 0.0;

    std::size_t replicas() const { return times.size(); }
    std::vector<double> counts() const {
        std::vector<double> c;
        c.reserve(times.size());
        for (const auto& t : times) c.push_back(static_cast<double>(t.size()));
        return c;
    }
    double tail_bound() const {
        if (alive_at_horizon == 0 || times.empty()) return 0.0;
        return tail_per_survivor * static_cast<double>(alive_at_horizon) / static_cast<double>(times.size());
    }
};

/// Resident equilibrium of the first variety, lifted into the two-variety
/// type space of make_mg2(p).
inline ScaledState resident_equilibrium(const MG2Params& p, const EquilibriumOptions& opt = {}) {
    const auto resident = make_mg1(p.resident());
    ScaledState x0(resident.space);
    x0[0] = 0.5;
    if (resident.interior_count() > 1) x0[1] = 0.5;
    const auto eq = find_equilibrium(resident, x0, opt);
    if (!eq.converged) throw FixedPointError("resident_equilibrium: iteration did not converge");
    const auto model = make_mg2(p);
    const auto& space = model.types();
    ScaledState x(model.space);
    for (std::size_t i = 0; i < resident.interior_count(); ++i)
        x[*space.index_of({resident.types().animals(i), 0})] = eq.x[i];
    x[space.migrant_coord(0)] = eq.x.migrant(0);
    return x;
}

namespace detail {

inline void check_fixed_point(const ModelDefinition& model, const ScaledState& xbar, double tol) {
    const double r = drift_residual(model, xbar);
    if (!(r <= tol))
        throw FixedPointError("offspring: resident state is not a fixed point (residual " + std::to_string(r) + ")");
}

inline double tail_per_survivor(const MG2Params& p) {
    double emit = 0.0, gmin = std::numeric_limits<double>::infinity();
    for (int n = 0; n <= p.cap; ++n) {
        const auto k = static_cast<std::size_t>(n);
        emit = std::max(emit, n * p.lambda[1][k] * p.disp[1][k]);
        gmin = std::min(gmin, p.gamma[k]);
    }
    if (emit == 0.0) return 0.0;
    return gmin > 0.0 ? emit / gmin : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Replicas of W in the constant resident environment xbar, recording the
/// times at which juvenile migrants are emitted. Histories still alive at
/// the horizon are tallied.
inline OffspringRecord collect_offspring(const MG2Params& p, const ScaledState& xbar, double horizon,
                                         std::size_t replicas, Rng& rng, std::optional<int> settled_in = std::nullopt,
                                         double fixed_point_tol = 1e-8) {
    const auto model = make_mg2(p);
    detail::check_fixed_point(model, xbar, fixed_point_tol);
    const Rng base(rng(), 0);
    const auto paths = parallel_map(replicas, [&](std::size_t k) {
        ConstantDriver driver(model, xbar);
        Rng r = base.split(k);
        return simulate_W(p, model, driver, r, horizon, settled_in);
    });
    OffspringRecord rec;
    rec.horizon = horizon;
    rec.tail_per_survivor = detail::tail_per_survivor(p);
    for (const auto& w : paths) {
        rec.times.push_back(w.offspring_times);
        if (w.alive_at_horizon) ++rec.alive_at_horizon;
    }
    return rec;
}

struct MeanEstimate {
    double mean = 0.0;
    double se = 0.0;
    double tail_bound = 0.0;  ///< bias bound from histories alive at the horizon
};

inline MeanEstimate mean_offspring(const OffspringRecord& rec) {
    MeanEstimate m;
    const auto c = rec.counts();
    if (c.empty()) return m;
    const double n = static_cast<double>(c.size());
    m.mean = std::accumulate(c.begin(), c.end(), 0.0) / n;
    if (c.size() > 1) {
        double ss = 0.0;
        for (double v : c) ss += (v - m.mean) * (v - m.mean);
        m.se = std::sqrt(ss / (n - 1.0) / n);
    }
    m.tail_bound = rec.tail_bound();
    return m;
}

/// Histogram estimate of the offspring intensity m(t) on [0, horizon].
struct Intensity {
    double bin = 0.0;
    std::vector<double> density;  ///< mean offspring per unit time in each bin

    double integral() const { return std::accumulate(density.begin(), density.end(), 0.0) * bin; }
    /// Laplace transform of the piecewise-constant estimate.
    double laplace(double rho) const {
        double s = 0.0;
        for (std::size_t k = 0; k < density.size(); ++k) {
            const double a = static_cast<double>(k) * bin, b = a + bin;
            s += density[k] * (rho == 0.0 ? bin : (std::exp(-rho * a) - std::exp(-rho * b)) / rho);
        }
        return s;
    }
};

inline Intensity offspring_intensity(const OffspringRecord& rec, double bin) {
    if (!(bin > 0.0) || !(rec.horizon > 0.0)) throw std::invalid_argument("offspring_intensity: bin and horizon must be positive");
    Intensity m;
    m.bin = bin;
    m.density.assign(static_cast<std::size_t>(std::ceil(rec.horizon / bin)), 0.0);
    if (rec.times.empty()) return m;
    const double w = 1.0 / (static_cast<double>(rec.replicas()) * bin);
    for (const auto& ts : rec.times)
        for (double t : ts) {
            const auto k = std::min(m.density.size() - 1, static_cast<std::size_t>(t / bin));
            m.density[k] += w;
        }
    return m;
}

enum class Criticality { Subcritical, Critical, Supercritical };

struct MalthusResult {
    Criticality status = Criticality::Subcritical;
    double rho = 0.0;
    double lo = 0.0, hi = 0.0;  ///< final bisection bracket
    double residual = 0.0;      ///< Laplace transform at rho minus 1
};

/// Malthusian parameter: the root of  int e^{-rho t} m(t) dt = 1. With
/// mean offspring within `noise` of 1 the process is reported critical.
inline MalthusResult malthusian_rate(const Intensity& m, double noise = 0.0) {
    MalthusResult res;
    const double mbar = m.integral();
    if (std::abs(mbar - 1.0) <= std::max(noise, 1e-12)) {
        res.status = Criticality::Critical;
        res.residual = mbar - 1.0;
        return res;
    }
    if (mbar < 1.0) {
        res.status = Criticality::Subcritical;
        res.residual = mbar - 1.0;
        return res;
    }
    res.status = Criticality::Supercritical;
    double lo = 0.0, hi = 1.0;
    while (m.laplace(hi) > 1.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12) throw std::runtime_error("malthusian_rate: root not bracketed");
    }
    while (hi - lo > 1e-8 * std::max(1.0, hi)) {
        const double mid = 0.5 * (lo + hi);
        (m.laplace(mid) > 1.0 ? lo : hi) = mid;
    }
    res.rho = 0.5 * (lo + hi);
    res.lo = lo;
    res.hi = hi;
    res.residual = m.laplace(res.rho) - 1.0;
    return res;
}

struct ExtinctionEstimate {
    double q = 1.0;
    double se = 0.0;
    bool converged = true;
};

namespace detail {

/// Smallest fixed point in [0, 1] of the empirical offspring pgf.
inline double pgf_fixed_point(const std::vector<double>& counts, bool* converged = nullptr) {
    if (converged) *converged = true;
    if (counts.empty()) return 1.0;
    std::vector<double> p;
    for (double c : counts) {
        const auto k = static_cast<std::size_t>(c);
        if (p.size() <= k) p.resize(k + 1, 0.0);
        p[k] += 1.0;
    }
    const double n = static_cast<double>(counts.size());
    double mean = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        p[k] /= n;
        mean += static_cast<double>(k) * p[k];
    }
    if (p.size() > 1 && p[1] == 1.0) return 0.0;
    if (mean <= 1.0) return 1.0;
    double s = 0.0;
    for (int it = 0; it < 10'000'000; ++it) {
        double g = 0.0;
        for (std::size_t k = p.size(); k-- > 0;) g = g * s + p[k];
        if (std::abs(g - s) < 1e-10) return g;
        s = g;
    }
    if (converged) *converged = false;
    return s;
}

}  // namespace detail

/// Extinction probability of the Galton-Watson process whose offspring law
/// is the empirical distribution of total offspring counts, with a
/// bootstrap standard error.
inline ExtinctionEstimate extinction_prob(const std::vector<double>& counts, Rng& rng, int bootstrap = 200) {
    ExtinctionEstimate e;
    e.q = detail::pgf_fixed_point(counts, &e.converged);
    if (counts.size() < 2 || bootstrap < 2) return e;
    std::vector<double> qs, sample(counts.size());
    for (int b = 0; b < bootstrap; ++b) {
        for (auto& v : sample) v = counts[rng.below(counts.size())];
        qs.push_back(detail::pgf_fixed_point(sample));
    }
    const double mean = std::accumulate(qs.begin(), qs.end(), 0.0) / static_cast<double>(qs.size());
    double ss = 0.0;
    for (double q : qs) ss += (q - mean) * (q - mean);
    e.se = std::sqrt(ss / static_cast<double>(qs.size() - 1));
    return e;
}

inline ExtinctionEstimate extinction_prob(const OffspringRecord& rec, Rng& rng, int bootstrap = 200) {
    return extinction_prob(rec.counts(), rng, bootstrap);
}

/// Probability that at least one of K independent introductions establishes.
inline double establishment_probability(double q, int K) { return 1.0 - std::pow(q, K); }

struct PerTypeOffspring {
    std::vector<MeanEstimate> by_type;  ///< index i: settled into a patch with i residents
    double m_star = 0.0;
    int argmax = 0;
    /// mu_i + gamma_i >= lambda_i (1 - (1 - eps) d_i), per total occupancy i
    std::vector<bool> sufficient;
    int i0 = -1;  ///< smallest i0 with the condition for all i >= i0 (-1: none)
};

/// Mean total offspring of W started from a juvenile settled in a patch
/// with i residents, for every i that leaves room for it.
inline PerTypeOffspring per_type_offspring(const MG2Params& p, const ScaledState& xbar, double horizon,
                                           std::size_t replicas, Rng& rng, double eps = 0.05) {
    PerTypeOffspring out;
    for (int i = 0; i + 1 <= p.cap; ++i) {
        const auto rec = collect_offspring(p, xbar, horizon, replicas, rng, i);
        out.by_type.push_back(mean_offspring(rec));
        if (out.by_type.back().mean > out.m_star) {
            out.m_star = out.by_type.back().mean;
            out.argmax = i;
        }
    }
    for (int n = 0; n <= p.cap; ++n) {
        const auto k = static_cast<std::size_t>(n);
        out.sufficient.push_back(p.mu[1][k] + p.gamma[k] >= p.lambda[1][k] * (1.0 - (1.0 - eps) * p.disp[1][k]));
    }
    for (int n = p.cap; n >= 0 && out.sufficient[static_cast<std::size_t>(n)]; --n) out.i0 = n;
    return out;
}

}  // namespace metapop
