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
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "metapop/det_path.hpp"
#include "metapop/model.hpp"
#include "metapop/state.hpp"

namespace metapop {

class IntegrationError : public std::runtime_error {
public:
    enum class Kind { StepUnderflow, BlowUp, ClippingExceeded, NonFinite };
    IntegrationError(Kind kind, const std::string& what, double at)
        : std::runtime_error(what), kind_(kind), time_(at) {}
    Kind kind() const { return kind_; }
    double time() const { return time_; }

private:
    Kind kind_;
    double time_;
};

/// Which parts of the rates enter a drift evaluation.
enum class DriftPart { All, FixedOnly, DependentOnly };

namespace detail {

inline void accumulate_drift(const ModelDefinition& model, const ScaledState& x, const StateRates* dep, DriftPart part,
                             std::vector<double>& out) {
    const auto& space = model.types();
    const std::size_t n = space.interior_count();
    const int d = space.varieties();
    out.assign(space.size(), 0.0);
    const bool fixed = part != DriftPart::DependentOnly;
    const bool dependent = part != DriftPart::FixedOnly && dep != nullptr;

    // Moves one unit of density `rate` from `from` to `to`; suppressed when
    // the target lies above the cap, matching the simulated process.
    auto move = [&](std::size_t from, int to, double rate) {
        if (to == kOverflow || rate == 0.0) return;
        out[from] -= rate;
        if (to >= 0) out[static_cast<std::size_t>(to)] += rate;
    };

    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i];
        if (dependent) out[i] += dep->beta[i];
        if (xi == 0.0) continue;
        if (fixed) {
            for (const auto& t : model.fixed.lambda[i]) move(i, t.to, xi * t.rate);
            out[i] -= xi * model.fixed.delta[i];
        }
        if (dependent) out[i] -= xi * dep->delta[i];
        for (int l = 0; l < d; ++l) {
            const std::size_t il = i * static_cast<std::size_t>(d) + static_cast<std::size_t>(l);
            const std::size_t mc = space.migrant_coord(l);
            double g = 0.0, gp = 0.0;
            if (fixed) {
                g += model.fixed.gamma[il];
                gp += model.fixed.gamma_prime[il];
            }
            if (dependent) {
                g += dep->gamma[il];
                gp += dep->gamma_prime[il];
            }
            if (g != 0.0 && space.count_of(i, l) > 0) {
                move(i, space.down(i, l), xi * g);
                out[mc] += xi * g;
            }
            out[mc] += xi * gp;
        }
    }
    if (dependent) {
        for (std::size_t p = 0; p < model.dependent.lambda_pattern.size(); ++p) {
            const auto& e = model.dependent.lambda_pattern[p];
            move(static_cast<std::size_t>(e.from), e.to, x[static_cast<std::size_t>(e.from)] * dep->lambda[p]);
        }
    }
    for (int l = 0; l < d; ++l) {
        const std::size_t mc = space.migrant_coord(l);
        const double xl = x[mc];
        if (xl == 0.0) continue;
        if (dependent) {
            for (std::size_t i = 0; i < n; ++i) {
                const double r = xl * x[i] * dep->sigma[static_cast<std::size_t>(l) * n + i];
                const int to = space.up(i, l);
                if (r == 0.0 || to == kOverflow) continue;
                out[i] -= r;
                out[static_cast<std::size_t>(to)] += r;
                out[mc] -= r;
            }
            out[mc] -= xl * dep->zeta[static_cast<std::size_t>(l)];
        }
        if (fixed) out[mc] -= xl * model.fixed.zeta[static_cast<std::size_t>(l)];
    }
}

}  // namespace detail

/// F0(x) on the truncated coordinates (interior types, then occupied
/// migrants). The free-place drift is the negation of the migrant drift and
/// is not returned. Transitions leaving the cap are suppressed.
inline std::vector<double> drift(const ModelDefinition& model, const ScaledState& x,
                                 DriftPart part = DriftPart::All) {
    std::vector<double> out;
    if (part == DriftPart::FixedOnly || !model.has_state_dependence()) {
        detail::accumulate_drift(model, x, nullptr, part, out);
        return out;
    }
    const StateRates dep = model.evaluate(x);
    check_rates(dep);
    detail::accumulate_drift(model, x, &dep, part, out);
    return out;
}

/// F0 = A x + F with A assembled from the fixed rates.
struct DriftSplit {
    const ModelDefinition* model = nullptr;
    Eigen::SparseMatrix<double> A;
    double w = 0.0;                 ///< max_z (A^T mu)_z / mu(z), clamped at 0
    std::size_t witness = 0;        ///< column attaining w

    std::vector<double> apply_A(const ScaledState& x) const {
        Eigen::Map<const Eigen::VectorXd> v(x.raw().data(), static_cast<Eigen::Index>(x.size()));
        Eigen::VectorXd y = A * v;
        return {y.data(), y.data() + y.size()};
    }

    /// The state-dependent residual F(x).
    std::vector<double> F(const ScaledState& x) const { return drift(*model, x, DriftPart::DependentOnly); }
};

/// Column sums (A^T mu)_z / mu(z) for every coordinate.
inline std::vector<double> mu_column_ratios(const TypeSpace& space, const Eigen::SparseMatrix<double>& A) {
    std::vector<double> out(static_cast<std::size_t>(A.cols()), 0.0);
    for (Eigen::Index c = 0; c < A.outerSize(); ++c) {
        double s = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, c); it; ++it)
            s += it.value() * space.weight(static_cast<std::size_t>(it.row()));
        out[static_cast<std::size_t>(c)] = s / space.weight(static_cast<std::size_t>(c));
    }
    return out;
}

inline DriftSplit split_drift(const ModelDefinition& model) {
    const auto& space = model.types();
    const std::size_t n = space.interior_count();
    const int d = space.varieties();
    const auto dim = static_cast<Eigen::Index>(space.size());
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t i = 0; i < n; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        double diag = -model.fixed.delta[i];
        for (const auto& t : model.fixed.lambda[i]) {
            if (t.to == kOverflow || t.rate == 0.0) continue;
            trip.emplace_back(t.to, col, t.rate);
            diag -= t.rate;
        }
        for (int l = 0; l < d; ++l) {
            const std::size_t il = i * static_cast<std::size_t>(d) + static_cast<std::size_t>(l);
            const double g = space.count_of(i, l) > 0 ? model.fixed.gamma[il] : 0.0;
            const auto mrow = static_cast<Eigen::Index>(space.migrant_coord(l));
            if (g != 0.0) {
                trip.emplace_back(space.down(i, l), col, g);
                diag -= g;
            }
            if (g + model.fixed.gamma_prime[il] != 0.0) trip.emplace_back(mrow, col, g + model.fixed.gamma_prime[il]);
        }
        if (diag != 0.0) trip.emplace_back(col, col, diag);
    }
    for (int l = 0; l < d; ++l) {
        const auto m = static_cast<Eigen::Index>(space.migrant_coord(l));
        if (model.fixed.zeta[static_cast<std::size_t>(l)] != 0.0)
            trip.emplace_back(m, m, -model.fixed.zeta[static_cast<std::size_t>(l)]);
    }
    DriftSplit s;
    s.model = &model;
    s.A.resize(dim, dim);
    s.A.setFromTriplets(trip.begin(), trip.end());
    s.A.makeCompressed();

    const auto ratios = mu_column_ratios(space, s.A);
    s.w = 0.0;
    s.witness = 0;
    for (std::size_t z = 0; z < ratios.size(); ++z)
        if (ratios[z] > s.w) {
            s.w = ratios[z];
            s.witness = z;
        }
    return s;
}

struct SubinvarianceResult {
    double w = 0.0;
    std::size_t witness = 0;
    bool infinite = false;  ///< w kept growing when the cap was doubled
    double w_doubled = 0.0;
};

inline SubinvarianceResult mu_subinvariance(const DriftSplit& split) {
    return {split.w, split.witness, false, split.w};
}

/// As above, additionally comparing against the same model family at twice
/// the cap; growth beyond 10% flags w as infinite.
inline SubinvarianceResult mu_subinvariance(const std::function<ModelDefinition(int)>& family, int cap) {
    const ModelDefinition a = family(cap);
    const ModelDefinition b = family(2 * cap);
    const DriftSplit sa = split_drift(a);
    const DriftSplit sb = split_drift(b);
    SubinvarianceResult r{sa.w, sa.witness, false, sb.w};
    if (sb.w > 1.1 * sa.w + 1e-12) {
        r.infinite = true;
        r.w = std::numeric_limits<double>::infinity();
    }
    return r;
}

struct IntegrateOptions {
    double tol = 1e-8;                   ///< local error per unit time, mu-norm
    std::vector<double> grid;            ///< output times; empty = {0, T}
    double blowup_bound = 1e12;          ///< abort when ||x||_mu exceeds this
    double clip_tolerance = 1e-6;        ///< total mu-mass that may be clipped
    double initial_step = 0.0;           ///< 0 = automatic
    std::int64_t max_steps = 50'000'000;
};

namespace detail {

/// Dormand-Prince 5(4) tableau.
struct DP54 {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
};

}  // namespace detail

/// Solves x' = F0(x) on [0, T] with an adaptive embedded Runge-Kutta pair.
/// Steps land exactly on the output grid. Negative coordinates are clipped
/// to zero after each accepted step and tallied.
inline DeterministicPath integrate(const ModelDefinition& model, const ScaledState& x0, double T,
                                   const IntegrateOptions& opt = {}) {
    using D = detail::DP54;
    const auto& space = model.types();
    const std::size_t dim = space.size();
    if (x0.size() != dim) throw std::invalid_argument("integrate: state shape does not match model");
    if (!(T >= 0.0)) throw std::invalid_argument("integrate: negative horizon");
    std::vector<double> grid = opt.grid.empty() ? std::vector<double>{0.0, T} : opt.grid;
    if (grid.front() != 0.0) throw std::invalid_argument("integrate: grid must start at 0");
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (!(grid[k] > grid[k - 1])) throw std::invalid_argument("integrate: grid must be increasing");

    DeterministicPath path;
    path.tolerance = opt.tol;
    ScaledState x = x0;
    auto f = [&](const ScaledState& s) { return drift(model, s); };

    auto record = [&](const ScaledState& s, const std::vector<double>& fs) {
        path.states.push_back(s);
        path.derivatives.push_back(fs);
    };

    std::vector<double> k1 = f(x);
    path.times = grid;
    record(x, k1);

    double t = 0.0;
    double h = opt.initial_step > 0.0 ? opt.initial_step : std::min(0.01, std::max(grid.back(), 1e-6) / 100.0);
    ScaledState tmp(x.space_ptr());
    std::vector<double> k2, k3, k4, k5, k6, k7;
    ScaledState y5(x.space_ptr());

    auto stage = [&](std::initializer_list<std::pair<double, const std::vector<double>*>> terms, double hh) {
        for (std::size_t z = 0; z < dim; ++z) {
            double acc = x[z];
            for (const auto& [a, k] : terms) acc += hh * a * (*k)[z];
            tmp[z] = acc;
        }
        return f(tmp);
    };

    std::int64_t steps = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
        const double target = grid[g];
        while (t < target) {
            if (++steps > opt.max_steps) throw IntegrationError(IntegrationError::Kind::StepUnderflow, "integrate: step budget exhausted", t);
            bool last = false;
            double hh = h;
            if (t + hh >= target * (1 - 1e-14) || target - (t + hh) < 1e-12 * std::max(1.0, target)) {
                hh = target - t;
                last = true;
            }
            if (hh < 1e-14 * std::max(1.0, std::abs(t)))
                throw IntegrationError(IntegrationError::Kind::StepUnderflow, "integrate: step size underflow (stiff?)", t);

            k2 = stage({{D::a21, &k1}}, hh);
            k3 = stage({{D::a31, &k1}, {D::a32, &k2}}, hh);
            k4 = stage({{D::a41, &k1}, {D::a42, &k2}, {D::a43, &k3}}, hh);
            k5 = stage({{D::a51, &k1}, {D::a52, &k2}, {D::a53, &k3}, {D::a54, &k4}}, hh);
            k6 = stage({{D::a61, &k1}, {D::a62, &k2}, {D::a63, &k3}, {D::a64, &k4}, {D::a65, &k5}}, hh);
            for (std::size_t z = 0; z < dim; ++z)
                y5[z] = x[z] + hh * (D::b1 * k1[z] + D::b3 * k3[z] + D::b4 * k4[z] + D::b5 * k5[z] + D::b6 * k6[z]);
            k7 = f(y5);
            double err = 0.0;
            bool finite = true;
            for (std::size_t z = 0; z < dim; ++z) {
                const double e = hh * (D::e1 * k1[z] + D::e3 * k3[z] + D::e4 * k4[z] + D::e5 * k5[z] + D::e6 * k6[z] +
                                       D::e7 * k7[z]);
                err += space.weight(z) * std::abs(e);
                finite = finite && std::isfinite(y5[z]);
            }
            if (!finite || !std::isfinite(err)) {
                ++path.rejected_steps;
                h = hh * 0.2;
                continue;
            }
            const double allowed = opt.tol * hh;
            if (err > allowed) {
                ++path.rejected_steps;
                h = hh * std::max(0.2, 0.9 * std::pow(allowed / err, 0.25));
                continue;
            }
            ++path.accepted_steps;
            t = last ? target : t + hh;
            x = y5;
            bool clipped = false;
            for (std::size_t z = 0; z < dim; ++z)
                if (x[z] < 0.0) {
                    path.clipped_mass += space.weight(z) * (-x[z]);
                    ++path.clipped_count;
                    x[z] = 0.0;
                    clipped = true;
                }
            if (path.clipped_mass > opt.clip_tolerance)
                throw IntegrationError(IntegrationError::Kind::ClippingExceeded,
                                       "integrate: clipped negative mass exceeds tolerance", t);
            if (mu_norm(x) > opt.blowup_bound)
                throw IntegrationError(IntegrationError::Kind::BlowUp, "integrate: solution norm exceeds blow-up bound", t);
            k1 = clipped ? f(x) : k7;
            const double grow = err > 0.0 ? 0.9 * std::pow(allowed / err, 0.25) : 5.0;
            const double next = hh * std::clamp(grow, 0.2, 5.0);
            // A step shortened to hit the grid should not shrink the next one.
            h = last ? std::max(h, next) : next;
        }
        record(x, k1);
    }
    return path;
}

struct EquilibriumOptions {
    double residual_tol = 1e-10;  ///< target ||F0(x)||_mu
    double chunk = 10.0;          ///< integration time between residual checks
    double max_time = 1e5;
    double integrate_tol = 1e-10;
    int newton_iterations = 20;
    bool integrate_first = true;  ///< false: Newton only (reaches unstable equilibria near x0)
};

struct Equilibrium {
    ScaledState x;
    double residual = 0.0;
    double time = 0.0;  ///< integration time used before polishing
    bool converged = false;
};

inline double drift_residual(const ModelDefinition& model, const ScaledState& x) {
    const auto f = drift(model, x);
    return mu_norm(model.types(), f);
}

/// Equilibrium reached from x0: integrate forward until the drift is small
/// (or the flow blows up, after which Newton may land on any equilibrium,
/// including zero), then polish with Newton steps that keep any linear invariant of the flow
/// (such as total patch mass) fixed.
inline Equilibrium find_equilibrium(const ModelDefinition& model, const ScaledState& x0,
                                    const EquilibriumOptions& opt = {}) {
    Equilibrium eq;
    eq.x = x0;
    IntegrateOptions io;
    io.tol = opt.integrate_tol;
    double r = drift_residual(model, eq.x);
    while (opt.integrate_first && r > std::max(opt.residual_tol, 1e-7) && eq.time < opt.max_time) {
        try {
            const auto path = integrate(model, eq.x, opt.chunk, io);
            eq.x = path.states.back();
        } catch (const IntegrationError&) {
            // the flow leaves through a blow-up; fall back to Newton from where we are
            break;
        }
        eq.time += opt.chunk;
        r = drift_residual(model, eq.x);
    }

    const std::size_t dim = eq.x.size();
    for (int it = 0; it < opt.newton_iterations && r > opt.residual_tol; ++it) {
        Eigen::MatrixXd J(dim, dim);
        const auto f0 = drift(model, eq.x);
        for (std::size_t c = 0; c < dim; ++c) {
            const double hstep = 1e-7 * std::max(1.0, std::abs(eq.x[c]));
            // one-sided near the boundary: rates need not be defined for negative x
            const double back = eq.x[c] >= hstep ? hstep : 0.0;
            ScaledState xp = eq.x, xm = eq.x;
            xp[c] += hstep;
            xm[c] -= back;
            const auto fp = drift(model, xp);
            const auto fm = drift(model, xm);
            for (std::size_t z = 0; z < dim; ++z)
                J(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(c)) = (fp[z] - fm[z]) / (hstep + back);
        }
        // Left null vectors of J are linear invariants of the flow; pin them.
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullU);
        const auto& sv = svd.singularValues();
        const double cut = 1e-9 * std::max(1.0, sv(0));
        std::vector<Eigen::Index> null_cols;
        for (Eigen::Index k = 0; k < sv.size(); ++k)
            if (sv(k) <= cut) null_cols.push_back(k);
        const auto n = static_cast<Eigen::Index>(dim);
        const auto extra = static_cast<Eigen::Index>(null_cols.size());
        Eigen::MatrixXd M(n + extra, n);
        M.topRows(n) = J;
        for (Eigen::Index k = 0; k < extra; ++k) M.row(n + k) = svd.matrixU().col(null_cols[static_cast<std::size_t>(k)]).transpose();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + extra);
        for (std::size_t z = 0; z < dim; ++z) rhs(static_cast<Eigen::Index>(z)) = -f0[z];
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
        cod.setThreshold(1e-10);
        const Eigen::VectorXd dx = cod.solve(rhs);
        bool improved = false;
        for (double damp = 1.0; damp > 1e-3 && !improved; damp *= 0.5) {
            ScaledState trial = eq.x;
            for (std::size_t z = 0; z < dim; ++z)
                trial[z] = std::max(0.0, trial[z] + damp * dx(static_cast<Eigen::Index>(z)));
            const double rt = drift_residual(model, trial);
            if (rt < r) {
                eq.x = trial;
                r = rt;
                improved = true;
            }
        }
        if (!improved) break;
    }
    eq.residual = r;
    eq.converged = r <= opt.residual_tol;
    return eq;
}

}  // namespace metapop
