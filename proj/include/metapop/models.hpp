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
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metapop/model.hpp"
#include "metapop/type_space.hpp"

namespace metapop {

/// Parasite load model: hosts are patches, i counts parasites.
struct KretzschmarParams {
    double beta = 1.5;   ///< host birth scale, beta_0(x) = beta sum_i x_i theta^i
    double theta = 0.7;
    double kappa = 0.5;  ///< host death, parasite-free
    double alpha = 0.2;  ///< extra host death per parasite
    double mu = 1.0;     ///< parasite death
    double lambda = 3.0; ///< infection scale
    double c = 1.0;
    int cap = 20;
    double reserve = 0.5;
};

/// phi(x) = sum_j j x_j / (c + ||x||_1) over the interior coordinates.
inline double kretzschmar_phi(const ScaledState& x, double c) {
    const auto& space = x.space();
    double num = 0.0, mass = 0.0;
    for (std::size_t j = 0; j < space.interior_count(); ++j) {
        num += space.animals(j) * x[j];
        mass += x[j];
    }
    return num / (c + mass);
}

/// Poisson-closure starting point for the endemic equilibrium: parasite
/// load m solves beta e^{-m(1-theta)} = kappa + alpha m, host mass H solves
/// lambda H/(c+H) = mu + alpha - kappa + beta e^{-m(1-theta)}. Returns nullopt when the closure has no endemic solution.
inline std::optional<ScaledState> kretzschmar_closure_guess(const KretzschmarParams& p,
                                                            std::shared_ptr<const TypeSpace> space) {
    auto g = [&](double m) { return p.beta * std::exp(-m * (1.0 - p.theta)) - p.kappa - p.alpha * m; };
    if (!(g(0.0) > 0.0)) return std::nullopt;
    double lo = 0.0, hi = 1.0;
    while (g(hi) > 0.0) {
        hi *= 2.0;
        if (hi > 1e6) return std::nullopt;
    }
    for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? lo : hi) = mid;
    }
    const double m = lo;
    const double u = (p.mu + p.alpha + p.beta * std::exp(-m * (1.0 - p.theta)) - p.kappa) / p.lambda;
    if (!(u > 0.0 && u < 1.0)) return std::nullopt;
    const double H = p.c * u / (1.0 - u);
    ScaledState x(std::move(space));
    double pk = std::exp(-m);
    for (std::size_t i = 0; i < x.space().interior_count(); ++i) {
        x[i] = H * pk;
        pk *= m / static_cast<double>(i + 1);
    }
    return x;
}

inline ModelDefinition make_kretzschmar(const KretzschmarParams& p) {
    if (p.cap < 1) throw std::invalid_argument("kretzschmar: cap must be >= 1");
    ModelDefinition m;
    m.name = "kretzschmar";
    m.space = std::make_shared<const TypeSpace>(1, p.cap);
    const auto& space = *m.space;
    const std::size_t n = space.interior_count();
    m.fixed.resize(space);
    for (std::size_t i = 0; i < n; ++i) {
        const int a = space.animals(i);
        if (a >= 1) m.fixed.lambda[i].push_back({space.down(i, 0), a - 1, a * p.mu});
        m.fixed.delta[i] = p.kappa + a * p.alpha;
    }
    for (std::size_t i = 0; i < n; ++i)
        m.dependent.lambda_pattern.push_back({static_cast<int>(i), space.up(i, 0), space.animals(i) + 1});
    m.dependent.families = StateDependence::kLambda | StateDependence::kBeta;
    const double lambda = p.lambda, beta = p.beta, theta = p.theta, c = p.c;
    m.dependent.evaluate = [lambda, beta, theta, c](const ScaledState& x, StateRates& r) {
        const double rate = lambda * kretzschmar_phi(x, c);
        std::fill(r.lambda.begin(), r.lambda.end(), rate);
        const auto& space = x.space();
        double b = 0.0, pw = 1.0;
        for (std::size_t i = 0; i < space.interior_count(); ++i) {
            b += x[i] * pw;
            pw *= theta;
        }
        r.beta[0] = beta * b;
    };
    m.slot_reserve = {p.reserve};

    const double mu = p.mu, kappa = p.kappa, alpha = p.alpha;
    m.life = [mu, kappa, alpha](std::size_t patch, int, const Environment& env,
                                           std::vector<LifeTransition>& out) {
        const auto& space = env.x->space();
        const int a = space.animals(patch);
        if (a < 1) throw std::invalid_argument("life rates: animal in an empty host");
        LifeTransition in;
        in.kind = LifeMove::Composition;
        in.to_patch = space.up(patch, 0);
        in.dependent = env.rates->lambda[patch];
        out.push_back(in);
        if (a >= 2) {
            LifeTransition other;
            other.kind = LifeMove::Composition;
            other.to_patch = space.down(patch, 0);
            other.fixed = (a - 1) * mu;
            out.push_back(other);
        }
        LifeTransition death;
        death.kind = LifeMove::Death;
        death.fixed = mu + kappa + a * alpha;
        out.push_back(death);
    };
    return m;
}

/// Single-variety finite-patch model. Arrays are indexed by occupancy
/// 0..cap; missing entries default to the defaults below.
struct MG1Params {
    int cap = 8;
    std::vector<double> lambda;  ///< per-capita birth
    std::vector<double> mu;      ///< per-capita death
    std::vector<double> gamma;   ///< catastrophe per patch
    std::vector<double> disp;    ///< fraction of births that are migrants (d_i)
    std::vector<double> settle;  ///< settlement probability into an i-patch (s_i)
    double alpha = 1.0;
    double mu_D = 1.0;
    double reserve = 1.0;

    /// lambda_i = 3(1 - i/K)_+, mu_i = 1, gamma_i = 0.1, d_i = 0.3,
    /// s_i = (1 - i/K)_+ with K = 8.
    static MG1Params defaults(int cap = 8, int K = 8) {
        MG1Params p;
        p.cap = cap;
        for (int i = 0; i <= cap; ++i) {
            const double f = std::max(0.0, 1.0 - static_cast<double>(i) / K);
            p.lambda.push_back(3.0 * f);
            p.mu.push_back(1.0);
            p.gamma.push_back(0.1);
            p.disp.push_back(0.3);
            p.settle.push_back(f);
        }
        return p;
    }

    void check() const {
        auto sized = [&](const std::vector<double>& v, const char* name) {
            if (static_cast<int>(v.size()) != cap + 1)
                throw std::invalid_argument(std::string("mg1: ") + name + " needs cap + 1 entries");
            for (double r : v)
                if (!(r >= 0.0) || !std::isfinite(r))
                    throw std::invalid_argument(std::string("mg1: ") + name + " must be finite and nonnegative");
        };
        sized(lambda, "lambda");
        sized(mu, "mu");
        sized(gamma, "gamma");
        sized(disp, "d");
        sized(settle, "s");
        for (std::size_t i = 0; i < disp.size(); ++i)
            if (disp[i] > 1.0 || settle[i] > 1.0) throw std::invalid_argument("mg1: d_i and s_i must lie in [0, 1]");
        if (!(alpha >= 0.0) || !(mu_D >= 0.0)) throw std::invalid_argument("mg1: alpha and mu_D must be nonnegative");
    }
};

inline ModelDefinition make_mg1(const MG1Params& p) {
    p.check();
    ModelDefinition m;
    m.name = "metz-gyllenberg-1";
    m.space = std::make_shared<const TypeSpace>(1, p.cap);
    const auto& space = *m.space;
    const std::size_t n = space.interior_count();
    m.fixed.resize(space);
    for (std::size_t i = 0; i < n; ++i) {
        const int a = space.animals(i);
        const double birth = a * p.lambda[i] * (1.0 - p.disp[i]);
        if (birth > 0.0) m.fixed.lambda[i].push_back({space.up(i, 0), a + 1, birth});
        if (a >= 2 && p.mu[i] > 0.0) m.fixed.lambda[i].push_back({space.down(i, 0), a - 1, a * p.mu[i]});
        if (a >= 1) {
            const double to0 = p.gamma[i] + (a == 1 ? p.mu[i] : 0.0);
            if (to0 > 0.0) m.fixed.lambda[i].push_back({0, 0, to0});
        }
        m.fixed.gamma_prime[i] = a * p.lambda[i] * p.disp[i];
    }
    m.fixed.zeta[0] = p.mu_D;
    m.dependent.families = StateDependence::kSigma;
    std::vector<double> sig(n);
    for (std::size_t i = 0; i < n; ++i) sig[i] = p.alpha * p.settle[i];
    m.dependent.bound = *std::max_element(sig.begin(), sig.end());
    m.dependent.evaluate = [sig](const ScaledState&, StateRates& r) { std::copy(sig.begin(), sig.end(), r.sigma.begin()); };
    m.slot_reserve = {p.reserve};

    m.life = [p](std::size_t patch, int, const Environment& env, std::vector<LifeTransition>& out) {
        const auto& space = env.x->space();
        const int a = space.animals(patch);
        if (a < 1) throw std::invalid_argument("life rates: animal in an empty patch");
        const int up = space.up(patch, 0);
        const double b = p.lambda[patch] * (1.0 - p.disp[patch]);
        LifeTransition own;
        own.kind = LifeMove::Offspring;
        own.to_patch = up;
        own.offspring = {1};
        own.fixed = b;
        out.push_back(own);
        LifeTransition grow;
        grow.kind = LifeMove::Composition;
        grow.to_patch = up;
        grow.fixed = (a - 1) * b;
        grow.dependent = env.x->migrant(0) * env.rates->sigma[patch];
        out.push_back(grow);
        if (a >= 2) {
            LifeTransition shrink;
            shrink.kind = LifeMove::Composition;
            shrink.to_patch = space.down(patch, 0);
            shrink.fixed = (a - 1) * p.mu[patch];
            out.push_back(shrink);
        }
        LifeTransition mig;
        mig.kind = LifeMove::MigrantBirth;
        mig.to_variety = 0;
        mig.fixed = p.lambda[patch] * p.disp[patch];
        out.push_back(mig);
        LifeTransition death;
        death.kind = LifeMove::Death;
        death.fixed = p.mu[patch] + p.gamma[patch];
        out.push_back(death);
    };
    return m;
}

/// Two-variety finite-patch model. Per-capita parameters of each variety
/// are given as functions of the total occupancy n = i + j (arrays 0..cap);
/// index 0 is the resident, 1 the invader.
struct MG2Params {
    int cap = 8;
    std::vector<double> lambda[2], mu[2], disp[2], settle[2];
    std::vector<double> gamma;  ///< catastrophe per patch, by total occupancy
    double alpha = 1.0;
    double mu_D[2] = {1.0, 1.0};
    double reserve[2] = {1.0, 1.0};

    /// Both varieties with the single-variety parameters of `p`.
    static MG2Params identical(const MG1Params& p) {
        MG2Params q;
        q.cap = p.cap;
        for (int v = 0; v < 2; ++v) {
            q.lambda[v] = p.lambda;
            q.mu[v] = p.mu;
            q.disp[v] = p.disp;
            q.settle[v] = p.settle;
            q.mu_D[v] = p.mu_D;
            q.reserve[v] = p.reserve;
        }
        q.gamma = p.gamma;
        q.alpha = p.alpha;
        return q;
    }

    /// Resident as the single-variety model of the first variety.
    MG1Params resident() const {
        MG1Params p;
        p.cap = cap;
        p.lambda = lambda[0];
        p.mu = mu[0];
        p.gamma = gamma;
        p.disp = disp[0];
        p.settle = settle[0];
        p.alpha = alpha;
        p.mu_D = mu_D[0];
        p.reserve = reserve[0];
        return p;
    }

    void check() const {
        auto sized = [&](const std::vector<double>& v, const std::string& name) {
            if (static_cast<int>(v.size()) != cap + 1)
                throw std::invalid_argument("mg2: " + name + " needs cap + 1 entries");
            for (double r : v)
                if (!(r >= 0.0) || !std::isfinite(r))
                    throw std::invalid_argument("mg2: " + name + " must be finite and nonnegative");
        };
        for (int v = 0; v < 2; ++v) {
            const std::string s = std::to_string(v + 1);
            sized(lambda[v], "lambda" + s);
            sized(mu[v], "mu" + s);
            sized(disp[v], "d" + s);
            sized(settle[v], "s" + s);
            if (!(mu_D[v] >= 0.0)) throw std::invalid_argument("mg2: mu_D must be nonnegative");
        }
        sized(gamma, "gamma");
    }
};

inline ModelDefinition make_mg2(const MG2Params& p) {
    p.check();
    ModelDefinition m;
    m.name = "metz-gyllenberg-2";
    m.space = std::make_shared<const TypeSpace>(2, p.cap);
    const auto& space = *m.space;
    const std::size_t n = space.interior_count();
    m.fixed.resize(space);
    std::vector<double> sig(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
        const int tot = space.animals(k);
        const auto t = static_cast<std::size_t>(tot);
        for (int v = 0; v < 2; ++v) {
            const int c = space.count_of(k, v);
            const double birth = c * p.lambda[v][t] * (1.0 - p.disp[v][t]);
            if (birth > 0.0) m.fixed.lambda[k].push_back({space.up(k, v), tot + 1, birth});
            if (c >= 1 && p.mu[v][t] > 0.0) m.fixed.lambda[k].push_back({space.down(k, v), tot - 1, c * p.mu[v][t]});
            m.fixed.gamma_prime[k * 2 + static_cast<std::size_t>(v)] = c * p.lambda[v][t] * p.disp[v][t];
            sig[static_cast<std::size_t>(v) * n + k] = p.alpha * p.settle[v][t];
        }
        if (tot >= 1 && p.gamma[t] > 0.0) m.fixed.lambda[k].push_back({0, 0, p.gamma[t]});
    }
    m.fixed.zeta = {p.mu_D[0], p.mu_D[1]};
    m.dependent.families = StateDependence::kSigma;
    m.dependent.bound = *std::max_element(sig.begin(), sig.end());
    m.dependent.evaluate = [sig](const ScaledState&, StateRates& r) { std::copy(sig.begin(), sig.end(), r.sigma.begin()); };
    m.slot_reserve = {p.reserve[0], p.reserve[1]};

    m.life = [p, n](std::size_t patch, int v, const Environment& env, std::vector<LifeTransition>& out) {
        const auto& space = env.x->space();
        const int own = space.count_of(patch, v);
        if (own < 1) throw std::invalid_argument("life rates: animal's variety absent from its patch");
        const auto t = static_cast<std::size_t>(space.animals(patch));
        const auto vs = static_cast<std::size_t>(v);
        LifeTransition child;
        child.kind = LifeMove::Offspring;
        child.to_patch = space.up(patch, v);
        child.offspring = v == 0 ? Composition{1, 0} : Composition{0, 1};
        child.fixed = p.lambda[vs][t] * (1.0 - p.disp[vs][t]);
        out.push_back(child);
        for (int u = 0; u < 2; ++u) {
            const auto us = static_cast<std::size_t>(u);
            const int others = space.count_of(patch, u) - (u == v ? 1 : 0);
            LifeTransition grow;
            grow.kind = LifeMove::Composition;
            grow.to_patch = space.up(patch, u);
            grow.fixed = others * p.lambda[us][t] * (1.0 - p.disp[us][t]);
            grow.dependent = env.x->migrant(u) * env.rates->sigma[us * n + patch];
            if (grow.rate() > 0.0) out.push_back(grow);
            if (others >= 1) {
                LifeTransition shrink;
                shrink.kind = LifeMove::Composition;
                shrink.to_patch = space.down(patch, u);
                shrink.fixed = others * p.mu[us][t];
                out.push_back(shrink);
            }
        }
        LifeTransition mig;
        mig.kind = LifeMove::MigrantBirth;
        mig.to_variety = v;
        mig.fixed = p.lambda[vs][t] * p.disp[vs][t];
        out.push_back(mig);
        LifeTransition death;
        death.kind = LifeMove::Death;
        death.fixed = p.mu[vs][t] + p.gamma[t];
        out.push_back(death);
    };
    return m;
}

/// Default two-variety example: the invader has a higher birth rate and
/// disperses more than the resident.
inline MG2Params mg2_defaults(int cap = 6, int K = 6) {
    MG2Params p;
    p.cap = cap;
    for (int i = 0; i <= cap; ++i) {
        const double f = std::max(0.0, 1.0 - static_cast<double>(i) / K);
        p.lambda[0].push_back(3.0 * f);
        p.lambda[1].push_back(4.5 * f);
        for (int v = 0; v < 2; ++v) {
            p.mu[v].push_back(1.0);
            p.settle[v].push_back(f);
        }
        p.disp[0].push_back(0.3);
        p.disp[1].push_back(0.4);
        p.gamma.push_back(0.1);
    }
    return p;
}

}  // namespace metapop
