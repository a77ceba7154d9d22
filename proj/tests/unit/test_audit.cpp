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


#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"

using namespace metapop;

namespace {

ModelDefinition zero_model(int cap) {
    ModelDefinition m;
    m.name = "zero";
    m.space = std::make_shared<const TypeSpace>(1, cap);
    m.fixed.resize(*m.space);
    m.slot_reserve = {1.0};
    return m;
}

ModelDefinition doubled(ModelDefinition m) {
    for (auto& row : m.fixed.lambda)
        for (auto& t : row) t.rate *= 2.0;
    for (auto* v : {&m.fixed.delta, &m.fixed.gamma, &m.fixed.gamma_prime, &m.fixed.zeta})
        for (double& r : *v) r *= 2.0;
    if (m.dependent.evaluate) {
        auto inner = m.dependent.evaluate;
        m.dependent.evaluate = [inner](const ScaledState& x, StateRates& r) {
            inner(x, r);
            r.scale(2.0);
        };
    }
    return m;
}

ModelDefinition square_births(int cap) {
    ModelDefinition m = zero_model(cap);
    m.name = "square-births";
    for (std::size_t i = 0; i < m.interior_count(); ++i)
        m.fixed.lambda[i].push_back({m.types().up(i, 0), static_cast<int>(i) + 1, static_cast<double>(i * i)});
    return m;
}

std::vector<ScaledState> probes_for(const ModelDefinition& m) { return audit_probes(m); }

}  // namespace

TEST(JumpMoments, ZeroModel) {
    const auto m = zero_model(6);
    Rng rng(1);
    for (int k = 0; k < 20; ++k) {
        const auto x = fixtures::random_state(m.space, rng);
        for (int r = 0; r < 5; ++r) {
            const auto j = jump_moment_functionals(m, x, r);
            EXPECT_EQ(j.U, 0.0);
            EXPECT_EQ(j.V, 0.0);
        }
    }
}

TEST(JumpMoments, PureDestruction) {
    auto m = zero_model(4);
    const double rho = 0.37;
    m.fixed.delta[3] = rho;
    ScaledState x(m.space);
    x[3] = 1.0;
    const auto j = jump_moment_functionals(m, x, 0);
    EXPECT_DOUBLE_EQ(j.U, -rho);
    EXPECT_DOUBLE_EQ(j.V, rho);
    const auto j2 = jump_moment_functionals(m, x, 2);
    EXPECT_DOUBLE_EQ(j2.U, -rho * 16.0);
    EXPECT_DOUBLE_EQ(j2.V, rho * 256.0);
}

TEST(JumpMoments, KretzschmarHandEnumeration) {
    KretzschmarParams p;
    p.cap = 6;
    const auto m = make_kretzschmar(p);
    ScaledState x(m.space);
    x[2] = 0.3;
    x[6] = 0.05;
    const double phi = (2 * 0.3 + 6 * 0.05) / (p.c + 0.35);
    const double beta = p.beta * (0.3 * p.theta * p.theta + 0.05 * std::pow(p.theta, 6));
    for (int r = 0; r <= 4; ++r) {
        struct J {
            double rate, dnu;
        };
        auto pw = [r](double v) { return std::pow(v, r); };
        std::vector<J> jumps = {
            {beta, 1.0},                                             // new empty patch
            {0.3 * 2 * p.mu, pw(2) - pw(3)},                         // death in a 2-patch
            {0.3 * p.lambda * phi, pw(4) - pw(3)},                   // infection of a 2-patch
            {0.3 * (p.kappa + 2 * p.alpha), -pw(3)},                 // destruction of a 2-patch
            {0.05 * 6 * p.mu, pw(6) - pw(7)},                        // death at the cap
            {0.05 * p.lambda * phi, pw(8) - pw(7)},                  // infection beyond the cap
            {0.05 * (p.kappa + 6 * p.alpha), -pw(7)},
        };
        double U = 0.0, V = 0.0;
        for (const auto& j : jumps) {
            U += j.rate * j.dnu;
            V += j.rate * j.dnu * j.dnu;
        }
        const auto got = jump_moment_functionals(m, x, r);
        EXPECT_NEAR(got.U, U, 1e-12 * (1 + std::abs(U))) << "r=" << r;
        EXPECT_NEAR(got.V, V, 1e-12 * (1 + V)) << "r=" << r;
    }
}

TEST(JumpMoments, NonFiniteRatesThrow) {
    auto m = zero_model(3);
    m.dependent.families = StateDependence::kDelta;
    m.dependent.evaluate = [](const ScaledState&, StateRates& r) { r.delta[1] = std::nan(""); };
    ScaledState x(m.space);
    x[1] = 1.0;
    EXPECT_THROW(jump_moment_functionals(m, x, 1), RateError);
}

TEST(JumpMoments, DoublingRatesDoublesUV) {
    const std::vector<ModelDefinition> models = {make_mg1(MG1Params::defaults()),
                                                 make_kretzschmar(KretzschmarParams{}),
                                                 make_mg2(mg2_defaults()), fixtures::tiny_model()};
    for (const auto& m : models) {
        const auto m2 = doubled(m);
        for (const auto& x : audit_probes(m, {.count = 30})) {
            for (int r = 0; r <= 4; ++r) {
                const auto a = jump_moment_functionals(m, x, r), b = jump_moment_functionals(m2, x, r);
                EXPECT_NEAR(b.U, 2 * a.U, 1e-9 * (1 + std::abs(a.U))) << m.name;
                EXPECT_NEAR(b.V, 2 * a.V, 1e-9 * (1 + a.V)) << m.name;
            }
        }
    }
}

TEST(Audit, ZeroModelAllConstantsZero) {
    const auto m = zero_model(8);
    const auto rep = audit_growth(m, audit_probes(m));
    EXPECT_TRUE(rep.passed());
    EXPECT_EQ(rep.entries.size(), condition_catalogue(8).size());
    for (const auto& e : rep.entries) EXPECT_EQ(e.worst, 0.0) << e.id;
}

TEST(Audit, WitnessReproducesWorstRatio) {
    const auto m = make_kretzschmar(KretzschmarParams{});
    const auto rep = audit_growth(m, audit_probes(m));
    for (const auto& e : rep.entries) {
        if (e.id == "A-mu-cond") continue;
        EXPECT_DOUBLE_EQ(evaluate_condition(m, e.id, e.witness, e.r).ratio, e.worst) << e.id;
    }
}

TEST(Audit, MonotoneInProbeSet) {
    const auto m = make_mg1(MG1Params::defaults());
    const auto all = audit_probes(m, {.count = 80});
    const std::vector<ScaledState> half(all.begin(), all.begin() + 40);
    const auto a = audit_growth(m, half), b = audit_growth(m, all);
    for (std::size_t k = 0; k < a.entries.size(); ++k) EXPECT_GE(b.entries[k].worst, a.entries[k].worst) << a.entries[k].id;
}

TEST(Audit, SquareBirthRatesAreFlagged) {
    const auto rep = audit_growth(square_births, {10, 20}, probes_for);
    const auto* e = rep.find("lambda-cond-1a");
    ASSERT_NE(e, nullptr);
    EXPECT_TRUE(e->grows);
    EXPECT_FALSE(e->pass);
    EXPECT_FALSE(rep.passed());
    EXPECT_GT(e->by_cap[1], 1.5 * e->by_cap[0]);
    EXPECT_TRUE(rep.find("A-mu-cond")->grows);
}

TEST(Audit, BuiltInModelsAreCapStable) {
    auto mg1 = [](int cap) { return make_mg1(MG1Params::defaults(cap)); };
    auto kr = [](int cap) {
        KretzschmarParams p;
        p.cap = cap;
        return make_kretzschmar(p);
    };
    auto mg2 = [](int cap) { return make_mg2(mg2_defaults(cap)); };
    for (const auto& [name, f, cap] : std::vector<std::tuple<std::string, ModelFactory, int>>{
             {"mg1", mg1, 8}, {"kretzschmar", kr, 20}, {"mg2", mg2, 6}}) {
        const auto rep = audit_growth(f, {cap, 2 * cap}, probes_for);
        for (const auto& e : rep.entries) {
            EXPECT_TRUE(std::isfinite(e.worst)) << name << " " << e.id;
            EXPECT_FALSE(e.grows) << name << " " << e.id << " " << e.by_cap[0] << " -> " << e.by_cap[1];
        }
        EXPECT_TRUE(rep.passed()) << name;
    }
}

TEST(Audit, DeclaredConstantsJudged) {
    const auto m = make_mg1(MG1Params::defaults());
    const auto probes = audit_probes(m);
    const auto free = audit_growth(m, probes);
    const double sig = free.find("sigma-cond")->worst;
    ASSERT_GT(sig, 0.0);
    EXPECT_TRUE(audit_growth(m, probes, AuditOptions{-1, {{"sigma-cond", sig}}, 1.3}).passed());
    EXPECT_FALSE(audit_growth(m, probes, AuditOptions{-1, {{"sigma-cond", 0.5 * sig}}, 1.3}).passed());
}

TEST(Audit, HighOrdersReportedNotJudged) {
    const auto m = make_mg1(MG1Params::defaults());
    const auto rep = audit_growth(m, audit_probes(m), AuditOptions{10, {}, 1.3});
    EXPECT_TRUE(rep.find("U-10")->beyond_default);
    EXPECT_FALSE(rep.find("U-8")->beyond_default);
}

TEST(Lipschitz, ConstantRatesGiveZero) {
    const auto m = fixtures::linear_model(6);
    ScaledState x0(m.space);
    x0[0] = 0.5;
    x0[2] = 0.1;
    const auto path = integrate(m, x0, 2.0);
    Rng rng(4);
    const auto est = estimate_lipschitz(m, tube_pairs(m, path, 0.1, 50, rng));
    EXPECT_EQ(est.D_Y, 0.0);
    EXPECT_EQ(est.D_Z, 0.0);
    EXPECT_EQ(est.pairs, 50u);
}

TEST(Lipschitz, DegeneratePairThrows) {
    const auto m = make_mg1(MG1Params::defaults());
    ScaledState x(m.space);
    x[1] = 0.2;
    EXPECT_THROW(estimate_lipschitz(m, {{x, x}}), std::invalid_argument);
}

TEST(Lipschitz, KretzschmarWithinTenPercentOfHandBound) {
    KretzschmarParams p;
    const auto m = make_kretzschmar(p);
    ScaledState x0(m.space);
    x0[0] = 0.8;
    x0[1] = 0.05;
    const auto path = integrate(m, x0, 3.0);
    Rng rng(9);
    const auto pairs = tube_pairs(m, path, 0.1, 400, rng);
    const auto est = estimate_lipschitz(m, pairs);
    // |D(lambda phi)| = lambda sup_j |d phi / d x_j| / mu(j), d phi / d x_j = (j - phi) / (c + ||x||_1)
    double hand = 0.0;
    for (const auto& [x, y] : pairs) {
        double mass = 0.0;
        for (std::size_t j = 0; j < m.interior_count(); ++j) mass += x[j];
        const double phi = kretzschmar_phi(x, p.c);
        for (std::size_t j = 0; j < m.interior_count(); ++j)
            hand = std::max(hand, p.lambda * std::abs(j - phi) / ((p.c + mass) * (j + 1.0)));
    }
    EXPECT_GT(est.D_Y, 0.9 * hand);
    EXPECT_LT(est.D_Y, 1.1 * hand);
    EXPECT_GT(est.D_Z, 0.0);
    EXPECT_EQ(est.sigma_plus, 0.0);
}

TEST(Lipschitz, MG1SettlementTerm) {
    const auto p = MG1Params::defaults();
    const auto m = make_mg1(p);
    const auto eq = find_equilibrium(m, [&] {
        ScaledState x(m.space);
        x[0] = 0.5;
        x[1] = 0.3;
        return x;
    }());
    const auto path = integrate(m, eq.x, 2.0);
    Rng rng(2);
    const auto est = estimate_lipschitz(m, tube_pairs(m, path, 0.1, 200, rng));
    double smax = 0.0;
    for (double s : p.settle) smax = std::max(smax, s);
    EXPECT_NEAR(est.D_Y, p.alpha * smax, 1e-6);
    EXPECT_NEAR(est.sigma_plus, p.alpha * smax, 1e-12);
    EXPECT_TRUE(std::isfinite(est.D_Z));
}
