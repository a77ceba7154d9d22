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

#include <algorithm>
#include <map>

#include "fixtures.hpp"

using namespace metapop;

TEST(TypeSpace, WeightsAndIndexing) {
    TypeSpace s(2, 3);
    EXPECT_EQ(s.interior_count(), 10u);
    EXPECT_EQ(s.size(), 12u);
    for (std::size_t k = 0; k < s.interior_count(); ++k) {
        EXPECT_DOUBLE_EQ(s.weight(k), s.animals(k) + 1.0);
        EXPECT_DOUBLE_EQ(size_weight(s.patch_type(k)), s.weight(k));
        EXPECT_EQ(*s.index_of(s.composition(k)), k);
    }
    EXPECT_DOUBLE_EQ(s.weight(s.migrant_coord(1)), 1.0);
    EXPECT_DOUBLE_EQ(mu_weight(MigrantSlot{0, false}), 1.0);
    EXPECT_EQ(s.up(*s.index_of({2, 1}), 0), kOverflow);
    EXPECT_EQ(s.down(*s.index_of({0, 1}), 0), kNoType);
    EXPECT_FALSE(s.index_of({4, 0}).has_value());
}

TEST(TypeSpace, SingleVarietyIndexIsCount) {
    TypeSpace s(1, 5);
    for (int i = 0; i <= 5; ++i) EXPECT_EQ(*s.index_of({i}), static_cast<std::size_t>(i));
}

TEST(Validate, BuiltInModelsAreAdmissible) {
    EXPECT_TRUE(validate_model(make_kretzschmar({})).ok()) << validate_model(make_kretzschmar({})).summary();
    EXPECT_TRUE(validate_model(make_mg1(MG1Params::defaults())).ok());
    EXPECT_TRUE(validate_model(make_mg2(mg2_defaults())).ok());
}

TEST(Validate, DiagonalFixedRate) {
    auto m = fixtures::linear_model(3);
    m.fixed.lambda[1].push_back({1, 1, 1.0});
    const auto rep = validate_model(m);
    ASSERT_TRUE(rep.has(ViolationKind::DiagonalFixed));
    EXPECT_NE(rep.summary().find("diagonal λ̄ nonzero"), std::string::npos);
}

TEST(Validate, MigrationOutOfEmptyPatch) {
    auto m = fixtures::linear_model(3);
    m.fixed.gamma[0] = 1.0;
    const auto rep = validate_model(m);
    ASSERT_TRUE(rep.has(ViolationKind::MigrationFromEmpty));
    EXPECT_NE(rep.summary().find("γ̄ positive at i_l = 0"), std::string::npos);
}

TEST(Validate, CapBelowOne) {
    ModelDefinition m;
    m.space = std::make_shared<const TypeSpace>(1, 0);
    m.fixed.resize(*m.space);
    EXPECT_TRUE(validate_model(m).has(ViolationKind::CapTooSmall));
}

TEST(Validate, NegativeRateAtProbe) {
    auto m = make_kretzschmar({});
    m.dependent.evaluate = [](const ScaledState& x, StateRates& r) { r.beta[0] = 0.1 - x.patch_mass(); };
    EXPECT_TRUE(validate_model(m).has(ViolationKind::NegativeRate));
    auto bad = fixtures::linear_model(2);
    bad.fixed.delta[1] = -1.0;
    EXPECT_TRUE(validate_model(bad).has(ViolationKind::NegativeRate));
}

TEST(Norms, MuNormExamples) {
    auto space = std::make_shared<const TypeSpace>(2, 4);
    ScaledState x(space);
    EXPECT_DOUBLE_EQ(mu_norm(x), 0.0);
    x[*space->index_of({1, 1})] = 0.5;
    EXPECT_DOUBLE_EQ(mu_norm(x), 1.5);
}

TEST(Norms, MuNormMatchesDenseOracle) {
    auto space = std::make_shared<const TypeSpace>(2, 6);
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        auto x = fixtures::random_state(space, rng, 0.3);
        std::vector<double> dense;
        std::vector<double> w;
        for (std::size_t k = 0; k < x.size(); ++k) {
            dense.push_back(x[k] * (rng.uniform() < 0.5 ? -1.0 : 1.0));
            const auto pt = space->patch_type(k);
            w.push_back(std::holds_alternative<Interior>(pt) ? total(std::get<Interior>(pt).composition) + 1.0 : 1.0);
        }
        double oracle = 0.0;
        for (std::size_t k = 0; k < dense.size(); ++k) oracle += w[k] * std::abs(dense[k]);
        EXPECT_NEAR(mu_norm(*space, dense), oracle, 1e-12);
    }
}

TEST(Norms, EmpiricalMoments) {
    auto space = std::make_shared<const TypeSpace>(1, 5);
    Rng rng(3);
    auto x = fixtures::random_state(space, rng, 0.7);
    EXPECT_NEAR(empirical_moment(x, 0), x.l1_norm(), 1e-14);
    EXPECT_NEAR(empirical_moment(x, 1), mu_norm(x), 1e-14);
    ScaledState y(space);
    y[2] = 0.25;           // weight 3
    y[space->migrant_coord(0)] = 0.5;  // weight 1
    EXPECT_DOUBLE_EQ(empirical_moment(y, 2), 0.25 * 9 + 0.5);
}

TEST(EventTable, EmptyStateNoBirths) {
    auto m = fixtures::linear_model(3);
    PopulationState s(m.space, 10);
    s.free_slots(0) = 10;
    const auto t = event_rate_table(m, s);
    EXPECT_TRUE(t.events.empty());
    EXPECT_EQ(t.total, 0.0);
}

TEST(EventTable, KretzschmarParasiteDeath) {
    KretzschmarParams p;
    const auto m = make_kretzschmar(p);
    PopulationState s(m.space, 100);
    s.count(0) = 50;
    s.count(3) = 20;
    s.count(5) = 7;
    s.free_slots(0) = 50;
    const auto t = event_rate_table(m, s);
    for (int i : {3, 5}) {
        auto it = std::find_if(t.events.begin(), t.events.end(), [&](const RatedEvent& e) {
            return e.event.kind == EventKind::TypeChange && e.event.from == i && e.event.to == i - 1;
        });
        ASSERT_NE(it, t.events.end());
        EXPECT_NEAR(it->rate, static_cast<double>(s.count(i)) * i * p.mu, 1e-12);
    }
    // infection i -> i+1 at X_i lambda phi(x)
    const double phi = (3 * 0.2 + 5 * 0.07) / (p.c + 0.77);
    auto it = std::find_if(t.events.begin(), t.events.end(), [&](const RatedEvent& e) {
        return e.event.kind == EventKind::TypeChange && e.event.from == 0 && e.event.to == 1;
    });
    ASSERT_NE(it, t.events.end());
    EXPECT_NEAR(it->rate, 50 * p.lambda * phi, 1e-12);
}

TEST(EventTable, MatchesHandBuiltGeneratorOnToy) {
    // One-variety patch model with cap 2: one patch with one animal, one
    // migrant in transit, one free place, N = 1.
    MG1Params p = MG1Params::defaults(2, 2);
    p.lambda = {0.0, 1.3, 0.0};
    p.mu = {0.0, 0.4, 0.6};
    p.gamma = {0.0, 0.05, 0.07};
    p.disp = {0.0, 0.25, 0.0};
    p.settle = {0.9, 0.6, 0.0};
    p.alpha = 2.0;
    p.mu_D = 0.8;
    const auto m = make_mg1(p);
    PopulationState s(m.space, 1);
    s.count(1) = 1;
    s.count(m.types().migrant_coord(0)) = 1;
    s.free_slots(0) = 1;
    std::map<std::tuple<int, int, int, int>, double> hand;
    hand[{static_cast<int>(EventKind::TypeChange), 1, 2, 0}] = 1 * 1.3 * 0.75;
    hand[{static_cast<int>(EventKind::TypeChange), 1, 0, 0}] = 0.05 + 0.4;
    hand[{static_cast<int>(EventKind::MigrantBirth), 1, kNoType, 0}] = 1.3 * 0.25;
    hand[{static_cast<int>(EventKind::Settlement), 1, 2, 0}] = 1 * 1.0 * 2.0 * 0.6;
    hand[{static_cast<int>(EventKind::MigrantDeath), kNoType, kNoType, 0}] = 0.8;
    const auto t = event_rate_table(m, s);
    ASSERT_EQ(t.events.size(), hand.size());
    for (const auto& e : t.events) {
        auto it = hand.find(e.event.key());
        ASSERT_NE(it, hand.end()) << describe(m.types(), e.event);
        EXPECT_NEAR(e.rate, it->second, 1e-14);
    }
    // per-patch rate of i -> i+1 combines births and arrivals
    double up = 0.0;
    for (const auto& e : t.events)
        if (e.event.from == 1 && e.event.to == 2) up += e.rate;
    EXPECT_NEAR(up, 1.3 * 0.75 + 1.0 * 2.0 * 0.6, 1e-14);
}

TEST(EventTable, MigrantBirthRateInMG1) {
    const auto p = MG1Params::defaults();
    const auto m = make_mg1(p);
    for (std::size_t i = 0; i < m.interior_count(); ++i)
        EXPECT_NEAR(m.fixed.gamma_prime[i], static_cast<double>(i) * p.lambda[i] * p.disp[i], 1e-15);
}

TEST(EventTable, OverflowIsTallied) {
    auto m = fixtures::linear_model(2);
    PopulationState s(m.space, 1);
    s.count(2) = 3;
    s.free_slots(0) = 5;
    const auto t = event_rate_table(m, s);
    EXPECT_NEAR(t.truncation_rate, 3 * 0.7, 1e-14);
    for (const auto& e : t.events) EXPECT_FALSE(e.event.overflows());
}

TEST(EventTable, RejectsNegativeEvaluatorOutput) {
    auto m = make_kretzschmar({});
    m.dependent.evaluate = [](const ScaledState&, StateRates& r) { r.beta[0] = -1.0; };
    PopulationState s(m.space, 10);
    s.free_slots(0) = 5;
    EXPECT_THROW(event_rate_table(m, s), RateError);
    m.dependent.evaluate = [](const ScaledState&, StateRates& r) { r.lambda[0] = std::nan(""); };
    EXPECT_THROW(event_rate_table(m, s), RateError);
}

namespace {

PopulationState random_population(const ModelDefinition& m, std::int64_t N, Rng& rng) {
    PopulationState s(m.space, N);
    for (std::size_t k = 0; k < m.types().size(); ++k)
        if (rng.uniform() < 0.6) s.count(k) = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(N)));
    for (int l = 0; l < m.varieties(); ++l) s.free_slots(l) = 1 + static_cast<std::int64_t>(rng.below(5));
    return s;
}

}  // namespace

TEST(EventTable, EveryEventConservesSlotsAndStaysNonnegative) {
    const std::vector<ModelDefinition> models = {make_mg2(mg2_defaults()), make_kretzschmar({}), fixtures::linear_model(4)};
    Rng rng(99);
    for (const auto& m : models)
        for (int rep = 0; rep < 30; ++rep) {
            const auto s = random_population(m, 20, rng);
            for (const auto& e : event_rate_table(m, s).events) {
                PopulationState t = s;
                apply_event(m, t, e.event);
                for (int l = 0; l < m.varieties(); ++l) EXPECT_EQ(t.slot_total(l), s.slot_total(l));
                for (auto c : t.counts()) EXPECT_GE(c, 0);
                for (int l = 0; l < m.varieties(); ++l) EXPECT_GE(t.free_slots(l), 0);
            }
        }
}

TEST(EventTable, ScaleEquivariance) {
    const auto m = make_kretzschmar({});
    Rng rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        const auto s = random_population(m, 40, rng);
        PopulationState d(m.space, 80);
        for (std::size_t k = 0; k < s.counts().size(); ++k) d.count(k) = 2 * s.count(k);
        d.free_slots(0) = 2 * s.free_slots(0);
        const auto a = event_rate_table(m, s);
        const auto b = event_rate_table(m, d);
        ASSERT_EQ(a.events.size(), b.events.size());
        for (std::size_t e = 0; e < a.events.size(); ++e) {
            EXPECT_EQ(a.events[e].event, b.events[e].event);
            EXPECT_NEAR(b.events[e].rate, 2 * a.events[e].rate, 1e-9 * b.events[e].rate);
        }
    }
}

TEST(PopulationState, FromScaledRoundsAndReserves) {
    auto space = std::make_shared<const TypeSpace>(1, 3);
    ScaledState x(space, {0.5, 0.26, 0.0, 0.1, 0.05});
    const std::vector<double> h = {0.55};
    const auto s = PopulationState::from_scaled(x, 100, h);
    EXPECT_EQ(s.count(0), 50);
    EXPECT_EQ(s.count(1), 26);
    EXPECT_EQ(s.migrants(0), 5);
    EXPECT_EQ(s.free_slots(0), 55);
}

TEST(Rng, SplitStreamsAreReproducibleAndDistinct) {
    Rng a(42), b(42);
    for (int k = 0; k < 100; ++k) EXPECT_EQ(a(), b());
    Rng c = Rng(42).split(1), d = Rng(42).split(2), e = Rng(42).split(1);
    EXPECT_NE(c(), d());
    Rng f = Rng(42).split(1);
    (void)e;
    EXPECT_EQ(Rng(42).split(1)(), f());
    Rng u(7);
    double mean = 0.0;
    for (int k = 0; k < 100000; ++k) mean += u.uniform();
    EXPECT_NEAR(mean / 100000, 0.5, 0.005);
    for (int k = 0; k < 1000; ++k) EXPECT_LT(u.below(7), 7u);
}
