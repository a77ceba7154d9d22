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

#include <boost/math/special_functions/gamma.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <map>

#include "fixtures.hpp"

using namespace metapop;

namespace {

ModelDefinition two_type_toy() {
    // Patches of type 0 or 1 (cap 1); 0 -> 1 at 0.7, 1 -> 0 at 1.1,
    // destruction of 1-patches at 0.4, migrant births from 1-patches at 0.3.
    ModelDefinition m;
    m.name = "two-type";
    m.space = std::make_shared<const TypeSpace>(1, 1);
    m.fixed.resize(*m.space);
    m.fixed.lambda[0] = {{1, 1, 0.7}};
    m.fixed.lambda[1] = {{0, 0, 1.1}, {kOverflow, 2, 0.0}};
    m.fixed.delta = {0.0, 0.4};
    m.fixed.gamma_prime = {0.0, 0.3};
    m.slot_reserve = {1.0};
    return m;
}

double chi2_pvalue(const std::vector<double>& observed, const std::vector<double>& expected) {
    double stat = 0.0;
    for (std::size_t k = 0; k < observed.size(); ++k)
        stat += (observed[k] - expected[k]) * (observed[k] - expected[k]) / expected[k];
    const double dof = static_cast<double>(observed.size() - 1);
    return boost::math::gamma_q(dof / 2.0, stat / 2.0);
}

}  // namespace

TEST(Step, SinglePositiveEventAlwaysChosen) {
    auto m = fixtures::linear_model(2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    m.fixed.delta[1] = 2.0;
    PopulationState s(m.space, 5);
    s.count(1) = 3;
    s.free_slots(0) = 5;
    Rng rng(1);
    for (int k = 0; k < 100; ++k) {
        const auto r = step(m, s, rng);
        EXPECT_EQ(r.event.kind, EventKind::PatchDeath);
        EXPECT_EQ(r.state.count(1), 2);
    }
}

TEST(Step, AbsorbedWhenNothingCanHappen) {
    auto m = fixtures::linear_model(2);
    PopulationState s(m.space, 5);
    s.free_slots(0) = 5;
    Rng rng(1);
    EXPECT_THROW(step(m, s, rng), Absorbed);
}

TEST(Step, FirstEventLawMatchesRateRatios) {
    const auto m = two_type_toy();
    PopulationState s(m.space, 10);
    s.count(0) = 6;
    s.count(1) = 4;
    s.free_slots(0) = 10;
    const auto table = event_rate_table(m, s);
    std::map<std::tuple<int, int, int, int>, std::size_t> slot;
    for (std::size_t k = 0; k < table.events.size(); ++k) slot[table.events[k].event.key()] = k;
    const int reps = 100000;
    std::vector<double> counts(table.events.size(), 0.0);
    double dt_sum = 0.0, dt_sq = 0.0;
    Rng rng(2024);
    for (int r = 0; r < reps; ++r) {
        Rng local = rng.split(static_cast<std::uint64_t>(r));
        const auto res = step(m, s, local);
        counts[slot.at(res.event.key())] += 1.0;
        dt_sum += res.dt;
        dt_sq += res.dt * res.dt;
    }
    std::vector<double> expected;
    for (const auto& e : table.events) expected.push_back(reps * e.rate / table.total);
    EXPECT_GT(chi2_pvalue(counts, expected), 0.01);
    const double mean = dt_sum / reps;
    const double se = std::sqrt((dt_sq / reps - mean * mean) / reps);
    EXPECT_LT(std::abs(mean - 1.0 / table.total), 3 * se);
}

TEST(Simulate, ZeroRatesGiveConstantPath) {
    auto m = fixtures::linear_model(3, 0, 0, 0, 0, 0, 0);
    PopulationState s(m.space, 10);
    s.count(1) = 4;
    s.free_slots(0) = 10;
    Rng rng(5);
    SimulationOptions opt;
    opt.grid = uniform_grid(2.0, 11);
    const auto tr = simulate(m, s, 2.0, rng, opt);
    EXPECT_EQ(tr.event_count, 0);
    EXPECT_EQ(tr.stop_reason, StopReason::Horizon);
    ASSERT_EQ(tr.snapshots.size(), 11u);
    for (const auto& x : tr.snapshots) EXPECT_EQ(x.raw(), s.scaled().raw());
}

TEST(Simulate, SnapshotAtZeroIsInitialState) {
    const auto m = make_kretzschmar({});
    ScaledState x0(m.space);
    x0[0] = 0.8;
    x0[2] = 0.2;
    const auto s = PopulationState::from_scaled(x0, 200, m.slot_reserve);
    Rng rng(8);
    SimulationOptions opt;
    opt.grid = uniform_grid(1.0, 5);
    const auto tr = simulate(m, s, 1.0, rng, opt);
    EXPECT_EQ(tr.snapshots.front().raw(), s.scaled().raw());
}

TEST(Simulate, KretzschmarConservesMigrantPlaces) {
    const auto m = make_kretzschmar({});
    ScaledState x0(m.space);
    x0[0] = 0.8;
    x0[1] = 0.1;
    x0[2] = 0.05;
    x0[3] = 0.05;
    const auto s = PopulationState::from_scaled(x0, 1000, m.slot_reserve);
    Rng rng(77);
    SimulationOptions opt;
    opt.record_events = true;
    const auto tr = simulate(m, s, 2.0, rng, opt);
    PopulationState cur = s;
    double last = 0.0;
    for (const auto& e : tr.events) {
        EXPECT_GT(e.time, last);
        last = e.time;
        apply_event(m, cur, e.event);
        ASSERT_EQ(cur.slot_total(0), s.slot_total(0));
    }
    EXPECT_EQ(cur, tr.final_state);
}

TEST(Simulate, EqualSeedsGiveIdenticalEventLogs) {
    const auto m = make_mg1(MG1Params::defaults());
    ScaledState x0(m.space);
    x0[0] = 0.3;
    x0[2] = 0.4;
    x0[4] = 0.3;
    x0[m.types().migrant_coord(0)] = 0.2;
    const auto s = PopulationState::from_scaled(x0, 300, m.slot_reserve);
    SimulationOptions opt;
    opt.record_events = true;
    Rng a(123, 4), b(123, 4), c(124, 4);
    const auto ta = simulate(m, s, 1.0, a, opt);
    const auto tb = simulate(m, s, 1.0, b, opt);
    const auto tc = simulate(m, s, 1.0, c, opt);
    ASSERT_EQ(ta.events.size(), tb.events.size());
    for (std::size_t k = 0; k < ta.events.size(); ++k) {
        EXPECT_EQ(ta.events[k].time, tb.events[k].time);
        EXPECT_EQ(ta.events[k].event, tb.events[k].event);
    }
    EXPECT_NE(ta.events.size() == tc.events.size() && ta.final_state == tc.final_state, true);
}

TEST(Simulate, StopsAtFirstSlotExhaustion) {
    auto m = fixtures::linear_model(3, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0);  // only migrant births
    PopulationState s(m.space, 10);
    s.count(1) = 10;
    s.free_slots(0) = 5;
    m.slot_reserve = {0.5};
    Rng rng(4);
    SimulationOptions opt;
    opt.record_events = true;
    opt.grid = uniform_grid(100.0, 3);
    const auto tr = simulate(m, s, 100.0, rng, opt);
    EXPECT_EQ(tr.stop_reason, StopReason::SlotExhaustion);
    EXPECT_EQ(tr.events.size(), 5u);
    EXPECT_EQ(tr.final_state.free_slots(0), 0);
    EXPECT_DOUBLE_EQ(tr.stop_time, tr.events.back().time);
    EXPECT_EQ(tr.snapshots.back().raw(), tr.final_state.scaled().raw());
}

TEST(Simulate, RejectsTooFewFreePlaces) {
    auto m = fixtures::linear_model(3);
    m.slot_reserve = {0.5};
    PopulationState s(m.space, 10);
    s.count(0) = 10;
    s.free_slots(0) = 4;
    Rng rng(1);
    EXPECT_THROW(simulate(m, s, 1.0, rng), std::invalid_argument);
}

TEST(Simulate, TruncationBudget) {
    auto m = fixtures::linear_model(1, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    PopulationState s(m.space, 10);
    s.count(1) = 10;
    s.free_slots(0) = 10;
    Rng rng(3);
    const auto abort = simulate(m, s, 10.0, rng);
    EXPECT_EQ(abort.stop_reason, StopReason::TruncationLoss);
    EXPECT_EQ(abort.truncation_loss, 1);
    SimulationOptions opt;
    opt.truncation_budget = -1;
    const auto tally = simulate(m, s, 1.0, rng, opt);
    EXPECT_EQ(tally.stop_reason, StopReason::Horizon);
    EXPECT_GT(tally.truncation_loss, 5);
    EXPECT_EQ(tally.final_state, s);
}

TEST(Simulate, StopPredicate) {
    const auto m = make_kretzschmar({});
    ScaledState x0(m.space);
    x0[0] = 1.0;
    x0[3] = 0.2;
    const auto s = PopulationState::from_scaled(x0, 100, m.slot_reserve);
    Rng rng(9);
    SimulationOptions opt;
    opt.stop_when = [](const PopulationState& p) { return p.count(3) < 15; };
    const auto tr = simulate(m, s, 50.0, rng, opt);
    EXPECT_EQ(tr.stop_reason, StopReason::Condition);
    EXPECT_EQ(tr.final_state.count(3), 14);
}

TEST(Simulate, EmbeddedTagsFollowValidMoves) {
    const auto m = make_kretzschmar({});
    ScaledState x0(m.space);
    x0[0] = 0.9;
    x0[2] = 0.1;
    const auto s = PopulationState::from_scaled(x0, 500, m.slot_reserve);
    Rng rng(31);
    SimulationOptions opt;
    opt.tags = {0, 0, 2, 2, 2};
    const auto tr = simulate(m, s, 3.0, rng, opt);
    ASSERT_EQ(tr.tagged.size(), 5u);
    int destroyed = 0;
    for (const auto& tp : tr.tagged) {
        int cur = tp.initial.type;
        for (const auto& [t, st] : tp.jumps) {
            ASSERT_FALSE(PatchState{cur}.is_destroyed());
            if (!st.is_destroyed()) {
                EXPECT_EQ(std::abs(st.type - cur), 1);
            }
            cur = st.type;
        }
        destroyed += tp.final_state().is_destroyed();
    }
    EXPECT_GE(destroyed, 1);
}

TEST(Simulate, TransientLawMatchesMatrixExponential) {
    const auto m = fixtures::tiny_model();
    PopulationState init(m.space, 3);
    init.count(0) = 1;
    init.count(1) = 2;
    init.free_slots(0) = 2;
    const auto en = fixtures::enumerate_states(m, init);
    const auto n = static_cast<Eigen::Index>(en.states.size());
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k)
        for (const auto& [j, r] : en.out[static_cast<std::size_t>(k)]) {
            Q(k, static_cast<Eigen::Index>(j)) += r;
            Q(k, k) -= r;
        }
    const Eigen::MatrixXd P = Q.exp();
    auto tv_at = [&](int reps, std::uint64_t seed) {
        std::vector<double> freq(static_cast<std::size_t>(n), 0.0);
        Rng rng(seed);
        for (int r = 0; r < reps; ++r) {
            Rng local = rng.split(static_cast<std::uint64_t>(r));
            const auto tr = simulate(m, init, 1.0, local);
            const auto idx = en.index(tr.final_state);
            EXPECT_LT(idx, en.states.size());
            freq[idx] += 1.0 / reps;
        }
        double tv = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) tv += std::abs(freq[static_cast<std::size_t>(k)] - P(0, k));
        return tv / 2;
    };
    const double small = tv_at(1000, 1);
    const double large = tv_at(100000, 2);
    EXPECT_LT(large, small);
    EXPECT_LE(large, 0.02);
}

TEST(Simulate, EmpiricalMomentsStayControlled) {
    const auto m = make_kretzschmar({});
    ScaledState x0(m.space);
    x0[0] = 0.8;
    x0[1] = 0.1;
    x0[2] = 0.05;
    x0[3] = 0.05;
    const auto s = PopulationState::from_scaled(x0, 500, m.slot_reserve);
    Rng rng(12);
    SimulationOptions opt;
    opt.grid = uniform_grid(3.0, 31);
    for (int rep = 0; rep < 10; ++rep) {
        Rng local = rng.split(static_cast<std::uint64_t>(rep));
        const auto tr = simulate(m, s, 3.0, local, opt);
        for (int r = 0; r <= 4; ++r) {
            const double s0 = empirical_moment(s.scaled(), r);
            for (const auto& x : tr.snapshots) EXPECT_LT(empirical_moment(x, r), 20.0 * s0);
        }
    }
}

TEST(SupMuError, Examples) {
    const auto m = fixtures::linear_model(3);
    const auto space = m.space;
    Trajectory tr;
    tr.grid = {0.0, 0.5, 1.0};
    DeterministicPath det;
    det.times = tr.grid;
    Rng rng(4);
    for (int k = 0; k < 3; ++k) {
        auto x = fixtures::random_state(space, rng);
        tr.snapshots.push_back(x);
        det.states.push_back(x);
    }
    EXPECT_EQ(sup_mu_error(tr, det), 0.0);
    for (auto& x : det.states) x[2] += 0.1;  // weight 3
    EXPECT_NEAR(sup_mu_error(tr, det), 0.3, 1e-12);

    for (int k = 0; k < 3; ++k) det.states[static_cast<std::size_t>(k)] = fixtures::random_state(space, rng);
    double oracle = 0.0;
    for (int k = 0; k < 3; ++k) {
        double s = 0.0;
        for (std::size_t z = 0; z < space->size(); ++z)
            s += (z < 4 ? z + 1.0 : 1.0) *
                 std::abs(tr.snapshots[static_cast<std::size_t>(k)][z] - det.states[static_cast<std::size_t>(k)][z]);
        oracle = std::max(oracle, s);
    }
    EXPECT_NEAR(sup_mu_error(tr, det), oracle, 1e-12);
    det.times[1] = 0.6;
    EXPECT_THROW(sup_mu_error(tr, det), GridMismatch);
    det.times.pop_back();
    EXPECT_THROW(sup_mu_error(tr, det), GridMismatch);
}
