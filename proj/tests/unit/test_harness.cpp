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
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "metapop/experiments.hpp"

using namespace metapop;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("metapop_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string error_of(const std::string& text) {
    try {
        load_model_json(text, "cfg.json");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(LoadModel, KretzschmarInfectionRatePerPatch) {
    const auto m = load_model("kretzschmar");
    const auto& p = std::get<KretzschmarParams>(m.params);
    ScaledState x(m.model.space);
    x[0] = 0.6;
    x[2] = 0.3;
    x[5] = 0.1;
    const auto st = PopulationState::from_scaled(x, 1000, m.model.slot_reserve);
    const double phi = kretzschmar_phi(st.scaled(), p.c);
    const auto table = event_rate_table(m.model, st);
    int seen = 0;
    for (const auto& e : table.events) {
        if (e.event.kind != EventKind::TypeChange) continue;
        const auto from = static_cast<std::size_t>(e.event.from);
        const double per_patch = e.rate / static_cast<double>(st.count(from));
        if (e.event.to == e.event.from + 1) {
            EXPECT_NEAR(per_patch, p.lambda * phi, 1e-12);
            ++seen;
        } else {
            EXPECT_NEAR(per_patch, m.model.types().animals(from) * p.mu, 1e-12);
        }
    }
    EXPECT_EQ(seen, 3);
}

TEST(LoadModel, MG1MigrantBirths) {
    const auto m = load_model("metz-gyllenberg-1");
    const auto& p = std::get<MG1Params>(m.params);
    for (std::size_t i = 0; i < m.model.interior_count(); ++i)
        EXPECT_NEAR(m.model.fixed.gamma_prime[i], static_cast<double>(i) * p.lambda[i] * p.disp[i], 1e-14);
    EXPECT_EQ(m.cap(), 8);
    EXPECT_EQ(m.family, "metz-gyllenberg-1");
}

TEST(LoadModel, MG2TwoVarieties) {
    const auto m = load_model("metz-gyllenberg-2");
    EXPECT_EQ(m.model.varieties(), 2);
    EXPECT_TRUE(validate_model(m.model).ok());
}

TEST(LoadModel, NegativeRateRejectedWithFieldPath) {
    const auto e = error_of(R"({"model": "metz-gyllenberg-1", "cap": 3, "params": {"mu": [1, 1, -0.5, 1]}})");
    EXPECT_NE(e.find("/params/mu/2"), std::string::npos) << e;
    EXPECT_NE(error_of(R"({"model": "kretzschmar", "params": {"mu": -1}})").find("/params/mu"), std::string::npos);
}

TEST(LoadModel, SchemaDiagnostics) {
    EXPECT_NE(error_of("{\n  \"model\": \"kretzschmar\",\n  \"cap\": \n}").find("cfg.json:4"), std::string::npos);
    EXPECT_NE(error_of(R"({"model": "kretzschmar", "params": {"lamda": 2}})").find("/params/lamda: unknown field"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"model": "nope"})").find("/model"), std::string::npos);
    EXPECT_NE(error_of(R"({"model": "metz-gyllenberg-1", "cap": 3, "params": {"d": 1.5}})").find("/params/d"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"model": "metz-gyllenberg-1", "cap": 3, "params": {"mu": [1, 1]}})").find("cap + 1"),
              std::string::npos);
    EXPECT_THROW(load_model("/nonexistent/model.json"), ConfigError);
}

TEST(LoadModel, FormsAndHash) {
    const auto a = load_model("metz-gyllenberg-1");
    const auto b = load_model_json(R"({"model": "metz-gyllenberg-1", "cap": 8, "params": {
        "lambda": {"form": "linear-decline", "scale": 3, "K": 8}, "mu": 1, "gamma": {"form": "constant", "value": 0.1},
        "d": 0.3, "s": {"form": "linear-decline", "scale": 1, "K": 8}}})");
    EXPECT_EQ(a.hash, b.hash);
    const auto c = load_model_json(R"({"model": "metz-gyllenberg-1", "params": {"mu": 1.1}})");
    EXPECT_NE(a.hash, c.hash);
    EXPECT_EQ(a.hash_hex().size(), 16u);
}

TEST(LoadModel, WithCap) {
    const auto m = load_model("kretzschmar");
    const auto m30 = with_cap(m, 30);
    EXPECT_EQ(m30.cap(), 30);
    EXPECT_NE(m30.hash, m.hash);
    const auto arr = load_model_json(R"({"model": "metz-gyllenberg-1", "cap": 2, "params": {"mu": [1, 1, 1]}})");
    EXPECT_THROW(with_cap(arr, 4), ConfigError);
}

TEST(Harness, ZeroRateModelConvergesExactly) {
    // all rates zero: every path stays at x(0)
    const auto m = load_model_json(R"({"model": "kretzschmar", "params": {"beta": 0, "kappa": 0, "alpha": 0,
        "mu": 0, "lambda": 0}})");
    ExperimentSpec s;
    s.kind = "converge";
    s.n = {100, 400};
    s.replicas = 4;
    s.horizon = 1.0;
    s.grid_points = 11;
    const auto rows = converge_rows(m, s, default_initial(m));
    for (const auto& r : rows) {
        EXPECT_EQ(r.median, 0.0);
        EXPECT_EQ(r.q75, 0.0);
    }
}

TEST(Harness, ConvergeErrorsShrinkWithN) {
    const auto m = load_model("kretzschmar");
    ExperimentSpec s;
    s.n = {100, 1600};
    s.replicas = 16;
    s.horizon = 2.0;
    s.grid_points = 21;
    const auto rows = converge_rows(m, s, default_initial(m));
    EXPECT_LT(rows[1].median, rows[0].median);
}

TEST(Harness, NListMustIncrease) {
    const auto m = load_model("kretzschmar");
    ExperimentSpec s;
    s.n = {400, 100};
    EXPECT_THROW(converge_rows(m, s, default_initial(m)), ExperimentError);
    s.n = {100};
    s.replicas = 0;
    EXPECT_THROW(converge_rows(m, s, default_initial(m)), ExperimentError);
}

TEST(Harness, IndependenceNeedsEnoughPatchesOfTheTagType) {
    const auto m = load_model("kretzschmar");
    ExperimentSpec s;
    s.n = {100, 200};
    s.pairs = 50;
    s.replicas = 2;
    s.horizon = 0.5;
    EXPECT_THROW(independence_rows(m, s, default_initial(m)), ExperimentError);
}

TEST(Cohort, NoInfectionGivesNoParasites) {
    const auto m = load_model_json(R"({"model": "kretzschmar", "params": {"lambda": 0}})");
    ExperimentSpec s;
    s.horizon = 2.0;
    s.target_survivors = 500;
    const auto c = cohort(m, s, default_initial(m));
    EXPECT_GE(c.survivors, 500u);
    for (int v : c.counts) EXPECT_EQ(v, 0);
    EXPECT_EQ(c.predicted, 0.0);
}

TEST(Cohort, EquilibriumDriverClosedForm) {
    const auto m = load_model("kretzschmar");
    const auto& p = std::get<KretzschmarParams>(m.params);
    const auto guess = kretzschmar_closure_guess(p, m.model.space);
    ASSERT_TRUE(guess.has_value());
    EquilibriumOptions eo;
    eo.integrate_first = false;  // the endemic equilibrium is unstable
    eo.newton_iterations = 100;
    const auto eq = find_equilibrium(m.model, *guess, eo);
    ASSERT_TRUE(eq.converged);
    ExperimentSpec s;
    s.horizon = 2.0;
    s.target_survivors = 1;
    s.tol = 1e-11;
    const auto c = cohort(m, s, eq.x);
    const double phi = kretzschmar_phi(eq.x, p.c), k = p.mu + p.alpha;
    EXPECT_NEAR(c.predicted, p.lambda * phi * (1.0 - std::exp(-k * s.horizon)) / k, 1e-7);
}

TEST(Cohort, NoHostDeathIsPoisson) {
    const auto m = load_model_json(R"({"model": "kretzschmar", "params": {"alpha": 0, "kappa": 0}})");
    ExperimentSpec s;
    s.horizon = 2.0;
    s.target_survivors = 8000;
    const auto c = cohort(m, s, default_initial(m));
    EXPECT_GT(c.dispersion, 0.9);
    EXPECT_LT(c.dispersion, 1.1);
    EXPECT_NEAR(c.mean, c.predicted, 3.5 * c.se);
    EXPECT_GT(c.gof.p_value, 1e-3);
}

TEST(Cohort, NeedsKretzschmar) {
    const auto m = load_model("metz-gyllenberg-1");
    EXPECT_THROW(cohort(m, ExperimentSpec{}, default_initial(m)), ExperimentError);
}

TEST(Invade, NoIntroductionsNeverEstablish) {
    const auto m = load_model("metz-gyllenberg-2");
    ExperimentSpec s;
    s.introductions = 0;
    s.n = {500};
    s.replicas = 5;
    s.w_replicas = 500;
    s.w_horizon = 50;
    const auto r = invasion(m, s);
    EXPECT_EQ(r.predicted, 0.0);
    EXPECT_EQ(r.established, 0u);
}

TEST(Invade, SubcriticalInvaderDiesOut) {
    const auto m = load_model_json(R"({"model": "metz-gyllenberg-2", "params": {"invader": {
        "lambda": {"form": "linear-decline", "scale": 1.0, "K": 6}}}})");
    ExperimentSpec s;
    s.n = {1000};
    s.replicas = 60;
    s.horizon = 200;
    s.establish_at = 30;
    s.w_replicas = 4000;
    s.w_horizon = 100;
    const auto r = invasion(m, s);
    EXPECT_LT(r.mbar.mean, 1.0);
    EXPECT_EQ(r.malthus.status, Criticality::Subcritical);
    EXPECT_EQ(r.q.q, 1.0);
    EXPECT_EQ(r.established, 0u);
    EXPECT_EQ(r.undecided, 0u);
}

TEST(Invade, K2NWarning) {
    const auto m = load_model("metz-gyllenberg-2");
    ExperimentSpec s;
    s.introductions = 10;
    s.n = {500};
    s.replicas = 2;
    s.horizon = 1.0;
    s.w_replicas = 200;
    s.w_horizon = 20;
    const auto res = run_invade(m, s);
    ASSERT_FALSE(res.warnings.empty());
    EXPECT_NE(res.warnings.front().find("K^2/N"), std::string::npos);
}

TEST(Output, ReproducibleAcrossRunsAndWorkers) {
    const auto m = load_model("metz-gyllenberg-1");
    ExperimentSpec s;
    s.kind = "converge";
    s.n = {200, 400};
    s.replicas = 6;
    s.horizon = 1.0;
    s.grid_points = 11;
    s.seed = 42;
    const auto a = scratch("a"), b = scratch("b");
    setenv("METAPOP_WORKERS", "1", 1);
    write_result(run_experiment(m, s), a);
    setenv("METAPOP_WORKERS", "3", 1);
    write_result(run_experiment(m, s), b);
    unsetenv("METAPOP_WORKERS");
    EXPECT_EQ(slurp(a / "converge.csv"), slurp(b / "converge.csv"));
    EXPECT_EQ(slurp(a / "converge.json"), slurp(b / "converge.json"));
    s.seed = 43;
    const auto c = scratch("c");
    write_result(run_experiment(m, s), c);
    EXPECT_NE(slurp(a / "converge.csv"), slurp(c / "converge.csv"));
}

TEST(Output, ProvenanceInEveryTable) {
    const auto m = load_model("kretzschmar");
    ExperimentSpec s;
    s.n = {100};
    s.replicas = 2;
    s.horizon = 0.5;
    s.grid_points = 3;
    s.caps = {6, 12};
    s.target_survivors = 10;
    for (const char* kind : {"simulate", "converge", "audit", "cohort"}) {
        s.kind = kind;
        const auto r = run_experiment(with_cap(m, 6), s);
        const auto& h = r.table.header;
        for (const char* col : {"model_hash", "seed", "cap", "tol"})
            EXPECT_NE(std::find(h.begin(), h.end(), col), h.end()) << kind << " " << col;
        for (const auto& row : r.table.rows) EXPECT_EQ(row.size(), h.size()) << kind;
        const auto& p = r.report["provenance"];
        for (const char* key : {"model_hash", "seed", "cap", "tolerances"}) EXPECT_TRUE(p.contains(key)) << kind << " " << key;
    }
    s.kind = "converge";
    const auto r = run_experiment(m, s);
    EXPECT_EQ(r.report["provenance"]["initial_moment"]["r"], 8);
}

TEST(Output, CsvQuoting) {
    Table t;
    t.header = {"a", "b"};
    t.rows = {{"1,2", "say \"x\""}};
    EXPECT_EQ(t.csv(), "a,b\r\n\"1,2\",\"say \"\"x\"\"\"\r\n");
}

TEST(Audit, BuiltInReportPasses) {
    const auto m = load_model("metz-gyllenberg-1");
    ExperimentSpec s;
    s.horizon = 2.0;
    const auto rep = audit(m, s);
    EXPECT_TRUE(rep.passed());
    EXPECT_EQ(rep.caps, (std::vector<int>{8, 16}));
    EXPECT_TRUE(std::isfinite(rep.D_Y));
    const auto j = to_json(rep);
    EXPECT_TRUE(j["passed"].get<bool>());
    EXPECT_EQ(j["entries"].size(), rep.entries.size());
}

TEST(Parallel, ResultsByIndexAndErrors) {
    const auto v = parallel_map(100, [](std::size_t k) { return static_cast<int>(k * k); }, 4);
    for (std::size_t k = 0; k < v.size(); ++k) EXPECT_EQ(v[k], static_cast<int>(k * k));
    EXPECT_THROW(parallel_map(
                     10,
                     [](std::size_t k) {
                         if (k == 7) throw std::runtime_error("boom");
                         return 0;
                     },
                     3),
                 std::runtime_error);
}

TEST(Stats, Basics) {
    EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
    EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.25), 1.75);
    EXPECT_NEAR(chi2_sf(3.841458820694124, 1), 0.05, 1e-9);
    EXPECT_NEAR(simpson([](double t) { return t * t; }, 0.0, 3.0, 10), 9.0, 1e-12);
}

TEST(Stats, PoissonGoodnessOfFit) {
    Rng rng(5);
    std::vector<int> pois, geo;
    for (int k = 0; k < 5000; ++k) {
        // Poisson(2.5) by counting unit-rate arrivals before 2.5
        int c = 0;
        for (double t = rng.exponential(1.0); t < 2.5; t += rng.exponential(1.0)) ++c;
        pois.push_back(c);
        int g = 0;
        while (rng.uniform() < 0.7) ++g;
        geo.push_back(g);
    }
    EXPECT_GT(poisson_gof(pois).p_value, 0.001);
    EXPECT_LT(poisson_gof(geo).p_value, 1e-6);
}
