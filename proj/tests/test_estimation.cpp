#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ctmc/estimation.hpp"
#include "ctmc/simulator.hpp"
#include "test_support.hpp"

using namespace ctmc;
using test_support::make_space;
using test_support::max_abs_diff;
using test_support::random_generator;

namespace {

PanelDataset tiny_panel() {
    StateSpace space({"U", "PE"});
    std::vector<PanelRecord> recs{{"a", 0, 0}, {"a", 1, 1}, {"b", 0, 0}, {"b", 1, 0}};
    return PanelDataset(space, {"t1", "t2"}, recs);
}

} // namespace

TEST_CASE("count_transitions tallies moves between consecutive periods") {
    auto panel = tiny_panel();
    auto counts = count_transitions(panel, "t1", "t2");
    CHECK(counts.at(0, 1) == 1); // U -> PE
    CHECK(counts.at(0, 0) == 1); // U -> U
    CHECK(counts.at(1, 0) == 0);
    CHECK(counts.at(1, 1) == 0);

    CHECK_THROWS_AS(count_transitions(panel, "t2", "t1"), argument_error);
}

TEST_CASE("count_transitions with stayers only is diagonal") {
    StateSpace space({"A", "B"});
    std::vector<PanelRecord> recs;
    for (int i = 0; i < 6; ++i) {
        recs.push_back({"id" + std::to_string(i), 0, static_cast<std::uint16_t>(i % 2)});
        recs.push_back({"id" + std::to_string(i), 1, static_cast<std::uint16_t>(i % 2)});
    }
    PanelDataset panel(space, {"p0", "p1"}, recs);
    auto counts = count_transitions(panel, "p0", "p1");
    CHECK(counts.at(0, 0) == 3);
    CHECK(counts.at(1, 1) == 3);
    CHECK(counts.at(0, 1) == 0);
    CHECK(counts.at(1, 0) == 0);
}

TEST_CASE("count_transitions drops individuals missing in either period") {
    StateSpace space({"A", "B"});
    std::vector<PanelRecord> recs{
        {"both", 0, 0}, {"both", 1, 1}, {"only_first", 0, 0}, {"only_second", 1, 1}};
    PanelDataset panel(space, {"p0", "p1"}, recs);
    auto counts = count_transitions(panel, "p0", "p1");
    CHECK(counts.total() == 1);
    CHECK(counts.at(0, 1) == 1);
}

TEST_CASE("mle_stochastic is the row-normalized count matrix") {
    StateSpace space({"A", "B"});
    auto p = mle_stochastic(TransitionCounts(space, {{8, 2}, {1, 9}}));
    CHECK(p(0, 0) == 0.8);
    CHECK(p(0, 1) == 0.2);
    CHECK(p(1, 0) == 0.1);
    CHECK(p(1, 1) == 0.9);

    auto ident = mle_stochastic(TransitionCounts(space, {{5, 0}, {0, 5}}));
    CHECK(max_abs_diff(ident.entries(), Matrix::identity(2)) == 0.0);

    CHECK_THROWS_WITH(mle_stochastic(TransitionCounts(space, {{0, 0}, {1, 9}})),
                      Catch::Matchers::ContainsSubstring("'A'"));
}

TEST_CASE("mle_stochastic always satisfies the stochastic invariants") {
    Rng rng(8);
    StateSpace space = make_space(5);
    for (int rep = 0; rep < 20; ++rep) {
        TransitionCounts counts = TransitionCounts::zero(space);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j)
                counts.at(i, j) = 1 + static_cast<std::int64_t>(rng.below(500));
        auto p = mle_stochastic(counts);
        CHECK(validate_stochastic(p.entries(), 1e-12).is_valid);
    }
}

TEST_CASE("estimate_generator on the identity gives the zero generator") {
    StateSpace space({"A", "B"});
    StochasticMatrix p(space, Matrix::identity(2));
    for (auto method : {RegularizationMethod::TruncateAbsorb,
                        RegularizationMethod::RedistributeProportional,
                        RegularizationMethod::None}) {
        auto est = estimate_generator(p, method);
        CHECK(est.Q.entries().max_abs() == 0.0);
        CHECK(est.negative_mass_removed == 0.0);
        CHECK(est.series_converged);
    }
}

TEST_CASE("estimate_generator matches the two-state closed form") {
    StateSpace space({"A", "B"});
    StochasticMatrix p(space, Matrix{{0.8, 0.2}, {0.1, 0.9}});
    auto est = estimate_generator(p, RegularizationMethod::TruncateAbsorb);
    const double c = -std::log(0.7) / 0.3;
    CHECK(est.Q(0, 1) == Catch::Approx(0.2 * c).margin(1e-10));
    CHECK(est.Q(1, 0) == Catch::Approx(0.1 * c).margin(1e-10));
    CHECK(est.negative_mass_removed == 0.0);
    CHECK(max_abs_diff(est.Q.entries(), est.raw_q_tilde) < 1e-12);
}

TEST_CASE("truncate-absorb applies the stated row rule") {
    // Raw row (-0.5, 0.3, 0.3, -0.1) becomes (-0.6, 0.3, 0.3, 0).
    Matrix raw{{-0.5, 0.3, 0.3, -0.1},
               {0.2, -0.6, 0.3, 0.1},
               {0.1, 0.2, -0.4, 0.1},
               {0.3, 0.1, 0.2, -0.6}};
    Matrix q = raw;
    double removed = ctmc::detail::regularize_rows(q, RegularizationMethod::TruncateAbsorb);
    CHECK(removed == Catch::Approx(0.1));
    CHECK(q(0, 0) == Catch::Approx(-0.6));
    CHECK(q(0, 1) == Catch::Approx(0.3));
    CHECK(q(0, 2) == Catch::Approx(0.3));
    CHECK(q(0, 3) == 0.0);
    // Clean rows pass through bit-identically.
    for (std::size_t j = 0; j < 4; ++j) CHECK(q(1, j) == raw(1, j));
}

TEST_CASE("redistribute-proportional takes removed mass out of positive entries") {
    Matrix q{{-0.5, 0.3, 0.3, -0.1},
             {0.2, -0.6, 0.3, 0.1},
             {0.1, 0.2, -0.4, 0.1},
             {0.3, 0.1, 0.2, -0.6}};
    double removed =
        ctmc::detail::regularize_rows(q, RegularizationMethod::RedistributeProportional);
    CHECK(removed == Catch::Approx(0.1));
    // Positives 0.3, 0.3 each lose half the removed mass.
    CHECK(q(0, 1) == Catch::Approx(0.25));
    CHECK(q(0, 2) == Catch::Approx(0.25));
    CHECK(q(0, 3) == 0.0);
    CHECK(q(0, 0) == Catch::Approx(-0.5));
    double row = 0.0;
    for (std::size_t j = 0; j < 4; ++j) row += q(0, j);
    CHECK(std::abs(row) < 1e-15);
}

TEST_CASE("regularized estimates always pass the generator conditions") {
    // A rotation-flavored chain: the log series converges but carries a
    // negative off-diagonal, so regularization has real work to do.
    StateSpace space = make_space(3);
    Matrix pm{{0.70, 0.28, 0.02}, {0.02, 0.70, 0.28}, {0.28, 0.02, 0.70}};
    StochasticMatrix p(space, pm);
    auto raw = matrix_log_series(p);
    REQUIRE(raw.converged);
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j) worst = std::min(worst, raw.q_tilde(i, j));
    REQUIRE(worst < -1e-6); // the case genuinely needs repair

    for (auto method : {RegularizationMethod::TruncateAbsorb,
                        RegularizationMethod::RedistributeProportional}) {
        auto est = estimate_generator(p, method);
        CHECK(validate_generator(est.Q.entries(), 1e-10).is_valid);
        CHECK(est.negative_mass_removed >= -worst - 1e-12);
        CHECK(est.negative_mass_removed > 0.0);
    }
    CHECK_THROWS_AS(estimate_generator(p, RegularizationMethod::None), validation_error);
}

TEST_CASE("zero negative mass implies the estimate equals the raw series output") {
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        auto q = random_generator(4, rng, 0.6);
        StochasticMatrix p(q.space(), matrix_exp(q.entries()), 1e-9);
        auto est = estimate_generator(p, RegularizationMethod::TruncateAbsorb);
        if (est.negative_mass_removed == 0.0)
            CHECK(max_abs_diff(est.Q.entries(), est.raw_q_tilde) < 1e-12);
    }
}

TEST_CASE("estimate_series produces one estimate per adjacent pair in order") {
    StateSpace space({"A", "B"});
    std::vector<PanelRecord> recs;
    for (int i = 0; i < 40; ++i)
        for (std::uint32_t p = 0; p < 3; ++p)
            recs.push_back({"id" + std::to_string(i), p,
                            static_cast<std::uint16_t>((i + p) % 2)});
    PanelDataset panel(space, {"q1", "q2", "q3"}, recs);
    auto series = estimate_series(panel, RegularizationMethod::TruncateAbsorb);
    REQUIRE(series.size() == 2);
    CHECK(series[0].from_period == "q1");
    CHECK(series[0].to_period == "q2");
    CHECK(series[1].from_period == "q2");
    CHECK(series[1].to_period == "q3");
    CHECK(series[0].estimate.has_value());
    CHECK(series[1].estimate.has_value());
}

TEST_CASE("estimate_series flags a pair with an empty state but keeps the rest") {
    StateSpace space({"A", "B"});
    std::vector<PanelRecord> recs;
    // Nobody occupies B at p0, so the p0->p1 pair has an empty B row; by p1
    // half the cohort is in B and the p1->p2 pair is estimable.
    for (int i = 0; i < 10; ++i) {
        recs.push_back({"id" + std::to_string(i), 0, 0});
        recs.push_back({"id" + std::to_string(i), 1, static_cast<std::uint16_t>(i % 2)});
        recs.push_back({"id" + std::to_string(i), 2, static_cast<std::uint16_t>(i % 2)});
    }
    PanelDataset panel(space, {"p0", "p1", "p2"}, recs);
    auto series = estimate_series(panel, RegularizationMethod::TruncateAbsorb);
    REQUIRE(series.size() == 2);
    CHECK_FALSE(series[0].estimate.has_value());
    CHECK_FALSE(series[0].message.empty());
    CHECK(series[1].estimate.has_value());

    PanelDataset single(space, {"p0"}, {{"a", 0, 0}});
    CHECK_THROWS_AS(estimate_series(single, RegularizationMethod::TruncateAbsorb),
                    data_error);
}

TEST_CASE("counts from a simulated panel recover exp(Q) within binomial noise") {
    StateSpace space = make_space(3);
    Matrix qm{{-0.4, 0.3, 0.1}, {0.2, -0.5, 0.3}, {0.1, 0.2, -0.3}};
    GeneratorMatrix q(space, qm);
    SimulationSpec spec{{q}, 10000, 2, ShareVector(space, {0.4, 0.3, 0.3}), 77};
    auto panel = simulate_panel(spec);
    auto counts = count_transitions(panel, panel.periods()[0], panel.periods()[1]);
    auto p_hat = mle_stochastic(counts);
    Matrix truth = matrix_exp(qm);
    // 3 sigma binomial bound at worst-case row mass ~ n/3.
    CHECK(max_abs_diff(p_hat.entries(), truth) < 0.02);
}
