#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ctmc/decomposition.hpp"
#include "ctmc/kernels.hpp"
#include "test_support.hpp"

using namespace ctmc;
using test_support::make_space;

namespace {

/// Dense oracle for the HP filter: assemble I + lambda D^T D explicitly and
/// solve with the general LU path.
std::vector<double> hp_trend_dense(const std::vector<double>& y, double lambda) {
    const std::size_t n = y.size();
    Matrix d(n - 2, n);
    for (std::size_t t = 0; t + 2 < n; ++t) {
        d(t, t) = 1.0;
        d(t, t + 1) = -2.0;
        d(t, t + 2) = 1.0;
    }
    Matrix a = Matrix::identity(n) + d.transpose() * d * lambda;
    return solve_linear(a, y); // symmetric system, either convention
}

std::vector<GeneratorMatrix> constant_series(const GeneratorMatrix& q, std::size_t T) {
    return std::vector<GeneratorMatrix>(T, q);
}

} // namespace

TEST_CASE("hp_filter of a linear series has zero cycle") {
    std::vector<double> y;
    for (int t = 0; t < 20; ++t) y.push_back(3.0 + 0.25 * t);
    auto hp = hp_filter(y, 1600.0);
    for (double c : hp.cycle) CHECK(std::abs(c) < 1e-9);
}

TEST_CASE("hp_filter with vanishing lambda returns the series") {
    std::vector<double> y{1.0, 4.0, 2.0, 8.0, 5.0, 7.0, 3.0, 6.0};
    auto hp = hp_filter(y, 1e-8);
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(hp.trend[i] == Catch::Approx(y[i]).margin(1e-8));
}

TEST_CASE("hp_filter matches the dense oracle") {
    std::vector<double> y{0.07, 0.074, 0.069, 0.081, 0.078, 0.072, 0.080, 0.075};
    auto hp = hp_filter(y, 1600.0);
    auto dense = hp_trend_dense(y, 1600.0);
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(hp.trend[i] == Catch::Approx(dense[i]).margin(1e-10));

    Rng rng(64);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> series;
        for (int t = 0; t < 30; ++t)
            series.push_back(0.1 + 0.01 * t + 0.05 * rng.uniform());
        auto banded = hp_filter(series, 1600.0);
        auto oracle = hp_trend_dense(series, 1600.0);
        for (std::size_t i = 0; i < series.size(); ++i)
            CHECK(banded.trend[i] == Catch::Approx(oracle[i]).margin(1e-10));
    }
}

TEST_CASE("hp_filter cycle has zero mean") {
    Rng rng(12);
    std::vector<double> y;
    for (int t = 0; t < 24; ++t) y.push_back(rng.uniform() + 0.02 * t);
    auto hp = hp_filter(y, 1600.0);
    double mean = 0.0;
    for (double c : hp.cycle) mean += c;
    CHECK(std::abs(mean / y.size()) < 1e-9);

    CHECK_THROWS_AS(hp_filter({1.0, 2.0, 3.0}, 1600.0), data_error);
    CHECK_THROWS_AS(hp_filter(y, 0.0), argument_error);
}

TEST_CASE("contribution coefficient basics") {
    std::vector<double> cycle{0.01, -0.02, 0.015, -0.005, 0.01, -0.01};
    CHECK(contribution(cycle, cycle) == Catch::Approx(1.0));

    std::vector<double> constant(cycle.size(), 0.4);
    CHECK(contribution(cycle, constant) == Catch::Approx(0.0).margin(1e-15));

    std::vector<double> half = cycle;
    for (double& v : half) v *= 0.5;
    CHECK(contribution(cycle, half) == Catch::Approx(0.5));

    // Invariant to adding a constant to both series.
    std::vector<double> shifted_a = cycle, shifted_b = half;
    for (double& v : shifted_a) v += 3.0;
    for (double& v : shifted_b) v += 7.0;
    CHECK(contribution(shifted_a, shifted_b) == Catch::Approx(0.5));

    CHECK_THROWS_AS(contribution(constant, cycle), data_error);
    CHECK_THROWS_AS(contribution(cycle, std::vector<double>{1.0}), argument_error);
}

TEST_CASE("counterfactual_generators on a constant series is the identity map") {
    StateSpace space = make_space(3);
    Matrix qm{{-0.4, 0.3, 0.1}, {0.2, -0.5, 0.3}, {0.1, 0.2, -0.3}};
    GeneratorMatrix q(space, qm);
    auto series = constant_series(q, 10);
    for (auto kind : {ReferenceRule::Kind::InitialValue, ReferenceRule::Kind::SampleMean,
                      ReferenceRule::Kind::HPTrend}) {
        auto cf = counterfactual_generators(series, ReferenceRule{kind, 1600.0}, 0, 1);
        for (const auto& g : cf)
            CHECK(test_support::max_abs_diff(g.entries(), qm) < 1e-9);
    }
    CHECK_THROWS_AS(counterfactual_generators(series, ReferenceRule{}, 1, 1), argument_error);
}

TEST_CASE("initial-value counterfactual changes only the varied column pair") {
    StateSpace space = make_space(3);
    std::vector<GeneratorMatrix> series;
    Rng rng(3);
    for (int t = 0; t < 9; ++t) {
        Matrix m{{-0.4, 0.3, 0.1}, {0.2, -0.5, 0.3}, {0.1, 0.2, -0.3}};
        // every rate drifts over time
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                if (i != j) m(i, j) *= 1.0 + 0.3 * std::sin(0.7 * t + i + j);
        for (std::size_t i = 0; i < 3; ++i) {
            double off = 0.0;
            for (std::size_t j = 0; j < 3; ++j)
                if (i != j) off += m(i, j);
            m(i, i) = -off;
        }
        series.emplace_back(space, m);
    }
    auto cf = counterfactual_generators(series, {ReferenceRule::Kind::InitialValue, 1600.0},
                                        0, 1);
    for (std::size_t t = 0; t < series.size(); ++t) {
        CHECK(cf[t](0, 1) == series[t](0, 1)); // varied rate keeps its path
        CHECK(cf[t](0, 2) == series[0](0, 2)); // frozen at the initial value
        CHECK(cf[t](1, 0) == series[0](1, 0));
        CHECK(cf[t](1, 2) == series[0](1, 2));
        CHECK(validate_generator(cf[t].entries(), 1e-10).is_valid);
        // Only row 0's diagonal can move (it absorbs the varied rate).
        CHECK(cf[t](1, 1) == Catch::Approx(series[0](1, 1)).margin(1e-15));
    }
}

TEST_CASE("sample-mean counterfactual freezes rates at their means") {
    StateSpace space = make_space(2);
    std::vector<GeneratorMatrix> series;
    std::vector<double> rate01{0.2, 0.4, 0.3, 0.5, 0.2, 0.4, 0.3, 0.5};
    for (double r : rate01) {
        Matrix m{{-r, r}, {0.3, -0.3}};
        series.emplace_back(space, m);
    }
    auto cf = counterfactual_generators(series, {ReferenceRule::Kind::SampleMean, 1600.0},
                                        1, 0);
    double mean = 0.0;
    for (double r : rate01) mean += r;
    mean /= rate01.size();
    for (std::size_t t = 0; t < series.size(); ++t) {
        CHECK(cf[t](0, 1) == Catch::Approx(mean).margin(1e-15)); // frozen
        CHECK(cf[t](1, 0) == 0.3);                               // varied (constant here)
    }
}

TEST_CASE("one-step counterfactual with the actual series reproduces fitted shares") {
    StateSpace space = make_space(3);
    Rng rng(17);
    std::vector<GeneratorMatrix> series;
    std::vector<ShareVector> observed;
    std::vector<double> raw{0.5, 0.3, 0.2};
    observed.emplace_back(space, raw);
    for (int t = 0; t < 12; ++t) {
        auto q = test_support::random_generator(3, rng, 0.8);
        series.emplace_back(space, q.entries());
        observed.push_back(propagate(observed.back(), series.back(), 1.0));
    }
    auto cf = counterfactual_shares(series, CounterfactualMode::OneStep, observed);
    for (std::size_t t = 0; t < series.size(); ++t) {
        REQUIRE(cf[t].has_value());
        auto direct = propagate(observed[t], series[t], 1.0);
        double l1 = 0.0;
        for (std::size_t i = 0; i < 3; ++i) l1 += std::abs((*cf[t])[i] - direct[i]);
        CHECK(l1 < 1e-12);
    }
}

TEST_CASE("one-step counterfactual fixed point at equilibrium") {
    StateSpace space({"E", "U"});
    GeneratorMatrix q(space, Matrix{{-0.5, 0.5}, {0.3, -0.3}});
    auto eq = equilibrium(q);
    auto series = constant_series(q, 6);
    std::vector<ShareVector> observed(7, eq.shares);
    auto cf = counterfactual_shares(series, CounterfactualMode::OneStep, observed);
    for (const auto& s : cf) {
        REQUIRE(s.has_value());
        CHECK((*s)[0] == Catch::Approx(eq.shares[0]).margin(1e-9));
    }
}

TEST_CASE("equilibrium-mode counterfactual maps each generator to its equilibrium") {
    StateSpace space({"E", "U"});
    std::vector<GeneratorMatrix> series;
    for (double a : {0.2, 0.4, 0.6})
        series.emplace_back(space, Matrix{{-a, a}, {0.3, -0.3}});
    auto cf = counterfactual_shares(series, CounterfactualMode::Equilibrium);
    for (std::size_t t = 0; t < series.size(); ++t) {
        REQUIRE(cf[t].has_value());
        auto eq = equilibrium(series[t]);
        CHECK((*cf[t])[0] == Catch::Approx(eq.shares[0]).margin(1e-12));
    }
}

TEST_CASE("decompose_volatility attributes an oscillating rate to itself") {
    // 5 states; only q(U, IN) oscillates. Its beta must be ~1, all others ~0.
    StateSpace space({"SE", "FT", "PE", "U", "IN"});
    Matrix base{{-0.20, 0.03, 0.05, 0.04, 0.08},
                {0.03, -0.90, 0.25, 0.35, 0.27},
                {0.02, 0.04, -0.13, 0.03, 0.04},
                {0.10, 0.55, 0.10, -2.75, 2.00},
                {0.02, 0.09, 0.03, 0.45, -0.59}};
    const std::size_t u = 3, in = 4;
    const std::size_t T = 28;
    std::vector<GeneratorMatrix> series;
    for (std::size_t t = 0; t < T; ++t) {
        Matrix m = base;
        m(u, in) = base(u, in) * (1.0 + 0.25 * std::sin(0.25 * 3.14159265358979 * t));
        for (std::size_t i = 0; i < 5; ++i) {
            double off = 0.0;
            for (std::size_t j = 0; j < 5; ++j)
                if (i != j) off += m(i, j);
            m(i, i) = -off;
        }
        series.emplace_back(space, m);
    }
    std::vector<ShareVector> observed;
    observed.push_back(equilibrium(series.front()).shares);
    for (const auto& q : series) observed.push_back(propagate(observed.back(), q, 1.0));

    auto table = decompose_volatility(series, observed, "U", {}, CounterfactualMode::OneStep,
                                      1600.0);
    REQUIRE(table.entries.size() == 8);
    for (const auto& e : table.entries) {
        if (e.from_state == "U" && e.to_state == "IN") {
            CHECK(e.beta > 0.9);
            CHECK(e.beta < 1.1);
        } else {
            CHECK(std::abs(e.beta) < 0.1);
        }
    }
}

TEST_CASE("decompose_volatility rejects a constant series") {
    StateSpace space({"E", "U"});
    GeneratorMatrix q(space, Matrix{{-0.5, 0.5}, {0.3, -0.3}});
    auto series = constant_series(q, 12);
    std::vector<ShareVector> observed(13, equilibrium(q).shares);
    CHECK_THROWS_AS(decompose_volatility(series, observed, "U"), data_error);
}

TEST_CASE("decompose_volatility all-pairs flag widens the table") {
    StateSpace space = make_space(3);
    Rng rng(23);
    std::vector<GeneratorMatrix> series;
    std::vector<ShareVector> observed;
    std::vector<double> start{0.4, 0.35, 0.25};
    observed.emplace_back(space, start);
    for (int t = 0; t < 12; ++t) {
        series.push_back(test_support::random_generator(3, rng, 0.7));
        observed.push_back(propagate(observed.back(), series.back(), 1.0));
    }
    auto narrow = decompose_volatility(series, observed, "s0");
    auto wide = decompose_volatility(series, observed, "s0", {}, CounterfactualMode::OneStep,
                                     1600.0, /*all_pairs=*/true);
    CHECK(narrow.entries.size() == 4);
    CHECK(wide.entries.size() == 6);
}
