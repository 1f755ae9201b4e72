#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ctmc/forecasting.hpp"
#include "ctmc/rng.hpp"
#include "test_support.hpp"

using namespace ctmc;
using test_support::mean;
using test_support::sample_sd;

namespace {

/// y_t = intercept + slope * (t+1) + seasonal[t % tau] (+ noise).
SeasonalSeries trend_seasonal(int n, int tau, double intercept, double slope,
                              std::vector<double> seasonal, double noise_sd = 0.0,
                              std::uint64_t seed = 0) {
    SeasonalSeries s;
    s.season_length = tau;
    Rng rng(seed);
    for (int t = 0; t < n; ++t) {
        double v = intercept + slope * (t + 1) + seasonal[t % tau];
        if (noise_sd > 0.0) v += noise_sd * rng.normal();
        s.values.push_back(v);
    }
    return s;
}

SeasonalSeries constant_series(int n, int tau, double value) {
    return trend_seasonal(n, tau, value, 0.0, std::vector<double>(tau, 0.0));
}

} // namespace

TEST_CASE("tslr recovers a noiseless trend plus seasonal exactly") {
    auto s = trend_seasonal(24, 4, 2.0, 0.5, {0.0, 1.0, -1.0, 0.0});
    auto m = fit_tslr(s);
    const auto& c = m.coefficients();
    // Dummies are relative to season 0, which has effect 0 here.
    CHECK(c[0] == Catch::Approx(2.0).margin(1e-9));
    CHECK(c[1] == Catch::Approx(0.5).margin(1e-9));
    CHECK(c[2] == Catch::Approx(1.0).margin(1e-9));
    CHECK(c[3] == Catch::Approx(-1.0).margin(1e-9));
    CHECK(c[4] == Catch::Approx(0.0).margin(1e-9));
    for (double r : m.residuals()) CHECK(std::abs(r) < 1e-9);
    // Forecasts continue the pattern.
    for (int f = 1; f <= 8; ++f) {
        const int t = 24 + f;
        const double truth = 2.0 + 0.5 * t + std::vector<double>{0, 1, -1, 0}[(t - 1) % 4];
        CHECK(m.forecast(f) == Catch::Approx(truth).margin(1e-8));
    }
}

TEST_CASE("tslr on a constant series") {
    auto m = fit_tslr(constant_series(16, 4, 3.25));
    CHECK(m.coefficients()[0] == Catch::Approx(3.25).margin(1e-9));
    for (std::size_t i = 1; i < m.coefficients().size(); ++i)
        CHECK(m.coefficients()[i] == Catch::Approx(0.0).margin(1e-9));
    CHECK(m.forecast(5) == Catch::Approx(3.25).margin(1e-9));
}

TEST_CASE("tslr out-of-sample error stays within three residual sds") {
    auto train = trend_seasonal(24, 4, 1.0, 0.2, {0.0, 0.5, -0.3, -0.2}, 0.1, 314);
    auto m = fit_tslr(train);
    const double sd = std::sqrt(m.sigma2());
    for (int f = 1; f <= 4; ++f) {
        const int t = 24 + f;
        const double truth = 1.0 + 0.2 * t + std::vector<double>{0, 0.5, -0.3, -0.2}[(t - 1) % 4];
        CHECK(std::abs(m.forecast(f) - truth) < 3.0 * sd + 1e-12);
    }
}

TEST_CASE("tslr rejects series too short for the design") {
    SeasonalSeries s{{1.0, 2.0, 3.0}, {}, 4};
    CHECK_THROWS_AS(fit_tslr(s), fit_error);
}

TEST_CASE("ets is exact on noiseless trend plus seasonal input") {
    auto s = trend_seasonal(24, 4, 5.0, 0.3, {0.4, -0.1, -0.5, 0.2});
    auto m = fit_ets(s);
    // With exact initialization every one-step residual vanishes.
    double sd_after_burn_in = 0.0;
    for (std::size_t t = 8; t < m.residuals().size(); ++t)
        sd_after_burn_in = std::max(sd_after_burn_in, std::abs(m.residuals()[t]));
    CHECK(sd_after_burn_in < 1e-3);
    for (int f = 1; f <= 6; ++f) {
        const int t = 24 + f;
        const double truth = 5.0 + 0.3 * t + std::vector<double>{0.4, -0.1, -0.5, 0.2}[(t - 1) % 4];
        CHECK(m.forecast(f) == Catch::Approx(truth).margin(1e-6));
    }
}

TEST_CASE("ets forecasts a constant series at the constant") {
    auto m = fit_ets(constant_series(16, 4, 0.42));
    for (int f = 1; f <= 8; ++f) CHECK(m.forecast(f) == Catch::Approx(0.42).margin(1e-9));
}

TEST_CASE("ets reproduces a pure seasonal pattern") {
    auto s = trend_seasonal(20, 4, 1.0, 0.0, {0.3, -0.3, 0.1, -0.1});
    auto m = fit_ets(s);
    for (int f = 1; f <= 4; ++f) {
        const int t = 20 + f;
        const double truth = 1.0 + std::vector<double>{0.3, -0.3, 0.1, -0.1}[(t - 1) % 4];
        CHECK(m.forecast(f) == Catch::Approx(truth).margin(1e-6));
    }
    CHECK_THROWS_AS(fit_ets(SeasonalSeries{{1, 2, 3, 4, 5}, {}, 4}), fit_error);
}

TEST_CASE("arima on white noise selects the trivial model and forecasts the mean") {
    Rng rng(100000);
    SeasonalSeries s;
    s.season_length = 4;
    for (int t = 0; t < 48; ++t) s.values.push_back(0.5 + 0.2 * rng.normal());
    auto m = fit_arima_grid(s);
    const auto& o = m.selected_order();
    CHECK(o.p + o.q + o.P + o.Q + o.d + o.D == 0);
    const double sample_mean = mean(s.values);
    const double se = sample_sd(s.values) / std::sqrt(48.0);
    CHECK(std::abs(m.forecast(1) - sample_mean) < 2.0 * se);
}

TEST_CASE("arima selects d=1 for random walks in most replications") {
    int chose_d1 = 0;
    const int reps = 100;
    for (int rep = 0; rep < reps; ++rep) {
        Rng rng(9000 + rep);
        SeasonalSeries s;
        s.season_length = 4;
        double level = 0.0;
        for (int t = 0; t < 150; ++t) {
            level += rng.normal();
            s.values.push_back(level);
        }
        auto m = fit_arima_grid(s);
        if (m.selected_order().d == 1) ++chose_d1;
    }
    CHECK(chose_d1 >= 80);
}

TEST_CASE("arima estimates an AR(1) coefficient") {
    Rng rng(5156);
    SeasonalSeries s;
    s.season_length = 4;
    double prev = 0.0;
    for (int t = 0; t < 100; ++t) {
        prev = 0.8 * prev + rng.normal();
        s.values.push_back(prev);
    }
    auto m = fit_arima_grid(s);
    REQUIRE(m.selected_order().p >= 1);
    CHECK(m.ar_coefficients()[0] == Catch::Approx(0.8).margin(0.15));
}

TEST_CASE("aicc is reproducible from stored residuals and parameter counts") {
    auto s = trend_seasonal(24, 4, 1.0, 0.1, {0.0, 0.2, -0.1, -0.1}, 0.05, 11);
    auto tslr = fit_tslr(s);
    CHECK(tslr.aicc() == Catch::Approx(gaussian_aicc(tslr.residuals(), tslr.param_count())));
    auto ets = fit_ets(s);
    CHECK(ets.aicc() == Catch::Approx(gaussian_aicc(ets.residuals(), ets.param_count())));
    auto arima = fit_arima_grid(s);
    CHECK(arima.aicc() == Catch::Approx(gaussian_aicc(arima.residuals(), arima.param_count())));
}

TEST_CASE("combination of identical forecasts equals them; drop rule works") {
    auto s = constant_series(20, 4, 1.5);
    auto fc = combine_forecasts(s, 4);
    REQUIRE(fc.models_used.size() == 3); // every family fits a constant series
    for (double p : fc.point) CHECK(p == Catch::Approx(1.5).margin(1e-9));

    // Short series: ARIMA needs 2 tau + 4, so it drops out at length 10.
    SeasonalSeries short_s = constant_series(10, 4, 2.0);
    auto fc2 = combine_forecasts(short_s, 4);
    CHECK(fc2.models_used.size() == 2);
    REQUIRE(fc2.families_failed.size() == 1);
    CHECK(fc2.families_failed[0].substr(0, 5) == "arima");
    for (double p : fc2.point) CHECK(p == Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("combined forecast on a noiseless series is near exact") {
    auto s = trend_seasonal(24, 4, 2.0, 0.1, {0.05, -0.02, -0.04, 0.01});
    auto fc = combine_forecasts(s, 6);
    for (int f = 1; f <= 6; ++f) {
        const int t = 24 + f;
        const double truth =
            2.0 + 0.1 * t + std::vector<double>{0.05, -0.02, -0.04, 0.01}[(t - 1) % 4];
        CHECK(std::abs(fc.point[f - 1] - truth) < 1e-2);
    }
}

TEST_CASE("interval invariants: nesting, point containment, monotone width") {
    auto s = trend_seasonal(28, 4, 1.0, 0.05, {0.1, -0.1, 0.05, -0.05}, 0.08, 77);
    auto fc = combine_forecasts(s, 8);
    double prev_width = 0.0;
    for (int f = 0; f < 8; ++f) {
        CHECK(fc.lower80[f] >= fc.lower95[f]);
        CHECK(fc.upper80[f] <= fc.upper95[f]);
        CHECK(fc.point[f] >= fc.lower80[f]);
        CHECK(fc.point[f] <= fc.upper80[f]);
        const double width = fc.upper95[f] - fc.lower95[f];
        CHECK(width >= prev_width - 1e-12);
        prev_width = width;
    }
}

TEST_CASE("counterfactual gap flags boundary crossings") {
    auto s = trend_seasonal(24, 4, 1.0, 0.0, {0.0, 0.0, 0.0, 0.0}, 0.1, 5);
    auto fc = combine_forecasts(s, 3);

    auto same = counterfactual_gap({fc.point[0], fc.point[1], fc.point[2]}, fc);
    for (const auto& g : same) {
        CHECK(g.gap == 0.0);
        CHECK_FALSE(g.outside80);
        CHECK_FALSE(g.outside95);
    }

    auto outside = counterfactual_gap({fc.upper95[0] + 1e-9}, fc);
    CHECK(outside[0].outside95);
    CHECK(outside[0].outside80);

    auto inside_edge = counterfactual_gap({fc.upper95[0]}, fc);
    CHECK_FALSE(inside_edge[0].outside95);

    CHECK_THROWS_AS(counterfactual_gap({1.0, 2.0, 3.0, 4.0}, fc), argument_error);
    CHECK_THROWS_AS(counterfactual_gap({}, fc), argument_error);
}
