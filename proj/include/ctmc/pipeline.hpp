#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctmc/core.hpp"
#include "ctmc/decomposition.hpp"
#include "ctmc/dynamics.hpp"
#include "ctmc/errors.hpp"
#include "ctmc/estimation.hpp"
#include "ctmc/forecasting.hpp"
#include "ctmc/inference.hpp"
#include "ctmc/io.hpp"

namespace ctmc {

struct DecompositionSettings {
    std::string target_state;
    ReferenceRule rule{};
    CounterfactualMode mode = CounterfactualMode::OneStep;
    double hp_lambda = 1600.0;
    bool all_pairs = false;
    bool use_observed_target = false;
};

struct ForecastSettings {
    std::string origin; // empty: last period (nothing left to compare against)
    int horizon = 6;
};

struct PipelineConfig {
    std::string input_path;
    std::string input_format = "panel"; // "panel" or "counts"
    std::vector<std::string> state_labels;
    std::string period_order_path;
    RegularizationMethod regularization = RegularizationMethod::TruncateAbsorb;
    int season_length = 4;
    std::size_t bootstrap_b = 0; // 0 disables the bootstrap stage
    std::uint64_t seed = 12345;
    DecompositionSettings decomposition;
    ForecastSettings forecast;
    std::string output_dir = "out";
    std::vector<std::string> stages; // empty: run everything applicable
};

struct StageReport {
    std::string name;
    bool attempted = false;
    bool ok = false;
    std::string message;
    std::vector<std::string> files;
};

struct PipelineReport {
    std::vector<StageReport> stages;
    std::string output_dir;
    /// 0: all attempted stages succeeded; 1: some stage failed.
    int exit_code() const {
        for (const auto& s : stages)
            if (s.attempted && !s.ok) return 1;
        return 0;
    }
};

// ---------------------------------------------------------------------------
// Config loading

inline PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("load_config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("load_config: '" + path + "' is not valid JSON: " + e.what());
    }

    PipelineConfig cfg;
    try {
        cfg.input_path = j.at("input").get<std::string>();
        cfg.state_labels = j.at("states").get<std::vector<std::string>>();
        cfg.input_format = j.value("format", cfg.input_format);
        cfg.period_order_path = j.value("period_order", std::string{});
        if (j.contains("regularization"))
            cfg.regularization = regularization_from_string(j["regularization"]);
        cfg.season_length = j.value("season_length", cfg.season_length);
        cfg.bootstrap_b = j.value("bootstrap_b", cfg.bootstrap_b);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
        if (j.contains("stages")) cfg.stages = j["stages"].get<std::vector<std::string>>();
        if (j.contains("decomposition")) {
            const auto& d = j["decomposition"];
            cfg.decomposition.target_state = d.value("target", std::string{});
            cfg.decomposition.hp_lambda = d.value("hp_lambda", cfg.decomposition.hp_lambda);
            cfg.decomposition.all_pairs = d.value("all_pairs", false);
            cfg.decomposition.use_observed_target = d.value("use_observed_target", false);
            const std::string mode = d.value("mode", std::string("one-step"));
            if (mode == "one-step")
                cfg.decomposition.mode = CounterfactualMode::OneStep;
            else if (mode == "equilibrium")
                cfg.decomposition.mode = CounterfactualMode::Equilibrium;
            else
                throw data_error("load_config: unknown counterfactual mode '" + mode + "'");
            const std::string rule = d.value("rule", std::string("hp-trend"));
            if (rule == "hp-trend")
                cfg.decomposition.rule.kind = ReferenceRule::Kind::HPTrend;
            else if (rule == "initial-value")
                cfg.decomposition.rule.kind = ReferenceRule::Kind::InitialValue;
            else if (rule == "sample-mean")
                cfg.decomposition.rule.kind = ReferenceRule::Kind::SampleMean;
            else
                throw data_error("load_config: unknown reference rule '" + rule + "'");
            cfg.decomposition.rule.hp_lambda = d.value("rule_hp_lambda",
                                                       cfg.decomposition.hp_lambda);
        }
        if (j.contains("forecast")) {
            cfg.forecast.origin = j["forecast"].value("origin", std::string{});
            cfg.forecast.horizon = j["forecast"].value("horizon", cfg.forecast.horizon);
        }
    } catch (const nlohmann::json::exception& e) {
        throw data_error("load_config: bad config '" + path + "': " + e.what());
    }
    if (cfg.season_length < 1) throw data_error("load_config: season_length must be >= 1");
    if (cfg.forecast.horizon < 1) throw data_error("load_config: horizon must be >= 1");
    return cfg;
}

// ---------------------------------------------------------------------------
// Pipeline internals

namespace detail {

struct PipelineData {
    StateSpace space;
    std::vector<std::string> periods;          // all period boundaries, in order
    std::vector<TransitionCounts> pair_counts; // one per consecutive pair
    std::vector<ShareVector> observed_shares;  // one per period boundary
};

/// Observed shares for counts input: occupancy at a period is the row-total
/// mass of the pair starting there; the final period uses the column totals
/// of the last pair.
inline std::vector<ShareVector> shares_from_counts(const StateSpace& space,
                                                   const std::vector<TransitionCounts>& counts) {
    std::vector<ShareVector> out;
    const std::size_t k = space.size();
    for (std::size_t t = 0; t <= counts.size(); ++t) {
        std::vector<double> mass(k, 0.0);
        double total = 0.0;
        const TransitionCounts& c = t < counts.size() ? counts[t] : counts.back();
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const auto v = static_cast<double>(c.at(i, j));
                mass[t < counts.size() ? i : j] += v;
                total += v;
            }
        if (total <= 0.0) throw data_error("pipeline: a period pair has no observations");
        for (double& m : mass) m /= total;
        out.emplace_back(space, std::move(mass));
    }
    return out;
}

inline PipelineData load_pipeline_data(const PipelineConfig& cfg) {
    StateSpace space(cfg.state_labels);
    std::vector<std::string> order;
    if (!cfg.period_order_path.empty()) order = load_period_order(cfg.period_order_path);

    PipelineData data{space, {}, {}, {}};
    if (cfg.input_format == "panel") {
        PanelDataset panel = load_panel(cfg.input_path, space, order);
        data.periods = panel.periods();
        if (data.periods.size() < 2)
            throw data_error("pipeline: need at least 2 periods");
        for (std::size_t t = 0; t + 1 < data.periods.size(); ++t)
            data.pair_counts.push_back(
                count_transitions(panel, data.periods[t], data.periods[t + 1]));
        for (std::size_t t = 0; t < data.periods.size(); ++t)
            data.observed_shares.push_back(panel.observed_shares(static_cast<std::uint32_t>(t)));
    } else if (cfg.input_format == "counts") {
        data.pair_counts = load_counts(cfg.input_path, space, order);
        if (data.pair_counts.empty()) throw data_error("pipeline: no counts loaded");
        for (const auto& c : data.pair_counts) data.periods.push_back(c.period());
        data.periods.push_back(data.periods.back() + "+1");
        data.observed_shares = shares_from_counts(space, data.pair_counts);
    } else {
        throw data_error("pipeline: unknown input format '" + cfg.input_format + "'");
    }
    return data;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0 || sbb <= 0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

} // namespace detail

// ---------------------------------------------------------------------------
// run_pipeline

/// Runs every configured stage, isolating failures per stage, and writes the
/// report bundle plus a machine-readable summary manifest. Deterministic for
/// a fixed config (seeds included); the CTMC_OUTPUT_DIR environment variable
/// overrides the configured output directory.
inline PipelineReport run_pipeline(const PipelineConfig& cfg) {
    namespace fs = std::filesystem;
    PipelineConfig config = cfg;
    if (const char* env = std::getenv("CTMC_OUTPUT_DIR"); env && *env)
        config.output_dir = env;
    fs::create_directories(config.output_dir);
    const auto path_of = [&](const std::string& name) {
        return (fs::path(config.output_dir) / name).string();
    };
    const auto wants = [&](const std::string& stage) {
        return config.stages.empty() ||
               std::find(config.stages.begin(), config.stages.end(), stage) !=
                   config.stages.end();
    };

    PipelineReport report;
    report.output_dir = config.output_dir;
    nlohmann::ordered_json summary;
    summary["input"] = config.input_path;
    summary["format"] = config.input_format;
    summary["states"] = config.state_labels;
    summary["regularization"] = to_string(config.regularization);
    summary["season_length"] = config.season_length;
    summary["seed"] = config.seed;

    auto run_stage = [&](const std::string& name, auto&& body) {
        StageReport sr;
        sr.name = name;
        if (!wants(name)) {
            report.stages.push_back(std::move(sr));
            return;
        }
        sr.attempted = true;
        try {
            body(sr);
            sr.ok = true;
        } catch (const std::exception& e) {
            sr.ok = false;
            sr.message = e.what();
        }
        report.stages.push_back(std::move(sr));
    };

    // ---- load ------------------------------------------------------------
    std::optional<detail::PipelineData> data;
    run_stage("load", [&](StageReport& sr) {
        data = detail::load_pipeline_data(config);
        sr.message = std::to_string(data->periods.size()) + " periods, " +
                     std::to_string(data->pair_counts.size()) + " pairs";
    });

    const StateSpace* space = data ? &data->space : nullptr;
    const std::size_t k = space ? space->size() : 0;

    // ---- estimate ----------------------------------------------------------
    std::vector<std::optional<GeneratorEstimate>> estimates;
    std::vector<std::string> estimate_errors;
    run_stage("estimate", [&](StageReport& sr) {
        if (!data) throw data_error("load stage unavailable");
        Table rates{{"from_period", "to_period", "from_state", "to_state", "rate", "raw_rate"},
                    {}};
        Table probs{{"from_period", "to_period", "from_state", "to_state", "probability"}, {}};
        Table diag{{"from_period", "to_period", "valid", "series_converged", "terms",
                    "negative_mass_removed", "message"},
                   {}};
        estimates.resize(data->pair_counts.size());
        estimate_errors.resize(data->pair_counts.size());
        for (std::size_t t = 0; t < data->pair_counts.size(); ++t) {
            const std::string& from = data->periods[t];
            const std::string& to = data->periods[t + 1];
            try {
                GeneratorEstimate est =
                    estimate_generator(data->pair_counts[t], config.regularization);
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        rates.add_row({from, to, space->label(i), space->label(j),
                                       format_number(est.Q(i, j)),
                                       format_number(est.raw_q_tilde(i, j))});
                        probs.add_row({from, to, space->label(i), space->label(j),
                                       format_number(est.P(i, j))});
                    }
                diag.add_row({from, to, "1", est.series_converged ? "1" : "0",
                              std::to_string(est.series_terms),
                              format_number(est.negative_mass_removed), ""});
                estimates[t] = std::move(est);
            } catch (const error& e) {
                estimate_errors[t] = e.what();
                diag.add_row({from, to, "0", "0", "0", "NA", e.what()});
            }
        }
        emit_table(rates, path_of("transition_rates.csv"));
        emit_table(probs, path_of("transition_probabilities.csv"));
        emit_table(diag, path_of("estimate_diagnostics.csv"));
        sr.files = {"transition_rates.csv", "transition_probabilities.csv",
                    "estimate_diagnostics.csv"};
        std::size_t valid = 0;
        for (const auto& e : estimates)
            if (e) ++valid;
        if (valid == 0) throw data_error("no period pair could be estimated");
        sr.message = std::to_string(valid) + "/" + std::to_string(estimates.size()) +
                     " pairs estimated";
    });

    // ---- fitted shares -----------------------------------------------------
    run_stage("fitted_shares", [&](StageReport& sr) {
        if (!data || estimates.empty()) throw data_error("estimate stage unavailable");
        Table fitted{{"period", "state", "observed", "fitted"}, {}};
        std::vector<std::vector<double>> obs(k), fit(k);
        for (std::size_t t = 0; t < estimates.size(); ++t) {
            if (!estimates[t]) continue;
            ShareVector f = propagate(data->observed_shares[t], estimates[t]->Q, 1.0);
            for (std::size_t i = 0; i < k; ++i) {
                const double o = data->observed_shares[t + 1][i];
                fitted.add_row({data->periods[t + 1], space->label(i), format_number(o),
                                format_number(f[i])});
                obs[i].push_back(o);
                fit[i].push_back(f[i]);
            }
        }
        Table corr{{"state", "correlation", "n"}, {}};
        summary["fit_correlations"] = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < k; ++i) {
            const double c = detail::pearson(obs[i], fit[i]);
            corr.add_row({space->label(i), format_number(c), std::to_string(obs[i].size())});
            summary["fit_correlations"][space->label(i)] = c;
        }
        emit_table(fitted, path_of("fitted_shares.csv"));
        emit_table(corr, path_of("fit_correlations.csv"));
        sr.files = {"fitted_shares.csv", "fit_correlations.csv"};
    });

    // ---- annual aggregation ------------------------------------------------
    std::map<std::string, GeneratorMatrix> annual; // end period -> annual Q
    run_stage("annual", [&](StageReport& sr) {
        if (!data || estimates.empty()) throw data_error("estimate stage unavailable");
        const std::size_t tau = static_cast<std::size_t>(config.season_length);
        Table table{{"end_period", "from_state", "to_state", "rate"}, {}};
        double worst_commutator = 0.0;
        for (std::size_t t = 0; t + 1 < data->periods.size(); ++t) {
            if (t + 1 < tau) continue;
            std::vector<GeneratorMatrix> window;
            bool complete = true;
            for (std::size_t s = t + 1 - tau; s <= t; ++s) {
                if (!estimates[s]) {
                    complete = false;
                    break;
                }
                window.push_back(estimates[s]->Q);
            }
            if (!complete) continue;
            GeneratorMatrix qa = aggregate_seasonal(window);
            worst_commutator = std::max(worst_commutator, max_commutator_norm(window));
            const std::string& end = data->periods[t + 1];
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j)
                    table.add_row({end, space->label(i), space->label(j),
                                   format_number(qa(i, j))});
            annual.emplace(end, std::move(qa));
        }
        if (annual.empty())
            throw data_error("no complete window of " + std::to_string(tau) + " pairs");
        emit_table(table, path_of("annual_rates.csv"));
        sr.files = {"annual_rates.csv"};
        summary["annual_max_commutator_norm"] = worst_commutator;
        sr.message = std::to_string(annual.size()) + " windows";
    });

    // ---- equilibrium ---------------------------------------------------------
    run_stage("equilibrium", [&](StageReport& sr) {
        if (annual.empty()) throw data_error("annual stage unavailable");
        Table shares{{"end_period", "state", "share"}, {}};
        Table diag{{"end_period", "spectral_gap", "half_life"}, {}};
        std::size_t failures = 0;
        for (const auto& [end, qa] : annual) {
            try {
                EquilibriumResult eq = equilibrium(qa);
                for (std::size_t i = 0; i < k; ++i)
                    shares.add_row({end, space->label(i), format_number(eq.shares[i])});
                diag.add_row({end, format_number(eq.spectral_gap),
                              format_number(eq.half_life)});
            } catch (const error&) {
                ++failures;
                for (std::size_t i = 0; i < k; ++i)
                    shares.add_row({end, space->label(i), "NA"});
                diag.add_row({end, "NA", "NA"});
            }
        }
        emit_table(shares, path_of("equilibrium_shares.csv"));
        emit_table(diag, path_of("equilibrium_diagnostics.csv"));
        sr.files = {"equilibrium_shares.csv", "equilibrium_diagnostics.csv"};
        if (failures) sr.message = std::to_string(failures) + " windows had no equilibrium";
    });

    // ---- bootstrap -------------------------------------------------------------
    run_stage("bootstrap", [&](StageReport& sr) {
        if (config.bootstrap_b == 0) {
            sr.message = "disabled (B = 0)";
            return;
        }
        if (!data || annual.empty()) throw data_error("annual stage unavailable");
        const std::size_t tau = static_cast<std::size_t>(config.season_length);
        const std::size_t B = config.bootstrap_b;

        // Bootstrap the annual Q at up to two windows: the forecast origin
        // and the final period, which is the pre/post comparison layout.
        std::vector<std::string> window_ends;
        if (!config.forecast.origin.empty() && annual.count(config.forecast.origin))
            window_ends.push_back(config.forecast.origin);
        const std::string last_end = annual.rbegin()->first;
        if (window_ends.empty() || window_ends.front() != last_end)
            window_ends.push_back(last_end);

        // Joint draws: each bootstrap replicate resamples every pair in the
        // window and sums the re-estimated generators.
        struct WindowBoot {
            std::string end;
            Matrix point;
            std::vector<Matrix> draws;          // annual Q per replicate
            std::vector<std::vector<double>> eq; // equilibrium shares per replicate
            std::vector<double> eq_point;
        };
        std::vector<WindowBoot> boots;
        const Rng root(config.seed);
        for (const auto& end : window_ends) {
            std::size_t t_end = 0;
            for (std::size_t t = 0; t + 1 < data->periods.size(); ++t)
                if (data->periods[t + 1] == end) t_end = t;
            WindowBoot wb;
            wb.end = end;
            wb.point = annual.at(end).entries();
            try {
                wb.eq_point = equilibrium(annual.at(end)).shares.shares();
            } catch (const error&) {
                wb.eq_point.assign(k, std::numeric_limits<double>::quiet_NaN());
            }
            for (std::size_t b = 0; b < B; ++b) {
                Matrix qa(k, k);
                bool ok = true;
                for (std::size_t s = t_end + 1 - tau; s <= t_end; ++s) {
                    Rng rng = root.split(b * 131071 + s);
                    const TransitionCounts& base = data->pair_counts[s];
                    TransitionCounts res =
                        ctmc::detail::resample_counts(base, base.total(), rng);
                    bool empty_row = false;
                    for (std::size_t i = 0; i < k; ++i)
                        if (res.row_total(i) == 0) empty_row = true;
                    if (empty_row) {
                        ok = false;
                        break;
                    }
                    qa += estimate_generator(res, config.regularization).Q.entries();
                }
                if (!ok) continue;
                try {
                    GeneratorMatrix g(*space, qa);
                    wb.eq.push_back(equilibrium(g).shares.shares());
                    wb.draws.push_back(std::move(qa));
                } catch (const error&) {
                }
            }
            if (wb.draws.empty())
                throw data_error("bootstrap produced no valid draws for window " + end);
            boots.push_back(std::move(wb));
        }

        Table rate_se{{"end_period", "from_state", "to_state", "rate", "se"}, {}};
        Table eq_se{{"end_period", "state", "share", "se"}, {}};
        for (const auto& wb : boots) {
            const auto nB = static_cast<double>(wb.draws.size());
            Matrix mean(k, k);
            for (const auto& d : wb.draws) mean += d;
            mean *= 1.0 / nB;
            Matrix var(k, k);
            for (const auto& d : wb.draws)
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        const double dd = d(i, j) - mean(i, j);
                        var(i, j) += dd * dd;
                    }
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j)
                    rate_se.add_row({wb.end, space->label(i), space->label(j),
                                     format_number(wb.point(i, j)),
                                     format_number(std::sqrt(var(i, j) / nB))});
            std::vector<double> emean(k, 0.0), evar(k, 0.0);
            for (const auto& e : wb.eq)
                for (std::size_t i = 0; i < k; ++i) emean[i] += e[i];
            for (double& m : emean) m /= static_cast<double>(wb.eq.size());
            for (const auto& e : wb.eq)
                for (std::size_t i = 0; i < k; ++i) {
                    const double dd = e[i] - emean[i];
                    evar[i] += dd * dd;
                }
            for (std::size_t i = 0; i < k; ++i)
                eq_se.add_row({wb.end, space->label(i), format_number(wb.eq_point[i]),
                               format_number(std::sqrt(evar[i] / wb.eq.size()))});
        }
        emit_table(rate_se, path_of("bootstrap_rates_se.csv"));
        emit_table(eq_se, path_of("bootstrap_equilibrium_se.csv"));
        sr.files = {"bootstrap_rates_se.csv", "bootstrap_equilibrium_se.csv"};

        // Pairwise tests when two windows are available.
        if (boots.size() == 2) {
            const auto n_common = std::min(boots[0].draws.size(), boots[1].draws.size());
            const auto n_eq = std::min(boots[0].eq.size(), boots[1].eq.size());
            Table tests{{"kind", "from_state", "to_state", "estimate_a", "estimate_b",
                         "p_value"},
                        {}};
            std::vector<double> da(n_common), db(n_common);
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j) {
                    for (std::size_t b = 0; b < n_common; ++b) {
                        da[b] = boots[0].draws[b](i, j);
                        db[b] = boots[1].draws[b](i, j);
                    }
                    PairwiseTest t = pairwise_difference_test(da, db, boots[0].point(i, j),
                                                              boots[1].point(i, j));
                    tests.add_row({"rate", space->label(i), space->label(j),
                                   format_number(boots[0].point(i, j)),
                                   format_number(boots[1].point(i, j)),
                                   format_number(t.p_value)});
                }
            std::vector<double> ea(n_eq), eb(n_eq);
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t b = 0; b < n_eq; ++b) {
                    ea[b] = boots[0].eq[b][i];
                    eb[b] = boots[1].eq[b][i];
                }
                PairwiseTest t = pairwise_difference_test(ea, eb, boots[0].eq_point[i],
                                                          boots[1].eq_point[i]);
                tests.add_row({"share", space->label(i), "", format_number(boots[0].eq_point[i]),
                               format_number(boots[1].eq_point[i]), format_number(t.p_value)});
            }
            emit_table(tests, path_of("pairwise_tests.csv"));
            sr.files.push_back("pairwise_tests.csv");
        }
        sr.message = std::to_string(boots.size()) + " windows, B = " + std::to_string(B);
    });

    // ---- volatility decomposition ------------------------------------------
    run_stage("decompose", [&](StageReport& sr) {
        if (config.decomposition.target_state.empty()) {
            sr.message = "disabled (no target state)";
            return;
        }
        if (!data || estimates.empty()) throw data_error("estimate stage unavailable");
        std::vector<GeneratorMatrix> q_series;
        std::vector<ShareVector> shares;
        for (std::size_t t = 0; t < estimates.size(); ++t) {
            if (!estimates[t]) continue;
            q_series.push_back(estimates[t]->Q);
            shares.push_back(data->observed_shares[t]);
        }
        shares.push_back(data->observed_shares.back());

        ContributionTable table = decompose_volatility(
            q_series, shares, config.decomposition.target_state, config.decomposition.rule,
            config.decomposition.mode, config.decomposition.hp_lambda,
            config.decomposition.all_pairs, config.decomposition.use_observed_target);

        Table out{{"from_state", "to_state", "beta", "periods_used"}, {}};
        for (const auto& e : table.entries)
            out.add_row({e.from_state, e.to_state, format_number(e.beta),
                         std::to_string(e.periods_used)});
        emit_table(out, path_of("volatility_decomposition.csv"));
        sr.files = {"volatility_decomposition.csv"};
        summary["decomposition_beta_sum"] = table.beta_sum;
        summary["decomposition_mode"] = to_string(table.mode);
        sr.message = "beta sum = " + format_number(table.beta_sum);
    });

    // ---- forecast counterfactual ---------------------------------------------
    run_stage("forecast", [&](StageReport& sr) {
        if (!data || estimates.empty()) throw data_error("estimate stage unavailable");
        const std::string origin =
            config.forecast.origin.empty() ? data->periods.back() : config.forecast.origin;
        std::size_t origin_idx = 0;
        bool found = false;
        for (std::size_t t = 0; t < data->periods.size(); ++t)
            if (data->periods[t] == origin) {
                origin_idx = t;
                found = true;
            }
        if (!found) throw data_error("forecast origin '" + origin + "' is not a period");
        summary["forecast_origin"] = origin;
        summary["forecast_horizon"] = config.forecast.horizon;
        const int horizon = config.forecast.horizon;

        const auto emit_series = [&](Table& table, const std::vector<std::string>& key,
                                     const std::vector<double>& training,
                                     const std::vector<double>& tail,
                                     const std::vector<std::string>& future_labels) {
            SeasonalSeries s{training, {}, config.season_length};
            ForecastResult fc = combine_forecasts(s, horizon);
            std::vector<GapEntry> gaps;
            if (!tail.empty())
                gaps = counterfactual_gap(
                    std::vector<double>(tail.begin(),
                                        tail.begin() + std::min<std::size_t>(tail.size(),
                                                                             horizon)),
                    fc);
            for (int f = 1; f <= horizon; ++f) {
                const bool seen = static_cast<std::size_t>(f) <= gaps.size();
                std::vector<std::string> row = key;
                for (const auto& cell : std::initializer_list<std::string>{
                         std::to_string(f),
                         static_cast<std::size_t>(f) <= future_labels.size()
                             ? future_labels[f - 1]
                             : "",
                         format_number(fc.point[f - 1]), format_number(fc.lower80[f - 1]),
                         format_number(fc.upper80[f - 1]), format_number(fc.lower95[f - 1]),
                         format_number(fc.upper95[f - 1]),
                         seen ? format_number(tail[f - 1]) : "NA",
                         seen ? format_number(gaps[f - 1].gap) : "NA",
                         seen ? (gaps[f - 1].outside80 ? "1" : "0") : "unobserved",
                         seen ? (gaps[f - 1].outside95 ? "1" : "0") : "unobserved"})
                    row.push_back(cell);
                table.add_row(std::move(row));
            }
        };

        std::vector<std::string> future_labels;
        for (std::size_t t = origin_idx + 1; t < data->periods.size(); ++t)
            future_labels.push_back(data->periods[t]);

        // Transition-rate series: one per off-diagonal, labeled by the pair's
        // end period; training ends at the origin.
        Table rates{{"from_state", "to_state", "horizon", "period", "point", "lower80",
                     "upper80", "lower95", "upper95", "observed", "gap", "outside80",
                     "outside95"},
                    {}};
        std::size_t skipped = 0;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                if (i == j) continue;
                std::vector<double> training, tail;
                bool usable = true;
                for (std::size_t t = 0; t < estimates.size(); ++t) {
                    const bool pre = t + 1 <= origin_idx;
                    if (!estimates[t]) {
                        if (pre) usable = false;
                        continue;
                    }
                    (pre ? training : tail).push_back(estimates[t]->Q(i, j));
                }
                if (!usable || training.size() <
                                   2 * static_cast<std::size_t>(config.season_length) + 2) {
                    ++skipped;
                    continue;
                }
                emit_series(rates, {space->label(i), space->label(j)}, training, tail,
                            future_labels);
            }
        emit_table(rates, path_of("forecast_rates.csv"));

        // Share series: one per state.
        Table shares{{"state", "horizon", "period", "point", "lower80", "upper80",
                      "lower95", "upper95", "observed", "gap", "outside80", "outside95"},
                     {}};
        for (std::size_t i = 0; i < k; ++i) {
            std::vector<double> training, tail;
            for (std::size_t t = 0; t < data->observed_shares.size(); ++t)
                (t <= origin_idx ? training : tail).push_back(data->observed_shares[t][i]);
            if (training.size() < 2 * static_cast<std::size_t>(config.season_length) + 2)
                continue;
            emit_series(shares, {space->label(i)}, training, tail, future_labels);
        }
        emit_table(shares, path_of("forecast_shares.csv"));
        sr.files = {"forecast_rates.csv", "forecast_shares.csv"};
        if (skipped) sr.message = std::to_string(skipped) + " rate series skipped";
    });

    // ---- manifest -------------------------------------------------------------
    nlohmann::ordered_json stages_json = nlohmann::ordered_json::array();
    for (const auto& s : report.stages) {
        nlohmann::ordered_json js;
        js["name"] = s.name;
        js["attempted"] = s.attempted;
        js["ok"] = s.ok;
        js["message"] = s.message;
        js["files"] = s.files;
        stages_json.push_back(js);
    }
    summary["stages"] = stages_json;
    summary["exit_code"] = report.exit_code();
    std::ofstream manifest(path_of("summary.json"), std::ios::binary);
    manifest << summary.dump(2) << '\n';

    return report;
}

} // namespace ctmc
