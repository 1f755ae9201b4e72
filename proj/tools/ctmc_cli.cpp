// Command-line front end: estimate continuous-time transition rates from
// labour-market panel data and run the downstream analyses (equilibrium,
// volatility decomposition, bootstrap inference, forecast counterfactuals).

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ctmc/ctmc.hpp"

namespace {

struct CommonOpts {
    std::string input;
    std::string format = "panel";
    std::vector<std::string> states;
    std::string period_order;
    std::string regularization = "truncate-absorb";
    int season_length = 4;
    std::string output_dir = "out";
    std::uint64_t seed = 12345;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_input = true) {
    auto* in = cmd->add_option("-i,--input", o.input, "Input file (panel or counts CSV)");
    if (needs_input) in->required();
    cmd->add_option("-f,--format", o.format, "Input format: panel | counts")
        ->check(CLI::IsMember({"panel", "counts"}));
    cmd->add_option("-s,--states", o.states, "State labels, in matrix order")->required();
    cmd->add_option("--period-order", o.period_order,
                    "File with one period id per line fixing the period order");
    cmd->add_option("-r,--regularization", o.regularization,
                    "truncate-absorb | redistribute-proportional | none");
    cmd->add_option("--season-length", o.season_length, "Periods per seasonal cycle (tau)");
    cmd->add_option("-o,--output-dir", o.output_dir, "Output directory");
    cmd->add_option("--seed", o.seed, "RNG seed");
}

ctmc::PipelineConfig to_config(const CommonOpts& o) {
    ctmc::PipelineConfig cfg;
    cfg.input_path = o.input;
    cfg.input_format = o.format;
    cfg.state_labels = o.states;
    cfg.period_order_path = o.period_order;
    cfg.regularization = ctmc::regularization_from_string(o.regularization);
    cfg.season_length = o.season_length;
    cfg.output_dir = o.output_dir;
    cfg.seed = o.seed;
    return cfg;
}

int finish(const ctmc::PipelineReport& report) {
    for (const auto& s : report.stages) {
        if (!s.attempted) continue;
        std::printf("%-14s %s%s%s\n", s.name.c_str(), s.ok ? "ok" : "FAILED",
                    s.message.empty() ? "" : ": ", s.message.c_str());
    }
    std::printf("outputs in %s\n", report.output_dir.c_str());
    return report.exit_code();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuous-time labour-market transition-rate toolkit"};
    app.require_subcommand(1);

    // ---- pipeline ----------------------------------------------------------
    std::string config_path, output_override;
    auto* pipeline = app.add_subcommand("pipeline", "Run every stage from a JSON config");
    pipeline->add_option("-c,--config", config_path, "JSON config file")->required();
    pipeline->add_option("-o,--output-dir", output_override, "Override the output directory");

    // ---- simulate ----------------------------------------------------------
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic panel from known rates");
    std::vector<std::string> sim_states;
    std::string sim_rates, sim_out = "panel.csv";
    std::size_t sim_n = 10000, sim_periods = 12;
    std::uint64_t sim_seed = 12345;
    simulate->add_option("-s,--states", sim_states, "State labels")->required();
    simulate->add_option("--rates-file", sim_rates,
                         "CSV of rates: from,to,rate or season,from,to,rate")->required();
    simulate->add_option("-n,--individuals", sim_n, "Number of individuals");
    simulate->add_option("-t,--periods", sim_periods, "Number of period boundaries");
    simulate->add_option("--seed", sim_seed, "RNG seed");
    simulate->add_option("-o,--output", sim_out, "Panel CSV to write");

    // ---- estimate ----------------------------------------------------------
    CommonOpts est_opts;
    auto* estimate = app.add_subcommand("estimate",
                                        "Estimate per-period P and Q plus fitted shares");
    add_common(estimate, est_opts);

    // ---- equilibrium -------------------------------------------------------
    auto* equilibrium = app.add_subcommand("equilibrium",
                                           "Equilibrium shares of a rate matrix");
    std::vector<std::string> eq_states;
    std::string eq_rates;
    equilibrium->add_option("-s,--states", eq_states, "State labels")->required();
    equilibrium->add_option("--rates-file", eq_rates, "CSV of rates: from,to,rate")->required();

    // ---- decompose -----------------------------------------------------------
    CommonOpts dec_opts;
    std::string dec_target, dec_mode = "one-step", dec_rule = "hp-trend";
    double dec_lambda = 1600.0;
    bool dec_all_pairs = false, dec_observed = false;
    auto* decompose = app.add_subcommand("decompose",
                                         "Volatility decomposition of one state's share");
    add_common(decompose, dec_opts);
    decompose->add_option("--target", dec_target, "Target state label")->required();
    decompose->add_option("--mode", dec_mode, "one-step | equilibrium")
        ->check(CLI::IsMember({"one-step", "equilibrium"}));
    decompose->add_option("--rule", dec_rule, "hp-trend | initial-value | sample-mean")
        ->check(CLI::IsMember({"hp-trend", "initial-value", "sample-mean"}));
    decompose->add_option("--hp-lambda", dec_lambda, "HP smoothing parameter");
    decompose->add_flag("--all-pairs", dec_all_pairs, "Vary all off-diagonals, not just "
                        "the target's flows");
    decompose->add_flag("--observed-target", dec_observed,
                        "Detrend the observed share instead of the fitted one");

    // ---- bootstrap -----------------------------------------------------------
    CommonOpts boot_opts;
    std::size_t boot_b = 1000;
    std::string boot_origin;
    auto* bootstrap = app.add_subcommand("bootstrap",
                                         "Bootstrap standard errors for annual Q and "
                                         "equilibrium shares");
    add_common(bootstrap, boot_opts);
    bootstrap->add_option("-B,--resamples", boot_b, "Number of bootstrap resamples");
    bootstrap->add_option("--origin", boot_origin,
                          "First comparison window end (default: none, last window only)");

    // ---- forecast ------------------------------------------------------------
    CommonOpts fc_opts;
    std::string fc_origin;
    int fc_horizon = 6;
    auto* forecast = app.add_subcommand("forecast",
                                        "Forecast-based counterfactual for rates and shares");
    add_common(forecast, fc_opts);
    forecast->add_option("--origin", fc_origin, "Forecast origin period (last pre-event "
                         "period)");
    forecast->add_option("--horizon", fc_horizon, "Forecast horizon in periods");

    CLI11_PARSE(app, argc, argv);

    try {
        if (pipeline->parsed()) {
            ctmc::PipelineConfig cfg = ctmc::load_config(config_path);
            if (!output_override.empty()) cfg.output_dir = output_override;
            return finish(ctmc::run_pipeline(cfg));
        }
        if (simulate->parsed()) {
            ctmc::StateSpace space(sim_states);
            auto schedule = ctmc::load_rate_schedule(sim_rates, space);
            ctmc::Matrix mean(space.size(), space.size());
            for (const auto& q : schedule) mean += q.entries();
            mean *= 1.0 / static_cast<double>(schedule.size());
            ctmc::GeneratorMatrix mean_q(space, std::move(mean));
            ctmc::SimulationSpec spec{std::move(schedule), sim_n, sim_periods,
                                      ctmc::equilibrium(mean_q).shares, sim_seed};
            ctmc::PanelDataset panel = ctmc::simulate_panel(spec);
            ctmc::emit_panel(panel, sim_out);
            std::printf("wrote %zu records to %s\n", panel.records().size(), sim_out.c_str());
            return 0;
        }
        if (equilibrium->parsed()) {
            ctmc::StateSpace space(eq_states);
            auto schedule = ctmc::load_rate_schedule(eq_rates, space);
            ctmc::GeneratorMatrix q =
                schedule.size() == 1 ? schedule.front() : ctmc::aggregate_seasonal(schedule);
            ctmc::EquilibriumResult eq = ctmc::equilibrium(q);
            std::printf("state,share\n");
            for (std::size_t i = 0; i < space.size(); ++i)
                std::printf("%s,%s\n", space.label(i).c_str(),
                            ctmc::format_number(eq.shares[i]).c_str());
            std::printf("spectral_gap,%s\n", ctmc::format_number(eq.spectral_gap).c_str());
            std::printf("half_life,%s\n", ctmc::format_number(eq.half_life).c_str());
            return 0;
        }

        ctmc::PipelineConfig cfg;
        if (estimate->parsed()) {
            cfg = to_config(est_opts);
            cfg.stages = {"load", "estimate", "fitted_shares", "annual", "equilibrium"};
        } else if (decompose->parsed()) {
            cfg = to_config(dec_opts);
            cfg.decomposition.target_state = dec_target;
            cfg.decomposition.mode = dec_mode == "one-step" ? ctmc::CounterfactualMode::OneStep
                                                            : ctmc::CounterfactualMode::Equilibrium;
            cfg.decomposition.rule.kind =
                dec_rule == "hp-trend"
                    ? ctmc::ReferenceRule::Kind::HPTrend
                    : (dec_rule == "initial-value" ? ctmc::ReferenceRule::Kind::InitialValue
                                                   : ctmc::ReferenceRule::Kind::SampleMean);
            cfg.decomposition.rule.hp_lambda = dec_lambda;
            cfg.decomposition.hp_lambda = dec_lambda;
            cfg.decomposition.all_pairs = dec_all_pairs;
            cfg.decomposition.use_observed_target = dec_observed;
            cfg.stages = {"load", "estimate", "decompose"};
        } else if (bootstrap->parsed()) {
            cfg = to_config(boot_opts);
            cfg.bootstrap_b = boot_b;
            cfg.forecast.origin = boot_origin;
            cfg.stages = {"load", "estimate", "annual", "equilibrium", "bootstrap"};
        } else if (forecast->parsed()) {
            cfg = to_config(fc_opts);
            cfg.forecast.origin = fc_origin;
            cfg.forecast.horizon = fc_horizon;
            cfg.stages = {"load", "estimate", "forecast"};
        }
        return finish(ctmc::run_pipeline(cfg));
    } catch (const ctmc::data_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
