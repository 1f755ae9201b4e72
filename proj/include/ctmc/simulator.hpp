#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ctmc/core.hpp"
#include "ctmc/errors.hpp"
#include "ctmc/rng.hpp"

namespace ctmc {

/// A state change inside one simulated interval.
struct JumpEvent {
    double time;
    std::uint16_t from;
    std::uint16_t to;
};

/// Ground truth for synthetic panels: a Q schedule (cycled when seasonal),
/// cohort size, horizon, starting distribution and seed.
struct SimulationSpec {
    std::vector<GeneratorMatrix> q_schedule; // cycled with period q_schedule.size()
    std::size_t n_individuals = 0;
    std::size_t n_periods = 0;
    ShareVector initial_distribution;
    std::uint64_t seed = 0;
};

/// Aggregate counters exposing the time-aggregation phenomenon: jumps inside
/// periods always outnumber the state changes visible at period boundaries.
struct SimulationStats {
    std::uint64_t within_period_jumps = 0;
    std::uint64_t boundary_moves = 0;
};

/// Exact continuous-time simulation over one interval: holding time in state
/// i is exponential with rate -q_ii, the jump target is drawn with
/// probability q_ij / (-q_ii). A state with zero exit rate never leaves.
inline std::uint16_t sample_trajectory(const GeneratorMatrix& q, std::uint16_t state0,
                                       double duration, Rng& rng,
                                       std::vector<JumpEvent>* log = nullptr) {
    if (duration < 0.0) throw argument_error("sample_trajectory: duration must be >= 0");
    if (state0 >= q.size()) throw argument_error("sample_trajectory: state out of range");
    const std::size_t k = q.size();

    std::uint16_t state = state0;
    double t = 0.0;
    std::vector<double> weights(k);
    while (true) {
        const double exit_rate = -q(state, state);
        if (exit_rate <= 0.0) break;
        t += rng.exponential(exit_rate);
        if (t >= duration) break;
        for (std::size_t j = 0; j < k; ++j) weights[j] = j == state ? 0.0 : q(state, j);
        const auto next = static_cast<std::uint16_t>(rng.categorical(weights));
        if (log) log->push_back({t, state, next});
        state = next;
    }
    return state;
}

/// Simulates a panel observed only at period boundaries. Each individual gets
/// its own RNG stream derived from (seed, index), so results do not depend on
/// evaluation order and parallel drivers reproduce the serial output.
inline PanelDataset simulate_panel(const SimulationSpec& spec,
                                   SimulationStats* stats = nullptr) {
    if (spec.q_schedule.empty()) throw argument_error("simulate_panel: empty Q schedule");
    if (spec.n_individuals < 1 || spec.n_periods < 2)
        throw argument_error("simulate_panel: need >= 1 individual and >= 2 periods");
    const StateSpace& space = spec.q_schedule.front().space();
    for (const auto& q : spec.q_schedule)
        require_same_space(space, q.space(), "simulate_panel");
    require_same_space(space, spec.initial_distribution.space(), "simulate_panel");

    std::vector<std::string> periods(spec.n_periods);
    for (std::size_t p = 0; p < spec.n_periods; ++p) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "t%04zu", p); // zero-padded: sorts lexicographically
        periods[p] = buf;
    }

    const Rng root(spec.seed);
    std::vector<PanelRecord> records;
    records.reserve(spec.n_individuals * spec.n_periods);
    std::vector<JumpEvent> events;

    for (std::size_t ind = 0; ind < spec.n_individuals; ++ind) {
        Rng rng = root.split(ind);
        auto state = static_cast<std::uint16_t>(
            rng.categorical(spec.initial_distribution.shares()));
        const std::string id = "i" + std::to_string(ind);
        records.push_back({id, 0, state});
        for (std::size_t p = 0; p + 1 < spec.n_periods; ++p) {
            const GeneratorMatrix& q = spec.q_schedule[p % spec.q_schedule.size()];
            std::uint16_t next_state;
            if (stats) {
                events.clear();
                next_state = sample_trajectory(q, state, 1.0, rng, &events);
                stats->within_period_jumps += events.size();
                if (next_state != state) ++stats->boundary_moves;
            } else {
                next_state = sample_trajectory(q, state, 1.0, rng);
            }
            state = next_state;
            records.push_back({id, static_cast<std::uint32_t>(p + 1), state});
        }
    }
    return PanelDataset(space, std::move(periods), std::move(records));
}

} // namespace ctmc
