#pragma once

// Discrete tap-changer control: the single-step deadband rule and the outer
// loop that alternates power-flow solves with tap moves.

#include <optional>
#include <vector>

#include "tdgen/netmodel.hpp"
#include "tdgen/powerflow.hpp"

namespace tdgen {

/// One control step: +1 raises the ratio (lowers the controlled voltage) when
/// the voltage is above the band, -1 when below, 0 inside the band or when
/// the tap is already at the limit it would move towards.
inline int tap_update(const OltcTransformer& t, double v_controlled) {
    if (v_controlled > t.band_high() && t.tap < t.tap_max) return +1;
    if (v_controlled < t.band_low() && t.tap > t.tap_min) return -1;
    return 0;
}

struct RegulationReport {
    int rounds = 0;  // tap-update rounds applied
    int solves = 0;
    std::vector<int> final_taps;
    std::vector<bool> frozen;     // stopped after reversing direction
    std::vector<bool> saturated;  // out of band with the tap at its limit
    std::vector<bool> in_band;
    std::vector<std::vector<int>> tap_history;  // taps used by each solve
    bool round_cap_hit = false;

    int tap_moves() const {
        int moves = 0;
        for (std::size_t r = 1; r < tap_history.size(); ++r)
            for (std::size_t k = 0; k < tap_history[r].size(); ++k)
                moves += std::abs(tap_history[r][k] - tap_history[r - 1][k]);
        return moves;
    }
};

struct RegulationResult {
    PowerFlowSolution solution;
    RegulationReport report;
};

/// Power flow diverged while regulating; carries the last converged state.
class RegulationError : public SolverError {
public:
    RegulationError(const std::string& what, std::optional<PowerFlowSolution> last, RegulationReport report)
        : SolverError(what), last_(std::move(last)), report_(std::move(report)) {}

    const std::optional<PowerFlowSolution>& last_converged() const { return last_; }
    const RegulationReport& report() const { return report_; }

private:
    std::optional<PowerFlowSolution> last_;
    RegulationReport report_;
};

inline constexpr int kDefaultRegulationRounds = 30;

/// Alternates solve -> simultaneous single-step tap update on every OLTC ->
/// re-solve. Stops when no tap wants to move (in band, saturated or frozen)
/// or after `max_rounds` update rounds. A tap that would reverse its previous
/// move is frozen for the remaining rounds. Taps and the final operating
/// point are written back into `c`.
inline RegulationResult regulate(NetworkCase& c, SolverOptions opts = {}, int max_rounds = kDefaultRegulationRounds) {
    const auto n_oltc = c.oltcs.size();
    RegulationReport report;
    report.frozen.assign(n_oltc, false);
    std::vector<int> last_dir(n_oltc, 0);
    BusLookup lookup(c);

    auto taps_now = [&] {
        std::vector<int> taps;
        for (const auto& t : c.oltcs) taps.push_back(t.tap);
        return taps;
    };
    std::optional<PowerFlowSolution> last_good;
    auto run_solve = [&] {
        report.tap_history.push_back(taps_now());
        ++report.solves;
        auto sol = solve(c, opts);
        if (!sol.converged)
            throw RegulationError("power flow diverged during tap regulation (round " + std::to_string(report.rounds) +
                                      ")",
                                  last_good, report);
        apply_solution(c, sol);
        last_good = sol;
        opts.flat_start = false;
        return sol;
    };

    PowerFlowSolution sol = run_solve();
    while (true) {
        std::vector<int> delta(n_oltc, 0);
        bool any = false;
        for (std::size_t k = 0; k < n_oltc; ++k) {
            if (report.frozen[k]) continue;
            const auto& t = c.oltcs[k];
            int d = tap_update(t, sol.v_mag[lookup.at(t.controlled_bus)]);
            if (d != 0 && last_dir[k] == -d) {
                report.frozen[k] = true;
                d = 0;
            }
            delta[k] = d;
            any = any || d != 0;
        }
        if (!any) break;
        if (report.rounds >= max_rounds) {
            report.round_cap_hit = true;
            break;
        }
        for (std::size_t k = 0; k < n_oltc; ++k) {
            if (delta[k] == 0) continue;
            set_tap(c, k, c.oltcs[k].tap + delta[k]);
            last_dir[k] = delta[k];
        }
        ++report.rounds;
        sol = run_solve();
    }

    report.final_taps = taps_now();
    report.saturated.assign(n_oltc, false);
    report.in_band.assign(n_oltc, false);
    for (std::size_t k = 0; k < n_oltc; ++k) {
        const auto& t = c.oltcs[k];
        const double v = sol.v_mag[lookup.at(t.controlled_bus)];
        report.in_band[k] = v >= t.band_low() && v <= t.band_high();
        report.saturated[k] = (v > t.band_high() && t.tap == t.tap_max) || (v < t.band_low() && t.tap == t.tap_min);
    }
    return {std::move(sol), std::move(report)};
}

}  // namespace tdgen
