#pragma once

#include "derauth/cell_monitor.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace derauth {

struct ReliabilityResult {
    long attempts = 0;
    long successes = 0;
    long out_of_window = 0;   // measurements outside the window, not counted as attempts
    double reliability_pct = 0.0;
};

struct SweepConfig {
    MonitorConfig monitor;
    int n_cells = 100;
    std::int64_t n_measurements = 10000;
    std::vector<double> taus_mah{1.0};
    std::vector<std::int64_t> intervals{1, 10, 100, 1000};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    // Also evaluate the frozen (bootstrap-only) model for every tau.
    bool include_frozen = true;
    // Recharge cycles the pack ages through before a frozen-model run, so the
    // bootstrap model is evaluated against a much older cell.
    int frozen_age_cycles = 19;
};

// Runs the measurement loop for one (tau, interval, seed) point: every cell is
// self-authenticated once per measurement cycle against its model as it stood
// before that cycle's measurement was folded in.
ReliabilityResult run_reliability(std::uint64_t seed, double tau_mah, std::int64_t update_interval,
                                  bool refresh_enabled, const SweepConfig& config);

// Evaluates several tolerances on one run; the measurement stream is shared, so
// results are comparable point by point.
std::vector<ReliabilityResult> run_reliability_taus(std::uint64_t seed, std::span<const double> taus_mah,
                                                    std::int64_t update_interval, bool refresh_enabled,
                                                    const SweepConfig& config);

struct SweepPoint {
    double tau_mah = 0.0;
    std::int64_t interval = 0;   // 0 means frozen model
    double mean_reliability_pct = 0.0;
    std::vector<double> per_seed_pct;
};

std::vector<SweepPoint> run_reliability_sweep(const SweepConfig& config);
void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points);

} // namespace derauth
