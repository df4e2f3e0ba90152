#include "derauth/experiment.hpp"

#include "derauth/errors.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace derauth {

std::vector<ReliabilityResult> run_reliability_taus(std::uint64_t seed, std::span<const double> taus_mah,
                                                    std::int64_t update_interval, bool refresh_enabled,
                                                    const SweepConfig& config) {
    if (taus_mah.empty()) {
        throw ConfigError("sweep.taus: empty range");
    }
    std::vector<Tolerance> tols;
    for (double t : taus_mah) {
        tols.emplace_back(t);
    }

    MonitorConfig mc = config.monitor;
    mc.ducm.update_interval = update_interval;
    mc.refresh_enabled = refresh_enabled;
    CellMonitor monitor(seed, config.n_cells, mc);
    monitor.characterize();
    if (!refresh_enabled) {
        for (int c = 0; c < config.frozen_age_cycles; ++c) {
            monitor.pack().recharge_all();
        }
    }

    std::vector<ReliabilityResult> results(tols.size());
    for (std::int64_t t = 0; t < config.n_measurements; ++t) {
        for (const auto& m : monitor.sample()) {
            if (!in_discharge_window(m.voltage)) {
                for (auto& r : results) {
                    ++r.out_of_window;
                }
                continue;
            }
            const double residual = std::abs(monitor.ducm(m.cell_id).self_authenticate(m, tols.front()).residual_mah);
            for (std::size_t k = 0; k < tols.size(); ++k) {
                ++results[k].attempts;
                if (residual <= tols[k].tau_mah()) {
                    ++results[k].successes;
                }
            }
        }
        monitor.advance();
    }
    for (auto& r : results) {
        r.reliability_pct = reliability(r.successes, r.attempts);
    }
    return results;
}

ReliabilityResult run_reliability(std::uint64_t seed, double tau_mah, std::int64_t update_interval,
                                  bool refresh_enabled, const SweepConfig& config) {
    const double taus[] = {tau_mah};
    return run_reliability_taus(seed, taus, update_interval, refresh_enabled, config).front();
}

std::vector<SweepPoint> run_reliability_sweep(const SweepConfig& config) {
    if (config.seeds.empty() || config.taus_mah.empty() || config.intervals.empty()) {
        throw ConfigError("sweep: tau, interval and seed ranges must be non-empty");
    }
    std::vector<std::int64_t> intervals = config.intervals;
    if (config.include_frozen) {
        intervals.push_back(0);
    }

    std::vector<SweepPoint> points;
    for (std::int64_t interval : intervals) {
        std::vector<SweepPoint> row(config.taus_mah.size());
        for (std::size_t k = 0; k < row.size(); ++k) {
            row[k].tau_mah = config.taus_mah[k];
            row[k].interval = interval;
        }
        for (auto seed : config.seeds) {
            const bool frozen = interval == 0;
            const auto rs = run_reliability_taus(seed, config.taus_mah, frozen ? 1 : interval, !frozen, config);
            for (std::size_t k = 0; k < rs.size(); ++k) {
                row[k].per_seed_pct.push_back(rs[k].reliability_pct);
            }
        }
        for (auto& p : row) {
            p.mean_reliability_pct = std::accumulate(p.per_seed_pct.begin(), p.per_seed_pct.end(), 0.0) /
                                     static_cast<double>(p.per_seed_pct.size());
            points.push_back(std::move(p));
        }
    }
    return points;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points) {
    out << "tau_mAh,update_interval,mode,n_seeds,mean_reliability_pct\n";
    char buf[128];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%.3f,%lld,%s,%zu,%.4f\n", p.tau_mah, static_cast<long long>(p.interval),
                      p.interval == 0 ? "frozen" : "ducm", p.per_seed_pct.size(), p.mean_reliability_pct);
        out << buf;
    }
}

} // namespace derauth
