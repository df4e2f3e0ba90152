#pragma once

#include "derauth/battery_sim.hpp"
#include "derauth/ducm.hpp"
#include "derauth/fuel_gauge.hpp"

#include <cstdint>
#include <vector>

namespace derauth {

struct MonitorConfig {
    PackConfig pack;
    GaugeConfig gauge;
    DucmConfig ducm;
    double measurement_period_s = 2.0;
    // false freezes every DUCM at its bootstrap content.
    bool refresh_enabled = true;
};

// The outstation's BESS measuring process: owns the simulated pack, the fuel
// gauge and one DUCM per cell. It is the only writer of the simulation clock.
//
// One measurement cycle is: sample() -> (authenticate against models) -> advance().
class CellMonitor {
public:
    CellMonitor(std::uint64_t seed, int n_cells, const MonitorConfig& config);

    // Learning cycle for every cell followed by one characterization
    // discharge whose trace bootstraps the DUCMs. Leaves all cells recharged.
    void characterize();
    bool characterized() const { return !ducms_.empty(); }

    // Measures every cell at the current timestamp.
    const std::vector<Measurement>& sample();
    // Buffers the last sample, refreshes models when due, steps the pack by
    // one measurement period and recharges any cell that reached cutoff.
    void advance();
    // sample() + advance().
    void tick();

    const Bess& pack() const { return bess_; }
    Bess& pack() { return bess_; }
    const FuelGauge& gauge() const { return gauge_; }
    const Ducm& ducm(int cell_id) const;
    const std::vector<Ducm>& ducms() const { return ducms_; }
    std::int64_t now() const { return now_; }
    const MonitorConfig& config() const { return config_; }
    void set_refresh_enabled(bool on) { config_.refresh_enabled = on; }

    Measurement measure(int cell_id) const;

private:
    void refresh_due_models();

    MonitorConfig config_;
    Bess bess_;
    FuelGauge gauge_;
    std::vector<Ducm> ducms_;
    std::vector<int> all_ids_;
    std::vector<Measurement> current_;
    bool sampled_ = false;
    std::vector<std::vector<Measurement>> pending_;
    std::int64_t now_ = 0;
};

} // namespace derauth
