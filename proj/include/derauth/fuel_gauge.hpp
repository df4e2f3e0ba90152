#pragma once

#include "derauth/battery_sim.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace derauth {

inline constexpr double kGaugeVoltageFloor = 3.40;
inline constexpr double kGaugeVoltageCeil = 4.05;

struct Measurement {
    int cell_id = 0;
    double soc_percent = 0.0;
    double voltage = 0.0;
    std::int64_t timestamp = 0;   // measurement-cycle index
};

enum class GaugeNoiseModel {
    // Per-cell calibration bias fixed after learning plus small per-sample jitter.
    Systematic,
    // Independent uniform draw over the full error bound for every sample.
    Uniform,
};

struct GaugeConfig {
    double max_error_pct = 1.0;          // error bound for both SoC and voltage
    bool soc_error_relative = false;     // false: bound in percentage points
    GaugeNoiseModel noise_model = GaugeNoiseModel::Systematic;
    double bias_fraction = 0.5;          // share of the bound taken by the per-cell bias
    double soc_jitter_pp = 0.016;
    double voltage_jitter_mv = 0.08;
    double noise_scale = 1.0;            // 0 disables noise entirely
    double soc_resolution_pp = 0.001;
    double voltage_resolution_mv = 0.01;
    double learn_step_s = 2.0;

    void validate() const;
};

// Stand-in for the hardware fuel gauge. Measurements are a pure function of
// (noise seed, timestamp, cell id, true cell state).
class FuelGauge {
public:
    FuelGauge(std::uint64_t noise_seed, int n_cells, const GaugeConfig& config = {});

    // Fully discharges the cell, learns its impedance and capacity, then
    // recharges it so it is ready for service.
    void learn_cycle(Bess& bess, int cell_id);
    void learn_all(Bess& bess);

    bool learned(int cell_id) const;
    double learned_capacity_mah(int cell_id) const;

    std::vector<Measurement> measure(const Bess& bess, std::span<const int> cell_ids,
                                     std::int64_t timestamp) const;
    Measurement measure_one(const Bess& bess, int cell_id, std::int64_t timestamp) const;

    // Noise-free SoC as this gauge defines it (learned capacity basis).
    double reference_soc_percent(const Bess& bess, int cell_id) const;

    // Charge drawn implied by a SoC reading.
    double charge_from_soc(int cell_id, double soc_percent) const;

    const GaugeConfig& config() const { return config_; }
    std::uint64_t noise_seed() const { return noise_seed_; }
    int size() const { return static_cast<int>(learned_.size()); }

private:
    void check_id(int cell_id) const;

    GaugeConfig config_;
    std::uint64_t noise_seed_;
    std::vector<bool> learned_;
    std::vector<double> capacity_mah_;
};

// Inverse of base_curve on [3.45, 4.0].
double soc_from_base_voltage(double volts);

} // namespace derauth
