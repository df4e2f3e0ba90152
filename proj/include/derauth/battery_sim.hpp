#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace derauth {

inline constexpr double kVoltageMax = 4.00;
inline constexpr double kVoltageMin = 3.45;
// Challenges reference up to six distinct cells plus one spare.
inline constexpr int kMinPackCells = 7;

struct PackConfig {
    double nominal_capacity_mah = 2500.0;
    double capacity_spread = 0.02;           // +/- fraction, uniform
    double nominal_resistance_mohm = 30.0;
    double resistance_spread = 0.10;         // +/- fraction, uniform
    double curve_offset_mv = 15.0;           // +/- mV, uniform
    double cycle_noise_mv = 0.15;            // peak amplitude, must stay <= 8 mV
    double aging_rate = 3e-4;                // capacity fraction lost per cycle
    double aging_spread = 0.2;               // +/- fraction of aging_rate
    double load_ma = 500.0;

    void validate() const;
};

struct CellParams {
    int cell_id = 0;
    double rated_capacity_mah = 0.0;
    double internal_resistance_mohm = 0.0;
    double curve_offset_v = 0.0;
    double aging_rate = 0.0;
    std::uint64_t rng_seed = 0;
};

struct CellState {
    CellParams params;
    int cycle_index = 0;
    double charge_drawn_mah = 0.0;
    double true_voltage = kVoltageMax;
    bool cycle_complete = false;

    // Capacity after aging for the current cycle.
    double current_capacity_mah() const;
    // Ground-truth state of charge in [0, 1] relative to the aged capacity.
    double true_soc() const;
};

// Piecewise-linear open-circuit template shared by every cell.
double base_curve(double soc);

// Smooth per-cycle perturbation; |value| <= amplitude_v for every soc.
double cycle_noise(std::uint64_t cell_seed, int cycle_index, double soc, double amplitude_v);

// Simulated N-cell battery energy storage system under constant load.
// Single writer: copies are cheap immutable snapshots.
class Bess {
public:
    Bess(std::uint64_t seed, int n_cells, const PackConfig& config);

    int size() const { return static_cast<int>(cells_.size()); }
    const CellState& cell(int cell_id) const;
    const std::vector<CellState>& cells() const { return cells_; }
    const PackConfig& config() const { return config_; }
    double load_ma() const { return config_.load_ma; }
    double sim_time_s() const { return sim_time_s_; }

    // Discharges every cell that has not finished its cycle for dt seconds.
    void step(double dt_s);
    // Discharges one cell only; the pack clock is not advanced.
    void step_cell(int cell_id, double dt_s);
    // Instant recharge: new cycle, aged capacity, fresh cycle noise.
    void recharge(std::span<const int> cell_ids);
    void recharge_all();

    // Terminal voltage under load at a given charge drawn in the current cycle.
    double voltage_at(int cell_id, double charge_drawn_mah) const;
    // Same point with the load disconnected (no I*R drop).
    double open_circuit_voltage(int cell_id, double charge_drawn_mah) const;

    void write_trajectory_header(std::ostream& out) const;
    void write_trajectory_row(std::ostream& out, int cell_id) const;

private:
    void check_id(int cell_id) const;
    void advance(CellState& cell, double dt_s) const;
    double compute_voltage(const CellState& cell, double charge_drawn_mah) const;

    PackConfig config_;
    std::vector<CellState> cells_;
    double sim_time_s_ = 0.0;
};

Bess create_pack(std::uint64_t seed, int n_cells, const PackConfig& config = {});

} // namespace derauth
