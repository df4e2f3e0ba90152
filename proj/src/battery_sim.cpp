#include "derauth/battery_sim.hpp"

#include "derauth/errors.hpp"
#include "derauth/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <string>

namespace derauth {

namespace {

struct Knot {
    double soc;
    double volts;
};

// Ascending in soc.
constexpr std::array<Knot, 5> kTemplate{{
    {0.0, 3.45},
    {0.1, 3.55},
    {0.4, 3.72},
    {0.8, 3.92},
    {1.0, 4.00},
}};

constexpr std::uint64_t kCycleNoiseTag = 0xC7C1E;

} // namespace

void PackConfig::validate() const {
    auto require = [](bool ok, const char* field, const std::string& why) {
        if (!ok) {
            throw ConfigError(std::string("pack.") + field + ": " + why);
        }
    };
    require(nominal_capacity_mah > 0.0, "nominal_capacity_mah", "must be > 0");
    require(capacity_spread >= 0.0 && capacity_spread < 1.0, "capacity_spread", "must be in [0, 1)");
    require(nominal_resistance_mohm > 0.0, "nominal_resistance_mohm", "must be > 0");
    require(resistance_spread >= 0.0 && resistance_spread < 1.0, "resistance_spread", "must be in [0, 1)");
    require(curve_offset_mv >= 0.0, "curve_offset_mv", "must be >= 0");
    require(cycle_noise_mv >= 0.0 && cycle_noise_mv <= 8.0, "cycle_noise_mv", "must be in [0, 8]");
    require(aging_rate >= 0.0 && aging_rate < 1.0, "aging_rate", "must be in [0, 1)");
    require(aging_spread >= 0.0 && aging_spread <= 1.0, "aging_spread", "must be in [0, 1]");
    require(load_ma > 0.0, "load_ma", "must be > 0");
}

double base_curve(double soc) {
    soc = std::clamp(soc, 0.0, 1.0);
    for (std::size_t i = 1; i < kTemplate.size(); ++i) {
        if (soc <= kTemplate[i].soc) {
            const auto& a = kTemplate[i - 1];
            const auto& b = kTemplate[i];
            const double t = (soc - a.soc) / (b.soc - a.soc);
            return a.volts + t * (b.volts - a.volts);
        }
    }
    return kTemplate.back().volts;
}

double cycle_noise(std::uint64_t cell_seed, int cycle_index, double soc, double amplitude_v) {
    if (amplitude_v == 0.0) {
        return 0.0;
    }
    const auto cycle = static_cast<std::uint64_t>(cycle_index);
    const double a1 = symmetric_from_key({kCycleNoiseTag, cell_seed, cycle, 1});
    const double a2 = symmetric_from_key({kCycleNoiseTag, cell_seed, cycle, 2});
    const double phase = std::numbers::pi * soc;
    // |a1 sin + a2 sin| <= 2, halved to respect the amplitude.
    return 0.5 * amplitude_v * (a1 * std::sin(phase) + a2 * std::sin(2.0 * phase));
}

double CellState::current_capacity_mah() const {
    return params.rated_capacity_mah * std::pow(1.0 - params.aging_rate, cycle_index);
}

double CellState::true_soc() const {
    return std::clamp(1.0 - charge_drawn_mah / current_capacity_mah(), 0.0, 1.0);
}

Bess::Bess(std::uint64_t seed, int n_cells, const PackConfig& config) : config_(config) {
    if (n_cells < kMinPackCells) {
        throw ConfigError("pack size " + std::to_string(n_cells) + " below minimum of " +
                          std::to_string(kMinPackCells) + " cells");
    }
    if (n_cells > 256) {
        throw ConfigError("pack size " + std::to_string(n_cells) + " exceeds 8-bit cell ids");
    }
    config_.validate();

    Rng rng(hash_key({seed, 0xBE55}));
    cells_.reserve(static_cast<std::size_t>(n_cells));
    for (int id = 0; id < n_cells; ++id) {
        CellParams p;
        p.cell_id = id;
        p.rated_capacity_mah =
            config_.nominal_capacity_mah * (1.0 + config_.capacity_spread * rng.uniform(-1.0, 1.0));
        p.internal_resistance_mohm =
            config_.nominal_resistance_mohm * (1.0 + config_.resistance_spread * rng.uniform(-1.0, 1.0));
        p.curve_offset_v = 1e-3 * config_.curve_offset_mv * rng.uniform(-1.0, 1.0);
        p.aging_rate = config_.aging_rate * (1.0 + config_.aging_spread * rng.uniform(-1.0, 1.0));
        p.rng_seed = rng.next();

        CellState c;
        c.params = p;
        c.true_voltage = compute_voltage(c, 0.0);
        cells_.push_back(c);
    }
}

const CellState& Bess::cell(int cell_id) const {
    check_id(cell_id);
    return cells_[static_cast<std::size_t>(cell_id)];
}

void Bess::check_id(int cell_id) const {
    if (cell_id < 0 || cell_id >= size()) {
        throw DomainError("cell id " + std::to_string(cell_id) + " outside pack of " +
                          std::to_string(size()));
    }
}

double Bess::compute_voltage(const CellState& cell, double charge_drawn_mah) const {
    const double soc = std::clamp(1.0 - charge_drawn_mah / cell.current_capacity_mah(), 0.0, 1.0);
    const double ir_drop = 1e-3 * config_.load_ma * 1e-3 * cell.params.internal_resistance_mohm;
    const double v = base_curve(soc) + cell.params.curve_offset_v +
                     cycle_noise(cell.params.rng_seed, cell.cycle_index, soc, 1e-3 * config_.cycle_noise_mv) -
                     ir_drop;
    return std::clamp(v, kVoltageMin, kVoltageMax);
}

double Bess::voltage_at(int cell_id, double charge_drawn_mah) const {
    return compute_voltage(cell(cell_id), charge_drawn_mah);
}

double Bess::open_circuit_voltage(int cell_id, double charge_drawn_mah) const {
    const auto& c = cell(cell_id);
    const double soc = std::clamp(1.0 - charge_drawn_mah / c.current_capacity_mah(), 0.0, 1.0);
    return base_curve(soc) + c.params.curve_offset_v +
           cycle_noise(c.params.rng_seed, c.cycle_index, soc, 1e-3 * config_.cycle_noise_mv);
}

void Bess::advance(CellState& cell, double dt_s) const {
    if (cell.cycle_complete) {
        return;
    }
    cell.charge_drawn_mah += config_.load_ma * dt_s / 3600.0;
    cell.true_voltage = compute_voltage(cell, cell.charge_drawn_mah);
    // An exhausted cell collapses to cutoff even if its curve sits above V_min.
    if (cell.true_voltage <= kVoltageMin || cell.charge_drawn_mah >= cell.current_capacity_mah()) {
        cell.true_voltage = kVoltageMin;
        cell.cycle_complete = true;
    }
}

void Bess::step(double dt_s) {
    if (!(dt_s > 0.0)) {
        throw DomainError("step duration must be > 0");
    }
    for (auto& c : cells_) {
        advance(c, dt_s);
    }
    sim_time_s_ += dt_s;
}

void Bess::step_cell(int cell_id, double dt_s) {
    check_id(cell_id);
    if (!(dt_s > 0.0)) {
        throw DomainError("step duration must be > 0");
    }
    advance(cells_[static_cast<std::size_t>(cell_id)], dt_s);
}

void Bess::recharge(std::span<const int> cell_ids) {
    for (int id : cell_ids) {
        check_id(id);
    }
    for (int id : cell_ids) {
        auto& c = cells_[static_cast<std::size_t>(id)];
        c.cycle_index += 1;
        c.charge_drawn_mah = 0.0;
        c.cycle_complete = false;
        c.true_voltage = compute_voltage(c, 0.0);
    }
}

void Bess::recharge_all() {
    std::vector<int> ids(cells_.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ids[i] = static_cast<int>(i);
    }
    recharge(ids);
}

void Bess::write_trajectory_header(std::ostream& out) const {
    out << "cell_id,cycle,charge_drawn_mAh,true_voltage_V\n";
}

void Bess::write_trajectory_row(std::ostream& out, int cell_id) const {
    const auto& c = cell(cell_id);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d,%d,%.4f,%.6f\n", c.params.cell_id, c.cycle_index,
                  c.charge_drawn_mah, c.true_voltage);
    out << buf;
}

Bess create_pack(std::uint64_t seed, int n_cells, const PackConfig& config) {
    return Bess(seed, n_cells, config);
}

} // namespace derauth
