#include "derauth/fuel_gauge.hpp"

#include "derauth/errors.hpp"
#include "derauth/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace derauth {

namespace {

constexpr std::uint64_t kSocBiasTag = 0x50C0B1A5;
constexpr std::uint64_t kVoltBiasTag = 0x7017B1A5;
constexpr std::uint64_t kSocJitterTag = 0x50C01171;
constexpr std::uint64_t kVoltJitterTag = 0x70171171;

double quantize(double value, double step) {
    return step > 0.0 ? std::round(value / step) * step : value;
}

// Quantizes a noisy reading, stepping back toward truth if rounding would
// push it past the error bound.
double quantize_within(double truth, double noisy, double bound, double step) {
    double q = quantize(noisy, step);
    if (step > 0.0 && bound >= step) {
        while (q - truth > bound) {
            q -= step;
        }
        while (truth - q > bound) {
            q += step;
        }
    }
    return q;
}

} // namespace

void GaugeConfig::validate() const {
    auto require = [](bool ok, const char* field, const char* why) {
        if (!ok) {
            throw ConfigError(std::string("gauge.") + field + ": " + why);
        }
    };
    require(max_error_pct >= 0.0 && max_error_pct <= 10.0, "max_error_pct", "must be in [0, 10]");
    require(bias_fraction >= 0.0 && bias_fraction <= 1.0, "bias_fraction", "must be in [0, 1]");
    require(soc_jitter_pp >= 0.0, "soc_jitter_pp", "must be >= 0");
    require(voltage_jitter_mv >= 0.0, "voltage_jitter_mv", "must be >= 0");
    require(noise_scale >= 0.0, "noise_scale", "must be >= 0");
    require(soc_resolution_pp >= 0.0, "soc_resolution_pp", "must be >= 0");
    require(voltage_resolution_mv >= 0.0, "voltage_resolution_mv", "must be >= 0");
    require(learn_step_s > 0.0, "learn_step_s", "must be > 0");
}

double soc_from_base_voltage(double volts) {
    // Bisection on the monotone template; 60 halvings reach double precision.
    double lo = 0.0;
    double hi = 1.0;
    volts = std::clamp(volts, base_curve(0.0), base_curve(1.0));
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (base_curve(mid) < volts ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

FuelGauge::FuelGauge(std::uint64_t noise_seed, int n_cells, const GaugeConfig& config)
    : config_(config),
      noise_seed_(noise_seed),
      learned_(static_cast<std::size_t>(std::max(n_cells, 0)), false),
      capacity_mah_(static_cast<std::size_t>(std::max(n_cells, 0)), 0.0) {
    config_.validate();
    if (n_cells <= 0) {
        throw ConfigError("gauge needs at least one cell");
    }
}

void FuelGauge::check_id(int cell_id) const {
    if (cell_id < 0 || cell_id >= size()) {
        throw DomainError("cell id " + std::to_string(cell_id) + " unknown to fuel gauge");
    }
}

void FuelGauge::learn_cycle(Bess& bess, int cell_id) {
    check_id(cell_id);
    (void)bess.cell(cell_id);

    const double load_a = 1e-3 * bess.load_ma();
    const double start_q = bess.cell(cell_id).charge_drawn_mah;
    // Impedance from the rested vs loaded voltage at the start of discharge.
    const double v_rest = bess.open_circuit_voltage(cell_id, start_q);
    const double v_loaded = bess.voltage_at(cell_id, start_q);
    const double resistance_ohm = (v_rest - v_loaded) / load_a;
    // Full-charge rest voltage reveals the cell's offset from the template.
    const double offset_v = bess.open_circuit_voltage(cell_id, 0.0) - base_curve(1.0);

    while (!bess.cell(cell_id).cycle_complete) {
        bess.step_cell(cell_id, config_.learn_step_s);
    }
    const double drawn = bess.cell(cell_id).charge_drawn_mah;
    // Residual charge below cutoff, read off the template at the cutoff rest voltage.
    const double cutoff_ocv = kVoltageMin + load_a * resistance_ohm - offset_v;
    const double soc_at_cutoff = std::min(soc_from_base_voltage(cutoff_ocv), 0.5);
    capacity_mah_[static_cast<std::size_t>(cell_id)] = drawn / (1.0 - soc_at_cutoff);
    learned_[static_cast<std::size_t>(cell_id)] = true;

    const int ids[] = {cell_id};
    bess.recharge(ids);
}

void FuelGauge::learn_all(Bess& bess) {
    for (int id = 0; id < bess.size(); ++id) {
        learn_cycle(bess, id);
    }
}

bool FuelGauge::learned(int cell_id) const {
    check_id(cell_id);
    return learned_[static_cast<std::size_t>(cell_id)];
}

double FuelGauge::learned_capacity_mah(int cell_id) const {
    if (!learned(cell_id)) {
        throw GaugeRefusal("cell " + std::to_string(cell_id) + " has not completed a learning cycle");
    }
    return capacity_mah_[static_cast<std::size_t>(cell_id)];
}

double FuelGauge::reference_soc_percent(const Bess& bess, int cell_id) const {
    const double cap = learned_capacity_mah(cell_id);
    const double q = bess.cell(cell_id).charge_drawn_mah;
    return std::clamp(100.0 * (cap - q) / cap, 0.0, 100.0);
}

double FuelGauge::charge_from_soc(int cell_id, double soc_percent) const {
    return learned_capacity_mah(cell_id) * (1.0 - soc_percent / 100.0);
}

Measurement FuelGauge::measure_one(const Bess& bess, int cell_id, std::int64_t timestamp) const {
    check_id(cell_id);
    const auto& cell = bess.cell(cell_id);
    const double true_soc = reference_soc_percent(bess, cell_id);
    const double true_v = cell.true_voltage;

    const double bound = config_.max_error_pct / 100.0;
    const double soc_bound = config_.soc_error_relative ? bound * true_soc : config_.max_error_pct;
    const double volt_bound = bound * true_v;

    const auto id = static_cast<std::uint64_t>(cell_id);
    const auto ts = static_cast<std::uint64_t>(timestamp);
    double soc_err = 0.0;
    double volt_err = 0.0;
    if (config_.noise_model == GaugeNoiseModel::Uniform) {
        soc_err = soc_bound * symmetric_from_key({noise_seed_, kSocJitterTag, ts, id});
        volt_err = volt_bound * symmetric_from_key({noise_seed_, kVoltJitterTag, ts, id});
    } else {
        soc_err = config_.bias_fraction * soc_bound * symmetric_from_key({noise_seed_, kSocBiasTag, id}) +
                  config_.soc_jitter_pp * symmetric_from_key({noise_seed_, kSocJitterTag, ts, id});
        volt_err = config_.bias_fraction * volt_bound * symmetric_from_key({noise_seed_, kVoltBiasTag, id}) +
                   1e-3 * config_.voltage_jitter_mv * symmetric_from_key({noise_seed_, kVoltJitterTag, ts, id});
    }
    soc_err = std::clamp(config_.noise_scale * soc_err, -soc_bound, soc_bound);
    volt_err = std::clamp(config_.noise_scale * volt_err, -volt_bound, volt_bound);

    Measurement m;
    m.cell_id = cell_id;
    m.timestamp = timestamp;
    m.soc_percent = std::clamp(
        quantize_within(true_soc, true_soc + soc_err, soc_bound, config_.soc_resolution_pp), 0.0, 100.0);
    m.voltage = std::clamp(
        quantize_within(true_v, true_v + volt_err, volt_bound, 1e-3 * config_.voltage_resolution_mv),
        kGaugeVoltageFloor, kGaugeVoltageCeil);
    return m;
}

std::vector<Measurement> FuelGauge::measure(const Bess& bess, std::span<const int> cell_ids,
                                            std::int64_t timestamp) const {
    for (int id : cell_ids) {
        if (!learned(id)) {
            throw GaugeRefusal("cell " + std::to_string(id) + " has not completed a learning cycle");
        }
    }
    std::vector<Measurement> out;
    out.reserve(cell_ids.size());
    for (int id : cell_ids) {
        out.push_back(measure_one(bess, id, timestamp));
    }
    return out;
}

} // namespace derauth
