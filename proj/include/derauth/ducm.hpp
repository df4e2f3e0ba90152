#pragma once

#include "derauth/fuel_gauge.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

namespace derauth {

struct DucmConfig {
    double bucket_mah = 10.0;
    std::int64_t update_interval = 1;     // measurement cycles between refreshes
    // Optional second gate on |measured V - model V at the measured charge|; 0 disables.
    double voltage_gate_mv = 0.0;

    void validate() const;
};

class Tolerance {
public:
    explicit Tolerance(double tau_mah);
    double tau_mah() const { return tau_mah_; }

private:
    double tau_mah_;
};

class IncompleteModelError : public std::runtime_error {
public:
    IncompleteModelError(int cell_id, std::vector<long> missing_buckets);
    const std::vector<long>& missing_buckets() const { return missing_; }

private:
    std::vector<long> missing_;
};

struct DucmEntry {
    double expected_voltage = 0.0;
    // Charge drawn (mAh) at which that voltage was observed.
    double anchor_mah = 0.0;
};

struct AuthOutcome {
    bool passed = false;
    double residual_mah = 0.0;
    long matched_bucket = 0;
};

// Dynamically updating characteristic cell-model: one table per cell mapping
// 10 mAh charge buckets across the discharge window to the voltage observed there.
class Ducm {
public:
    // Builds the model from a trace covering one full discharge. Each bucket
    // takes the mean voltage and mean charge position of the samples in it.
    static Ducm bootstrap(int cell_id, double learned_capacity_mah, std::span<const Measurement> trace,
                          std::int64_t now, const DucmConfig& config = {});

    // Overwrites buckets seen in `recent` with their latest sample once the
    // update interval has elapsed. Returns whether the model changed.
    bool refresh(std::span<const Measurement> recent, std::int64_t now);

    // Self-authentication of one measurement against this cell's model.
    AuthOutcome self_authenticate(const Measurement& m, Tolerance tol) const;

    // Model voltage at an arbitrary charge position (linear between anchors).
    double voltage_at_charge(double charge_mah) const;
    double charge_from_soc(double soc_percent) const;

    int cell_id() const { return cell_id_; }
    double bucket_mah() const { return config_.bucket_mah; }
    long first_bucket() const { return first_bucket_; }
    const std::vector<DucmEntry>& entries() const { return entries_; }
    std::int64_t last_update() const { return last_update_; }
    std::int64_t update_interval() const { return config_.update_interval; }
    double learned_capacity_mah() const { return capacity_mah_; }

    void write_csv_header(std::ostream& out) const;
    void write_csv(std::ostream& out) const;

private:
    Ducm() = default;
    long bucket_of(double charge_mah) const;

    int cell_id_ = 0;
    double capacity_mah_ = 0.0;
    DucmConfig config_;
    long first_bucket_ = 0;
    std::vector<DucmEntry> entries_;
    std::int64_t last_update_ = 0;
};

bool in_discharge_window(double voltage);

// 100 * successes / attempts.
double reliability(long successes, long attempts);

} // namespace derauth
