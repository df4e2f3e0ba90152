#include "derauth/ducm.hpp"

#include "derauth/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

namespace derauth {

namespace {

std::string describe_missing(int cell_id, const std::vector<long>& missing) {
    std::string s = "incomplete model for cell " + std::to_string(cell_id) + ": missing buckets";
    const std::size_t shown = std::min<std::size_t>(missing.size(), 16);
    for (std::size_t i = 0; i < shown; ++i) {
        s += ' ' + std::to_string(missing[i]);
    }
    if (shown < missing.size()) {
        s += " ... (" + std::to_string(missing.size()) + " total)";
    }
    return s;
}

} // namespace

void DucmConfig::validate() const {
    if (!(bucket_mah > 0.0)) {
        throw ConfigError("ducm.bucket_mah: must be > 0");
    }
    if (update_interval < 1) {
        throw ConfigError("ducm.update_interval: must be >= 1");
    }
    if (voltage_gate_mv < 0.0) {
        throw ConfigError("ducm.voltage_gate_mv: must be >= 0");
    }
}

Tolerance::Tolerance(double tau_mah) : tau_mah_(tau_mah) {
    if (!(tau_mah > 0.0)) {
        throw DomainError("tolerance must be > 0 mAh");
    }
}

IncompleteModelError::IncompleteModelError(int cell_id, std::vector<long> missing_buckets)
    : std::runtime_error(describe_missing(cell_id, missing_buckets)), missing_(std::move(missing_buckets)) {}

bool in_discharge_window(double voltage) {
    return voltage >= kVoltageMin && voltage <= kVoltageMax;
}

double reliability(long successes, long attempts) {
    if (attempts <= 0) {
        throw DomainError("reliability needs at least one attempt");
    }
    if (successes < 0 || successes > attempts) {
        throw DomainError("successes must lie in [0, attempts]");
    }
    return 100.0 * static_cast<double>(successes) / static_cast<double>(attempts);
}

long Ducm::bucket_of(double charge_mah) const {
    return static_cast<long>(std::floor(charge_mah / config_.bucket_mah));
}

double Ducm::charge_from_soc(double soc_percent) const {
    return capacity_mah_ * (1.0 - soc_percent / 100.0);
}

Ducm Ducm::bootstrap(int cell_id, double learned_capacity_mah, std::span<const Measurement> trace,
                     std::int64_t now, const DucmConfig& config) {
    config.validate();
    if (!(learned_capacity_mah > 0.0)) {
        throw DomainError("learned capacity must be > 0");
    }
    Ducm d;
    d.cell_id_ = cell_id;
    d.capacity_mah_ = learned_capacity_mah;
    d.config_ = config;
    d.last_update_ = now;

    bool any = false;
    long lo = 0;
    long hi = 0;
    for (const auto& m : trace) {
        if (m.cell_id != cell_id || !in_discharge_window(m.voltage)) {
            continue;
        }
        const long b = d.bucket_of(d.charge_from_soc(m.soc_percent));
        lo = any ? std::min(lo, b) : b;
        hi = any ? std::max(hi, b) : b;
        any = true;
    }
    if (!any) {
        throw IncompleteModelError(cell_id, {});
    }

    const auto n = static_cast<std::size_t>(hi - lo + 1);
    std::vector<double> v_sum(n, 0.0);
    std::vector<double> q_sum(n, 0.0);
    std::vector<long> count(n, 0);
    for (const auto& m : trace) {
        if (m.cell_id != cell_id || !in_discharge_window(m.voltage)) {
            continue;
        }
        const double q = d.charge_from_soc(m.soc_percent);
        const auto i = static_cast<std::size_t>(d.bucket_of(q) - lo);
        v_sum[i] += m.voltage;
        q_sum[i] += q;
        count[i] += 1;
    }

    std::vector<long> missing;
    for (std::size_t i = 0; i < n; ++i) {
        if (count[i] == 0) {
            missing.push_back(lo + static_cast<long>(i));
        }
    }
    if (!missing.empty()) {
        throw IncompleteModelError(cell_id, std::move(missing));
    }

    d.first_bucket_ = lo;
    d.entries_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<double>(count[i]);
        d.entries_[i] = {v_sum[i] / c, q_sum[i] / c};
    }
    return d;
}

bool Ducm::refresh(std::span<const Measurement> recent, std::int64_t now) {
    if (now - last_update_ < config_.update_interval) {
        return false;
    }
    bool changed = false;
    for (const auto& m : recent) {
        if (m.cell_id != cell_id_ || !in_discharge_window(m.voltage)) {
            continue;
        }
        const double q = charge_from_soc(m.soc_percent);
        const long idx = bucket_of(q) - first_bucket_;
        if (idx < 0 || idx >= static_cast<long>(entries_.size())) {
            continue;
        }
        entries_[static_cast<std::size_t>(idx)] = {m.voltage, q};
        changed = true;
    }
    last_update_ = now;
    return changed;
}

double Ducm::voltage_at_charge(double charge_mah) const {
    const auto it = std::partition_point(entries_.begin(), entries_.end(),
                                         [&](const DucmEntry& e) { return e.anchor_mah < charge_mah; });
    if (it == entries_.begin()) {
        return entries_.front().expected_voltage;
    }
    if (it == entries_.end()) {
        return entries_.back().expected_voltage;
    }
    const auto& a = *(it - 1);
    const auto& b = *it;
    const double span = b.anchor_mah - a.anchor_mah;
    if (span <= 0.0) {
        return a.expected_voltage;
    }
    const double t = (charge_mah - a.anchor_mah) / span;
    return a.expected_voltage + t * (b.expected_voltage - a.expected_voltage);
}

AuthOutcome Ducm::self_authenticate(const Measurement& m, Tolerance tol) const {
    if (!in_discharge_window(m.voltage)) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "cell %d voltage %.4f V outside [%.2f, %.2f] V", m.cell_id, m.voltage,
                      kVoltageMin, kVoltageMax);
        throw OutOfWindowError(buf);
    }
    if (m.cell_id != cell_id_) {
        throw DomainError("measurement of cell " + std::to_string(m.cell_id) + " presented to model of cell " +
                          std::to_string(cell_id_));
    }

    // Entries run from high to low voltage; the nearest one is at i-1 or i.
    const auto it = std::partition_point(entries_.begin(), entries_.end(),
                                         [&](const DucmEntry& e) { return e.expected_voltage > m.voltage; });
    const auto i = static_cast<std::size_t>(it - entries_.begin());
    std::size_t nearest = 0;
    if (i == entries_.size()) {
        nearest = i - 1;
    } else if (i > 0) {
        const double above = entries_[i - 1].expected_voltage - m.voltage;
        const double below = m.voltage - entries_[i].expected_voltage;
        nearest = above <= below ? i - 1 : i;
    }

    // Shift the nearest anchor by the voltage gap over the local slope taken
    // from the neighbouring entries.
    const std::size_t lo = nearest > 0 ? nearest - 1 : nearest;
    const std::size_t hi = nearest + 1 < entries_.size() ? nearest + 1 : nearest;
    const double dv = entries_[lo].expected_voltage - entries_[hi].expected_voltage;
    const double dq = entries_[hi].anchor_mah - entries_[lo].anchor_mah;
    double model_q = entries_[nearest].anchor_mah;
    if (dv > 0.0 && dq > 0.0) {
        model_q += (entries_[nearest].expected_voltage - m.voltage) * dq / dv;
    }

    AuthOutcome out;
    out.matched_bucket = first_bucket_ + static_cast<long>(nearest);
    const double measured_q = charge_from_soc(m.soc_percent);
    out.residual_mah = model_q - measured_q;
    out.passed = std::abs(out.residual_mah) <= tol.tau_mah();
    if (out.passed && config_.voltage_gate_mv > 0.0) {
        out.passed = std::abs(voltage_at_charge(measured_q) - m.voltage) <= 1e-3 * config_.voltage_gate_mv;
    }
    return out;
}

void Ducm::write_csv_header(std::ostream& out) const {
    out << "cell_id,bucket_mAh,expected_voltage_V,last_update\n";
}

void Ducm::write_csv(std::ostream& out) const {
    char buf[96];
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const double bucket = static_cast<double>(first_bucket_ + static_cast<long>(i)) * config_.bucket_mah;
        std::snprintf(buf, sizeof buf, "%d,%.1f,%.6f,%lld\n", cell_id_, bucket, entries_[i].expected_voltage,
                      static_cast<long long>(last_update_));
        out << buf;
    }
}

} // namespace derauth
