#include "derauth/cell_monitor.hpp"

#include "derauth/errors.hpp"
#include "derauth/random.hpp"

#include <string>

namespace derauth {

CellMonitor::CellMonitor(std::uint64_t seed, int n_cells, const MonitorConfig& config)
    : config_(config),
      bess_(seed, n_cells, config.pack),
      gauge_(hash_key({seed, 0x6A06E}), n_cells, config.gauge),
      all_ids_(static_cast<std::size_t>(n_cells)),
      pending_(static_cast<std::size_t>(n_cells)) {
    config_.ducm.validate();
    if (!(config_.measurement_period_s > 0.0)) {
        throw ConfigError("monitor.measurement_period_s: must be > 0");
    }
    for (int i = 0; i < n_cells; ++i) {
        all_ids_[static_cast<std::size_t>(i)] = i;
    }
}

void CellMonitor::characterize() {
    gauge_.learn_all(bess_);

    std::vector<std::vector<Measurement>> traces(all_ids_.size());
    bool running = true;
    while (running) {
        const auto ms = gauge_.measure(bess_, all_ids_, now_);
        for (const auto& m : ms) {
            traces[static_cast<std::size_t>(m.cell_id)].push_back(m);
        }
        ++now_;
        running = false;
        for (const auto& c : bess_.cells()) {
            running = running || !c.cycle_complete;
        }
        if (running) {
            bess_.step(config_.measurement_period_s);
        }
    }

    ducms_.clear();
    ducms_.reserve(all_ids_.size());
    for (int id : all_ids_) {
        ducms_.push_back(Ducm::bootstrap(id, gauge_.learned_capacity_mah(id), traces[static_cast<std::size_t>(id)],
                                         now_, config_.ducm));
    }
    bess_.recharge_all();
}

const Ducm& CellMonitor::ducm(int cell_id) const {
    if (cell_id < 0 || cell_id >= static_cast<int>(ducms_.size())) {
        throw DomainError("no model for cell " + std::to_string(cell_id));
    }
    return ducms_[static_cast<std::size_t>(cell_id)];
}

Measurement CellMonitor::measure(int cell_id) const {
    return gauge_.measure_one(bess_, cell_id, now_);
}

const std::vector<Measurement>& CellMonitor::sample() {
    if (!sampled_) {
        current_ = gauge_.measure(bess_, all_ids_, now_);
        sampled_ = true;
    }
    return current_;
}

void CellMonitor::refresh_due_models() {
    if (!config_.refresh_enabled) {
        return;
    }
    for (std::size_t i = 0; i < ducms_.size(); ++i) {
        if (now_ - ducms_[i].last_update() >= ducms_[i].update_interval()) {
            ducms_[i].refresh(pending_[i], now_);
            pending_[i].clear();
        }
    }
}

void CellMonitor::advance() {
    sample();
    if (config_.refresh_enabled) {
        for (const auto& m : current_) {
            pending_[static_cast<std::size_t>(m.cell_id)].push_back(m);
        }
    }
    sampled_ = false;
    ++now_;
    refresh_due_models();

    bess_.step(config_.measurement_period_s);
    std::vector<int> done;
    for (const auto& c : bess_.cells()) {
        if (c.cycle_complete) {
            done.push_back(c.params.cell_id);
        }
    }
    if (!done.empty()) {
        bess_.recharge(done);
    }
}

void CellMonitor::tick() {
    sample();
    advance();
}

} // namespace derauth
