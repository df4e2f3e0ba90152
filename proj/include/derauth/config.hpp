#pragma once

#include "derauth/experiment.hpp"
#include "derauth/harness.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace derauth {

struct ExportSettings {
    long count = 100000;
    std::string path = "crseq.csv";
};

struct AppConfig {
    ScenarioConfig scenario;
    SweepConfig sweep;
    ExportSettings dataset;
    std::string event_log;   // JSON-lines destination; empty means stdout

    // Propagates the seed to the scenario and to the sweep's seed range.
    void set_seed(std::uint64_t seed);
};

// Line-based `key = value` file with [pack], [gauge], [ducm], [protocol],
// [adversary], [sweep] and [export] sections. Unknown keys and malformed
// values raise ConfigError naming `section.key`.
AppConfig parse_config(std::istream& in, const std::string& origin = "<config>");
AppConfig load_config(const std::string& path);

} // namespace derauth
