#include "derauth/config.hpp"

#include "derauth/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace derauth {

namespace {

using boost::property_tree::ptree;

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
    return out;
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

template <typename T>
T to_choice(const std::string& key, const std::string& v, const std::map<std::string, T>& choices) {
    const auto it = choices.find(v);
    if (it == choices.end()) {
        std::string allowed;
        for (const auto& [name, _] : choices) {
            allowed += (allowed.empty() ? "" : ", ") + name;
        }
        throw ConfigError(key + ": '" + v + "' is not one of " + allowed);
    }
    return it->second;
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& key, const std::string& v, F convert) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            throw ConfigError(key + ": empty list element");
        }
        out.push_back(static_cast<T>(convert(key, item)));
    }
    if (out.empty()) {
        throw ConfigError(key + ": list must not be empty");
    }
    return out;
}

using Setter = std::function<void(AppConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
    static const std::map<std::string, std::map<std::string, Setter>> s = [] {
        std::map<std::string, std::map<std::string, Setter>> m;
        auto& pack = m["pack"];
        pack["n_cells"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.n_cells = static_cast<int>(to_int(k, v));
        };
        auto pack_num = [&pack](const char* name, double PackConfig::*field) {
            pack[name] = [field](AppConfig& c, const std::string& k, const std::string& v) {
                c.scenario.outstation.monitor.pack.*field = to_double(k, v);
            };
        };
        pack_num("nominal_capacity_mah", &PackConfig::nominal_capacity_mah);
        pack_num("capacity_spread", &PackConfig::capacity_spread);
        pack_num("nominal_resistance_mohm", &PackConfig::nominal_resistance_mohm);
        pack_num("resistance_spread", &PackConfig::resistance_spread);
        pack_num("curve_offset_mv", &PackConfig::curve_offset_mv);
        pack_num("cycle_noise_mv", &PackConfig::cycle_noise_mv);
        pack_num("aging_rate", &PackConfig::aging_rate);
        pack_num("aging_spread", &PackConfig::aging_spread);
        pack_num("load_ma", &PackConfig::load_ma);
        pack["measurement_period_s"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.outstation.monitor.measurement_period_s = to_double(k, v);
        };

        auto& gauge = m["gauge"];
        auto gauge_num = [&gauge](const char* name, double GaugeConfig::*field) {
            gauge[name] = [field](AppConfig& c, const std::string& k, const std::string& v) {
                c.scenario.outstation.monitor.gauge.*field = to_double(k, v);
            };
        };
        gauge_num("max_error_pct", &GaugeConfig::max_error_pct);
        gauge_num("bias_fraction", &GaugeConfig::bias_fraction);
        gauge_num("soc_jitter_pp", &GaugeConfig::soc_jitter_pp);
        gauge_num("voltage_jitter_mv", &GaugeConfig::voltage_jitter_mv);
        gauge_num("noise_scale", &GaugeConfig::noise_scale);
        gauge_num("soc_resolution_pp", &GaugeConfig::soc_resolution_pp);
        gauge_num("voltage_resolution_mv", &GaugeConfig::voltage_resolution_mv);
        gauge_num("learn_step_s", &GaugeConfig::learn_step_s);
        gauge["soc_error_relative"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.outstation.monitor.gauge.soc_error_relative = to_bool(k, v);
        };
        gauge["noise_model"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.outstation.monitor.gauge.noise_model = to_choice<GaugeNoiseModel>(
                k, v, {{"systematic", GaugeNoiseModel::Systematic}, {"uniform", GaugeNoiseModel::Uniform}});
        };

        auto& ducm = m["ducm"];
        ducm["bucket_mah"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.outstation.monitor.ducm.bucket_mah = to_double(k, v);
        };
        ducm["update_interval"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.outstation.monitor.ducm.update_interval = to_int(k, v);
        };
        ducm["voltage_gate_mv"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.outstation.monitor.ducm.voltage_gate_mv = to_double(k, v);
        };
        ducm["tau_mah"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.outstation.tau_mah = to_double(k, v);
        };
        ducm["refresh"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.outstation.monitor.refresh_enabled = to_bool(k, v);
        };

        auto& proto = m["protocol"];
        proto["seed"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.set_seed(static_cast<std::uint64_t>(to_int(k, v)));
        };
        proto["rounds"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.rounds = static_cast<int>(to_int(k, v));
        };
        proto["idle_cycles"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.idle_cycles = to_int(k, v);
        };
        proto["warmup_cycles"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.warmup_cycles = to_int(k, v);
        };
        proto["transport"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.transport = to_choice<TransportKind>(
                k, v, {{"in-process", TransportKind::InProcess}, {"socketpair", TransportKind::SocketPair}});
        };
        proto["transform_variant"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.outstation.variant = to_choice<TransformVariant>(
                k, v, {{"whole-word", TransformVariant::WholeWord}, {"per-byte", TransformVariant::PerByte}});
        };
        proto["reenroll"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.reenroll = to_bool(k, v);
        };
        proto["max_enroll_attempts"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.max_enroll_attempts = static_cast<int>(to_int(k, v));
        };
        proto["event_log"] = [](AppConfig& c, const std::string&, const std::string& v) { c.event_log = v; };

        auto& adv = m["adversary"];
        adv["mode"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.adversary.mode = to_choice<AdversaryMode>(k, v,
                                                                 {{"none", AdversaryMode::None},
                                                                  {"passive", AdversaryMode::Passive},
                                                                  {"replay", AdversaryMode::Replay},
                                                                  {"tamper", AdversaryMode::Tamper},
                                                                  {"block", AdversaryMode::Block},
                                                                  {"rollback", AdversaryMode::Rollback},
                                                                  {"inject", AdversaryMode::Inject}});
        };
        adv["tamper_bit"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.adversary.tamper_bit = static_cast<int>(to_int(k, v));
        };
        adv["block_type"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.adversary.block_type = to_choice<MsgType>(k, v,
                                                                 {{"enroll_crt", MsgType::EnrollCrt},
                                                                  {"challenge", MsgType::Challenge},
                                                                  {"reply", MsgType::Reply},
                                                                  {"verdict", MsgType::Verdict},
                                                                  {"abort", MsgType::Abort}});
        };
        auto adv_u64 = [&adv](const char* name, std::uint64_t AdversaryConfig::*field) {
            adv[name] = [field](AppConfig& c, const std::string& k, const std::string& v) {
                const auto n = to_int(k, v);
                if (n < 0) {
                    throw ConfigError(k + ": must be >= 0");
                }
                c.scenario.adversary.*field = static_cast<std::uint64_t>(n);
            };
        };
        adv_u64("start_round", &AdversaryConfig::start_round);
        adv_u64("period", &AdversaryConfig::period);
        adv_u64("snapshot_round", &AdversaryConfig::snapshot_round);
        adv["budget"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.adversary.budget = static_cast<int>(to_int(k, v));
        };
        adv["drop_enrollments"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.scenario.adversary.drop_enrollments = static_cast<int>(to_int(k, v));
        };

        auto& sweep = m["sweep"];
        sweep["taus_mah"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.sweep.taus_mah = to_list<double>(k, v, to_double);
        };
        sweep["intervals"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.sweep.intervals = to_list<std::int64_t>(k, v, to_int);
        };
        sweep["n_seeds"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            const auto n = to_int(k, v);
            if (n < 1) {
                throw ConfigError(k + ": must be >= 1");
            }
            const auto base = c.sweep.seeds.empty() ? 0 : c.sweep.seeds.front();
            c.sweep.seeds.clear();
            for (long long i = 0; i < n; ++i) {
                c.sweep.seeds.push_back(base + static_cast<std::uint64_t>(i));
            }
        };
        sweep["n_measurements"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.sweep.n_measurements = to_int(k, v);
        };
        sweep["include_frozen"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.sweep.include_frozen = to_bool(k, v);
        };
        sweep["frozen_age_cycles"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.sweep.frozen_age_cycles = static_cast<int>(to_int(k, v));
        };

        auto& exp = m["export"];
        exp["count"] = [](AppConfig& c, const std::string& k, const std::string& v) {
            c.dataset.count = static_cast<long>(to_int(k, v));
        };
        exp["path"] = [](AppConfig& c, const std::string&, const std::string& v) { c.dataset.path = v; };
        return m;
    }();
    return s;
}

// Sections are applied in a fixed order so `protocol.seed` lands before
// `sweep.n_seeds` regardless of file layout.
constexpr const char* kSectionOrder[] = {"protocol", "pack", "gauge", "ducm", "adversary", "sweep", "export"};

} // namespace

void AppConfig::set_seed(std::uint64_t seed) {
    scenario.seed = seed;
    const auto n = sweep.seeds.empty() ? std::size_t{1} : sweep.seeds.size();
    sweep.seeds.clear();
    for (std::size_t i = 0; i < n; ++i) {
        sweep.seeds.push_back(seed + i);
    }
}

AppConfig parse_config(std::istream& in, const std::string& origin) {
    ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
    }

    const auto& sch = schema();
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            throw ConfigError(origin + ": key '" + section + "' must sit inside a section");
        }
        const auto it = sch.find(section);
        if (it == sch.end()) {
            throw ConfigError(origin + ": unknown section [" + section + "]");
        }
        for (const auto& [key, _] : body) {
            if (!it->second.contains(key)) {
                throw ConfigError(origin + ": " + section + "." + key + ": unknown key");
            }
        }
    }

    AppConfig cfg;
    for (const char* section : kSectionOrder) {
        const auto sub = tree.get_child_optional(section);
        if (!sub) {
            continue;
        }
        for (const auto& [key, node] : *sub) {
            const auto full = std::string(section) + "." + key;
            try {
                sch.at(section).at(key)(cfg, full, trim(node.data()));
            } catch (const ConfigError& e) {
                throw ConfigError(origin + ": " + e.what());
            }
        }
    }

    cfg.sweep.monitor = cfg.scenario.outstation.monitor;
    cfg.sweep.n_cells = cfg.scenario.n_cells;
    try {
        cfg.scenario.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    if (cfg.sweep.n_measurements < 1) {
        throw ConfigError(origin + ": sweep.n_measurements: must be >= 1");
    }
    if (cfg.dataset.count < 1) {
        throw ConfigError(origin + ": export.count: must be >= 1");
    }
    return cfg;
}

AppConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    return parse_config(in, path);
}

} // namespace derauth
