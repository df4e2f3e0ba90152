#include "doctest.h"

#include "derauth/config.hpp"
#include "derauth/errors.hpp"

#include <sstream>
#include <string>

using namespace derauth;

namespace {

AppConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test.ini");
}

std::string error_of(const std::string& text) {
    try {
        (void)parse(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("empty config yields defaults") {
    const auto c = parse("");
    CHECK(c.scenario.n_cells == 100);
    CHECK(c.scenario.outstation.tau_mah == 1.0);
    CHECK(c.scenario.outstation.monitor.pack.load_ma == 500.0);
    CHECK(c.sweep.seeds.size() == 10);
    CHECK(c.dataset.count == 100000);
}

TEST_CASE("every section is read") {
    const auto c = parse(R"(
; comment
[pack]
n_cells = 50
load_ma = 400
aging_rate = 0.001

[gauge]
noise_model = uniform
soc_error_relative = true
max_error_pct = 0.5

[ducm]
update_interval = 10
tau_mah = 2.5
refresh = false

[protocol]
seed = 42
rounds = 7
transport = socketpair
transform_variant = per-byte
event_log = events.jsonl

[adversary]
mode = tamper
tamper_bit = 12
block_type = reply
start_round = 3
period = 2
budget = 4

[sweep]
taus_mah = 1, 5, 20
intervals = 1,1000
n_seeds = 3
n_measurements = 500
include_frozen = no

[export]
count = 1000
path = out.csv
)");
    CHECK(c.scenario.n_cells == 50);
    CHECK(c.sweep.n_cells == 50);
    CHECK(c.scenario.outstation.monitor.pack.load_ma == 400.0);
    CHECK(c.sweep.monitor.pack.aging_rate == 0.001);
    CHECK(c.scenario.outstation.monitor.gauge.noise_model == GaugeNoiseModel::Uniform);
    CHECK(c.scenario.outstation.monitor.gauge.soc_error_relative);
    CHECK(c.scenario.outstation.monitor.ducm.update_interval == 10);
    CHECK(c.scenario.outstation.tau_mah == 2.5);
    CHECK_FALSE(c.scenario.outstation.monitor.refresh_enabled);
    CHECK(c.scenario.seed == 42);
    CHECK(c.scenario.rounds == 7);
    CHECK(c.scenario.transport == TransportKind::SocketPair);
    CHECK(c.scenario.outstation.variant == TransformVariant::PerByte);
    CHECK(c.event_log == "events.jsonl");
    CHECK(c.scenario.adversary.mode == AdversaryMode::Tamper);
    CHECK(c.scenario.adversary.tamper_bit == 12);
    CHECK(c.scenario.adversary.block_type == MsgType::Reply);
    CHECK(c.scenario.adversary.period == 2);
    CHECK(c.scenario.adversary.budget == 4);
    CHECK(c.sweep.taus_mah == std::vector<double>{1.0, 5.0, 20.0});
    CHECK(c.sweep.intervals == std::vector<std::int64_t>{1, 1000});
    CHECK(c.sweep.seeds == std::vector<std::uint64_t>{42, 43, 44});
    CHECK(c.sweep.n_measurements == 500);
    CHECK_FALSE(c.sweep.include_frozen);
    CHECK(c.dataset.count == 1000);
    CHECK(c.dataset.path == "out.csv");
}

TEST_CASE("diagnostics name the offending field") {
    CHECK(error_of("[pack]\nbogus = 1\n").find("pack.bogus: unknown key") != std::string::npos);
    CHECK(error_of("[nope]\na = 1\n").find("unknown section [nope]") != std::string::npos);
    CHECK(error_of("[gauge]\nmax_error_pct = abc\n").find("gauge.max_error_pct: expected a number") !=
          std::string::npos);
    CHECK(error_of("[protocol]\nrounds = 2.5\n").find("protocol.rounds: expected an integer") != std::string::npos);
    CHECK(error_of("[adversary]\nmode = evil\n").find("adversary.mode: 'evil' is not one of") != std::string::npos);
    CHECK(error_of("[ducm]\nrefresh = maybe\n").find("ducm.refresh: expected true/false") != std::string::npos);
    CHECK(error_of("[pack]\nn_cells = 3\n").find("pack.n_cells") != std::string::npos);
    CHECK(error_of("[ducm]\ntau_mah = 0\n").find("ducm.tau_mah") != std::string::npos);
    CHECK(error_of("[sweep]\ntaus_mah = 1,,2\n").find("sweep.taus_mah: empty list element") != std::string::npos);
    CHECK(error_of("[pack]\nload_ma = 1\nload_ma = 2\n").find("test.ini:") != std::string::npos);
    CHECK(error_of("stray = 1\n").find("must sit inside a section") != std::string::npos);
    CHECK_THROWS_AS(load_config("/nonexistent/derauth.ini"), ConfigError);
}

TEST_CASE("set_seed shifts the sweep seed range") {
    auto c = parse("[sweep]\nn_seeds = 4\n");
    c.set_seed(100);
    CHECK(c.scenario.seed == 100);
    CHECK(c.sweep.seeds == std::vector<std::uint64_t>{100, 101, 102, 103});
}
