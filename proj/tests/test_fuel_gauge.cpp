#include "doctest.h"

#include "derauth/errors.hpp"
#include "derauth/fuel_gauge.hpp"

#include <cmath>
#include <vector>

using namespace derauth;

namespace {

double true_soc_pct(const Bess& bess, int id) {
    const auto& c = bess.cell(id);
    return 100.0 * (c.current_capacity_mah() - c.charge_drawn_mah) / c.current_capacity_mah();
}

} // namespace

TEST_CASE("measurement requires a learning cycle") {
    auto bess = create_pack(0, 10);
    FuelGauge gauge(1, 10);
    const int ids[] = {2};
    CHECK_FALSE(gauge.learned(2));
    CHECK_THROWS_AS(gauge.measure(bess, ids, 0), GaugeRefusal);
    CHECK_THROWS_AS(gauge.learned_capacity_mah(2), GaugeRefusal);
    gauge.learn_cycle(bess, 2);
    CHECK(gauge.learned(2));
    CHECK(gauge.measure(bess, ids, 0).size() == 1);
    CHECK_THROWS_AS(gauge.learn_cycle(bess, 10), DomainError);
    const int bad[] = {11};
    CHECK_THROWS_AS(gauge.measure(bess, bad, 0), DomainError);
    CHECK(gauge.measure(bess, {}, 0).empty());
}

TEST_CASE("learning cycle leaves the cell recharged and estimates capacity") {
    for (std::uint64_t seed : {0ULL, 1ULL, 2ULL, 3ULL}) {
        auto bess = create_pack(seed, 30);
        FuelGauge gauge(seed, 30);
        gauge.learn_all(bess);
        for (int id = 0; id < 30; ++id) {
            CHECK(bess.cell(id).charge_drawn_mah == 0.0);
            CHECK(bess.cell(id).cycle_index == 1);
            const double rated = bess.cell(id).params.rated_capacity_mah;
            CHECK(std::abs(gauge.learned_capacity_mah(id) / rated - 1.0) <= 0.02);
        }
    }
}

TEST_CASE("zero noise reproduces quantized ground truth") {
    GaugeConfig cfg;
    cfg.noise_scale = 0.0;
    auto bess = create_pack(0, 10);
    FuelGauge gauge(5, 10, cfg);
    gauge.learn_all(bess);
    bess.step(1234.0);
    for (int id = 0; id < 10; ++id) {
        const auto m = gauge.measure_one(bess, id, 7);
        const double soc = gauge.reference_soc_percent(bess, id);
        CHECK(m.soc_percent == doctest::Approx(std::round(soc / 0.001) * 0.001).epsilon(1e-12));
        CHECK(m.voltage == doctest::Approx(std::round(bess.cell(id).true_voltage / 1e-5) * 1e-5).epsilon(1e-12));
        CHECK(m.timestamp == 7);
        CHECK(m.cell_id == id);
    }
}

TEST_CASE("every measurement stays inside the error bound") {
    for (auto model : {GaugeNoiseModel::Systematic, GaugeNoiseModel::Uniform}) {
        GaugeConfig cfg;
        cfg.noise_model = model;
        auto bess = create_pack(3, 10);
        FuelGauge gauge(3, 10, cfg);
        gauge.learn_all(bess);
        bess.step(2000.0);
        for (std::int64_t t = 0; t < 1000; ++t) {
            for (int id = 0; id < 10; ++id) {
                const auto m = gauge.measure_one(bess, id, t);
                REQUIRE(std::abs(m.soc_percent - gauge.reference_soc_percent(bess, id)) <= 1.0 + 1e-9);
                REQUIRE(std::abs(m.voltage - bess.cell(id).true_voltage) <= 0.01 * bess.cell(id).true_voltage + 1e-12);
            }
        }
    }
}

TEST_CASE("learned-capacity SoC tracks simulator SoC") {
    auto bess = create_pack(0, 20);
    FuelGauge gauge(0, 20);
    gauge.learn_all(bess);
    bess.step(3600.0);
    for (int id = 0; id < 20; ++id) {
        CHECK(std::abs(gauge.reference_soc_percent(bess, id) - true_soc_pct(bess, id)) < 1.0);
    }
}

TEST_CASE("measurement is deterministic in seed, timestamp and cell") {
    // learning discharges and recharges the pack, so each gauge gets its own copy
    auto bess = create_pack(0, 10);
    auto twin = create_pack(0, 10);
    auto third = create_pack(0, 10);
    FuelGauge a(77, 10);
    FuelGauge b(77, 10);
    FuelGauge c(78, 10);
    a.learn_all(bess);
    b.learn_all(twin);
    c.learn_all(third);
    bess.step(500.0);
    twin.step(500.0);
    const auto ma = a.measure_one(bess, 4, 11);
    const auto mb = b.measure_one(twin, 4, 11);
    CHECK(ma.soc_percent == mb.soc_percent);
    CHECK(ma.voltage == mb.voltage);
    const auto later = a.measure_one(bess, 4, 12);
    const auto other = c.measure_one(bess, 4, 11);
    CHECK((later.voltage != ma.voltage || later.soc_percent != ma.soc_percent));
    CHECK((other.voltage != ma.voltage || other.soc_percent != ma.soc_percent));
}

TEST_CASE("relative SoC bound switch") {
    GaugeConfig cfg;
    cfg.soc_error_relative = true;
    cfg.noise_model = GaugeNoiseModel::Uniform;
    auto bess = create_pack(1, 10);
    FuelGauge gauge(1, 10, cfg);
    gauge.learn_all(bess);
    bess.step(14000.0);
    for (std::int64_t t = 0; t < 200; ++t) {
        const auto m = gauge.measure_one(bess, 0, t);
        const double ref = gauge.reference_soc_percent(bess, 0);
        REQUIRE(std::abs(m.soc_percent - ref) <= 0.01 * ref + 1e-9);
    }
}

TEST_CASE("invalid gauge config") {
    GaugeConfig cfg;
    cfg.max_error_pct = -1.0;
    CHECK_THROWS_AS(FuelGauge(0, 10, cfg), ConfigError);
    cfg = GaugeConfig{};
    cfg.bias_fraction = 1.5;
    CHECK_THROWS_AS(FuelGauge(0, 10, cfg), ConfigError);
}

TEST_CASE("soc_from_base_voltage inverts the base curve") {
    for (double s = 0.0; s <= 1.0; s += 0.05) {
        CHECK(soc_from_base_voltage(base_curve(s)) == doctest::Approx(s).epsilon(1e-6));
    }
}
