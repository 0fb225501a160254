#include <doctest.h>

#include <cmath>

#include "qlink/device.hpp"
#include "qlink/rng.hpp"
#include "qlink/units.hpp"

using namespace qlink;
using namespace qlink::device;

#ifndef QLINK_DATA_DIR
#define QLINK_DATA_DIR "data"
#endif

TEST_CASE("free spectral range of the shipped geometry") {
    const CableParams cable{}; // paper chip-cable-chip defaults
    const double f_fsr = units::rad_to_ghz(fsr(cable));
    // TEM round-trip model lands near 0.42 GHz; the measured spacing is 0.44
    CHECK(f_fsr == doctest::Approx(0.4205).epsilon(5e-3));
    CHECK(std::abs(f_fsr - 0.44) / 0.44 < 0.10);
}

TEST_CASE("fsr scaling limits") {
    CableParams cable{};
    cable.n_cpw = 1;
    cable.len_cpw_m = 0.0;
    const double base = fsr(cable);
    // single-medium limit: 1 / (2 l sqrt(LC))
    const double expected =
        units::two_pi /
        (2.0 * cable.len_cb_m * std::sqrt(cable.l_cb_nh_per_m * 1e-9 * cable.c_cb_pf_per_m * 1e-12));
    CHECK(base == doctest::Approx(expected).epsilon(1e-12));

    CableParams doubled = cable;
    doubled.len_cb_m *= 2.0;
    CHECK(fsr(doubled) == doctest::Approx(0.5 * base).epsilon(1e-12));
}

TEST_CASE("standing mode lumped parameters") {
    const CableParams cable{};
    const StandingMode m10 = mode_params(cable, 10);
    CHECK(m10.l_m_nh == doctest::Approx(29.6).epsilon(1e-3)); // 29.613 from the geometry

    // C_m at a forced 4.45 GHz mode frequency
    const double w = units::ghz_to_rad(4.45);
    const double c_ff = 1.0 / (w * w * m10.l_m_nh * 1e-9) * 1e15;
    CHECK(c_ff == doctest::Approx(43.2).epsilon(2e-3));

    // C_m L_m w^2 = 1 exactly by construction
    const StandingMode m11 = mode_params(cable, 11);
    CHECK(m11.c_m_ff * 1e-15 * m11.l_m_nh * 1e-9 * m11.omega_rad * m11.omega_rad ==
          doctest::Approx(1.0).epsilon(1e-12));

    CHECK(m10.parity_sign == +1);
    CHECK(m11.parity_sign == -1);
    CHECK(m10.l_m_nh == m11.l_m_nh);

    const auto model = build_interconnect(cable, 8, 12);
    for (std::size_t i = 0; i + 1 < model.modes.size(); ++i) {
        CHECK(model.modes[i + 1].parity_sign == -model.modes[i].parity_sign);
        CHECK(model.modes[i + 1].omega_rad - model.modes[i].omega_rad ==
              doctest::Approx(model.omega_fsr_rad).epsilon(1e-12));
    }
}

TEST_CASE("tunable mutual inductance") {
    CouplerParams c{};
    c.delta_rad = std::numbers::pi / 2.0;
    CHECK(mutual_inductance(c) == 0.0);

    c.delta_rad = 0.0;
    CHECK(mutual_inductance(c) == doctest::Approx(0.04 / 1.06).epsilon(1e-12));

    // monotone increasing in cos(delta) on (0, 1]
    double prev = 0.0;
    for (int k = 40; k >= 0; --k) {
        c.delta_rad = std::numbers::pi / 2.0 * k / 41.0;
        const double m = mutual_inductance(c);
        CHECK(m >= prev);
        prev = m;
    }
}

TEST_CASE("coupling strength reaches the 5 MHz working point") {
    QubitParams q;
    q.label = "Q1A";
    q.omega10_ghz = 4.885;
    q.eta_ghz = -0.21;
    q.t1_us = 13.1;
    q.tphi_us = 6.8;
    const StandingMode mode = mode_params(CableParams{}, 11);

    CouplerParams c{};
    c.delta_rad = std::numbers::pi / 2.0;
    CHECK(coupling_strength(q, mode, c) == 0.0);

    c.delta_rad = 0.0;
    const double g_max = std::abs(coupling_strength(q, mode, c));
    CHECK(g_max > units::mhz_to_rad(5.0)); // the target is reachable

    const double delta = solve_coupler_bias(units::mhz_to_rad(5.0), q, mode, c);
    CHECK(delta > 0.0);
    CHECK(delta < std::numbers::pi / 2.0);
    c.delta_rad = delta;
    CHECK(std::abs(std::abs(coupling_strength(q, mode, c)) - units::mhz_to_rad(5.0)) <=
          units::two_pi * 1.0);
}

TEST_CASE("coupling scales as sqrt(w_m w_q)") {
    QubitParams q;
    q.label = "t";
    q.omega10_ghz = 4.4;
    q.t1_us = q.tphi_us = 10.0;
    CouplerParams c{};
    StandingMode mode = mode_params(CableParams{}, 10);

    const double g1 = coupling_strength(q, mode, c);
    QubitParams q2 = q;
    q2.omega10_ghz = 4.8;
    StandingMode mode2 = mode;
    mode2.omega_rad *= 1.1;
    const double g2 = coupling_strength(q2, mode2, c);
    const double expected =
        std::sqrt((mode2.omega_rad * units::ghz_to_rad(4.8)) /
                  (mode.omega_rad * units::ghz_to_rad(4.4)));
    CHECK(g2 / g1 == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("coupler bias solve endpoints and roundtrip") {
    QubitParams q;
    q.label = "t";
    q.omega10_ghz = 4.885;
    q.t1_us = q.tphi_us = 10.0;
    const StandingMode mode = mode_params(CableParams{}, 11);
    CouplerParams c{};

    CHECK(solve_coupler_bias(0.0, q, mode, c) == doctest::Approx(std::numbers::pi / 2.0));

    c.delta_rad = 0.0;
    const double g_max = std::abs(coupling_strength(q, mode, c));
    CHECK(solve_coupler_bias(g_max, q, mode, c) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK_THROWS_AS(solve_coupler_bias(g_max * 1.01, q, mode, c), RangeError);

    Rng rng(23);
    for (int rep = 0; rep < 20; ++rep) {
        const double delta = rng.uniform(1e-3, std::numbers::pi / 2.0 - 1e-3);
        c.delta_rad = delta;
        const double g = std::abs(coupling_strength(q, mode, c));
        const double recovered = solve_coupler_bias(g, q, mode, c);
        CHECK(std::abs(recovered - delta) < 1e-9);
    }
}

TEST_CASE("coupling strength is continuous across the off bias") {
    QubitParams q;
    q.label = "t";
    q.omega10_ghz = 4.885;
    q.t1_us = q.tphi_us = 10.0;
    const StandingMode mode = mode_params(CableParams{}, 11);
    CouplerParams c{};
    double prev = 0.0;
    bool first = true;
    for (int k = 0; k <= 2000; ++k) {
        c.delta_rad = std::numbers::pi / 2.0 * k / 2000.0;
        const double g = coupling_strength(q, mode, c);
        if (!first) CHECK(std::abs(g - prev) < 1e-3 * units::mhz_to_rad(5.0) + 1e-12);
        prev = g;
        first = false;
    }
    CHECK(std::abs(prev) < 1e-9);
}

TEST_CASE("qubit table loads Table S2 fields") {
    const auto table = load_qubit_table(std::string(QLINK_DATA_DIR) + "/table_s2.csv");
    CHECK(table.size() == 20);
    const QubitParams& q1a = find_qubit(table, "Q1A");
    CHECK(q1a.omega10_ghz == doctest::Approx(5.096));
    CHECK(q1a.t1_us == doctest::Approx(13.1));
    CHECK(q1a.tphi_us == doctest::Approx(6.8));
    CHECK(q1a.f0 == doctest::Approx(0.948));
    CHECK(q1a.f1 == doctest::Approx(0.920));
    const QubitParams& q3b = find_qubit(table, "Q3B");
    CHECK(q3b.t1_us == doctest::Approx(19.3));
    CHECK(q3b.tphi_us == doctest::Approx(6.4));
    CHECK_THROWS_AS(find_qubit(table, "Q9Z"), ValidationError);
    CHECK(q1a.alpha == doctest::Approx(5.3));
}

TEST_CASE("parameter validation") {
    QubitParams q;
    q.label = "bad";
    q.omega10_ghz = 4.5;
    q.t1_us = -1.0;
    q.tphi_us = 1.0;
    CHECK_THROWS_AS(q.validate(), ValidationError);

    CableParams cable{};
    cable.n_cpw = 3;
    CHECK_THROWS_AS(cable.validate(), ValidationError);
    CHECK_THROWS_AS(mode_params(CableParams{}, 0), ValidationError);
}
