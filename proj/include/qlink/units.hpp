#pragma once

#include <numbers>

// Unit conventions: configuration files and user-facing parameters use
// GHz / MHz / ns / us; everything internal is angular frequency in rad/s
// and time in seconds. All conversions live here.
namespace qlink::units {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

constexpr double ghz_to_rad(double f_ghz) { return two_pi * f_ghz * 1e9; }
constexpr double mhz_to_rad(double f_mhz) { return two_pi * f_mhz * 1e6; }
constexpr double rad_to_ghz(double w) { return w / (two_pi * 1e9); }
constexpr double rad_to_mhz(double w) { return w / (two_pi * 1e6); }

constexpr double ns_to_s(double t_ns) { return t_ns * 1e-9; }
constexpr double us_to_s(double t_us) { return t_us * 1e-6; }
constexpr double s_to_ns(double t) { return t * 1e9; }
constexpr double s_to_us(double t) { return t * 1e6; }

// Q = omega * T and back.
constexpr double q_from_lifetime(double w, double t) { return w * t; }
constexpr double lifetime_from_q(double q, double w) { return q / w; }

} // namespace qlink::units
