#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "flocksim/rng.hpp"

namespace flocksim {

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle to [-pi, pi).
inline double wrap_angle(double a) {
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  return w - kPi;
}

/// Planar pose and airspeed of one fixed-wing UAV.
struct UAVState {
  double x = 0.0;    // m
  double y = 0.0;    // m
  double psi = 0.0;  // heading, rad, wrapped to [-pi, pi)
  double phi = 0.0;  // roll, rad
  double v = 15.0;   // airspeed, m/s
};

struct KinematicsConfig {
  double alpha_g = 9.8;            // m/s^2
  double tau_phi = 0.5;            // s, roll setpoint response
  double tau_v = 1.0;              // s, speed setpoint response
  double phi_rate_max = kPi / 6.0;  // rad/s
  double accel_max = 2.0;          // m/s^2
  double dt_integrate = 0.1;       // s
  double control_period = 1.0;     // s
  double v_min = 12.0;             // m/s
  double v_max = 18.0;             // m/s
  double r_bd = kPi / 6.0;         // allowed roll magnitude, rad

  int substeps() const {
    return static_cast<int>(std::llround(control_period / dt_integrate));
  }

  void validate() const {
    if (alpha_g <= 0 || tau_phi <= 0 || tau_v <= 0 || phi_rate_max <= 0 ||
        accel_max <= 0 || dt_integrate <= 0 || control_period <= 0) {
      throw std::invalid_argument("kinematics: all constants must be positive");
    }
    if (!(v_min > 0) || !(v_max > v_min)) {
      throw std::invalid_argument("kinematics: need 0 < v_min < v_max");
    }
    if (r_bd <= 0 || r_bd >= kPi / 2.0) {
      throw std::invalid_argument("kinematics: r_bd must lie in (0, pi/2)");
    }
    const int n = substeps();
    if (n < 1 || std::abs(control_period - n * dt_integrate) > 1e-9) {
      throw std::invalid_argument(
          "kinematics: control_period must be an integer multiple of "
          "dt_integrate");
    }
  }
};

struct DisturbanceConfig {
  double sigma_x = 0.5;     // m/s
  double sigma_y = 0.5;     // m/s
  double sigma_psi = 0.05;  // rad/s

  void validate() const {
    if (sigma_x < 0 || sigma_y < 0 || sigma_psi < 0) {
      throw std::invalid_argument("disturbance: sigmas must be >= 0");
    }
  }
};

/// Per-UAV stochastic disturbance stream. Draws are consumed even when all
/// sigmas are zero, so toggling noise does not shift other streams.
class DisturbanceModel {
 public:
  DisturbanceModel(const DisturbanceConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(seed) {}

  /// One (eta_x, eta_y, eta_psi) sample, held constant for a control period.
  std::array<double, 3> sample() {
    const double gx = rng_.gaussian();
    const double gy = rng_.gaussian();
    const double gp = rng_.gaussian();
    return {cfg_.sigma_x * gx, cfg_.sigma_y * gy, cfg_.sigma_psi * gp};
  }

  const DisturbanceConfig& config() const { return cfg_; }

 private:
  DisturbanceConfig cfg_;
  Rng rng_;
};

/// Right-hand side of the kinematic model: (dx, dy, dpsi, dphi, dv).
/// Setpoint responses are rate-limited first-order lags.
inline std::array<double, 5> derivative(const UAVState& s, double phi_d,
                                        double v_d,
                                        const std::array<double, 3>& eta,
                                        const KinematicsConfig& cfg) {
  if (!(s.v > 0.0)) {
    throw std::domain_error("derivative: airspeed must be positive");
  }
  const double dx = s.v * std::cos(s.psi) + eta[0];
  const double dy = s.v * std::sin(s.psi) + eta[1];
  const double dpsi = -(cfg.alpha_g / s.v) * std::tan(s.phi) + eta[2];
  const double dphi = std::clamp((phi_d - s.phi) / cfg.tau_phi,
                                 -cfg.phi_rate_max, cfg.phi_rate_max);
  const double dv =
      std::clamp((v_d - s.v) / cfg.tau_v, -cfg.accel_max, cfg.accel_max);
  return {dx, dy, dpsi, dphi, dv};
}

/// Advances one control period with fixed-step Euler sub-integration.
/// The disturbance sample is drawn once and held across substeps.
inline UAVState step(const UAVState& state, double phi_d, double v_d,
                     DisturbanceModel& disturbance,
                     const KinematicsConfig& cfg) {
  const std::array<double, 3> eta = disturbance.sample();
  const int n = cfg.substeps();
  const double dt = cfg.dt_integrate;
  UAVState s = state;
  for (int i = 0; i < n; ++i) {
    const std::array<double, 5> d = derivative(s, phi_d, v_d, eta, cfg);
    s.x += dt * d[0];
    s.y += dt * d[1];
    s.psi = wrap_angle(s.psi + dt * d[2]);
    s.phi = std::clamp(s.phi + dt * d[3], -cfg.r_bd, cfg.r_bd);
    s.v = std::clamp(s.v + dt * d[4], cfg.v_min, cfg.v_max);
  }
  return s;
}

}  // namespace flocksim
