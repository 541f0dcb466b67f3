#pragma once

// Discretization of the extended bulb model.
//
// Beams are labeled by the emission variable u = sin^2(theta_0) at the
// neutrinosphere and by the azimuth phi about the radial direction. A beam
// emitted at angle theta_0 from a sphere of radius R crosses radius r at the
// local polar angle theta(r) with sin(theta) = (R / r) sin(theta_0).

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "xflat/error.hpp"

namespace xflat {

struct GridConfig {
  std::size_t n_theta = 10000;
  std::size_t n_phi = 10;
  std::size_t n_energy = 100;
  std::size_t n_flavors = 2;
  double radius_ns = 10.0;
  double e_min = 1.0;
  double e_max = 60.0;
};

struct LocalAngle {
  double cos_theta;
  double sin_theta;
};

/// Unit propagation vector. Component 0 is radial, 1 and 2 are transverse.
using Direction = std::array<double, 3>;

inline constexpr Direction kRadialDirection{1.0, 0.0, 0.0};

/// Local propagation angle at radius r of the beam emitted with sin^2(theta_0) = u.
inline LocalAngle local_angle(double u, double r, double radius_ns) {
  if (!(r >= radius_ns)) {
    throw DomainError("local_angle: radius " + std::to_string(r) + " is inside the neutrinosphere (R = " +
                      std::to_string(radius_ns) + ")");
  }
  if (!(u > 0.0 && u <= 1.0)) {
    throw DomainError("local_angle: u = " + std::to_string(u) + " outside (0, 1]");
  }
  const double s = (radius_ns / r) * std::sqrt(u);
  // (1 - s)(1 + s) keeps cos accurate for nearly tangential beams.
  return {std::sqrt((1.0 - s) * (1.0 + s)), s};
}

inline Direction direction(const LocalAngle& angle, double phi) {
  return {angle.cos_theta, angle.sin_theta * std::cos(phi), angle.sin_theta * std::sin(phi)};
}

struct BeamCoord {
  double u;
  double phi;
};

/// 1 - v_i . v_j for two beams at radius r; in [0, 2].
inline double angle_factor(BeamCoord a, BeamCoord b, double r, double radius_ns) {
  const LocalAngle la = local_angle(a.u, r, radius_ns);
  const LocalAngle lb = local_angle(b.u, r, radius_ns);
  return 1.0 - (la.cos_theta * lb.cos_theta + la.sin_theta * lb.sin_theta * std::cos(a.phi - b.phi));
}

class Grid {
 public:
  static Grid build(const GridConfig& config) {
    if (config.n_theta < 1) throw ConfigError("grid.n_theta", "must be >= 1");
    if (config.n_phi < 1) throw ConfigError("grid.n_phi", "must be >= 1");
    if (config.n_energy < 1) throw ConfigError("grid.n_energy", "must be >= 1");
    if (config.n_flavors < 2) throw ConfigError("grid.n_flavors", "must be >= 2");
    if (!(config.radius_ns > 0.0) || !std::isfinite(config.radius_ns)) {
      throw ConfigError("grid.radius", "must be positive and finite");
    }
    if (!(config.e_min > 0.0)) throw ConfigError("grid.e_min", "must be positive");
    if (!(config.e_max > config.e_min) || !std::isfinite(config.e_max)) {
      throw ConfigError("grid.e_max", "must be finite and greater than grid.e_min");
    }

    Grid g;
    g.config_ = config;

    const double du = 1.0 / static_cast<double>(config.n_theta);
    g.u_nodes_.resize(config.n_theta);
    g.u_weights_.assign(config.n_theta, du);
    for (std::size_t i = 0; i < config.n_theta; ++i) {
      g.u_nodes_[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(config.n_theta);
    }

    const double dphi = 2.0 * std::numbers::pi / static_cast<double>(config.n_phi);
    g.phi_nodes_.resize(config.n_phi);
    g.phi_weights_.assign(config.n_phi, dphi);
    for (std::size_t j = 0; j < config.n_phi; ++j) {
      g.phi_nodes_[j] = (static_cast<double>(j) + 0.5) * dphi;
    }

    const double de = (config.e_max - config.e_min) / static_cast<double>(config.n_energy);
    g.e_nodes_.resize(config.n_energy);
    g.e_weights_.assign(config.n_energy, de);
    for (std::size_t k = 0; k < config.n_energy; ++k) {
      g.e_nodes_[k] = config.e_min + (static_cast<double>(k) + 0.5) * de;
    }
    return g;
  }

  const GridConfig& config() const noexcept { return config_; }
  std::size_t n_theta() const noexcept { return config_.n_theta; }
  std::size_t n_phi() const noexcept { return config_.n_phi; }
  std::size_t n_energy() const noexcept { return config_.n_energy; }
  std::size_t n_flavors() const noexcept { return config_.n_flavors; }
  double radius_ns() const noexcept { return config_.radius_ns; }
  double e_min() const noexcept { return config_.e_min; }
  double e_max() const noexcept { return config_.e_max; }

  std::span<const double> u_nodes() const noexcept { return u_nodes_; }
  std::span<const double> phi_nodes() const noexcept { return phi_nodes_; }
  std::span<const double> e_nodes() const noexcept { return e_nodes_; }
  std::span<const double> u_weights() const noexcept { return u_weights_; }
  std::span<const double> phi_weights() const noexcept { return phi_weights_; }
  std::span<const double> e_weights() const noexcept { return e_weights_; }

  LocalAngle local_angle(std::size_t theta, double r) const {
    return xflat::local_angle(u_nodes_.at(theta), r, config_.radius_ns);
  }

  Direction direction(std::size_t theta, std::size_t phi, double r) const {
    return xflat::direction(local_angle(theta, r), phi_nodes_.at(phi));
  }

 private:
  Grid() = default;

  GridConfig config_;
  std::vector<double> u_nodes_, phi_nodes_, e_nodes_;
  std::vector<double> u_weights_, phi_weights_, e_weights_;
};

}  // namespace xflat
