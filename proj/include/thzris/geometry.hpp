// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>

#include "common.hpp"

namespace thzris {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  Point2 operator+(const Point2& o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(const Point2& o) const { return {x - o.x, y - o.y}; }
  Point2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Point2&) const = default;
};

inline double dot(const Point2& a, const Point2& b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Point2& a) { return std::hypot(a.x, a.y); }
inline double distance(const Point2& a, const Point2& b) { return norm(b - a); }

// Uniform linear array laid out along the shared reference line.
struct ArrayConfig {
  int n_elements = 1;
  double spacing = 0.0;  // meters
  Point2 origin;

  void validate() const {
    if (n_elements < 1) throw config_error("array needs at least one element");
    if (!(spacing > 0.0) || !std::isfinite(spacing)) throw config_error("array spacing must be positive");
  }
};

// [a]_i = exp(-j 2 pi dx (i-1) (f/c) cos(angle))
inline cvec steering_vector(const ArrayConfig& cfg, double angle, double freq) {
  if (!std::isfinite(angle) || !std::isfinite(freq)) throw std::invalid_argument("steering_vector: non-finite input");
  if (!(freq > 0.0)) throw std::invalid_argument("steering_vector: frequency must be positive");
  cvec a(cfg.n_elements);
  const double k = -2.0 * kPi * cfg.spacing * (freq / kSpeedOfLight) * std::cos(angle);
  for (int i = 0; i < cfg.n_elements; ++i) a(i) = std::polar(1.0, k * i);
  return a;
}

// Derivative of the steering vector with respect to the angle.
inline cvec steering_derivative(const ArrayConfig& cfg, double angle, double freq) {
  cvec a = steering_vector(cfg, angle, freq);
  const double dk = 2.0 * kPi * cfg.spacing * (freq / kSpeedOfLight) * std::sin(angle);
  for (int i = 0; i < cfg.n_elements; ++i) a(i) *= kJ * (dk * i);
  return a;
}

// Steering matrix with one column per angle.
inline cmat steering_matrix(const ArrayConfig& cfg, const rvec& angles, double freq) {
  cmat A(cfg.n_elements, angles.size());
  for (Eigen::Index c = 0; c < angles.size(); ++c) A.col(c) = steering_vector(cfg, angles(c), freq);
  return A;
}

// Heading of b - a folded into [0, pi]. The cos() phase model cannot tell
// a direction from its mirror image across the reference line.
inline double angles_from_positions(const Point2& a, const Point2& b) {
  const Point2 d = b - a;
  if (d.x == 0.0 && d.y == 0.0) throw degenerate_geometry("angles_from_positions: coincident points");
  return std::abs(std::atan2(d.y, d.x));
}

// Partial derivatives of angles_from_positions(anchor, p) with respect to p.
inline std::pair<double, double> angle_gradient(const Point2& anchor, const Point2& p) {
  const Point2 d = p - anchor;
  const double r2 = dot(d, d);
  if (r2 == 0.0) throw degenerate_geometry("angle_gradient: target colocated with anchor");
  const double s = d.y < 0.0 ? -1.0 : 1.0;
  return {-s * d.y / r2, s * d.x / r2};
}

inline constexpr double kParallelTolerance = 1e-12;

// Intersection of the AoD ray from the RIS and the AoA ray from the receiver.
inline Point2 intersect_rays(const Point2& p_ris, double aod, const Point2& p_rx, double aoa) {
  const double u1 = std::cos(aoa), u2 = std::sin(aoa);
  const double v1 = std::cos(aod), v2 = std::sin(aod);
  // p_rx + c1 u = p_ris + c2 v  =>  [u, -v] c = p_ris - p_rx
  const double det = -u1 * v2 + v1 * u2;
  if (std::abs(det) <= kParallelTolerance) throw parallel_rays("intersect_rays: parallel rays");
  const double q1 = p_ris.x - p_rx.x, q2 = p_ris.y - p_rx.y;
  const double c1 = (-v2 * q1 + v1 * q2) / det;
  return {p_rx.x + c1 * u1, p_rx.y + c1 * u2};
}

// Half-cell widths used by the resolution-limited error floor.
inline double aod_error_bound(int L, int S) { return kPi / (2.0 * std::pow(double(L), double(S))); }
inline double aoa_error_bound(int rx_res) { return kPi / (2.0 * rx_res); }

inline void validate_floor_args(int L, int S, int rx_res) {
  if (L < 2 || S < 1 || rx_res < 1) throw config_error("error_floor: need L >= 2, S >= 1, rx_res >= 1");
}

// Position error when both angles are quantized downward to the nearest
// multiple of their half-cell width.
inline double deterministic_error_floor(const Point2& p_ris, const Point2& p_rx, const Point2& target, int L, int S,
                                        int rx_res) {
  validate_floor_args(L, S, rx_res);
  const double theta = angles_from_positions(p_ris, target);
  const double phi = angles_from_positions(p_rx, target);
  const double th = aod_error_bound(L, S), ph = aoa_error_bound(rx_res);
  const double dtheta = std::fmod(theta, th), dphi = std::fmod(phi, ph);
  if (dtheta == 0.0 && dphi == 0.0) return 0.0;
  const Point2 est = intersect_rays(p_ris, theta - dtheta, p_rx, phi - dphi);
  return distance(est, target);
}

// RMSE of the position under independent uniform angle errors in [0, bound].
inline double statistical_error_floor(const Point2& p_ris, const Point2& p_rx, const Point2& target, int L, int S,
                                      int rx_res, int draws = 100000, std::uint64_t seed = 1) {
  validate_floor_args(L, S, rx_res);
  if (draws < 1) throw config_error("statistical_error_floor: draws must be positive");
  const double theta = angles_from_positions(p_ris, target);
  const double phi = angles_from_positions(p_rx, target);
  const double th = aod_error_bound(L, S), ph = aoa_error_bound(rx_res);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double acc = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double dt = u(rng) * th, dp = u(rng) * ph;
    const Point2 est = intersect_rays(p_ris, theta - dt, p_rx, phi - dp);
    const Point2 e = est - target;
    acc += dot(e, e);
  }
  return std::sqrt(acc / draws);
}

}  // namespace thzris
