// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>

#include "thz_channel.hpp"

namespace thzris {

struct FresnelCS {
  double C = 0.0;
  double S = 0.0;
};

// C(x) = int_0^x cos(pi t^2 / 2) dt, S(x) = int_0^x sin(pi t^2 / 2) dt.
// Power series near the origin, Lentz continued fraction for the
// complementary error function beyond.
inline FresnelCS fresnel_cs(double x) {
  if (!std::isfinite(x)) {
    if (std::isnan(x)) throw std::invalid_argument("fresnel_cs: NaN argument");
    return x > 0 ? FresnelCS{0.5, 0.5} : FresnelCS{-0.5, -0.5};
  }
  const double ax = std::abs(x);
  const double eps = std::numeric_limits<double>::epsilon();
  FresnelCS r;
  if (ax < 1e-150) {
    r = {ax, 0.0};
  } else if (ax <= 1.5) {
    // t_k = x (pi x^2 / 2)^k / k!; even k feed C, odd k feed S, each over (2k+1).
    const double z = 0.5 * kPi * ax * ax;
    double term = ax, c = ax, s = 0.0;
    for (int k = 1; k < 200; ++k) {
      term *= z / k;
      const double contrib = term / (2 * k + 1);
      const int q = k / 2;
      const double sign = (q % 2 == 0) ? 1.0 : -1.0;
      if (k % 2 == 0)
        c += sign * contrib;
      else
        s += sign * contrib;
      if (contrib < eps * std::abs(k % 2 == 0 ? c : s) && k > 4) break;
    }
    r = {c, s};
  } else {
    const double pix2 = kPi * ax * ax;
    const double tiny = 1e-300;
    cd b(1.0, -pix2);
    cd cc(1.0 / tiny, 0.0);
    cd d = 1.0 / b;
    cd h = d;
    int n = -1;
    for (int k = 2; k < 1000; ++k) {
      n += 2;
      const double a = -double(n) * (n + 1);
      b += 4.0;
      d = 1.0 / (a * d + b);
      cc = b + a / cc;
      const cd del = cc * d;
      h *= del;
      if (std::abs(del.real() - 1.0) + std::abs(del.imag()) < eps) break;
    }
    h *= cd(ax, -ax);
    const cd cs = cd(0.5, 0.5) * (1.0 - std::polar(1.0, 0.5 * pix2) * h);
    r = {cs.real(), cs.imag()};
  }
  if (x < 0) r = {-r.C, -r.S};
  return r;
}

struct DiffractionGeometry {
  double d1 = 0.0;
  double d2 = 0.0;
  double h = 0.0;         // positive when the edge obstructs the chord
  bool crosses = true;    // false when both ends lie on the same side of the blockage line
};

// nu = h sqrt((2 / lambda)(1/d1 + 1/d2))
inline double fresnel_param(const DiffractionGeometry& g, double wavelength) {
  if (!(wavelength > 0.0)) throw std::invalid_argument("fresnel_param: wavelength must be positive");
  return g.h * std::sqrt((2.0 / wavelength) * (1.0 / g.d1 + 1.0 / g.d2));
}

inline double knife_edge_loss(double nu) {
  const FresnelCS f = fresnel_cs(nu);
  const double a = 1.0 - f.C - f.S, b = f.C - f.S;
  return std::sqrt((a * a + b * b) / 4.0);
}

inline double cross(const Point2& a, const Point2& b) { return a.x * b.y - a.y * b.x; }

// Projection of the edge onto the tx-rx chord.
inline DiffractionGeometry diffraction_geometry(const Point2& tx, const Point2& rx, const BlockageSegment& blk) {
  const Point2 chord = rx - tx;
  const double len = norm(chord);
  if (len == 0.0) throw degenerate_geometry("diffraction_geometry: coincident end points");
  const Point2 u = chord * (1.0 / len);
  const Point2 edge = blk.tip - blk.base;
  DiffractionGeometry g;
  const double side_tx = cross(edge, tx - blk.base), side_rx = cross(edge, rx - blk.base);
  g.crosses = side_tx * side_rx < 0.0;
  const double along = dot(blk.tip - tx, u);
  g.d1 = along;
  g.d2 = len - along;
  const double s_tip = cross(u, blk.tip - tx);
  const double s_base = cross(u, blk.base - tx);
  g.h = (s_tip - s_base) >= 0.0 ? s_tip : -s_tip;
  if (g.crosses && (!(g.d1 > 0.0) || !(g.d2 > 0.0))) g.crosses = false;
  return g;
}

// l(nu) for the path tx -> end at frequency f; unobstructed chords give 1.
inline double path_diffraction_loss(const Point2& tx, const Point2& end, const BlockageSegment& blk, double freq,
                                    DepthSign sign = DepthSign::signed_depth) {
  DiffractionGeometry g = diffraction_geometry(tx, end, blk);
  if (!g.crosses) return 1.0;
  if (sign == DepthSign::absolute_depth) g.h = std::abs(g.h);
  return knife_edge_loss(fresnel_param(g, kSpeedOfLight / freq));
}

inline double nu1(const Scenario& sc, int m) {
  const DiffractionGeometry g = diffraction_geometry(sc.p_tx, sc.p_rx, sc.blockage.value());
  return fresnel_param(g, kSpeedOfLight / sc.freq(m));
}

// H_diff,1[m] = l(nu_1^m) (l_TxRx a_Rx(phi_a) a_Tx(theta_a)^H + H_rad): N_Rx x N_Tx
inline cmat diff_path1_channel(const Scenario& sc, int m, Rng& rng) {
  if (!sc.blockage) throw config_error("diff_path1_channel: scenario has no blockage");
  const double f = sc.freq(m);
  const double d = distance(sc.p_tx, sc.p_rx);
  const double loss = path_diffraction_loss(sc.p_tx, sc.p_rx, *sc.blockage, f);
  const cd l = channel_gain(sc.absorption, f, d).value();
  const double theta_a = angles_from_positions(sc.p_tx, sc.p_rx);
  const double phi_a = angles_from_positions(sc.p_rx, sc.p_tx);
  cmat H = l * steering_vector(sc.rx_array(), phi_a, f) * steering_vector(sc.tx_array(), theta_a, f).adjoint();
  H += rerad_matrix(sc.n_rx, sc.n_tx, (sc.reradiation ? rerad_amplitude(sc.absorption, f, {d}) : 0.0), rng);
  return loss * H;
}

// l(nu_2^m) (l_Tx-k-Rx a_Rx(phi_k) a_Tx(theta_b)^H + H_rad) without the RCS
// and without the displacement phase. The virtual receiver of the knife-edge
// geometry sits at the target.
inline cmat diff_path2_base(const Scenario& sc, int k, int m, Rng& rng) {
  if (!sc.blockage) throw config_error("diff_path2_channel: scenario has no blockage");
  const double f = sc.freq(m);
  const Point2 p = sc.targets.at(std::size_t(k)).position;
  const double d1 = distance(sc.p_tx, p), d2 = distance(p, sc.p_rx);
  const double loss = path_diffraction_loss(sc.p_tx, p, *sc.blockage, f, sc.path2_depth);
  const cd l = cascaded_gain(sc.absorption, f, {d1, d2}).value();
  const double theta_b = angles_from_positions(sc.p_tx, p);
  cmat H = l * steering_vector(sc.rx_array(), sc.aoa(k), f) * steering_vector(sc.tx_array(), theta_b, f).adjoint();
  H += rerad_matrix(sc.n_rx, sc.n_tx, (sc.reradiation ? rerad_amplitude(sc.absorption, f, {d1, d2}) : 0.0), rng);
  return loss * H;
}

// Full path-2 matrix with a fresh displacement phase exp(j 2 pi beta_d).
inline cmat diff_path2_channel(const Scenario& sc, int k, int m, Rng& rng) {
  cmat H = diff_path2_base(sc, k, m, rng);
  std::uniform_real_distribution<double> beta(0.0, 1.0);
  return H * std::polar(1.0, 2.0 * kPi * beta(rng));
}

}  // namespace thzris
