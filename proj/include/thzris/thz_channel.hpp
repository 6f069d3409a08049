// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>

#include "scenario.hpp"

namespace thzris {

using Rng = std::mt19937_64;

inline void require_positive_distance(double d, const char* who) {
  if (!(d > 0.0) || !std::isfinite(d)) throw std::invalid_argument(std::string(who) + ": distance must be positive");
}

// (4 pi f d / c)^2
inline double fspl(double freq, double dist) {
  require_positive_distance(dist, "fspl");
  if (!(freq > 0.0)) throw std::invalid_argument("fspl: frequency must be positive");
  const double r = 4.0 * kPi * freq * dist / kSpeedOfLight;
  return r * r;
}

inline double atm_loss(const AbsorptionModel& model, double freq, double dist) {
  if (!(dist >= 0.0)) throw std::invalid_argument("atm_loss: distance must be non-negative");
  return std::exp(model.kappa(freq) * dist);
}

struct PathGain {
  double amplitude = 0.0;
  double phase = 0.0;  // radians, applied as exp(-j phase)

  cd value() const { return std::polar(amplitude, -phase); }
};

inline PathGain channel_gain(const AbsorptionModel& model, double freq, double dist) {
  require_positive_distance(dist, "channel_gain");
  PathGain g;
  g.amplitude = kSpeedOfLight / (4.0 * kPi * freq * dist) * std::exp(-model.kappa(freq) * dist / 2.0);
  g.phase = 2.0 * kPi * dist * freq / kSpeedOfLight;
  return g;
}

// Product of hop gains along a multi-hop path.
inline PathGain cascaded_gain(const AbsorptionModel& model, double freq, std::initializer_list<double> hops) {
  PathGain g{1.0, 0.0};
  for (double d : hops) {
    const PathGain h = channel_gain(model, freq, d);
    g.amplitude *= h.amplitude;
    g.phase += h.phase;
  }
  return g;
}

// Magnitude of the re-radiated component over a path made of the given hops.
inline double rerad_amplitude(const AbsorptionModel& model, double freq, std::initializer_list<double> hops) {
  double total = 0.0, fs = 1.0;
  for (double d : hops) {
    require_positive_distance(d, "rerad_amplitude");
    total += d;
    fs *= kSpeedOfLight / (4.0 * kPi * freq * d);
  }
  return std::sqrt(1.0 - std::exp(-model.kappa(freq) * total)) * fs;
}

inline cd rerad_coefficient(const AbsorptionModel& model, double freq, double dist, Rng& rng) {
  const double amp = rerad_amplitude(model, freq, {dist});
  std::uniform_real_distribution<double> beta(0.0, 1.0);
  return std::polar(amp, 2.0 * kPi * beta(rng));
}

// Independent random-phase entries of equal magnitude. Nothing is drawn when
// the magnitude is zero, so a kappa = 0 scene consumes no random numbers here.
inline cmat rerad_matrix(int rows, int cols, double amplitude, Rng& rng) {
  cmat H = cmat::Zero(rows, cols);
  if (amplitude == 0.0) return H;
  std::uniform_real_distribution<double> beta(0.0, 1.0);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) H(r, c) = std::polar(amplitude, 2.0 * kPi * beta(rng));
  return H;
}

// |l_tot(fc)|^2 of the Tx -> RIS -> p -> Rx path.
inline double echo_reference_gain(const Scenario& sc, const Point2& p) {
  const PathGain g = cascaded_gain(sc.absorption, sc.grid.fc,
                                   {distance(sc.p_tx, sc.p_ris), distance(sc.p_ris, p), distance(p, sc.p_rx)});
  return g.amplitude * g.amplitude;
}

inline double transmit_power(const Scenario& sc) {
  const double p = db_to_linear(sc.snr_db) * sc.noise_variance();
  if (sc.snr_reference == SnrReference::transmit) return p;
  return p / echo_reference_gain(sc, sc.snr_reference_point);
}

// H_Tx[m]: N_RIS x N_Tx
inline cmat build_tx_ris_channel(const Scenario& sc, int m, Rng& rng) {
  const double f = sc.freq(m);
  const double d = distance(sc.p_tx, sc.p_ris);
  const cd l = channel_gain(sc.absorption, f, d).value();
  cmat H = l * steering_vector(sc.ris_array(), sc.phi_tx(), f) *
           steering_vector(sc.tx_array(), sc.theta_ris(), f).adjoint();
  H += rerad_matrix(sc.n_ris, sc.n_tx, (sc.reradiation ? rerad_amplitude(sc.absorption, f, {d}) : 0.0), rng);
  return H;
}

// H_Rx,k[m]: N_Rx x N_RIS, RIS -> target k -> Rx without the RCS.
inline cmat build_ris_target_rx_channel(const Scenario& sc, int k, int m, Rng& rng) {
  const double f = sc.freq(m);
  const Point2 p = sc.targets.at(std::size_t(k)).position;
  const double d1 = distance(sc.p_ris, p), d2 = distance(p, sc.p_rx);
  const cd l = cascaded_gain(sc.absorption, f, {d1, d2}).value();
  cmat H = l * steering_vector(sc.rx_array(), sc.aoa(k), f) * steering_vector(sc.ris_array(), sc.aod(k), f).adjoint();
  H += rerad_matrix(sc.n_rx, sc.n_ris, (sc.reradiation ? rerad_amplitude(sc.absorption, f, {d1, d2}) : 0.0), rng);
  return H;
}

}  // namespace thzris
