// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <vector>

#include "geometry.hpp"

namespace thzris {

// Combined absorption coefficient kappa(f) in 1/m. Either a constant or a
// table that is interpolated linearly and clamped at both ends.
struct AbsorptionModel {
  double constant_kappa = 0.0;
  std::vector<double> freqs;
  std::vector<double> kappas;
  mutable bool clamped = false;  // set when a lookup fell outside the table

  static AbsorptionModel constant(double kappa) {
    if (!(kappa >= 0.0)) throw config_error("absorption coefficient must be non-negative");
    AbsorptionModel m;
    m.constant_kappa = kappa;
    return m;
  }

  static AbsorptionModel table(std::vector<double> f, std::vector<double> k) {
    if (f.empty() || f.size() != k.size()) throw config_error("absorption table needs matching non-empty columns");
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!(k[i] >= 0.0)) throw config_error("absorption coefficient must be non-negative");
      if (i > 0 && !(f[i] > f[i - 1])) throw config_error("absorption table frequencies must increase strictly");
    }
    AbsorptionModel m;
    m.freqs = std::move(f);
    m.kappas = std::move(k);
    return m;
  }

  // Two columns frequency_hz,kappa_per_m with a header row.
  static AbsorptionModel load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open absorption table: " + path);
    std::string line;
    if (!std::getline(in, line)) throw config_error("absorption table is empty: " + path);
    std::vector<double> f, k;
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ss(line);
      double a, b;
      if (!(ss >> a >> b)) throw config_error(path + ":" + std::to_string(lineno) + ": expected two numbers");
      f.push_back(a);
      k.push_back(b);
    }
    return table(std::move(f), std::move(k));
  }

  bool is_table() const { return !freqs.empty(); }

  double kappa(double f) const {
    if (!is_table()) return constant_kappa;
    if (f <= freqs.front()) {
      clamped = clamped || f < freqs.front();
      return kappas.front();
    }
    if (f >= freqs.back()) {
      clamped = clamped || f > freqs.back();
      return kappas.back();
    }
    const auto it = std::upper_bound(freqs.begin(), freqs.end(), f);
    const std::size_t i = std::size_t(it - freqs.begin());
    const double t = (f - freqs[i - 1]) / (freqs[i] - freqs[i - 1]);
    return kappas[i - 1] + t * (kappas[i] - kappas[i - 1]);
  }
};

struct FrequencyGrid {
  double fc = 300e9;
  double total_bandwidth = 5e9;
  int n_subbands = 4;
  double subband_bandwidth = 10e6;

  void validate() const {
    if (!(fc > 0.0)) throw config_error("carrier frequency must be positive");
    if (n_subbands < 1) throw config_error("need at least one sub-band");
    if (!(total_bandwidth >= 0.0)) throw config_error("bandwidth must be non-negative");
    if (!(subband_bandwidth > 0.0)) throw config_error("sub-band bandwidth must be positive");
    if (n_subbands > 1 && subband_bandwidth > total_bandwidth / n_subbands)
      throw config_error("sub-band bandwidth exceeds total_bandwidth / n_subbands");
  }

  // f_m = fc + (2m - 1 - M) BW / (2M) with m counted from 1; here m is 0-based.
  double center(int m) const {
    const int M = n_subbands;
    return fc + double(2 * (m + 1) - 1 - M) * total_bandwidth / (2.0 * M);
  }
};

struct BlockageSegment {
  Point2 base;
  Point2 tip;  // diffracting edge
};

struct TargetSpec {
  Point2 position;
  std::vector<double> rcs;  // fixed per-bin values; empty means Gaussian draws
};

enum class SnrReference {
  transmit,  // P_t = SNR * sigma^2
  echo,      // P_t = SNR * sigma^2 / |l_tot(fc)|^2 at snr_reference_point
};

enum class DepthSign { signed_depth, absolute_depth };

struct Scenario {
  Point2 p_tx{2.0, 1.0};
  Point2 p_ris{3.25, 0.25};
  Point2 p_rx{6.75, 0.25};
  std::optional<BlockageSegment> blockage = BlockageSegment{{5.0, 0.0}, {5.0, 1.875}};
  std::vector<TargetSpec> targets;

  int n_tx = 32;
  int n_ris = 16;
  int n_rx = 16;
  double spacing = 0.0;  // 0 selects half the carrier wavelength

  FrequencyGrid grid;
  AbsorptionModel absorption;

  double n0 = std::pow(10.0, -14.4);  // W/Hz
  double noise_bandwidth = 0.0;       // 0 selects the sub-band bandwidth
  double rcs_variance = 2.5;

  double snr_db = 30.0;
  SnrReference snr_reference = SnrReference::echo;
  Point2 snr_reference_point{5.25, 3.75};

  int snapshots = 10;
  int rx_res = 180;

  bool noise = true;
  bool diffraction_path1 = true;
  bool diffraction_path2 = true;
  bool subtraction = true;
  bool reradiation = true;  // off zeroes every H_rad term regardless of kappa
  DepthSign path2_depth = DepthSign::absolute_depth;

  int n_bins() const { return grid.n_subbands; }
  double freq(int m) const { return grid.center(m); }
  double spacing_m() const { return spacing > 0.0 ? spacing : kSpeedOfLight / (2.0 * grid.fc); }

  ArrayConfig tx_array() const { return {n_tx, spacing_m(), p_tx}; }
  ArrayConfig ris_array() const { return {n_ris, spacing_m(), p_ris}; }
  ArrayConfig rx_array() const { return {n_rx, spacing_m(), p_rx}; }

  // Tx looks at the RIS; the RIS sees the Tx at phi_tx.
  double theta_ris() const { return angles_from_positions(p_tx, p_ris); }
  double phi_tx() const { return angles_from_positions(p_ris, p_tx); }
  double aod(int k) const { return angles_from_positions(p_ris, targets.at(std::size_t(k)).position); }
  double aoa(int k) const { return angles_from_positions(p_rx, targets.at(std::size_t(k)).position); }

  double noise_variance() const { return n0 * (noise_bandwidth > 0.0 ? noise_bandwidth : grid.subband_bandwidth); }

  void validate() const {
    grid.validate();
    tx_array().validate();
    ris_array().validate();
    rx_array().validate();
    if (!(n0 > 0.0)) throw config_error("noise spectral density must be positive");
    if (snapshots < 1) throw config_error("snapshots must be at least 1");
    if (rx_res < 2) throw config_error("rx_res must be at least 2");
    if (!(rcs_variance >= 0.0)) throw config_error("rcs variance must be non-negative");
    if (p_tx == p_ris || p_rx == p_ris || p_tx == p_rx) throw degenerate_geometry("anchors must be distinct");
    if (blockage && blockage->base == blockage->tip) throw config_error("blockage base and tip coincide");
    for (const auto& t : targets) {
      if (t.position == p_ris || t.position == p_rx) throw degenerate_geometry("target colocated with an anchor");
      if (!t.rcs.empty() && int(t.rcs.size()) != n_bins()) throw config_error("fixed rcs needs one value per bin");
    }
  }
};

}  // namespace thzris
