// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "diffraction.hpp"
#include "ris_codebook.hpp"

namespace thzris {

// x[m] = sqrt(P_t) (1/N_Tx) a_Tx(theta_RIS, m)
inline cvec transmit_vector(const Scenario& sc, int m) {
  const double pt = transmit_power(sc);
  if (!(pt > 0.0)) throw std::invalid_argument("transmit_vector: transmit power must be positive");
  return (std::sqrt(pt) / sc.n_tx) * steering_vector(sc.tx_array(), sc.theta_ris(), sc.freq(m));
}

// Everything that stays fixed during one trial. Draw order: RCS (target,
// bin), then re-radiation phases (H_Tx bins, H_Rx per target bins, path-1
// bins, path-2 per target bins). Displacement phases and noise are drawn per
// transmission.
struct Realization {
  std::vector<std::vector<double>> rcs;   // [k][m]
  std::vector<cvec> incident;             // H_Tx[m] x[m], N_RIS
  std::vector<std::vector<cmat>> h_rx;    // [k][m], N_Rx x N_RIS
  std::vector<cvec> path1;                // H_diff,1[m] x[m], N_Rx; empty when disabled
  std::vector<std::vector<cvec>> path2;   // [k][m] base path-2 response to x[m]; empty when disabled
};

inline std::vector<std::vector<double>> draw_rcs(const Scenario& sc, Rng& rng) {
  std::normal_distribution<double> g(0.0, std::sqrt(sc.rcs_variance));
  std::vector<std::vector<double>> rcs(sc.targets.size());
  for (std::size_t k = 0; k < sc.targets.size(); ++k) {
    const auto& t = sc.targets[k];
    rcs[k].resize(std::size_t(sc.n_bins()));
    for (int m = 0; m < sc.n_bins(); ++m) rcs[k][std::size_t(m)] = t.rcs.empty() ? g(rng) : t.rcs[std::size_t(m)];
  }
  return rcs;
}

inline Realization draw_realization(const Scenario& sc, Rng& rng) {
  sc.validate();
  Realization r;
  const int M = sc.n_bins();
  const int K = int(sc.targets.size());
  r.rcs = draw_rcs(sc, rng);
  std::vector<cvec> x(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) x[std::size_t(m)] = transmit_vector(sc, m);
  for (int m = 0; m < M; ++m) r.incident.push_back(build_tx_ris_channel(sc, m, rng) * x[std::size_t(m)]);
  r.h_rx.resize(std::size_t(K));
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m) r.h_rx[std::size_t(k)].push_back(build_ris_target_rx_channel(sc, k, m, rng));
  if (sc.blockage && sc.diffraction_path1)
    for (int m = 0; m < M; ++m) r.path1.push_back(diff_path1_channel(sc, m, rng) * x[std::size_t(m)]);
  if (sc.blockage && sc.diffraction_path2) {
    r.path2.resize(std::size_t(K));
    for (int k = 0; k < K; ++k)
      for (int m = 0; m < M; ++m) r.path2[std::size_t(k)].push_back(diff_path2_base(sc, k, m, rng) * x[std::size_t(m)]);
  }
  return r;
}

// Echo of target k through the RIS under Psi: sigma_k H_Rx,k Psi H_Tx x.
inline cvec target_path(const Realization& r, const cvec& psi, int k, int m) {
  const auto km = std::size_t(k), mm = std::size_t(m);
  return r.rcs[km][mm] * (r.h_rx[km][mm] * psi.cwiseProduct(r.incident[mm]));
}

// Noise-free part of one snapshot given the displacement phases of this
// transmission.
inline cvec noiseless_snapshot(const Scenario& sc, const Realization& r, const cvec& psi, int m,
                               const std::vector<cd>& displacement) {
  cvec y = cvec::Zero(sc.n_rx);
  for (std::size_t k = 0; k < sc.targets.size(); ++k) {
    y += target_path(r, psi, int(k), m);
    if (!r.path2.empty()) y += (r.rcs[k][std::size_t(m)] * displacement[k]) * r.path2[k][std::size_t(m)];
  }
  if (!r.path1.empty()) y += r.path1[std::size_t(m)];
  return y;
}

inline std::vector<cd> draw_displacement(const Scenario& sc, const Realization& r, Rng& rng) {
  std::vector<cd> ph(sc.targets.size(), cd(1.0, 0.0));
  if (r.path2.empty()) return ph;
  std::uniform_real_distribution<double> beta(0.0, 1.0);
  for (auto& p : ph) p = std::polar(1.0, 2.0 * kPi * beta(rng));
  return ph;
}

// Circular complex Gaussian noise, N_Rx x B per bin, drawn snapshot-major.
inline void add_noise(const Scenario& sc, std::vector<cmat>& Y, Rng& rng) {
  if (!sc.noise) return;
  std::normal_distribution<double> g(0.0, std::sqrt(sc.noise_variance() / 2.0));
  const Eigen::Index B = Y.front().cols();
  for (Eigen::Index b = 0; b < B; ++b)
    for (auto& Ym : Y)
      for (Eigen::Index i = 0; i < Ym.rows(); ++i) {
        const double re = g(rng);
        const double im = g(rng);
        Ym(i, b) += cd(re, im);
      }
}

// One RIS configuration held for B snapshots: per-bin N_Rx x B matrices.
inline std::vector<cmat> synthesize_transmission(const Scenario& sc, const Realization& r, const cvec& psi, Rng& rng,
                                                 int B) {
  const std::vector<cd> disp = draw_displacement(sc, r, rng);
  std::vector<cmat> Y(std::size_t(sc.n_bins()));
  for (int m = 0; m < sc.n_bins(); ++m) {
    const cvec y = noiseless_snapshot(sc, r, psi, m, disp);
    Y[std::size_t(m)] = y.replicate(1, B);
  }
  add_noise(sc, Y, rng);
  return Y;
}

inline std::vector<cmat> synthesize_snapshot(const Scenario& sc, const Realization& r, const Codeword& cw, Rng& rng) {
  return synthesize_transmission(sc, r, cw.psi(), rng, 1);
}

// Calibration with the retro-steer codeword, averaged over its snapshots.
inline std::vector<cvec> synthesize_calibration(const Scenario& sc, const Realization& r, Rng& rng, int B) {
  const std::vector<cmat> Y = synthesize_transmission(sc, r, retro_codeword(sc).psi(), rng, B);
  std::vector<cvec> out;
  for (const auto& Ym : Y) out.push_back(Ym.rowwise().mean());
  return out;
}

inline std::vector<cmat> background_subtract(const std::vector<cmat>& Y, const std::vector<cvec>& yd) {
  if (Y.size() != yd.size()) throw std::invalid_argument("background_subtract: bin count mismatch");
  std::vector<cmat> out(Y.size());
  for (std::size_t m = 0; m < Y.size(); ++m) {
    if (Y[m].rows() != yd[m].size()) throw std::invalid_argument("background_subtract: dimension mismatch");
    out[m] = Y[m].colwise() - yd[m];
  }
  return out;
}

}  // namespace thzris
