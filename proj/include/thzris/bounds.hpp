// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>
#include <vector>

#include "mle_refine.hpp"

namespace thzris {

// Partials of model_mean for one target at bin m.
struct MuPartials {
  cvec d_theta;
  cvec d_phi;
  cvec d_rho_re;
  cvec d_rho_im;
};

inline MuPartials mu_derivatives(const TargetParams& t, cd gain, const Scenario& sc, const cvec& psi, int m) {
  const double f = sc.freq(m);
  const ArrayConfig ris = sc.ris_array(), rx = sc.rx_array();
  const cvec w = psi.cwiseProduct(steering_vector(ris, sc.phi_tx(), f));
  const cd s = steering_vector(ris, t.theta, f).dot(w);
  const cd ds = steering_derivative(ris, t.theta, f).dot(w);
  const cvec arx = steering_vector(rx, t.phi, f);
  const cd rho = t.rho.at(std::size_t(m));
  MuPartials p;
  p.d_rho_re = (gain * s) * arx;
  p.d_rho_im = kJ * p.d_rho_re;
  p.d_theta = (rho * gain * ds) * arx;
  p.d_phi = (rho * gain * s) * steering_derivative(rx, t.phi, f);
  return p;
}

// Parameters per target: [theta, phi, Re rho_0, Im rho_0, ..., Re rho_{M-1},
// Im rho_{M-1}], targets stacked in order.
inline int params_per_target(const Scenario& sc) { return 2 + 2 * sc.n_bins(); }

// One transmission of the FIM sum: its RIS configuration and snapshot count.
struct FimShot {
  cvec psi;  // as seen by the model (effective_psi applied by the caller)
  int snapshots = 1;
};

// J = (2 / sigma^2) sum_xi sum_m Re(dmu^H dmu).
inline rmat fim_channel(const std::vector<TargetParams>& ts, const std::vector<cd>& gains, const Scenario& sc,
                        const std::vector<FimShot>& shots, double sigma2) {
  if (shots.empty()) throw std::invalid_argument("fim_channel: need at least one transmission");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("fim_channel: noise variance must be positive");
  const int P = params_per_target(sc), K = int(ts.size());
  rmat J = rmat::Zero(P * K, P * K);
  for (const auto& sh : shots)
    for (int m = 0; m < sc.n_bins(); ++m) {
      cmat D = cmat::Zero(sc.n_rx, P * K);
      for (int k = 0; k < K; ++k) {
        const MuPartials p = mu_derivatives(ts[std::size_t(k)], gains.at(std::size_t(m)), sc, sh.psi, m);
        D.col(k * P) = p.d_theta;
        D.col(k * P + 1) = p.d_phi;
        D.col(k * P + 2 + 2 * m) = p.d_rho_re;
        D.col(k * P + 3 + 2 * m) = p.d_rho_im;
      }
      J += (2.0 * sh.snapshots / sigma2) * (D.adjoint() * D).real();
    }
  return 0.5 * (J + J.transpose());
}

// T = d eta / d p with the angle block from exact atan2 gradients; rho block
// is the identity.
inline rmat jacobian(const std::vector<Point2>& positions, const Scenario& sc) {
  const int P = params_per_target(sc), K = int(positions.size());
  rmat T = rmat::Identity(P * K, P * K);
  for (int k = 0; k < K; ++k) {
    const auto [tx, ty] = angle_gradient(sc.p_ris, positions[std::size_t(k)]);
    const auto [px, py] = angle_gradient(sc.p_rx, positions[std::size_t(k)]);
    T(k * P, k * P) = tx;
    T(k * P, k * P + 1) = ty;
    T(k * P + 1, k * P) = px;
    T(k * P + 1, k * P + 1) = py;
  }
  return T;
}

inline rmat fim_position(const rmat& J, const rmat& T) { return T.transpose() * J * T; }

struct BoundsReport {
  rmat fim;
  rmat fim_pos;
  double peb = std::numeric_limits<double>::infinity();
  double condition = std::numeric_limits<double>::infinity();
  bool singular = true;
  int transmissions = 0;
};

// sqrt(trace of the position block of J_pos^{-1}); +inf when J_pos is
// numerically singular.
inline double peb_from_fim(const rmat& Jpos, int K, int P, double* condition = nullptr) {
  Eigen::SelfAdjointEigenSolver<rmat> es(Jpos);
  const rvec ev = es.eigenvalues();
  const double lo = ev.minCoeff(), hi = ev.maxCoeff();
  const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (condition) *condition = cond;
  if (!(lo > 0.0) || !(cond < 1e14)) return std::numeric_limits<double>::infinity();
  const rmat inv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  double tr = 0.0;
  for (int k = 0; k < K; ++k) tr += inv(k * P, k * P) + inv(k * P + 1, k * P + 1);
  return std::sqrt(std::max(tr, 0.0));
}

// Parameters at the true targets with rho = RCS per bin and gains at each
// target's own position folded into rho.
inline std::vector<TargetParams> true_params(const Scenario& sc, const std::vector<std::vector<double>>& rcs,
                                             const std::vector<cd>& gains) {
  std::vector<TargetParams> ts;
  for (std::size_t k = 0; k < sc.targets.size(); ++k) {
    TargetParams t{sc.aod(int(k)), sc.aoa(int(k)), {}};
    const std::vector<cd> own = model_gains(sc, sc.targets[k].position);
    for (int m = 0; m < sc.n_bins(); ++m) t.rho.push_back(rcs.at(k).at(std::size_t(m)) * own[std::size_t(m)] / gains[std::size_t(m)]);
    ts.push_back(std::move(t));
  }
  return ts;
}

// Average per-element power of everything the model leaves out, for the
// given configurations: diffraction leftovers, path 2, re-radiation.
inline double unmodeled_power(const Scenario& sc, const Realization& real, const std::vector<cvec>& psis) {
  if (psis.empty()) return 0.0;
  const std::vector<cd> gains = model_gains(sc, sc.snr_reference_point);
  const auto ts = true_params(sc, real.rcs, gains);
  const std::vector<cd> unit(sc.targets.size(), cd(1.0, 0.0));
  const cvec retro = retro_codeword(sc).psi();
  double acc = 0.0;
  for (const auto& psi : psis)
    for (int m = 0; m < sc.n_bins(); ++m) {
      cvec y = noiseless_snapshot(sc, real, psi, m, unit);
      if (sc.subtraction) y -= noiseless_snapshot(sc, real, retro, m, unit);
      acc += (y - model_mean(ts, gains, sc, effective_psi(sc, psi), m)).squaredNorm() / sc.n_rx;
    }
  return acc / double(psis.size() * std::size_t(sc.n_bins()));
}

// PEB for the true targets of sc under the given transmissions.
inline BoundsReport position_error_bound(const Scenario& sc, const std::vector<std::vector<double>>& rcs,
                                         const std::vector<FimShot>& shots, double extra_noise = 0.0) {
  BoundsReport r;
  const std::vector<cd> gains = model_gains(sc, sc.snr_reference_point);
  const auto ts = true_params(sc, rcs, gains);
  std::vector<Point2> pos;
  for (const auto& t : sc.targets) pos.push_back(t.position);
  r.fim = fim_channel(ts, gains, sc, shots, sc.noise_variance() + extra_noise);
  r.fim_pos = fim_position(r.fim, jacobian(pos, sc));
  r.peb = peb_from_fim(r.fim_pos, int(ts.size()), params_per_target(sc), &r.condition);
  r.singular = !std::isfinite(r.peb);
  for (const auto& s : shots) r.transmissions += 1;
  return r;
}

// Shots used by refine() for exact truth: probes around each true AoD.
inline std::vector<FimShot> refinement_shots(const Scenario& sc, const RefinementConfig& cfg) {
  std::vector<FimShot> out;
  for (int k = 0; k < int(sc.targets.size()); ++k)
    for (double a : probe_angles(sc, sc.aod(k), cfg.extra_transmissions))
      out.push_back({effective_psi(sc, steer_codeword(sc, a).psi()), sc.snapshots});
  return out;
}

}  // namespace thzris
