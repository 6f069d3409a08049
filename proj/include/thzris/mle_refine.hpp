// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>
#include <vector>

#include "scan_pipeline.hpp"

namespace thzris {

// Angles and per-bin path coefficients of one target. rho[m] absorbs the RCS
// of bin m and any gain mismatch of the reference position.
struct TargetParams {
  double theta = 0.0;
  double phi = 0.0;
  std::vector<cd> rho;
};

// sqrt(P_t) l_Tx-RIS-p-Rx(f_m) for the reference point p, one entry per bin.
inline std::vector<cd> model_gains(const Scenario& sc, const Point2& p) {
  const double pt = transmit_power(sc);
  const double d0 = distance(sc.p_tx, sc.p_ris), d1 = distance(sc.p_ris, p), d2 = distance(p, sc.p_rx);
  std::vector<cd> g;
  for (int m = 0; m < sc.n_bins(); ++m) g.push_back(std::sqrt(pt) * cascaded_gain(sc.absorption, sc.freq(m), {d0, d1, d2}).value());
  return g;
}

// RIS configuration seen by the model: Psi, or Psi - Psi_Tx when the
// calibration shot is subtracted.
inline cvec effective_psi(const Scenario& sc, const cvec& psi) {
  return sc.subtraction ? cvec(psi - retro_codeword(sc).psi()) : psi;
}

// a_RIS(theta, m)^H Psi a_RIS(phi_Tx, m)
inline cd ris_response(const Scenario& sc, const cvec& psi, double theta, int m) {
  const double f = sc.freq(m);
  const ArrayConfig ris = sc.ris_array();
  return steering_vector(ris, theta, f).dot(psi.cwiseProduct(steering_vector(ris, sc.phi_tx(), f)));
}

// mu = rho g a_Rx(phi, m) a_RIS(theta, m)^H Psi a_RIS(phi_Tx, m); a_Tx^H x is
// folded into g.
inline cvec model_mean(const TargetParams& t, cd gain, const Scenario& sc, const cvec& psi, int m) {
  const cd rho = t.rho.at(std::size_t(m));
  return (rho * gain * ris_response(sc, psi, t.theta, m)) * steering_vector(sc.rx_array(), t.phi, sc.freq(m));
}

inline cvec model_mean(const std::vector<TargetParams>& ts, const std::vector<cd>& gains, const Scenario& sc, const cvec& psi,
                       int m) {
  cvec mu = cvec::Zero(sc.n_rx);
  for (const auto& t : ts) mu += model_mean(t, gains.at(std::size_t(m)), sc, psi, m);
  return mu;
}

struct RefinementConfig {
  int extra_transmissions = 3;   // per target
  double theta_half_width = 0.0; // 0 selects one finest sector width
  double phi_half_width = 0.0;   // 0 selects one receiver grid cell
  double tol = 1e-7;             // radians
  int max_iterations = 50;
};

struct RefinedEstimate {
  double theta = 0.0;
  double phi = 0.0;
  std::vector<cd> rho;
  Point2 position;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool located = true;  // false when the refined rays are parallel
};

// One extra transmission: the RIS configuration and the per-bin snapshot
// means (after background subtraction when enabled).
struct Observation {
  cvec psi;
  std::vector<cvec> mean;
  int snapshots = 1;
};

// Matched steers around theta spaced 1/N_RIS apart in cos(theta).
inline std::vector<double> probe_angles(const Scenario& sc, double theta, int count) {
  std::vector<double> out;
  const double du = 1.0 / sc.n_ris;
  for (int j = 0; j < count; ++j) {
    const double u = std::cos(theta) + (j - 0.5 * (count - 1)) * du;
    out.push_back(std::acos(std::clamp(u, -1.0, 1.0)));
  }
  return out;
}

inline std::vector<Observation> collect_observations(const Scenario& sc, const Realization& real, const std::vector<double>& thetas,
                                                     const std::vector<cvec>& calibration, const RefinementConfig& cfg, Rng& rng) {
  std::vector<Observation> obs;
  for (double th : thetas)
    for (double a : probe_angles(sc, th, cfg.extra_transmissions)) {
      Observation o;
      o.psi = steer_codeword(sc, a).psi();
      std::vector<cmat> Y = synthesize_transmission(sc, real, o.psi, rng, sc.snapshots);
      if (!calibration.empty()) Y = background_subtract(Y, calibration);
      for (const auto& Ym : Y) o.mean.push_back(Ym.rowwise().mean());
      o.snapshots = sc.snapshots;
      obs.push_back(std::move(o));
    }
  return obs;
}

namespace detail {

// Residual data with every target except `skip` removed.
inline std::vector<std::vector<cvec>> residual_data(const Scenario& sc, const std::vector<Observation>& obs,
                                                    const std::vector<TargetParams>& ts, const std::vector<cd>& gains,
                                                    std::size_t skip) {
  std::vector<std::vector<cvec>> r(obs.size());
  for (std::size_t j = 0; j < obs.size(); ++j) {
    const cvec pe = effective_psi(sc, obs[j].psi);
    for (int m = 0; m < sc.n_bins(); ++m) {
      cvec y = obs[j].mean[std::size_t(m)];
      for (std::size_t k = 0; k < ts.size(); ++k)
        if (k != skip) y -= model_mean(ts[k], gains[std::size_t(m)], sc, pe, m);
      r[j].push_back(std::move(y));
    }
  }
  return r;
}

// Least-squares rho per bin for fixed angles; returns the remaining weighted
// squared error sum_j B_j ||r_j - rho v_j||^2 summed over bins.
inline double fit_rho(const Scenario& sc, const std::vector<Observation>& obs, const std::vector<std::vector<cvec>>& resid,
                      const std::vector<cd>& gains, double theta, double phi, std::vector<cd>* rho) {
  double err = 0.0;
  if (rho) rho->assign(std::size_t(sc.n_bins()), cd(0.0));
  std::vector<cvec> pe;
  for (const auto& o : obs) pe.push_back(effective_psi(sc, o.psi));
  for (int m = 0; m < sc.n_bins(); ++m) {
    const cvec arx = steering_vector(sc.rx_array(), phi, sc.freq(m));
    cd num = 0.0;
    double den = 0.0, yy = 0.0;
    for (std::size_t j = 0; j < obs.size(); ++j) {
      const double w = obs[j].snapshots;
      const cvec v = (gains[std::size_t(m)] * ris_response(sc, pe[j], theta, m)) * arx;
      const cvec& y = resid[j][std::size_t(m)];
      num += w * v.dot(y);
      den += w * v.squaredNorm();
      yy += w * y.squaredNorm();
    }
    const cd r = den > 0.0 ? num / den : cd(0.0);
    if (rho) (*rho)[std::size_t(m)] = r;
    err += std::max(0.0, yy - (den > 0.0 ? std::norm(num) / den : 0.0));
  }
  return err;
}

// Golden-section minimisation of f on [a, b].
template <class F>
double golden_section(F&& f, double a, double b, double tol) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

// Log-likelihood up to a constant: -sum_j sum_m B_j ||ybar - mu||^2 / sigma^2.
inline double log_likelihood(const Scenario& sc, const std::vector<Observation>& obs, const std::vector<TargetParams>& ts,
                             const std::vector<cd>& gains) {
  double e = 0.0;
  for (const auto& o : obs) {
    const cvec pe = effective_psi(sc, o.psi);
    for (int m = 0; m < sc.n_bins(); ++m) e += o.snapshots * (o.mean[std::size_t(m)] - model_mean(ts, gains, sc, pe, m)).squaredNorm();
  }
  return -e / sc.noise_variance();
}

// Cyclic coordinate ascent over the targets: for each target, golden-section
// searches in theta then phi with rho profiled out by least squares, and the
// other targets subtracted. A move is kept only if it raises the likelihood;
// a cycle that fails to do so halves the search widths.
inline std::vector<RefinedEstimate> refine_observed(const Scenario& sc, const std::vector<Observation>& obs,
                                                    const std::vector<TargetEstimate>& init, const std::vector<cd>& gains,
                                                    double theta_hw, double phi_hw, const RefinementConfig& cfg) {
  if (!(cfg.tol > 0.0)) throw config_error("refinement tolerance must be positive");
  std::vector<TargetParams> ts;
  for (const auto& e : init) ts.push_back({e.aod, e.aoa, std::vector<cd>(std::size_t(sc.n_bins()), cd(0.0))});
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const auto r = detail::residual_data(sc, obs, ts, gains, k);
    detail::fit_rho(sc, obs, r, gains, ts[k].theta, ts[k].phi, &ts[k].rho);
  }
  double ll = log_likelihood(sc, obs, ts, gains);
  int iters = 0;
  for (; iters < cfg.max_iterations; ++iters) {
    double moved = 0.0;
    bool improved = false;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const auto r = detail::residual_data(sc, obs, ts, gains, k);
      TargetParams cand = ts[k];
      auto cost_theta = [&](double th) { return detail::fit_rho(sc, obs, r, gains, th, cand.phi, nullptr); };
      cand.theta = detail::golden_section(cost_theta, std::max(0.0, cand.theta - theta_hw), std::min(kPi, cand.theta + theta_hw), cfg.tol);
      auto cost_phi = [&](double ph) { return detail::fit_rho(sc, obs, r, gains, cand.theta, ph, nullptr); };
      cand.phi = detail::golden_section(cost_phi, std::max(0.0, cand.phi - phi_hw), std::min(kPi, cand.phi + phi_hw), cfg.tol);
      detail::fit_rho(sc, obs, r, gains, cand.theta, cand.phi, &cand.rho);
      std::vector<TargetParams> trial = ts;
      trial[k] = cand;
      const double ll_new = log_likelihood(sc, obs, trial, gains);
      if (ll_new > ll) {
        moved = std::max({moved, std::abs(cand.theta - ts[k].theta), std::abs(cand.phi - ts[k].phi)});
        ts = std::move(trial);
        ll = ll_new;
        improved = true;
      }
    }
    if (!improved) {
      theta_hw *= 0.5;
      phi_hw *= 0.5;
      if (theta_hw < 1e-9 && phi_hw < 1e-9) break;
      continue;
    }
    if (moved < cfg.tol) {
      ++iters;
      break;
    }
  }
  std::vector<RefinedEstimate> out;
  for (const auto& t : ts) {
    RefinedEstimate e;
    e.theta = t.theta;
    e.phi = t.phi;
    e.rho = t.rho;
    e.log_likelihood = ll;
    e.iterations = iters;
    try {
      e.position = intersect_rays(sc.p_ris, t.theta, sc.p_rx, t.phi);
    } catch (const parallel_rays&) {
      e.located = false;
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline double finest_sector_width(int L, int S) { return kPi / double(ipow(L, S)); }

// Extra transmissions steered around each HCB estimate, then refinement.
// The per-bin gains come from the first estimate's position.
inline std::vector<RefinedEstimate> refine(const Scenario& sc, const Realization& real, const ScanResult& scan, int L, int S,
                                           const RefinementConfig& cfg, Rng& rng, std::vector<Observation>* used = nullptr) {
  if (scan.estimates.empty()) return {};
  if (cfg.extra_transmissions < 1) throw config_error("refinement needs at least one extra transmission");
  std::vector<double> thetas;
  for (const auto& e : scan.estimates) thetas.push_back(e.aod);
  const std::vector<Observation> obs = collect_observations(sc, real, thetas, scan.calibration, cfg, rng);
  const double thw = cfg.theta_half_width > 0.0 ? cfg.theta_half_width : finest_sector_width(L, S);
  const double phw = cfg.phi_half_width > 0.0 ? cfg.phi_half_width : kPi / sc.rx_res;
  auto res = refine_observed(sc, obs, scan.estimates, model_gains(sc, scan.estimates.front().position), thw, phw, cfg);
  if (used) *used = obs;
  return res;
}

}  // namespace thzris
