// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>
#include <vector>

#include "geometry.hpp"
#include "scenario.hpp"

namespace thzris {

struct SpatialSpectrum {
  rvec angles;
  rvec values;         // normalized, max = 1
  double scale = 0.0;  // raw maximum before normalization

  rvec raw() const { return values * scale; }
};

struct Detection {
  int index = 0;
  double aoa = 0.0;
  double value = 0.0;
};

using DetectionList = std::vector<Detection>;

// Uniform grid i pi / rx_res, i = 0..rx_res.
inline rvec rx_grid(int rx_res) {
  if (rx_res < 1) throw config_error("rx_grid: resolution must be positive");
  rvec g(rx_res + 1);
  for (int i = 0; i <= rx_res; ++i) g(i) = kPi * i / rx_res;
  return g;
}

inline SpatialSpectrum normalized_spectrum(const rvec& angles, rvec raw) {
  SpatialSpectrum sp;
  sp.angles = angles;
  sp.scale = raw.size() ? raw.maxCoeff() : 0.0;
  sp.values = sp.scale > 0.0 ? rvec(raw / sp.scale) : rvec(rvec::Zero(raw.size()));
  return sp;
}

// F = V U^H from the SVD of A(fc) A(fm)^H. A small diagonal load fixes the
// otherwise arbitrary pairing of the null-space singular vectors, so that
// fm == fc yields the identity.
inline cmat focusing_matrix(const ArrayConfig& rx, double f_m, double f_c, const rvec& prelim_angles) {
  if (prelim_angles.size() == 0) throw std::invalid_argument("focusing_matrix: no preliminary angles");
  const int n = rx.n_elements;
  if (f_m == f_c) return cmat::Identity(n, n);
  const cmat Ac = steering_matrix(rx, prelim_angles, f_c);
  const cmat Am = steering_matrix(rx, prelim_angles, f_m);
  cmat P = Ac * Am.adjoint();
  const double load = 1e-6 * std::max(P.norm(), 1e-300);
  P += load * cmat::Identity(n, n);
  Eigen::JacobiSVD<cmat> svd(P, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

inline cmat sample_covariance(const cmat& Y) { return Y * Y.adjoint(); }

// sum_m F_m R_yy(f_m) F_m^H with R_yy = sum_b y_b y_b^H.
inline cmat coherent_covariance(const std::vector<cmat>& snapshots, const std::vector<cmat>& F) {
  if (snapshots.empty() || snapshots.size() != F.size())
    throw std::invalid_argument("coherent_covariance: need one focusing matrix per bin");
  const Eigen::Index n = snapshots.front().rows();
  cmat R = cmat::Zero(n, n);
  for (std::size_t m = 0; m < snapshots.size(); ++m) {
    if (snapshots[m].cols() < 1) throw std::invalid_argument("coherent_covariance: zero snapshots");
    R += F[m] * sample_covariance(snapshots[m]) * F[m].adjoint();
  }
  return 0.5 * (R + R.adjoint());
}

inline rvec conventional_raw(const cmat& R, const ArrayConfig& rx, const rvec& grid, double f) {
  rvec v(grid.size());
  const double n = rx.n_elements;
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const cvec a = steering_vector(rx, grid(i), f);
    v(i) = std::max(0.0, a.dot(R * a).real() / n);
  }
  return v;
}

inline SpatialSpectrum spectrum_conventional(const cmat& R, const ArrayConfig& rx, const rvec& grid, double f_c) {
  return normalized_spectrum(grid, conventional_raw(R, rx, grid, f_c));
}

inline rvec music_raw(const cmat& R, const ArrayConfig& rx, const rvec& grid, double f, int n_sources) {
  const int n = rx.n_elements;
  if (n_sources < 1 || n_sources >= n) throw std::invalid_argument("spectrum_music: need 1 <= n_sources < N_Rx");
  Eigen::SelfAdjointEigenSolver<cmat> es(R);
  const cmat En = es.eigenvectors().leftCols(n - n_sources);
  rvec v(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const cvec a = steering_vector(rx, grid(i), f);
    v(i) = 1.0 / std::max((En.adjoint() * a).squaredNorm(), 1e-300);
  }
  return v;
}

inline SpatialSpectrum spectrum_music(const cmat& R, const ArrayConfig& rx, const rvec& grid, double f_c,
                                      int n_sources) {
  return normalized_spectrum(grid, music_raw(R, rx, grid, f_c, n_sources));
}

// Minimum description length source count, clamped to [1, N-1].
inline int mdl_sources(const cmat& R, int n_snapshots) {
  const int n = int(R.rows());
  Eigen::SelfAdjointEigenSolver<cmat> es(R);
  rvec ev = es.eigenvalues().reverse().cwiseMax(1e-300);
  int best = 1;
  double best_val = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    const int q = n - k;
    double logg = 0.0, arith = 0.0;
    for (int i = k; i < n; ++i) {
      logg += std::log(ev(i));
      arith += ev(i);
    }
    logg /= q;
    arith /= q;
    const double val = -double(n_snapshots) * q * (logg - std::log(arith)) + 0.5 * k * (2.0 * n - k) * std::log(double(n_snapshots));
    if (val < best_val) {
      best_val = val;
      best = k;
    }
  }
  return std::clamp(best, 1, n - 1);
}

// Local maxima with value >= gamma. Interior points need v[i] > v[i-1] and
// v[i] >= v[i+1] (plateaus resolve to their lowest index); end points need a
// strict rise over their single neighbour. With ends_alias the two end points
// are one direction (a(0) == a(pi)): each end is compared with both inner
// neighbours and at most one end, the larger (ties to index 0), is reported.
inline DetectionList detect_peaks(const rvec& angles, const rvec& values, double gamma, bool ends_alias = false) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("detect_peaks: gamma must lie in (0, 1)");
  DetectionList out;
  const Eigen::Index n = values.size();
  const bool alias = ends_alias && n >= 3;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = values(i);
    if (v < gamma) continue;
    bool peak;
    if (n == 1)
      peak = true;
    else if (alias && (i == 0 || i == n - 1)) {
      const double other = values(i == 0 ? n - 1 : 0);
      peak = v > values(1) && v > values(n - 2) && (i == 0 ? v >= other : v > other);
    } else if (i == 0)
      peak = v > values(1);
    else if (i == n - 1)
      peak = v > values(n - 2);
    else
      peak = v > values(i - 1) && v >= values(i + 1);
    if (!peak) continue;
    if (!out.empty() && i - out.back().index <= 1) {
      if (v > out.back().value) out.back() = {int(i), angles(i), v};
      continue;
    }
    out.push_back({int(i), angles(i), v});
  }
  return out;
}

// True when the steering vectors at 0 and pi coincide, as for half-wavelength
// spacing at f.
inline bool endfire_aliased(const ArrayConfig& cfg, double f) {
  const cvec a0 = steering_vector(cfg, 0.0, f), a1 = steering_vector(cfg, kPi, f);
  return std::abs(a0.dot(a1)) / cfg.n_elements > 1.0 - 1e-9;
}

inline DetectionList detect_peaks(const SpatialSpectrum& sp, double gamma, bool ends_alias = false) {
  return detect_peaks(sp.angles, sp.values, gamma, ends_alias);
}

enum class Estimator { conventional, music };

struct DoaOptions {
  Estimator estimator = Estimator::conventional;
  int music_sources = 0;  // 0 selects MDL
  double gamma = 0.3;
};

inline int central_bin(const Scenario& sc) { return (sc.n_bins() - 1) / 2; }

// Focused multi-bin spectrum of one transmission. snapshots[m] is N_Rx x B.
inline SpatialSpectrum wideband_spectrum(const std::vector<cmat>& snapshots, const Scenario& sc, const DoaOptions& opt) {
  const ArrayConfig rx = sc.rx_array();
  const rvec grid = rx_grid(sc.rx_res);
  const double fc = sc.grid.fc;
  const int M = int(snapshots.size());
  std::vector<cmat> F(static_cast<std::size_t>(M));
  bool all_center = true;
  for (int m = 0; m < M; ++m) all_center = all_center && sc.freq(m) == fc;
  if (all_center) {
    for (auto& f : F) f = cmat::Identity(rx.n_elements, rx.n_elements);
  } else {
    const int mc = central_bin(sc);
    const SpatialSpectrum pre =
        spectrum_conventional(sample_covariance(snapshots[std::size_t(mc)]), rx, grid, sc.freq(mc));
    DetectionList pk = detect_peaks(pre, std::clamp(opt.gamma / 2.0, 1e-12, 1.0 - 1e-12), endfire_aliased(rx, fc));
    rvec prelim;
    if (pk.empty()) {
      Eigen::Index arg;
      pre.values.maxCoeff(&arg);
      prelim = rvec::Constant(1, grid(arg));
    } else {
      prelim.resize(Eigen::Index(pk.size()));
      for (std::size_t i = 0; i < pk.size(); ++i) prelim(Eigen::Index(i)) = pk[i].aoa;
    }
    for (int m = 0; m < M; ++m) F[std::size_t(m)] = focusing_matrix(rx, sc.freq(m), fc, prelim);
  }
  const cmat R = coherent_covariance(snapshots, F);
  if (opt.estimator == Estimator::music) {
    int k = opt.music_sources;
    if (k <= 0) k = mdl_sources(R, int(snapshots.front().cols()) * M);
    return spectrum_music(R, rx, grid, fc, k);
  }
  return spectrum_conventional(R, rx, grid, fc);
}

}  // namespace thzris
