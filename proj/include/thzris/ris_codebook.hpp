// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "json.hpp"
#include "thz_channel.hpp"

namespace thzris {

inline long ipow(int base, int exp) {
  long r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

struct Codeword {
  std::vector<double> phases;  // psi_i, radians
  int stage = 1;               // 1-based
  int index = 0;               // 0-based sector index within the stage
  double lo = 0.0;
  double hi = kPi;
  double residual = 0.0;
  bool converged = true;

  double midpoint() const { return 0.5 * (lo + hi); }

  cvec psi() const {
    cvec v(Eigen::Index(phases.size()));
    for (std::size_t i = 0; i < phases.size(); ++i) v(Eigen::Index(i)) = std::polar(1.0, phases[i]);
    return v;
  }
};

struct Codebook {
  int L = 0;
  int S = 0;
  int R = 0;
  double design_freq = 0.0;
  std::vector<std::vector<Codeword>> stages;  // stages[s-1] has L^s entries

  const Codeword& at(int stage, int index) const { return stages.at(std::size_t(stage - 1)).at(std::size_t(index)); }
  int n_ris() const { return stages.empty() ? 0 : int(stages.front().front().phases.size()); }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.size();
    return n;
  }
};

// Cell-centred design grid theta_r = pi (r + 1/2) / R, r = 0..R-1.
inline rvec design_grid(int R) {
  rvec g(R);
  for (int r = 0; r < R; ++r) g(r) = kPi * (r + 0.5) / R;
  return g;
}

inline rvec ideal_pattern(int R, int L, int s, int r) {
  if (R < 1 || L < 2 || s < 1) throw config_error("ideal_pattern: bad arguments");
  const long sectors = ipow(L, s);
  if (R % sectors != 0) throw config_error("ideal_pattern: L^s must divide R");
  if (r < 0 || r >= sectors) throw config_error("ideal_pattern: sector index out of range");
  const long width = R / sectors;
  rvec d = rvec::Zero(R);
  for (long i = 0; i < width; ++i) d((r * width + i) % R) = 1.0;
  return d;
}

// A_RIS^H(theta, f) Psi a_RIS(phi_Tx, f) over the given angles.
inline cvec ris_beampattern(const cvec& psi, const rvec& angles, double freq, const Scenario& sc) {
  if (psi.size() != sc.n_ris) throw std::invalid_argument("ris_beampattern: codeword length mismatch");
  const cvec incident = psi.cwiseProduct(steering_vector(sc.ris_array(), sc.phi_tx(), freq));
  return steering_matrix(sc.ris_array(), angles, freq).adjoint() * incident;
}

inline cvec ris_beampattern(const Codeword& cw, const rvec& angles, double freq, const Scenario& sc) {
  return ris_beampattern(cw.psi(), angles, freq, sc);
}

// Elementwise projection onto |c_i| = 1/sqrt(N).
inline cvec project_constant_modulus(const cvec& v) {
  const double mod = 1.0 / std::sqrt(double(v.size()));
  cvec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v(i));
    out(i) = a > 0.0 ? v(i) * (mod / a) : cd(mod, 0.0);
  }
  return out;
}

struct DesignOptions {
  int max_iters = 2000;
  double rel_tol = 1e-8;
  double armijo = 1e-4;
  int restarts = 3;
  std::uint64_t seed = 7;
  std::vector<double>* history = nullptr;  // residual per accepted iterate, best run only
};

struct DesignResult {
  cvec c;
  double residual = 0.0;
  bool converged = false;
  std::vector<double> history;
};

// Steering matrix of the design grid and its Gram matrix, shared by every
// codeword of one codebook.
struct DesignBasis {
  cmat A;                // N x R at the design frequency
  cmat G;                // A A^H
  double lambda = 1.0;   // largest eigenvalue of G
  cvec center;           // R phase factors referring d to the array phase centre
};

inline DesignBasis make_design_basis(const Scenario& sc, int R) {
  DesignBasis B;
  const rvec grid = design_grid(R);
  const ArrayConfig ris = sc.ris_array();
  B.A = steering_matrix(ris, grid, sc.grid.fc);
  B.G = B.A * B.A.adjoint();
  B.lambda = std::max(Eigen::SelfAdjointEigenSolver<cmat>(B.G, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff(), 1e-300);
  const double k = 2.0 * kPi * ris.spacing * sc.grid.fc / kSpeedOfLight * 0.5 * (ris.n_elements - 1);
  B.center.resize(R);
  for (int r = 0; r < R; ++r) B.center(r) = std::polar(1.0, k * std::cos(grid(r)));
  return B;
}

// Residual of the magnitude fit for unit-modulus-scaled u, with the common
// modulus rho and the per-angle target phases at their optima:
//   h(u) = ||d||^2 - (d . |A^H u|)^2 / ||A^H u||^2.
inline double magnitude_fit_residual(const DesignBasis& B, const rvec& d, const cvec& u) {
  const cvec y = B.A.adjoint() * u;
  const double e = std::max(y.squaredNorm(), 1e-300);
  const double p = d.dot(y.cwiseAbs());
  return std::max(0.0, d.squaredNorm() - p * p / e);
}

// Gradient projection on ||A^H (rho u) - d .* exp(j arg(A^H u))|| subject to
// |u_i| = 1/sqrt(N). Each step fixes the target phases and rho at their
// current optima, takes a backtracked projected step, and accepts it only on
// sufficient decrease of h, so the residual history is non-increasing.
inline DesignResult gradient_projection(const DesignBasis& B, const rvec& d, cvec u, const DesignOptions& opt) {
  DesignResult res;
  u = project_constant_modulus(u);
  double f = magnitude_fit_residual(B, d, u);
  res.history.push_back(std::sqrt(f));
  for (int it = 0; it < opt.max_iters; ++it) {
    const cvec y = B.A.adjoint() * u;
    cvec t(y.size());
    for (Eigen::Index r = 0; r < y.size(); ++r) t(r) = d(r) * (std::abs(y(r)) > 0.0 ? y(r) / std::abs(y(r)) : cd(1.0, 0.0));
    const cvec b = B.A * t;
    const double rho = b.dot(u).real() / std::max(y.squaredNorm(), 1e-300);
    const cvec grad = rho * (B.G * (rho * u) - b);
    const double curv = std::max(rho * rho, 1e-300) * B.lambda;
    double step = 1.0, fn = f;
    bool accepted = false;
    cvec next;
    for (int h = 0; h < 60; ++h) {
      const double mu = step / curv;
      next = project_constant_modulus(u - mu * grad);
      fn = magnitude_fit_residual(B, d, next);
      if (fn <= f - opt.armijo * (next - u).squaredNorm() / mu) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.converged = true;
      break;
    }
    const double rel = (f - fn) / std::max(f, 1e-300);
    u = next;
    f = fn;
    res.history.push_back(std::sqrt(f));
    if (rel < opt.rel_tol) {
      res.converged = true;
      break;
    }
  }
  res.c = u;
  res.residual = std::sqrt(f);
  return res;
}

// Pseudoinverse start (target referred to the phase centre) plus seeded
// random restarts; the best residual wins.
inline DesignResult design_auxiliary(const DesignBasis& B, const rvec& d, const DesignOptions& opt) {
  if (d.size() != B.A.cols()) throw std::invalid_argument("design_auxiliary: ideal pattern does not match the grid");
  const cvec target = d.cast<cd>().cwiseProduct(B.center);
  const cvec init = B.G.ldlt().solve(B.A * target);
  DesignResult best = gradient_projection(B, d, init, opt);
  Rng rng(opt.seed);
  std::uniform_real_distribution<double> ph(0.0, 2.0 * kPi);
  for (int r = 0; r < opt.restarts; ++r) {
    cvec c0(B.A.rows());
    for (Eigen::Index i = 0; i < c0.size(); ++i) c0(i) = std::polar(1.0, ph(rng));
    DesignResult cand = gradient_projection(B, d, c0, opt);
    if (cand.residual < best.residual) best = std::move(cand);
  }
  if (opt.history) *opt.history = best.history;
  return best;
}

// Psi = diag(c ./ a_RIS(phi_Tx)) stored as phases.
inline std::vector<double> phases_from_auxiliary(const Scenario& sc, const cvec& c) {
  const cvec a = steering_vector(sc.ris_array(), sc.phi_tx(), sc.grid.fc);
  std::vector<double> ph(std::size_t(c.size()));
  for (Eigen::Index i = 0; i < c.size(); ++i) ph[std::size_t(i)] = std::arg(c(i)) - std::arg(a(i));
  return ph;
}

inline Codeword design_codeword(const DesignBasis& B, const rvec& ideal, const Scenario& sc, const DesignOptions& opt = {}) {
  const DesignResult res = design_auxiliary(B, ideal, opt);
  Codeword cw;
  cw.phases = phases_from_auxiliary(sc, res.c);
  cw.residual = res.residual;
  cw.converged = res.converged;
  return cw;
}

inline Codeword design_codeword(const rvec& ideal, const Scenario& sc, const DesignOptions& opt = {}) {
  return design_codeword(make_design_basis(sc, int(ideal.size())), ideal, sc, opt);
}

inline int default_grid_size(int L, int S) { return int(2 * ipow(L, S)); }

inline void check_codebook_shape(int L, int S, int R) {
  if (L < 2 || S < 1) throw config_error("codebook: need L >= 2 and S >= 1");
  if (R < 1 || R % ipow(L, S) != 0) throw config_error("codebook: L^S must divide R");
}

// Codeword for sector r of stage s; every restart seed depends on (s, r) only.
inline Codeword sector_codeword(const DesignBasis& B, int L, int s, int r, const Scenario& sc, const DesignOptions& opt) {
  const int R = int(B.A.cols());
  DesignOptions o = opt;
  o.seed = opt.seed + std::uint64_t(s) * 1000003ULL + std::uint64_t(r);
  o.history = nullptr;
  Codeword cw = design_codeword(B, ideal_pattern(R, L, s, r), sc, o);
  const long n = ipow(L, s);
  cw.stage = s;
  cw.index = r;
  cw.lo = kPi * double(r) / double(n);
  cw.hi = kPi * double(r + 1) / double(n);
  return cw;
}

inline Codebook design_codebook(int L, int S, int R, const Scenario& sc, const DesignOptions& opt = {}) {
  if (R <= 0) R = default_grid_size(L, S);
  check_codebook_shape(L, S, R);
  const DesignBasis B = make_design_basis(sc, R);
  Codebook cb;
  cb.L = L;
  cb.S = S;
  cb.R = R;
  cb.design_freq = sc.grid.fc;
  for (int s = 1; s <= S; ++s) {
    const long n = ipow(L, s);
    std::vector<Codeword> stage;
    stage.reserve(std::size_t(n));
    for (long r = 0; r < n; ++r) stage.push_back(sector_codeword(B, L, s, int(r), sc, opt));
    cb.stages.push_back(std::move(stage));
  }
  return cb;
}

// Designs codewords the first time a scan asks for them. Entries are the same
// as those of design_codebook with the same arguments.
class LazyCodebook {
 public:
  LazyCodebook(int L, int S, int R, const Scenario& sc, const DesignOptions& opt = {})
      : L(L), S(S), R(R <= 0 ? default_grid_size(L, S) : R), sc_(sc), opt_(opt) {
    check_codebook_shape(L, S, this->R);
    basis_ = make_design_basis(sc_, this->R);
  }

  int L, S, R;

  const Codeword& at(int stage, int index) const {
    if (stage < 1 || stage > S || index < 0 || index >= ipow(L, stage)) throw std::out_of_range("LazyCodebook::at");
    std::lock_guard<std::mutex> lock(*mutex_);
    auto it = cache_.find({stage, index});
    if (it == cache_.end()) it = cache_.emplace(std::make_pair(stage, index), sector_codeword(basis_, L, stage, index, sc_, opt_)).first;
    return it->second;
  }
  int n_ris() const { return int(basis_.A.rows()); }
  std::size_t designed() const {
    std::lock_guard<std::mutex> lock(*mutex_);
    return cache_.size();
  }

 private:
  Scenario sc_;
  DesignOptions opt_;
  DesignBasis basis_;
  mutable std::map<std::pair<int, int>, Codeword> cache_;
  std::shared_ptr<std::mutex> mutex_ = std::make_shared<std::mutex>();
};

// Plain matched steer toward `angle` at the design frequency.
inline Codeword steer_codeword(const Scenario& sc, double angle) {
  const cvec want = steering_vector(sc.ris_array(), angle, sc.grid.fc);
  const cvec a = steering_vector(sc.ris_array(), sc.phi_tx(), sc.grid.fc);
  Codeword cw;
  cw.phases.resize(std::size_t(sc.n_ris));
  for (int i = 0; i < sc.n_ris; ++i) cw.phases[std::size_t(i)] = std::arg(want(i)) - std::arg(a(i));
  cw.stage = 0;
  cw.lo = cw.hi = angle;
  return cw;
}

// Retro-steer back toward the transmitter.
inline Codeword retro_codeword(const Scenario& sc) { return steer_codeword(sc, sc.phi_tx()); }

inline constexpr int kCodebookFormatVersion = 1;

inline nlohmann::json codebook_to_json(const Codebook& cb) {
  nlohmann::json j;
  j["format_version"] = kCodebookFormatVersion;
  j["L"] = cb.L;
  j["S"] = cb.S;
  j["R"] = cb.R;
  j["design_frequency_hz"] = cb.design_freq;
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& st : cb.stages) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& cw : st) {
      arr.push_back({{"stage", cw.stage},
                     {"index", cw.index},
                     {"lo", cw.lo},
                     {"hi", cw.hi},
                     {"residual", cw.residual},
                     {"converged", cw.converged},
                     {"phases", cw.phases}});
    }
    stages.push_back(std::move(arr));
  }
  j["stages"] = std::move(stages);
  return j;
}

inline Codebook codebook_from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != kCodebookFormatVersion) throw config_error("unsupported codebook format version");
  Codebook cb;
  cb.L = j.at("L").get<int>();
  cb.S = j.at("S").get<int>();
  cb.R = j.at("R").get<int>();
  cb.design_freq = j.at("design_frequency_hz").get<double>();
  for (const auto& st : j.at("stages")) {
    std::vector<Codeword> stage;
    for (const auto& e : st) {
      Codeword cw;
      cw.stage = e.at("stage").get<int>();
      cw.index = e.at("index").get<int>();
      cw.lo = e.at("lo").get<double>();
      cw.hi = e.at("hi").get<double>();
      cw.residual = e.value("residual", 0.0);
      cw.converged = e.value("converged", true);
      cw.phases = e.at("phases").get<std::vector<double>>();
      stage.push_back(std::move(cw));
    }
    cb.stages.push_back(std::move(stage));
  }
  if (int(cb.stages.size()) != cb.S) throw config_error("codebook stage count does not match S");
  for (int s = 1; s <= cb.S; ++s)
    if (long(cb.stages[std::size_t(s - 1)].size()) != ipow(cb.L, s)) throw config_error("codebook stage has wrong size");
  return cb;
}

inline void save_codebook(const Codebook& cb, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write codebook: " + path);
  out << codebook_to_json(cb).dump(1) << "\n";
}

inline Codebook load_codebook(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open codebook: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error(path + ": " + e.what());
  }
  return codebook_from_json(j);
}

}  // namespace thzris
