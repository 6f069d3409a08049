// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdio>
#include <fstream>
#include <optional>
#include <thread>
#include <variant>

#include "bounds.hpp"
#include "harness_config.hpp"

namespace thzris {

inline constexpr const char* kVersion = "1.0.0";

// Per-trial stream from (seed, snr index, trial). Independent of the variant
// so that variants see the same draws and compare paired.
inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t snr_index, int trial) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(snr_index), std::uint32_t(trial)};
  std::uint32_t w[2];
  seq.generate(w, w + 2);
  return (std::uint64_t(w[0]) << 32) | w[1];
}

class CodebookSource {
 public:
  explicit CodebookSource(const ExperimentConfig& c) {
    if (!c.codebook_file.empty()) {
      Codebook cb = load_codebook(c.codebook_file);
      if (cb.L != c.L || cb.S != c.S)
        throw config_error("codebook.file: stored shape L=" + std::to_string(cb.L) + " S=" + std::to_string(cb.S) + " does not match the configuration");
      if (cb.n_ris() != c.scenario.n_ris) throw config_error("codebook.file: stored codebook does not match arrays.n_ris");
      book_ = std::move(cb);
    } else {
      book_.emplace<LazyCodebook>(c.L, c.S, c.R, c.scenario);
    }
  }

  ScanResult scan(const Scenario& sc, const Realization& real, const ScanOptions& opt, bool full, Rng& rng) const {
    return std::visit(
        [&](const auto& cb) {
          if (!full) return run_scan(sc, real, cb, opt, rng);
          std::vector<Codeword> finest;
          for (int i = 0; i < ipow(cb.L, cb.S); ++i) finest.push_back(cb.at(cb.S, i));
          return run_full_scan(sc, real, finest, opt, rng);
        },
        book_);
  }

 private:
  std::variant<Codebook, LazyCodebook> book_;
};

struct TrialResult {
  ScanResult scan;
  std::vector<RefinedEstimate> refined;
  // squared errors of matched (estimate, truth) pairs
  std::vector<double> sq_errors;
  std::vector<double> sq_errors_refined;
  int misses = 0;
  int misses_refined = 0;
  double peb = std::numeric_limits<double>::quiet_NaN();
};

// Greedy nearest pairs under the gate. Returns squared distances; unmatched
// truths count as misses.
inline std::vector<double> match_targets(const std::vector<Point2>& est, const std::vector<Point2>& truth, double gate,
                                         int* misses) {
  struct Pair {
    double d;
    std::size_t e, t;
  };
  std::vector<Pair> pairs;
  for (std::size_t e = 0; e < est.size(); ++e)
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const double d = distance(est[e], truth[t]);
      if (d <= gate) pairs.push_back({d, e, t});
    }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.d < b.d; });
  std::vector<bool> eu(est.size()), tu(truth.size());
  std::vector<double> out;
  for (const auto& p : pairs) {
    if (eu[p.e] || tu[p.t]) continue;
    eu[p.e] = tu[p.t] = true;
    out.push_back(p.d * p.d);
  }
  if (misses) *misses += int(truth.size() - out.size());
  return out;
}

// sc carries the trial's SNR.
inline TrialResult run_trial(const ExperimentConfig& c, const Scenario& sc, const CodebookSource& book, std::uint64_t seed) {
  Rng rng(seed);
  TrialResult tr;
  const Realization real = draw_realization(sc, rng);
  tr.scan = book.scan(sc, real, c.scan, c.full_scan, rng);
  std::vector<Point2> truth, est;
  for (const auto& t : sc.targets) truth.push_back(t.position);
  for (const auto& e : tr.scan.estimates) est.push_back(e.position);
  tr.sq_errors = match_targets(est, truth, c.match_gate, &tr.misses);
  if (c.refine) {
    if (!tr.scan.estimates.empty()) tr.refined = refine(sc, real, tr.scan, c.L, c.S, c.refinement, rng);
    std::vector<Point2> rest;
    for (const auto& r : tr.refined)
      if (r.located) rest.push_back(r.position);
    tr.sq_errors_refined = match_targets(rest, truth, c.match_gate, &tr.misses_refined);
  }
  const std::vector<FimShot> shots = refinement_shots(sc, c.refinement);
  double extra = 0.0;
  if (c.effective_noise) {
    std::vector<cvec> psis;
    for (int k = 0; k < int(sc.targets.size()); ++k)
      for (double a : probe_angles(sc, sc.aod(k), c.refinement.extra_transmissions)) psis.push_back(steer_codeword(sc, a).psi());
    extra = unmodeled_power(sc, real, psis);
  }
  tr.peb = position_error_bound(sc, real.rcs, shots, extra).peb;
  return tr;
}

struct SnrRow {
  double snr_db = 0.0;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double rmse_refined = std::numeric_limits<double>::quiet_NaN();
  double peb = std::numeric_limits<double>::quiet_NaN();
  double floor = std::numeric_limits<double>::quiet_NaN();
  double mean_detections = 0.0;
  double mean_transmissions = 0.0;
  int misses = 0;
  int misses_refined = 0;
  int singular_bounds = 0;
  int dropped_parallel = 0;
};

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class F>
void parallel_for(int n, int threads, F&& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// Trials of one SNR point in index order.
inline std::vector<TrialResult> run_snr_point(const ExperimentConfig& c, const CodebookSource& book, std::size_t snr_index) {
  Scenario sc = c.scenario;
  sc.snr_db = c.snr_db.at(snr_index);
  std::vector<TrialResult> out(static_cast<std::size_t>(c.trials));
  parallel_for(c.trials, c.threads, [&](int t) { out[std::size_t(t)] = run_trial(c, sc, book, trial_seed(c.seed, snr_index, t)); });
  return out;
}

inline double quadrature_floor(const ExperimentConfig& c) {
  const Scenario& sc = c.scenario;
  double s = 0.0;
  for (const auto& t : sc.targets) {
    const double f = deterministic_error_floor(sc.p_ris, sc.p_rx, t.position, c.L, c.S, sc.rx_res);
    s += f * f;
  }
  return std::sqrt(s);
}

inline SnrRow summarize(const ExperimentConfig& c, double snr_db, const std::vector<TrialResult>& trials) {
  SnrRow row;
  row.snr_db = snr_db;
  const double K = double(c.scenario.targets.size());
  auto rms = [K](const std::vector<const std::vector<double>*>& sets) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto* v : sets)
      for (double e : *v) {
        s += e;
        ++n;
      }
    return n ? std::sqrt(K * s / double(n)) : std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<const std::vector<double>*> a, b;
  double peb2 = 0.0;
  int peb_n = 0;
  for (const auto& t : trials) {
    a.push_back(&t.sq_errors);
    b.push_back(&t.sq_errors_refined);
    row.mean_detections += double(t.scan.estimates.size());
    row.mean_transmissions += double(t.scan.sector_transmissions);
    row.misses += t.misses;
    row.misses_refined += t.misses_refined;
    row.dropped_parallel += t.scan.dropped_parallel;
    if (std::isfinite(t.peb)) {
      peb2 += t.peb * t.peb;
      ++peb_n;
    } else {
      ++row.singular_bounds;
    }
  }
  const double n = double(trials.size());
  row.mean_detections /= n;
  row.mean_transmissions /= n;
  row.rmse = rms(a);
  if (c.refine) row.rmse_refined = rms(b);
  if (peb_n) row.peb = std::sqrt(peb2 / peb_n);
  row.floor = quadrature_floor(c);
  return row;
}

inline const char* kResultsHeader = "snr_db,rmse_m,rmse_refined_m,peb_m,floor_m,mean_detections,mean_transmissions,misses";

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string results_csv(const std::vector<SnrRow>& rows) {
  std::string s = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows)
    s += format_number(r.snr_db) + "," + format_number(r.rmse) + "," + format_number(r.rmse_refined) + "," + format_number(r.peb) + "," +
         format_number(r.floor) + "," + format_number(r.mean_detections) + "," + format_number(r.mean_transmissions) + "," +
         std::to_string(r.misses) + "\n";
  return s;
}

// FNV-1a over the canonical dump.
inline std::string config_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct VariantResult {
  std::string name;
  ExperimentConfig config;
  std::vector<SnrRow> rows;
  json trace;  // per-trial scan traces, filled when requested
};

inline json trace_json(const TrialResult& t) {
  json stages = json::array();
  for (const auto& st : t.scan.trace) {
    json peaks = json::array();
    for (const auto& p : st.peaks) {
      json pl = json::array();
      for (const auto& d : p) pl.push_back({{"aoa", d.aoa}, {"value", d.value}});
      peaks.push_back(pl);
    }
    stages.push_back({{"stage", st.stage}, {"visited", st.visited}, {"survivors", st.survivors}, {"peaks", peaks}});
  }
  json est = json::array();
  for (const auto& e : t.scan.estimates)
    est.push_back({{"position", detail::point_json(e.position)}, {"aod", e.aod}, {"aoa", e.aoa}, {"peak", e.peak}, {"sector", e.sector}});
  json ref = json::array();
  for (const auto& r : t.refined)
    ref.push_back({{"position", detail::point_json(r.position)}, {"theta", r.theta}, {"phi", r.phi}, {"located", r.located}, {"iterations", r.iterations}});
  return {{"stages", stages},
          {"estimates", est},
          {"refined", ref},
          {"sector_transmissions", t.scan.sector_transmissions},
          {"total_transmissions", t.scan.total_transmissions},
          {"peb", std::isfinite(t.peb) ? json(t.peb) : json(nullptr)}};
}

inline VariantResult run_variant(const std::string& name, const ExperimentConfig& c, bool trace) {
  VariantResult v;
  v.name = name;
  v.config = c;
  const CodebookSource book(c);
  if (trace) v.trace = json::array();
  for (std::size_t i = 0; i < c.snr_db.size(); ++i) {
    const auto trials = run_snr_point(c, book, i);
    v.rows.push_back(summarize(c, c.snr_db[i], trials));
    if (trace) {
      json tj = json::array();
      for (const auto& t : trials) tj.push_back(trace_json(t));
      v.trace.push_back({{"snr_db", c.snr_db[i]}, {"trials", tj}});
    }
  }
  return v;
}

struct RunOptions {
  std::optional<std::uint64_t> seed;
  bool full_scale = false;
  bool trace = false;
};

inline std::vector<std::pair<std::string, ExperimentConfig>> resolve_document(const json& doc, const RunOptions& ro,
                                                                              const std::filesystem::path& base_dir = {}) {
  std::vector<std::pair<std::string, ExperimentConfig>> out;
  for (auto& [name, j] : expand_variants(doc, ro.full_scale)) {
    try {
      ExperimentConfig c = parse_experiment(j, base_dir);
      if (ro.seed) c.seed = *ro.seed;
      out.emplace_back(name, std::move(c));
    } catch (const config_error& e) {
      if (name == "default") throw;
      throw config_error("variant " + name + ": " + e.what());
    }
  }
  return out;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

// Writes results_<variant>.csv per variant plus metadata.json (and
// trace_<variant>.json when tracing) into out_dir.
inline std::vector<VariantResult> run_experiment(const json& doc, const RunOptions& ro, const std::filesystem::path& out_dir,
                                                 const std::filesystem::path& base_dir = {}) {
  const auto configs = resolve_document(doc, ro, base_dir);
  std::filesystem::create_directories(out_dir);
  std::vector<VariantResult> results;
  json meta{{"version", kVersion}, {"variants", json::array()}};
  for (const auto& [name, c] : configs) {
    VariantResult v = run_variant(name, c, ro.trace);
    write_text(out_dir / ("results_" + name + ".csv"), results_csv(v.rows));
    if (ro.trace) write_text(out_dir / ("trace_" + name + ".json"), v.trace.dump(1) + "\n");
    const json resolved = experiment_to_json(c);
    json stats = json::array();
    for (const auto& r : v.rows)
      stats.push_back({{"snr_db", r.snr_db},
                       {"misses_refined", r.misses_refined},
                       {"singular_bounds", r.singular_bounds},
                       {"dropped_parallel", r.dropped_parallel}});
    meta["variants"].push_back({{"name", name},
                                {"results", "results_" + name + ".csv"},
                                {"seed", c.seed},
                                {"config_hash", config_hash(resolved)},
                                {"config", resolved},
                                {"stats", stats}});
    results.push_back(std::move(v));
  }
  write_text(out_dir / "metadata.json", meta.dump(1) + "\n");
  return results;
}

}  // namespace thzris
