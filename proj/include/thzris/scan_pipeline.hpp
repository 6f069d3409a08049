// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <vector>

#include "receiver_doa.hpp"
#include "signal_synthesis.hpp"

namespace thzris {

struct ScanOptions {
  DoaOptions doa;
  double dedup_radius = 0.01;  // meters
};

struct TargetEstimate {
  Point2 position;
  double aod = 0.0;
  double aoa = 0.0;
  double peak = 0.0;
  int stage = 0;
  int sector = 0;
};

struct StageTrace {
  int stage = 0;
  std::vector<int> visited;
  std::vector<int> survivors;
  std::vector<std::vector<Detection>> peaks;  // per visited sector, stage-normalized
};

struct ScanResult {
  std::vector<TargetEstimate> estimates;
  int sector_transmissions = 0;
  int total_transmissions = 0;  // sector transmissions plus the calibration shot
  int dropped_parallel = 0;
  std::vector<cvec> calibration;  // empty when subtraction is off
  std::vector<StageTrace> trace;
};

// One estimate per detection, AoD at the sector midpoint. Parallel rays are
// dropped and counted.
inline std::vector<TargetEstimate> localize(const Scenario& sc, const Codeword& sector, const DetectionList& dets,
                                            int* dropped = nullptr) {
  std::vector<TargetEstimate> out;
  for (const auto& d : dets) {
    try {
      TargetEstimate e;
      e.aod = sector.midpoint();
      e.aoa = d.aoa;
      e.peak = d.value;
      e.stage = sector.stage;
      e.sector = sector.index;
      e.position = intersect_rays(sc.p_ris, e.aod, sc.p_rx, e.aoa);
      out.push_back(e);
    } catch (const parallel_rays&) {
      if (dropped) ++*dropped;
    }
  }
  return out;
}

namespace detail {

struct SectorShot {
  const Codeword* cw = nullptr;
  SpatialSpectrum spectrum;
  DetectionList dets;
};

// Visit each sector once. Spectra are rescaled by the largest raw spectrum of
// the stage so weak sectors fall below gamma.
inline std::vector<SectorShot> scan_stage(const Scenario& sc, const Realization& real, const std::vector<const Codeword*>& sectors,
                                          const std::vector<cvec>& calib, const ScanOptions& opt, Rng& rng) {
  std::vector<SectorShot> shots;
  const bool alias = endfire_aliased(sc.rx_array(), sc.grid.fc);
  double stage_max = 0.0;
  for (const Codeword* cw : sectors) {
    std::vector<cmat> Y = synthesize_transmission(sc, real, cw->psi(), rng, sc.snapshots);
    if (!calib.empty()) Y = background_subtract(Y, calib);
    SectorShot s;
    s.cw = cw;
    s.spectrum = wideband_spectrum(Y, sc, opt.doa);
    stage_max = std::max(stage_max, s.spectrum.scale);
    shots.push_back(std::move(s));
  }
  for (auto& s : shots) {
    if (stage_max > 0.0) {
      SpatialSpectrum rescaled = s.spectrum;
      rescaled.values = s.spectrum.values * (s.spectrum.scale / stage_max);
      s.dets = detect_peaks(rescaled, opt.doa.gamma, alias);
    }
  }
  return shots;
}

// Final stage: detections from different sectors at the same AoA (within one
// grid cell, chained) are one target; the sector with the strongest peak
// supplies the AoD.
inline std::vector<TargetEstimate> resolve_final(const Scenario& sc, const std::vector<SectorShot>& shots, int* dropped) {
  struct Item {
    int index;
    double value;
    const SectorShot* shot;
    Detection det;
  };
  std::vector<Item> items;
  for (const auto& s : shots)
    for (const auto& d : s.dets) items.push_back({d.index, d.value, &s, d});
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.index < b.index; });
  std::vector<TargetEstimate> out;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i, best = i;
    while (j + 1 < items.size() && items[j + 1].index - items[j].index <= 1) {
      ++j;
      if (items[j].value > items[best].value) best = j;
    }
    auto e = localize(sc, *items[best].shot->cw, {items[best].det}, dropped);
    out.insert(out.end(), e.begin(), e.end());
    i = j + 1;
  }
  return out;
}

inline std::vector<TargetEstimate> dedup(std::vector<TargetEstimate> in, double radius) {
  std::vector<TargetEstimate> out;
  std::vector<int> count;
  for (const auto& e : in) {
    bool merged = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (distance(out[i].position, e.position) <= radius) {
        const double n = count[i];
        out[i].position = (out[i].position * n + e.position) * (1.0 / (n + 1));
        if (e.peak > out[i].peak) {
          const Point2 keep = out[i].position;
          out[i] = e;
          out[i].position = keep;
        }
        ++count[i];
        merged = true;
        break;
      }
    }
    if (!merged) {
      out.push_back(e);
      count.push_back(1);
    }
  }
  return out;
}

inline StageTrace trace_of(int stage, const std::vector<SectorShot>& shots) {
  StageTrace t;
  t.stage = stage;
  for (const auto& s : shots) {
    t.visited.push_back(s.cw->index);
    if (!s.dets.empty()) t.survivors.push_back(s.cw->index);
    t.peaks.push_back(s.dets);
  }
  return t;
}

inline std::vector<cvec> collect_calibration(const Scenario& sc, const Realization& real, Rng& rng) {
  if (!sc.subtraction) return {};
  return synthesize_calibration(sc, real, rng, sc.snapshots);
}

}  // namespace detail

// Adaptive hierarchical scan. A sector survives when its stage-normalized
// spectrum has at least one peak >= gamma; survivors spawn their L children.
template <class Book>
ScanResult run_scan(const Scenario& sc, const Realization& real, const Book& cb, const ScanOptions& opt, Rng& rng) {
  if (!(opt.doa.gamma > 0.0 && opt.doa.gamma < 1.0)) throw config_error("gamma must lie in (0, 1)");
  if (cb.S < 1) throw config_error("codebook has no stages");
  if (cb.n_ris() != sc.n_ris) throw config_error("codebook does not match N_RIS");
  ScanResult res;
  res.calibration = detail::collect_calibration(sc, real, rng);
  std::vector<int> active(std::size_t(cb.L));
  for (int l = 0; l < cb.L; ++l) active[std::size_t(l)] = l;
  for (int s = 1; s <= cb.S; ++s) {
    std::vector<const Codeword*> sectors;
    for (int idx : active) sectors.push_back(&cb.at(s, idx));
    const auto shots = detail::scan_stage(sc, real, sectors, res.calibration, opt, rng);
    res.sector_transmissions += int(shots.size());
    res.trace.push_back(detail::trace_of(s, shots));
    if (s == cb.S) {
      res.estimates = detail::dedup(detail::resolve_final(sc, shots, &res.dropped_parallel), opt.dedup_radius);
      break;
    }
    std::vector<int> next;
    for (const auto& sh : shots)
      if (!sh.dets.empty())
        for (int c = 0; c < cb.L; ++c) next.push_back(sh.cw->index * cb.L + c);
    if (next.empty()) break;
    active = std::move(next);
  }
  res.total_transmissions = res.sector_transmissions + (res.calibration.empty() ? 0 : 1);
  return res;
}

// Baseline that visits every finest-stage sector once.
inline ScanResult run_full_scan(const Scenario& sc, const Realization& real, const std::vector<Codeword>& finest,
                                const ScanOptions& opt, Rng& rng) {
  if (!(opt.doa.gamma > 0.0 && opt.doa.gamma < 1.0)) throw config_error("gamma must lie in (0, 1)");
  ScanResult res;
  res.calibration = detail::collect_calibration(sc, real, rng);
  std::vector<const Codeword*> sectors;
  for (const auto& cw : finest) sectors.push_back(&cw);
  const auto shots = detail::scan_stage(sc, real, sectors, res.calibration, opt, rng);
  res.sector_transmissions = int(shots.size());
  res.trace.push_back(detail::trace_of(finest.empty() ? 0 : finest.front().stage, shots));
  res.estimates = detail::dedup(detail::resolve_final(sc, shots, &res.dropped_parallel), opt.dedup_radius);
  res.total_transmissions = res.sector_transmissions + (res.calibration.empty() ? 0 : 1);
  return res;
}

}  // namespace thzris
