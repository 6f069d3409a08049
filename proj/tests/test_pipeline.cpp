// SPDX-License-Identifier: Apache-2.0
// Signal synthesis, scanning and refinement.
#include <gtest/gtest.h>

#include "thzris/mle_refine.hpp"

using namespace thzris;

namespace {

Scenario scene() {
  Scenario sc;
  sc.n_tx = 64;
  sc.targets.push_back({{5.25, 3.75}, {}});
  return sc;
}

Scenario clean() {
  Scenario sc = scene();
  sc.noise = false;
  sc.diffraction_path1 = sc.diffraction_path2 = false;
  sc.subtraction = false;
  sc.targets[0].rcs.assign(std::size_t(sc.n_bins()), std::sqrt(2.5));
  return sc;
}

const LazyCodebook& book53() {
  static const LazyCodebook cb(5, 3, 0, clean());
  return cb;
}

}  // namespace

TEST(Synthesis, SameSeedSameSignal) {
  const Scenario sc = scene();
  Rng a(21), b(21);
  const Realization ra = draw_realization(sc, a), rb = draw_realization(sc, b);
  const cvec psi = steer_codeword(sc, 1.0).psi();
  const auto ya = synthesize_transmission(sc, ra, psi, a, 3), yb = synthesize_transmission(sc, rb, psi, b, 3);
  for (int m = 0; m < sc.n_bins(); ++m) EXPECT_EQ((ya[std::size_t(m)] - yb[std::size_t(m)]).norm(), 0.0);
}

TEST(Synthesis, FixedRcsIsUsedVerbatim) {
  const Scenario sc = clean();
  Rng rng(1);
  const Realization r = draw_realization(sc, rng);
  for (double v : r.rcs[0]) EXPECT_DOUBLE_EQ(v, std::sqrt(2.5));
}

TEST(Synthesis, NoiseFreeWithoutPath2EqualsNoDiffractionPlusPath1) {
  Scenario sc = scene();
  sc.noise = false;
  sc.diffraction_path2 = false;
  Scenario plain = sc;
  plain.diffraction_path1 = false;
  Rng a(5), b(5);
  const Realization ra = draw_realization(sc, a), rb = draw_realization(plain, b);
  const cvec psi = steer_codeword(sc, 1.05).psi();
  const auto ya = synthesize_transmission(sc, ra, psi, a, 1), yb = synthesize_transmission(plain, rb, psi, b, 1);
  for (int m = 0; m < sc.n_bins(); ++m) {
    const cvec diff = ya[std::size_t(m)].col(0) - yb[std::size_t(m)].col(0) - ra.path1[std::size_t(m)];
    EXPECT_LT(diff.norm(), 1e-12 * ya[std::size_t(m)].norm());
  }
}

TEST(Synthesis, DisabledDiffractionIsBitEqualToNoBlockage) {
  Scenario sc = scene();
  sc.noise = false;
  sc.diffraction_path1 = sc.diffraction_path2 = false;
  Scenario open = sc;
  open.blockage.reset();
  Rng a(8), b(8);
  const Realization ra = draw_realization(sc, a), rb = draw_realization(open, b);
  const cvec psi = steer_codeword(sc, 0.9).psi();
  const auto ya = synthesize_transmission(sc, ra, psi, a, 2), yb = synthesize_transmission(open, rb, psi, b, 2);
  for (int m = 0; m < sc.n_bins(); ++m) EXPECT_EQ((ya[std::size_t(m)] - yb[std::size_t(m)]).norm(), 0.0);
}

TEST(Synthesis, BackgroundSubtractionRemovesPath1) {
  Scenario sc = scene();
  sc.noise = false;
  sc.diffraction_path2 = false;
  Rng rng(3);
  const Realization r = draw_realization(sc, rng);
  const auto cal = synthesize_calibration(sc, r, rng, sc.snapshots);
  const cvec psi = steer_codeword(sc, 1.05).psi();
  const auto y = background_subtract(synthesize_transmission(sc, r, psi, rng, 2), cal);
  for (int m = 0; m < sc.n_bins(); ++m) {
    const cvec want = target_path(r, psi, 0, m) - target_path(r, retro_codeword(sc).psi(), 0, m);
    EXPECT_LT((y[std::size_t(m)].col(1) - want).norm(), 1e-9 * want.norm());
  }
}

TEST(Synthesis, NoiseHasRequestedVariance) {
  Scenario sc = scene();
  sc.targets[0].rcs.assign(std::size_t(sc.n_bins()), 0.0);
  sc.diffraction_path1 = sc.diffraction_path2 = false;
  Rng rng(4);
  const Realization r = draw_realization(sc, rng);
  const auto Y = synthesize_transmission(sc, r, steer_codeword(sc, 1.0).psi(), rng, 2000);
  double p = 0.0;
  for (const auto& Ym : Y) p += Ym.squaredNorm() / double(Ym.size());
  EXPECT_NEAR(p / sc.n_bins() / sc.noise_variance(), 1.0, 0.02);
}

TEST(Scan, LocalizeDropsParallelRays) {
  const Scenario sc = clean();
  Codeword cw;
  cw.lo = cw.hi = 1.0;
  int dropped = 0;
  const auto e = localize(sc, cw, {{0, 1.0, 1.0}, {1, 2.0, 0.5}}, &dropped);
  EXPECT_EQ(dropped, 1);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_DOUBLE_EQ(e[0].aod, 1.0);
}

TEST(Scan, DedupMergesNearbyEstimates) {
  std::vector<TargetEstimate> in(3);
  in[0].position = {1.0, 1.0};
  in[0].peak = 0.5;
  in[1].position = {1.004, 1.0};
  in[1].peak = 0.9;
  in[2].position = {2.0, 1.0};
  const auto out = detail::dedup(in, 0.01);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_NEAR(out[0].position.x, 1.002, 1e-12);
  EXPECT_DOUBLE_EQ(out[0].peak, 0.9);
}

TEST(Scan, NoiseFreeHitsFloorWithFifteenShots) {
  const Scenario sc = clean();
  Rng rng(1);
  const Realization r = draw_realization(sc, rng);
  const ScanResult s = run_scan(sc, r, book53(), ScanOptions{}, rng);
  EXPECT_EQ(s.sector_transmissions, 15);
  EXPECT_EQ(s.total_transmissions, 15);
  ASSERT_EQ(s.estimates.size(), 1u);
  EXPECT_NEAR(distance(s.estimates[0].position, sc.targets[0].position),
              deterministic_error_floor(sc.p_ris, sc.p_rx, sc.targets[0].position, 5, 3, sc.rx_res), 1e-9);
  ASSERT_EQ(s.trace.size(), 3u);
  EXPECT_EQ(s.trace[0].visited.size(), 5u);
}

TEST(Scan, CalibrationShotCountedSeparately) {
  Scenario sc = clean();
  sc.subtraction = true;
  Rng rng(1);
  const Realization r = draw_realization(sc, rng);
  const ScanResult s = run_scan(sc, r, book53(), ScanOptions{}, rng);
  EXPECT_EQ(s.total_transmissions, s.sector_transmissions + 1);
  EXPECT_EQ(s.calibration.size(), std::size_t(sc.n_bins()));
}

TEST(Scan, RejectsMismatchedCodebook) {
  Scenario sc = clean();
  sc.n_ris = 8;
  Rng rng(1);
  const Realization r = draw_realization(sc, rng);
  EXPECT_THROW(run_scan(sc, r, book53(), ScanOptions{}, rng), config_error);
  ScanOptions bad;
  bad.doa.gamma = 1.5;
  EXPECT_THROW(run_scan(clean(), r, book53(), bad, rng), config_error);
}

TEST(Refine, ProbesAreSymmetricInCosine) {
  const Scenario sc = clean();
  const auto p = probe_angles(sc, 1.0, 3);
  EXPECT_NEAR(p[1], 1.0, 1e-15);
  EXPECT_NEAR(std::cos(p[0]) - std::cos(1.0), -1.0 / 16, 1e-15);
  EXPECT_NEAR(std::cos(p[2]) - std::cos(1.0), 1.0 / 16, 1e-15);
}

TEST(Refine, NoiseFreeRecoversTruth) {
  const Scenario sc = clean();
  Rng rng(2);
  const Realization r = draw_realization(sc, rng);
  const ScanResult s = run_scan(sc, r, book53(), ScanOptions{}, rng);
  const auto ref = refine(sc, r, s, 5, 3, RefinementConfig{}, rng);
  ASSERT_EQ(ref.size(), 1u);
  EXPECT_TRUE(ref[0].located);
  EXPECT_LT(distance(ref[0].position, sc.targets[0].position), 1e-5);
  EXPECT_LT(std::abs(ref[0].theta - sc.aod(0)), 1e-6);
  EXPECT_LT(std::abs(ref[0].phi - sc.aoa(0)), 1e-6);
}

TEST(Refine, NeverLowersLikelihood) {
  Scenario sc = clean();
  sc.noise = true;
  sc.snr_db = 0.0;
  Rng rng(6);
  const Realization r = draw_realization(sc, rng);
  const ScanResult s = run_scan(sc, r, book53(), ScanOptions{}, rng);
  ASSERT_FALSE(s.estimates.empty());
  std::vector<double> th{s.estimates[0].aod};
  const auto obs = collect_observations(sc, r, th, {}, RefinementConfig{}, rng);
  const auto gains = model_gains(sc, s.estimates[0].position);
  const auto ref = refine_observed(sc, obs, s.estimates, gains, finest_sector_width(5, 3), kPi / 180, RefinementConfig{});
  std::vector<TargetParams> init{{s.estimates[0].aod, s.estimates[0].aoa, std::vector<cd>(4, cd(0.0))}};
  const auto rr = detail::residual_data(sc, obs, init, gains, 0);
  detail::fit_rho(sc, obs, rr, gains, init[0].theta, init[0].phi, &init[0].rho);
  EXPECT_GE(ref[0].log_likelihood, log_likelihood(sc, obs, init, gains));
}

TEST(Refine, EmptyScanGivesNothing) {
  const Scenario sc = clean();
  Rng rng(1);
  const Realization r = draw_realization(sc, rng);
  EXPECT_TRUE(refine(sc, r, ScanResult{}, 5, 3, RefinementConfig{}, rng).empty());
  RefinementConfig bad;
  bad.tol = 0.0;
  EXPECT_THROW(refine_observed(sc, {}, {}, {}, 0.1, 0.1, bad), config_error);
}
