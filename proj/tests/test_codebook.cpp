// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include "thzris/ris_codebook.hpp"

using namespace thzris;

namespace {

Scenario scene(int n_ris = 16) {
  Scenario sc;
  sc.n_ris = n_ris;
  sc.targets.push_back({{5.25, 3.75}, {}});
  return sc;
}

// Mean in-sector over mean out-of-sector power of a codeword at fc.
double sector_contrast(const Codeword& cw, const Scenario& sc, int R) {
  const rvec grid = design_grid(R);
  const cvec p = ris_beampattern(cw, grid, sc.grid.fc, sc);
  double in = 0.0, out = 0.0;
  int ni = 0, no = 0;
  for (int r = 0; r < R; ++r) {
    const double v = std::norm(p(r));
    if (grid(r) >= cw.lo && grid(r) < cw.hi) {
      in += v;
      ++ni;
    } else {
      out += v;
      ++no;
    }
  }
  return (in / ni) / (out / no);
}

}  // namespace

TEST(Grid, CellCentered) {
  const rvec g = design_grid(4);
  EXPECT_DOUBLE_EQ(g(0), kPi / 8);
  EXPECT_DOUBLE_EQ(g(3), 7 * kPi / 8);
}

TEST(Ideal, OnesCoverTheSector) {
  const rvec d = ideal_pattern(50, 5, 1, 2);
  EXPECT_EQ(d.sum(), 10.0);
  for (int r = 20; r < 30; ++r) EXPECT_EQ(d(r), 1.0);
  EXPECT_EQ(d(19), 0.0);
  EXPECT_EQ(d(30), 0.0);
  EXPECT_THROW(ideal_pattern(49, 5, 1, 0), config_error);
  EXPECT_THROW(ideal_pattern(50, 5, 1, 5), config_error);
}

TEST(Projection, ConstantModulus) {
  cvec v(3);
  v << cd(3, 4), cd(0, 0), cd(-1e-3, 0);
  const cvec p = project_constant_modulus(v);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(std::abs(p(i)), 1 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(std::arg(p(0)), std::arg(v(0)), 1e-15);
}

TEST(Design, ResidualHistoryIsMonotone) {
  const Scenario sc = scene();
  const DesignBasis B = make_design_basis(sc, 50);
  std::vector<double> hist;
  DesignOptions opt;
  opt.history = &hist;
  const DesignResult r = design_auxiliary(B, ideal_pattern(50, 5, 1, 1), opt);
  ASSERT_GE(hist.size(), 2u);
  for (std::size_t i = 1; i < hist.size(); ++i) EXPECT_LE(hist[i], hist[i - 1] * (1 + 1e-12));
  EXPECT_DOUBLE_EQ(hist.back(), r.residual);
  for (Eigen::Index i = 0; i < r.c.size(); ++i) EXPECT_NEAR(std::abs(r.c(i)), 0.25, 1e-12);
}

TEST(Design, ResidualAgreesWithMagnitudeFit) {
  const Scenario sc = scene();
  const DesignBasis B = make_design_basis(sc, 50);
  const rvec d = ideal_pattern(50, 5, 1, 3);
  const DesignResult r = design_auxiliary(B, d, {});
  EXPECT_NEAR(r.residual * r.residual, magnitude_fit_residual(B, d, r.c), 1e-12);
  // no scaling of the fitted pattern does better than the optimum
  const cvec y = B.A.adjoint() * r.c;
  const double rho = d.dot(y.cwiseAbs()) / y.squaredNorm();
  for (double s : {0.9, 1.1}) EXPECT_GE((s * rho * y.cwiseAbs() - d).squaredNorm(), r.residual * r.residual - 1e-12);
}

TEST(Design, StageOneSectorsAreDirective) {
  // N = 64, R = 180, L = 5: frozen lower bound on the sector contrast
  const Scenario sc = scene(64);
  const DesignBasis B = make_design_basis(sc, 180);
  for (int r = 0; r < 5; ++r) {
    const Codeword cw = sector_codeword(B, 5, 1, r, sc, {});
    EXPECT_GE(sector_contrast(cw, sc, 180), 5.0) << r;
  }
}

TEST(Design, PhasesRebuildPsi) {
  const Scenario sc = scene();
  const DesignBasis B = make_design_basis(sc, 50);
  const Codeword cw = sector_codeword(B, 5, 1, 2, sc, {});
  const cvec a = steering_vector(sc.ris_array(), sc.phi_tx(), sc.grid.fc);
  const DesignResult r = design_auxiliary(B, ideal_pattern(50, 5, 1, 2), [] {
    DesignOptions o;
    o.seed = 7 + 1000003ULL + 2;
    return o;
  }());
  const cvec c = cw.psi().cwiseProduct(a) / 4.0;
  EXPECT_LT((c - r.c).norm(), 1e-12);
}

TEST(Codebook, ShapeAndSectors) {
  const Scenario sc = scene();
  const Codebook cb = design_codebook(3, 2, 0, sc);
  EXPECT_EQ(cb.R, 18);
  EXPECT_EQ(cb.size(), 12u);
  EXPECT_EQ(cb.n_ris(), 16);
  EXPECT_DOUBLE_EQ(cb.at(2, 4).lo, 4 * kPi / 9);
  EXPECT_DOUBLE_EQ(cb.at(2, 4).hi, 5 * kPi / 9);
  EXPECT_THROW(design_codebook(1, 2, 0, sc), config_error);
  EXPECT_THROW(design_codebook(3, 2, 10, sc), config_error);
}

TEST(Codebook, LazyMatchesEager) {
  const Scenario sc = scene();
  const Codebook eager = design_codebook(3, 2, 0, sc);
  const LazyCodebook lazy(3, 2, 0, sc);
  for (int s = 2; s >= 1; --s)
    for (int r = 0; r < ipow(3, s); ++r) EXPECT_EQ(lazy.at(s, r).phases, eager.at(s, r).phases);
  EXPECT_EQ(lazy.designed(), 12u);
  EXPECT_THROW(lazy.at(3, 0), std::out_of_range);
}

TEST(Codebook, JsonRoundTrip) {
  const Scenario sc = scene();
  const Codebook cb = design_codebook(2, 2, 0, sc);
  const auto path = (std::filesystem::temp_directory_path() / "thzris_cb_test.json").string();
  save_codebook(cb, path);
  const Codebook back = load_codebook(path);
  EXPECT_EQ(back.L, 2);
  EXPECT_EQ(back.S, 2);
  EXPECT_EQ(back.R, cb.R);
  EXPECT_DOUBLE_EQ(back.design_freq, cb.design_freq);
  for (int s = 1; s <= 2; ++s)
    for (int r = 0; r < ipow(2, s); ++r) EXPECT_EQ(back.at(s, r).phases, cb.at(s, r).phases);
}

TEST(Codebook, JsonRejectsMalformed) {
  nlohmann::json j = codebook_to_json(design_codebook(2, 1, 0, scene()));
  j["format_version"] = 99;
  EXPECT_THROW(codebook_from_json(j), config_error);
  j["format_version"] = kCodebookFormatVersion;
  j["S"] = 2;
  EXPECT_THROW(codebook_from_json(j), config_error);
}

TEST(Steer, MatchedSteerPeaksAtAngle) {
  const Scenario sc = scene();
  const Codeword cw = steer_codeword(sc, 1.2);
  rvec ang(3);
  ang << 1.2, 1.0, 1.4;
  const cvec p = ris_beampattern(cw, ang, sc.grid.fc, sc);
  EXPECT_NEAR(std::abs(p(0)), 16.0, 1e-9);
  EXPECT_LT(std::abs(p(1)), std::abs(p(0)));
  EXPECT_LT(std::abs(p(2)), std::abs(p(0)));
}

TEST(Steer, RetroPointsAtTx) {
  const Scenario sc = scene();
  rvec ang(1);
  ang << sc.phi_tx();
  EXPECT_NEAR(std::abs(ris_beampattern(retro_codeword(sc), ang, sc.grid.fc, sc)(0)), 16.0, 1e-9);
}
