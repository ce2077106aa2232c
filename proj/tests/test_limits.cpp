#include <gtest/gtest.h>

#include <cmath>

#include "hitchin/limits.hpp"
#include "support.hpp"

using namespace hitchin;
using namespace hitchin::limits;
using hitchin::testing::companion_phi;
using hitchin::testing::diagonal_phi;
using hitchin::testing::patch;
using hitchin::testing::torus;

namespace {

// Records whose probe values follow C exp(slope * r_t), for decay_fit.
std::vector<SweepRecord> synthetic(const std::vector<double>& r, const std::vector<double>& values) {
  std::vector<SweepRecord> out;
  for (std::size_t i = 0; i < r.size(); ++i) {
    SweepRecord rec;
    rec.t = double(i + 1);
    rec.r_t = r[i];
    ProbeValues p;
    p.gap = 0.5;
    p.comm_sup = values[i];
    rec.probes.push_back(p);
    out.push_back(rec);
  }
  return out;
}

}  // namespace

TEST(Sweep, DiagonalFieldStaysFlatAtEveryScale) {
  auto dom = torus(1, 16);
  auto phi = diagonal_phi(dom, {{cd(1.0), cd(-1.0)}});
  SweepOptions opt;
  opt.probes = {{1.0, 2.0}};
  auto sweep = scaling_sweep(phi, {1, 2, 4, 8}, opt);
  ASSERT_EQ(sweep.size(), 4u);
  for (const auto& rec : sweep) {
    EXPECT_NEAR(rec.r_t, rec.t * sweep.front().r_t, 1e-12 * rec.r_t);
    EXPECT_LT(rec.comm_sup, 1e-12);
    EXPECT_LT(rec.dA_phi_int, 1e-20);
    EXPECT_LT(rec.probes[0].ilf_sup, 1e-12);
    EXPECT_TRUE(rec.report.converged);
  }
  auto fit = decay_fit(sweep);
  ASSERT_EQ(fit.size(), 1u);
  EXPECT_TRUE(fit[0].degenerate);
  EXPECT_TRUE(fit[0].floored);
}

TEST(Sweep, SpectralDataIsScaleInvariant) {
  auto dom = patch(1, 16, 0.6);
  auto phi = companion_phi(dom, [](cd z) { return z; });
  SweepOptions opt;
  opt.solver.tol = 1e-6;
  opt.initial = patch_start_metric(phi, 0.5 * 0.6 * std::sqrt(2.0));
  auto sweep = scaling_sweep(phi, {1, 2, 4, 8}, opt);
  for (const auto& rec : sweep)
    for (std::size_t k = 0; k < rec.kappa.p.size(); ++k)
      for (std::size_t i = 0; i < rec.kappa.p[k].data().size(); ++i)
        EXPECT_NEAR(std::abs(rec.kappa.p[k].data()[i] - sweep.front().kappa.p[k].data()[i]), 0.0, 1e-10);
}

TEST(Sweep, RejectsBadScaleLists) {
  auto dom = torus(1, 8);
  auto phi = diagonal_phi(dom, {{cd(1.0), cd(-1.0)}});
  EXPECT_THROW(scaling_sweep(phi, {1, 2, 4}, {}), Error);
  EXPECT_THROW(scaling_sweep(phi, {1, 2, 2, 4}, {}), Error);
  EXPECT_THROW(scaling_sweep(phi, {0, 1, 2, 4}, {}), Error);
}

TEST(DecayFit, RecoversExponentialRate) {
  std::vector<double> r = {1, 2, 4, 8}, v;
  for (double x : r) v.push_back(3.0 * std::exp(-0.7 * x));
  auto fit = decay_fit(synthetic(r, v));
  ASSERT_EQ(fit.size(), 1u);
  EXPECT_NEAR(fit[0].slope, -0.7, 1e-12);
  EXPECT_NEAR(fit[0].intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(fit[0].r2, 1.0, 1e-12);
  EXPECT_NEAR(fit[0].slope_over_gap, -1.4, 1e-12);
  EXPECT_FALSE(fit[0].floored);
}

TEST(DecayFit, FitsOnlyTheUnflooredPrefix) {
  auto fit = decay_fit(synthetic({1, 2, 3, 4, 5}, {1e-2, 1e-4, 1e-6, 1e-16, 1e-3}));
  EXPECT_TRUE(fit[0].floored);
  EXPECT_EQ(fit[0].points_used, 3);
  EXPECT_NEAR(fit[0].slope, -2 * std::log(10.0), 1e-10);
}

TEST(DecayFit, NeedsFourRecords) {
  EXPECT_THROW(decay_fit(synthetic({1, 2, 3}, {1, 0.5, 0.25})), Error);
}

TEST(Uhlenbeck, TrivialInComplexDimensionOne) {
  auto dom = torus(1, 16);
  EndoFormField F(dom, 2, 1, 1);
  HermitianMetricField H(dom, 2);
  auto u = uhlenbeck_radius_field(F, H, 1e-2);
  EXPECT_FALSE(u.note.empty());
  for (std::size_t s = 0; s < dom.sites(); ++s) EXPECT_EQ(u.radius(s, 0).real(), u.r_max);
}

TEST(Uhlenbeck, FlatCurvatureGivesMaximalRadius) {
  auto dom = torus(2, 8);
  EndoFormField F(dom, 1, 1, 1);
  HermitianMetricField H(dom, 1);
  auto u = uhlenbeck_radius_field(F, H, 1e-2);
  for (std::size_t s = 0; s < dom.sites(); ++s) EXPECT_EQ(u.radius(s, 0).real(), u.r_max);
}

TEST(Uhlenbeck, ConcentratedCellShrinksRadiusNearby) {
  auto dom = torus(2, 8);
  const double eps0 = 1e-2;
  EndoFormField F(dom, 1, 1, 1);
  HermitianMetricField H(dom, 1);
  const std::size_t hot = 0;
  F.at(hot, 0)(0, 0) = 1.0;
  double dens = std::pow(higgs::pointwise_norm(H, F)[hot], 2) * dom.weight(hot);
  F *= cd(std::sqrt(2 * eps0 / dens));
  auto u = uhlenbeck_radius_field(F, H, eps0);
  // The radius is the last ball that still excludes the cell, so it lags the distance.
  double prev = -1;
  for (int k = 1; k <= 4; ++k) {
    std::vector<int> idx = {k, 0, 0, 0};
    double r = u.radius(dom.ravel(idx.data()), 0).real();
    EXPECT_GT(r, prev);
    EXPECT_LT(r, k * dom.spacing()[0]);
    prev = r;
  }
  EXPECT_LT(u.radius(hot, 0).real(), dom.spacing()[0]);
  auto zero = uhlenbeck_radius_field(cd(0.0) * F, H, eps0);
  EXPECT_EQ(zero.radius(hot, 0).real(), zero.r_max);
}

TEST(Adiabatic, DiagonalNormalisedFieldIsExact) {
  auto dom = torus(1, 16);
  auto phi = diagonal_phi(dom, {{cd(1.0), cd(-1.0)}});
  phi *= cd(1.0 / higgs::l2_norm(phi));
  auto r = adiabatic_residual(HermitianMetricField(dom, 2), phi);
  for (double v : r.as_vector()) EXPECT_LT(v, 1e-12);
}

TEST(Adiabatic, ConstantSectionDecouplesInItsEigenframe) {
  auto dom = torus(1, 16);
  auto phi = companion_phi(dom, [](cd) { return cd(0.6, 0.8); });
  auto r = adiabatic_residual(decoupled_metric(phi), phi);
  EXPECT_LT(r.commutator, 1e-10);
  EXPECT_LT(r.ilf, 1e-10);
  EXPECT_LT(r.dbar, 1e-10);
}

TEST(Adiabatic, ZeroFieldIsRejected) {
  auto dom = torus(1, 8);
  EXPECT_THROW(adiabatic_residual(HermitianMetricField(dom, 2), EndoFormField(dom, 2, 1, 0)), NormalizationError);
}

TEST(Masks, DilationWrapsOnTheTorus) {
  auto dom = torus(1, 16, 16.0);
  std::vector<std::uint8_t> m(dom.sites(), 0);
  m[0] = 1;
  auto d = dilate_mask(dom, m, 1.5);
  std::vector<int> far = {15, 15}, out = {2, 0};
  EXPECT_TRUE(d[dom.ravel(far.data())]);
  EXPECT_FALSE(d[dom.ravel(out.data())]);
  EXPECT_EQ(std::count(d.begin(), d.end(), 1), 9);
}

TEST(Companion, RejectsNonCompanionFields) {
  auto dom = torus(1, 8);
  EXPECT_THROW(companion_q(EndoFormField(dom, 2, 1, 0)), ConditioningError);
  EXPECT_THROW(companion_q(EndoFormField(dom, 3, 1, 0)), InvalidDegreeError);
}

TEST(Companion, InterpolantMatchesDecoupledMetricOnTheBoundary) {
  auto dom = patch(1, 16, 0.6);
  auto phi = companion_phi(dom, [](cd z) { return z; });
  auto H0 = decoupled_metric(phi), H1 = patch_start_metric(phi, 0.4);
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    EXPECT_NEAR(std::abs(H1.at(s).determinant() - cd(1.0)), 0.0, 1e-12);
    if (dom.on_boundary(s)) EXPECT_LT((H1.at(s) - H0.at(s)).norm(), 1e-12);
  }
}

TEST(Probe, RadiusRespectsDistanceToZ) {
  auto dom = patch(1, 32, 1.0);
  std::vector<std::uint8_t> z(dom.sites(), 0);
  EXPECT_NEAR(probe_radius(dom, {0.5, 0.0}, z), 0.1, 1e-12);
  std::vector<int> centre = {16, 16};
  z[dom.ravel(centre.data())] = 1;
  const double zx = dom.coord(dom.ravel(centre.data()), 0), zy = dom.coord(dom.ravel(centre.data()), 1);
  const double dist = std::hypot(0.05 - zx, 0.0 - zy);
  EXPECT_NEAR(probe_radius(dom, {0.05, 0.0}, z), std::min(0.2, dist) / 2, 1e-12);
}
