#include <gtest/gtest.h>

#include <cmath>

#include "hitchin/z2.hpp"
#include "support.hpp"

using namespace hitchin;
using namespace hitchin::limits;
using hitchin::testing::companion_phi;
using hitchin::testing::diagonal_phi;
using hitchin::testing::patch;
using hitchin::testing::torus;

namespace {

struct Extracted {
  EndoFormField phi_hat;
  SpectralData kappa;
  Z2OneForm w;
};

Extracted extract(const EndoFormField& phi, const HermitianMetricField& H) {
  Extracted e;
  e.phi_hat = cd(1.0 / higgs::l2_norm(phi)) * phi;
  e.kappa = higgs::hitchin_map(e.phi_hat);
  higgs::attach_discriminant(e.kappa, higgs::discriminant(e.kappa));
  e.w = extract_z2(e.kappa, e.phi_hat, H);
  return e;
}

}  // namespace

TEST(Z2, ConstantSectionOnTorusIsOrientable) {
  auto dom = torus(1, 32);
  const cd q(0.6, 0.8);
  auto phi = companion_phi(dom, [&](cd) { return q; });
  auto e = extract(phi, decoupled_metric(phi));
  EXPECT_EQ(std::count(e.w.z_mask.begin(), e.w.z_mask.end(), 1), 0);
  EXPECT_EQ(std::count(e.w.edge_sign.begin(), e.w.edge_sign.end(), -1), 0);
  EXPECT_EQ(cocycle_defects(e.w), 0u);
  const double p2 = std::abs(e.kappa.p[1].data()[0]);
  for (std::size_t s = 0; s < dom.sites(); ++s) EXPECT_NEAR(e.w.v_norm_sq(s), 2 * p2, 1e-12);
  auto h = z2_harmonicity_residual(e.w);
  EXPECT_LT(h.dv, 1e-10);
  EXPECT_LT(h.dstar_v, 1e-10);
  EXPECT_LT(z2_consistency(e.w, e.kappa.p[1]), 1e-12);
}

TEST(Z2, SquareRootBranchFlipsAroundTheOrigin) {
  auto dom = patch(1, 32, 0.6);
  auto phi = companion_phi(dom, [](cd z) { return z; });
  auto e = extract(phi, decoupled_metric(phi));
  EXPECT_EQ(cocycle_defects(e.w), 0u);
  auto mono = z_monodromies(e.w);
  ASSERT_EQ(mono.size(), 1u);
  EXPECT_EQ(mono[0].value, -1);
  EXPECT_LT(std::hypot(mono[0].centre[0], mono[0].centre[1]), 0.05);
  EXPECT_LT(z2_consistency(e.w, e.kappa.p[1]), 1e-8);
  // A loop away from the origin does not see the branch point.
  std::vector<int> idx = {26, 26};
  EXPECT_EQ(loop_monodromy(e.w, square_loop(dom, dom.ravel(idx.data()), 2)), 1);
}

TEST(Z2, HarmonicityImprovesUnderRefinement) {
  std::vector<double> rel;
  for (int N : {64, 128}) {
    auto dom = patch(1, N, 0.6);
    auto phi = companion_phi(dom, [](cd z) { return z; });
    auto e = extract(phi, decoupled_metric(phi));
    auto h = z2_harmonicity_residual(e.w, 0.15);
    EXPECT_GT(h.excluded_sites, 0u);
    rel.push_back(std::max(h.dv_rel(), h.dstar_rel()));
  }
  EXPECT_GT(std::log2(rel[0] / rel[1]), 1.7);
}

TEST(Z2, ScrambledSignsFailHarmonicity) {
  auto dom = patch(1, 64, 0.6);
  auto phi = companion_phi(dom, [](cd z) { return z; });
  auto e = extract(phi, decoupled_metric(phi));
  auto bad = scramble_signs(e.w, 0.1, 5);
  auto h = z2_harmonicity_residual(bad, 0.15);
  EXPECT_GT(std::max(h.dv_rel(), h.dstar_rel()), 0.1);
  EXPECT_GT(cocycle_defects(bad), 0u);
}

TEST(Z2, GlobalUnitaryConjugationIsInvisible) {
  auto dom = patch(1, 32, 0.6);
  auto phi = companion_phi(dom, [](cd z) { return z; });
  auto H = decoupled_metric(phi);
  // u unitary for the identity; conjugating by it acts on H as u^* H u.
  Mat u(2, 2);
  const double c = std::cos(0.4), s = std::sin(0.4);
  u << c, cd(0, s), cd(0, s), c;
  EndoFormField phi_u(dom, 2, 1, 0);
  HermitianMetricField H_u(dom, 2, true);
  for (std::size_t i = 0; i < dom.sites(); ++i) {
    phi_u.at(i, 0) = u.adjoint() * phi.at(i, 0) * u;
    H_u.at(i) = u.adjoint() * H.at(i) * u;
  }
  auto a = extract(phi, H), b = extract(phi_u, H_u);
  EXPECT_EQ(a.w.z_mask, b.w.z_mask);
  EXPECT_EQ(a.w.edge_sign, b.w.edge_sign);
  for (std::size_t i = 0; i < dom.sites(); ++i) {
    EXPECT_NEAR(a.w.v_norm_sq(i), b.w.v_norm_sq(i), 1e-12);
    // sigma and lambda are only defined up to a common sign; their product is not.
    if (!a.w.z_mask[i])
      EXPECT_LT((a.w.lambda[i] * u.adjoint() * a.w.sigma.at(i, 0) * u - b.w.lambda[i] * b.w.sigma.at(i, 0)).norm(), 1e-10);
  }
}

TEST(Z2, RejectsMissingOrDegenerateSpectralData) {
  auto dom = torus(1, 16);
  EndoFormField zero(dom, 2, 1, 0);
  auto k0 = higgs::hitchin_map(zero);
  EXPECT_THROW(extract_z2(k0, zero, HermitianMetricField(dom, 2)), NoSpectralDataError);
  auto phi3 = diagonal_phi(dom, {{cd(1.0), cd(2.0), cd(-3.0)}});
  EXPECT_THROW(extract_z2(higgs::hitchin_map(phi3), phi3, HermitianMetricField(dom, 3)), Error);
}

TEST(Realization, ConstantSectionPasses) {
  auto dom = torus(1, 16);
  auto phi = companion_phi(dom, [](cd) { return cd(0.6, 0.8); });
  RealizationOptions opt;
  opt.sweep.initial = decoupled_metric(phi);
  auto rep = realization_experiment(phi, {1, 2, 4, 8}, opt);
  EXPECT_TRUE(rep.pass) << rep.failed_check;
  EXPECT_EQ(rep.branch, "generic");
  EXPECT_LT(rep.det_drift, 1e-10);
  EXPECT_LT(rep.consistency, 1e-8);
  for (const auto& a : rep.adiabatic) EXPECT_LT(a.commutator, 1e-10);
}

TEST(Realization, DiagonalFieldIsTheDegenerateBranch) {
  auto dom = torus(1, 16);
  auto phi = diagonal_phi(dom, {{cd(1.0), cd(-1.0)}});
  auto rep = realization_experiment(phi, {1, 2, 4, 8}, {});
  EXPECT_TRUE(rep.pass) << rep.failed_check;
  EXPECT_EQ(rep.branch, "degenerate");
  EXPECT_EQ(rep.cocycle_defects, 0u);
}
