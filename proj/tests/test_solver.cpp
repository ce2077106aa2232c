#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "hitchin/solver.hpp"
#include "support.hpp"

using namespace hitchin;
using namespace hitchin::solver;
using hitchin::testing::companion_phi;
using hitchin::testing::diagonal_phi;
using hitchin::testing::patch;
using hitchin::testing::torus;

namespace {

Mat herm_exp(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  Mat d = Mat::Zero(s.rows(), s.cols());
  for (int i = 0; i < s.rows(); ++i) d(i, i) = std::exp(es.eigenvalues()(i));
  return es.eigenvectors() * d * es.eigenvectors().adjoint();
}

// Smooth traceless Hermitian field built from a few low modes.
std::vector<Mat> smooth_hermitian(const Domain& d, int r, double amp, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<Mat> modes;
  std::vector<std::vector<int>> ks;
  for (int m = 0; m < 3; ++m) {
    Mat a = random_complex_matrix(rng, r, r);
    a = 0.5 * (a + a.adjoint()).eval();
    a -= (a.trace() / double(r)) * Mat::Identity(r, r);
    modes.push_back(a);
    std::vector<int> k(d.real_dim());
    for (int& x : k) x = static_cast<int>(rng.uniform(-2.0, 3.0));
    ks.push_back(k);
  }
  std::vector<Mat> out(d.sites(), Mat::Zero(r, r));
  for (std::size_t s = 0; s < d.sites(); ++s)
    for (int m = 0; m < 3; ++m) {
      double ph = 0;
      for (int a = 0; a < d.real_dim(); ++a) ph += 2 * std::numbers::pi * ks[m][a] * d.coord(s, a) / d.extent()[a];
      out[s] += amp * std::cos(ph + m) * modes[m];
    }
  return out;
}

HermitianMetricField perturbed_metric(const Domain& d, int r, double amp, std::uint64_t seed) {
  auto s = smooth_hermitian(d, r, amp, seed);
  HermitianMetricField H(d, r, true);
  for (std::size_t i = 0; i < d.sites(); ++i) H.at(i) = herm_exp(s[i]);
  return H;
}

}  // namespace

TEST(MomentMap, VanishesForFlatDiagonalPair) {
  Domain d = torus(1, 16);
  auto phi = diagonal_phi(d, {{1.0, -1.0}});
  HermitianMetricField H(d, 2, true);
  auto K = moment_map(H, phi);
  EXPECT_LT(residual_norms(H, K).linf, 1e-14);
}

TEST(MomentMap, AbelianMetricGivesHalfLaplacian) {
  Domain d = torus(1, 32);
  HermitianMetricField H(d, 2, true);
  for (std::size_t s = 0; s < d.sites(); ++s) {
    double u = 0.3 * std::cos(d.coord(s, 0));
    H.at(s)(0, 0) = std::exp(u);
    H.at(s)(1, 1) = std::exp(-u);
  }
  EndoFormField phi(d, 2, 1, 0);
  auto K = moment_map(H, phi);
  for (std::size_t s = 0; s < d.sites(); ++s) {
    double expect = 0.15 * std::cos(d.coord(s, 0));
    EXPECT_NEAR(K[s](0, 0).real(), expect, 1e-12);
    EXPECT_NEAR(K[s](1, 1).real(), -expect, 1e-12);
  }
}

TEST(Curvature, MatchesMomentMapTrace) {
  Domain d = torus(2, 8);
  auto H = perturbed_metric(d, 2, 0.2, 3);
  auto A = chern_connection(H);
  auto F = curvature(A);
  EndoFormField phi(d, 2, 1, 0);
  auto K = moment_map(H, phi);
  auto lf = higgs::lambda(F);
  for (std::size_t s = 0; s < d.sites(); ++s) {
    Mat ilf = cd(0, 1) * Mat(lf.at(s, 0));
    ilf -= (ilf.trace() / 2.0) * Mat::Identity(2, 2);
    EXPECT_LT((ilf - K[s]).norm(), 1e-11);
  }
}

TEST(Curvature, FlatForHolomorphicGauge) {
  // H = g^* g with g holomorphic-free constant: the Chern connection is flat.
  Domain d = torus(1, 8);
  CounterRng rng(1);
  Mat g = random_complex_matrix(rng, 2, 2);
  HermitianMetricField H(d, 2);
  for (std::size_t s = 0; s < d.sites(); ++s) H.at(s) = g.adjoint() * g;
  EXPECT_LT(curvature(chern_connection(H)).max_abs(), 1e-12);
}

TEST(Gauge, UnitaryGaugeLeavesDiagnosticsInvariant) {
  Domain d = torus(1, 64);
  auto H = perturbed_metric(d, 2, 0.3, 5);
  auto phi = companion_phi(d, [](cd) { return cd(0.5, 0.2); });
  auto herm = smooth_hermitian(d, 2, 0.4, 9);
  EndoFormField g(d, 2, 0, 0);
  for (std::size_t s = 0; s < d.sites(); ++s) {
    // exp(i s) is unitary for the identity metric; conjugate to an H-unitary map.
    auto f = higgs::metric_frame(H.at(s));
    Eigen::ComplexEigenSolver<Mat> es(cd(0, 1) * herm[s]);
    Mat u = es.eigenvectors() * es.eigenvalues().array().exp().matrix().asDiagonal() * es.eigenvectors().inverse();
    g.at(s, 0) = f.Ginv * u * f.G;
  }
  auto res0 = hs_residual(H, phi);
  auto tr = complex_gauge_act(g, EndoFormField(), phi, H);
  auto res1 = hs_residual(tr.H, tr.phi, tr.beta);
  for (std::size_t s = 0; s < d.sites(); ++s) {
    EXPECT_NEAR(res0.momentmap[s], res1.momentmap[s], 1e-10);
    EXPECT_NEAR(res0.holomorphy[s], res1.holomorphy[s], 1e-10);
  }
  auto n0 = higgs::pointwise_norm(H, curvature(chern_connection(H)));
  auto n1 = higgs::pointwise_norm(tr.H, curvature(chern_connection(tr.H, tr.beta)));
  for (std::size_t s = 0; s < d.sites(); ++s) EXPECT_NEAR(n0[s], n1[s], 1e-10);
}

TEST(Gauge, SingularGaugeIsRejected) {
  Domain d = torus(1, 8);
  HermitianMetricField H(d, 2);
  EndoFormField g(d, 2, 0, 0);
  EXPECT_THROW(complex_gauge_act(g, EndoFormField(), EndoFormField(d, 2, 1, 0), H), SingularGaugeError);
}

TEST(Solver, RecoversFlatMetricOnTorus) {
  Domain d = torus(1, 32);
  auto phi = diagonal_phi(d, {{cd(1.0, 0.5), cd(-1.0, -0.5)}});
  auto H0 = perturbed_metric(d, 2, 0.3, 17);
  SolveParams p;
  p.tol = 1e-8;
  auto res = solve_metric(phi, H0, p);
  EXPECT_TRUE(res.report.converged) << res.report.stop_reason;
  EXPECT_LE(res.report.residual_l2.back(), 1e-8);
  EXPECT_LE(res.report.iterations, 500);
  EXPECT_LT(res.H.max_det_deviation(), 1e-10);
  EXPECT_LT(std::abs(res.report.energy_direct - res.report.energy_identity), 1e-8);
  for (std::size_t i = 1; i < res.report.residual_l2.size(); ++i)
    EXPECT_LE(res.report.residual_l2[i], res.report.residual_l2[i - 1]);
}

TEST(Solver, ConvergesForNonAbelianPairOnTorus) {
  Domain d = torus(1, 32);
  auto phi = companion_phi(d, [](cd) { return cd(0.8, 0.3); });
  auto H0 = perturbed_metric(d, 2, 0.2, 4);
  SolveParams p;
  auto res = solve_metric(phi, H0, p);
  EXPECT_TRUE(res.report.converged) << res.report.stop_reason << " " << res.report.residual_l2.back();
  auto w = weitzenbock(res.H, phi);
  EXPECT_LT(w.residual_l1, 1e-6 * w.phi_norm_sq);
}

TEST(Solver, RejectsBadInputs) {
  Domain d = torus(1, 8);
  HermitianMetricField H(d, 2, true);
  EXPECT_THROW(solve_metric(EndoFormField(d, 2, 0, 1), H, {}), InvalidDegreeError);
  EXPECT_THROW(solve_metric(EndoFormField(d, 3, 1, 0), H, {}), ShapeMismatchError);
  HermitianMetricField bad(d, 2);
  bad.at(0)(0, 0) = -1.0;
  EXPECT_THROW(solve_metric(EndoFormField(d, 2, 1, 0), bad, {}), ConditioningError);
}

TEST(Weitzenbock, HoldsForHolomorphicAbelianField) {
  Domain d = torus(1, 32);
  EndoFormField phi(d, 1, 1, 0);
  for (std::size_t s = 0; s < d.sites(); ++s) phi.at(s, 0)(0, 0) = 1.3;
  HermitianMetricField H(d, 1);
  auto w = weitzenbock(H, phi);
  EXPECT_LT(w.residual_l1, 1e-12);
}
