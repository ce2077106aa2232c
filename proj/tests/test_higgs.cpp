#include <gtest/gtest.h>

#include <cmath>

#include "hitchin/higgs.hpp"
#include "support.hpp"

using namespace hitchin;
using namespace hitchin::higgs;
using hitchin::testing::companion_phi;
using hitchin::testing::diagonal_phi;
using hitchin::testing::patch;
using hitchin::testing::torus;

namespace {

EndoFormField random_phi(const Domain& d, int r, std::uint64_t seed) {
  CounterRng rng(seed);
  EndoFormField phi(d, r, 1, 0);
  for (auto& v : phi.form().data()) v = rng.complex_normal();
  return phi;
}

HermitianMetricField random_metric(const Domain& d, int r, std::uint64_t seed) {
  CounterRng rng(seed);
  HermitianMetricField H(d, r);
  for (std::size_t s = 0; s < d.sites(); ++s) H.at(s) = random_hermitian_pd(rng, r, 3.0);
  return H;
}

}  // namespace

TEST(Rng, CounterModeIsReproducible) {
  CounterRng a(42, 1), b(42, 1), c(42, 2);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(CounterRng(42, 1).next_u64(), c.next_u64());
  CounterRng d(42, 1);
  EXPECT_EQ(d.at(3), CounterRng(42, 1).at(3));
}

TEST(Rng, RandomUnitaryIsUnitary) {
  CounterRng rng(1);
  Mat u = random_unitary(rng, 3);
  EXPECT_LT((u * u.adjoint() - Mat::Identity(3, 3)).norm(), 1e-12);
}

TEST(Endo, AdjointIsAnInvolution) {
  Domain d = torus(2, 8);
  auto phi = random_phi(d, 3, 1);
  auto H = random_metric(d, 3, 2);
  EndoFormField back = adjoint_wrt(H, adjoint_wrt(H, phi));
  EXPECT_LT((back - phi).max_abs(), 1e-11);
}

TEST(Endo, HNormIsUnitaryInvariant) {
  CounterRng rng(3);
  Mat A = random_complex_matrix(rng, 3, 3);
  Mat H = random_hermitian_pd(rng, 3);
  Mat g = random_unitary(rng, 3);
  // Unitary with respect to H: u = H^{-1/2} g H^{1/2}
  MetricFrame f = metric_frame(H);
  Mat u = f.Ginv * g * f.G;
  Mat Hg = u.adjoint() * H * u;
  Mat Ag = u.inverse() * A * u;
  EXPECT_NEAR(h_norm(A, H), h_norm(Ag, Hg), 1e-12);
}

TEST(Endo, WedgeSquareOfCommutingIsZero) {
  Domain d = torus(2, 8);
  auto phi = diagonal_phi(d, {{1.0, 2.0}, {cd(0, 1), -1.0}});
  EXPECT_LT(wedge_square(phi).max_abs(), 1e-15);
  Domain d1 = torus(1, 8);
  EXPECT_EQ(wedge_square(random_phi(d1, 2, 1)).sites(), 0u);
}

TEST(Endo, WedgeSquareIsCommutator) {
  Domain d = torus(2, 8);
  auto phi = random_phi(d, 2, 9);
  auto sq = wedge_square(phi);
  Mat p1 = phi.at(0, 0), p2 = phi.at(0, 1);
  EXPECT_LT((Mat(sq.at(0, 0)) - (p1 * p2 - p2 * p1)).norm(), 1e-13);
}

TEST(Endo, BracketRequiresBidegrees) {
  Domain d = torus(1, 8);
  auto phi = random_phi(d, 2, 1);
  EXPECT_THROW(bracket(phi, phi), InvalidDegreeError);
}

TEST(Endo, BracketWithAdjointIsCommutator) {
  Domain d = torus(1, 8);
  auto phi = random_phi(d, 2, 5);
  HermitianMetricField H(d, 2);
  auto c = bracket(phi, adjoint_wrt(H, phi));
  Mat p = phi.at(0, 0);
  EXPECT_LT((Mat(c.at(0, 0)) - (p * p.adjoint() - p.adjoint() * p)).norm(), 1e-13);
}

TEST(Endo, TensorProductRankGuard) {
  Domain d = torus(1, 8);
  EXPECT_THROW(tensor_product(random_phi(d, 4, 1), random_phi(d, 5, 2)), RankOverflowError);
  auto t = tensor_product(diagonal_phi(d, {{1.0, 2.0}}), diagonal_phi(d, {{10.0, 20.0}}));
  EXPECT_EQ(t.rank(), 4);
  EXPECT_EQ(t.at(0, 0)(3, 3), cd(22.0));
}

TEST(Hitchin, DiagonalCoefficients) {
  Domain d = torus(1, 8);
  auto theta = hitchin_map(diagonal_phi(d, {{cd(1, 1), 2.0, -0.5}}));
  ASSERT_EQ(theta.p.size(), 3u);
  cd a(1, 1), b(2.0), c(-0.5);
  EXPECT_LT(std::abs(theta.p[0](0, 0) + (a + b + c)), 1e-13);
  EXPECT_LT(std::abs(theta.p[1](0, 0) - (a * b + a * c + b * c)), 1e-13);
  EXPECT_LT(std::abs(theta.p[2](0, 0) + a * b * c), 1e-13);
}

TEST(Hitchin, HomogeneityAndConjugationInvariance) {
  Domain d = torus(1, 8);
  auto phi = random_phi(d, 3, 4);
  auto th = hitchin_map(phi);
  const double t = 2.5;
  auto ths = hitchin_map(cd(t) * phi);
  CounterRng rng(7);
  Mat g = random_complex_matrix(rng, 3, 3);
  EndoFormField conj = phi;
  for (std::size_t s = 0; s < d.sites(); ++s) conj.at(s, 0) = g.inverse() * phi.at(s, 0) * g;
  auto thc = hitchin_map(conj);
  for (int k = 1; k <= 3; ++k)
    for (std::size_t s = 0; s < d.sites(); ++s) {
      cd v = th.p[k - 1](s, 0);
      EXPECT_LT(std::abs(ths.p[k - 1](s, 0) - std::pow(t, k) * v), 1e-11 * (1 + std::abs(v)) * std::pow(t, k));
      EXPECT_LT(std::abs(thc.p[k - 1](s, 0) - v), 1e-10 * (1 + std::abs(v)));
    }
}

TEST(Hitchin, RejectsNonIntegrable) {
  Domain d = torus(2, 8);
  EXPECT_THROW(hitchin_map(random_phi(d, 2, 3)), IntegrabilityError);
}

TEST(Hitchin, CompanionRootsAndDiscriminant) {
  Domain d = patch(1, 9, 1.0);
  auto phi = companion_phi(d, [](cd z) { return z + 0.3; });
  auto th = hitchin_map(phi);
  auto disc = discriminant(th);
  auto alt = discriminant_from_coefficients(th);
  for (std::size_t s = 0; s < d.sites(); ++s) {
    cd q = d.z(s, 0) + 0.3;
    EXPECT_LT(std::abs(th.p[1](s, 0) + q), 1e-13);
    EXPECT_LT(std::abs(disc.section(s, 0) - 4.0 * q), 1e-12);
    EXPECT_LT(std::abs(alt(s, 0) - 4.0 * q), 1e-12);
    auto roots = spectral_roots(th, s);
    for (auto& lam : roots) EXPECT_LT(std::abs(lam[0] * lam[0] - q), 1e-12);
  }
}

TEST(Hitchin, ContinuationIsSmoothAwayFromZeros) {
  Domain d = patch(1, 17, 1.0);
  auto phi = companion_phi(d, [](cd z) { return z + cd(3.0, 0.0); });
  auto roots = continued_roots(hitchin_map(phi));
  const double h = d.spacing()[0];
  for (std::size_t s = 0; s < d.sites(); ++s)
    for (int axis = 0; axis < 2; ++axis) {
      std::size_t nb = d.neighbor(s, axis, 1);
      if (nb == lattice::Domain::npos) continue;
      EXPECT_LT(std::abs(roots.at(s, 0, 0) - roots.at(nb, 0, 0)), 2 * h);
    }
}

TEST(Hitchin, RleRoundTrip) {
  std::vector<std::uint8_t> m{1, 1, 0, 0, 0, 1, 0};
  auto runs = rle_encode(m);
  EXPECT_EQ(runs.front(), 0u);
  EXPECT_EQ(rle_decode(runs), m);
}

TEST(MatrixLemma, CommutatorGapTwoByTwo) {
  cd a(1.0, 0.5), b(-0.3, 0.2), c(0.7, -1.1);
  Mat A(2, 2);
  A << a, c, 0.0, b;
  double expected = 2.0 + 2.0 * std::norm(a - b) / std::norm(c);
  EXPECT_NEAR(commutator_gap_ratio(A), expected, 1e-10 * expected);
}

TEST(MatrixLemma, NormalMatrixGivesInfinity) {
  Mat A = Mat::Zero(2, 2);
  A(0, 0) = 1.0;
  A(1, 1) = cd(0, 2);
  EXPECT_TRUE(std::isinf(commutator_gap_ratio(A)));
}

TEST(MatrixLemma, ProjectionsResolveIdentity) {
  CounterRng rng(8);
  Mat P = random_complex_matrix(rng, 3, 3);
  Mat D = Mat::Zero(3, 3);
  D(0, 0) = 1.0;
  D(1, 1) = cd(0, 2);
  D(2, 2) = -1.5;
  Mat theta = P * D * P.inverse();
  Mat H = random_hermitian_pd(rng, 3);
  auto ep = eigen_projections({theta}, H);
  Mat sum = Mat::Zero(3, 3);
  for (int i = 0; i < 3; ++i) {
    sum += ep.pi[i];
    EXPECT_LT((ep.pi[i] * ep.pi[i] - ep.pi[i]).norm(), 1e-9);
    Mat pd = h_adjoint(ep.pi_prime[i], H, H.inverse());
    EXPECT_LT((pd - ep.pi_prime[i]).norm(), 1e-9);
  }
  EXPECT_LT((sum - Mat::Identity(3, 3)).norm(), 1e-9);
}
