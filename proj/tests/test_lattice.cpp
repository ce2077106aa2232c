#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "hitchin/field_io.hpp"
#include "hitchin/lattice.hpp"
#include "support.hpp"

using namespace hitchin;
using namespace hitchin::lattice;
using hitchin::testing::torus;
using hitchin::testing::patch;

namespace {

// Random combination of a few low Fourier modes in every component.
FormField smooth_form(const Domain& dom, int p, int q, std::uint64_t seed) {
  FormField f(dom, p, q);
  CounterRng rng(seed);
  const int d = dom.real_dim();
  for (int c = 0; c < f.components(); ++c)
    for (int m = 0; m < 3; ++m) {
      std::vector<int> k(d);
      for (int a = 0; a < d; ++a) k[a] = static_cast<int>(rng.uniform(-3.0, 4.0));
      cd amp = rng.complex_normal();
      for (std::size_t s = 0; s < dom.sites(); ++s) {
        double ph = 0;
        for (int a = 0; a < d; ++a) ph += 2 * std::numbers::pi * k[a] * dom.coord(s, a) / dom.extent()[a];
        f(s, c) += amp * std::exp(cd(0, ph));
      }
    }
  return f;
}

}  // namespace

TEST(Domain, TorusGeometry) {
  Domain d = torus(1, 8, 2.0);
  EXPECT_EQ(d.sites(), 64u);
  EXPECT_DOUBLE_EQ(d.spacing()[0], 0.25);
  EXPECT_DOUBLE_EQ(d.total_volume(), 4.0);
  EXPECT_EQ(d.neighbor(0, 0, -1), d.stride(0) * 7);
  double w = 0;
  for (std::size_t s = 0; s < d.sites(); ++s) w += d.weight(s);
  EXPECT_NEAR(w, 4.0, 1e-14);
}

TEST(Domain, PatchGeometry) {
  Domain d = patch(1, 9, 1.0);
  EXPECT_DOUBLE_EQ(d.spacing()[0], 0.25);
  EXPECT_DOUBLE_EQ(d.coord(0, 0), -1.0);
  EXPECT_TRUE(d.on_boundary(0));
  EXPECT_FALSE(d.on_boundary(12));
  EXPECT_EQ(d.neighbor(0, 0, -1), Domain::npos);
  double w = 0;
  for (std::size_t s = 0; s < d.sites(); ++s) w += d.weight(s);
  EXPECT_NEAR(w, 4.0, 1e-14);
}

TEST(Domain, RejectsBadShapes) {
  EXPECT_THROW(Domain::torus(1, {8}, {1.0}), ShapeMismatchError);
  EXPECT_THROW(Domain::torus(3, {4, 4, 4, 4, 4, 4}, std::vector<double>(6, 1.0)), Error);
}

TEST(Derivatives, PlaneWaveLaplacianTorus) {
  Domain d = torus(2, 8);
  FormField f(d, 0, 0);
  for (std::size_t s = 0; s < d.sites(); ++s)
    f(s, 0) = std::exp(cd(0, 2 * d.coord(s, 0) - d.coord(s, 1) + 3 * d.coord(s, 3)));
  FormField lap = laplacian(f);
  for (std::size_t s = 0; s < d.sites(); ++s) EXPECT_LT(std::abs(lap(s, 0) - 14.0 * f(s, 0)), 1e-10);
}

TEST(Derivatives, PatchExactOnQuadratics) {
  Domain d = patch(1, 9, 1.0);
  std::vector<cd> f(d.sites());
  for (std::size_t s = 0; s < d.sites(); ++s) {
    cd z = d.z(s, 0);
    f[s] = z * z + 3.0 * std::conj(z) + std::norm(z);
  }
  auto fz = d.derivative(f, {Domain::Op::Dz, 0});
  auto fzb = d.derivative(f, {Domain::Op::Dzbar, 0});
  auto fzzb = d.derivative(f, {Domain::Op::DzDzbar, 0, 0});
  for (std::size_t s = 0; s < d.sites(); ++s) {
    cd z = d.z(s, 0);
    EXPECT_LT(std::abs(fz[s] - (2.0 * z + std::conj(z))), 1e-12);
    EXPECT_LT(std::abs(fzb[s] - (3.0 + z)), 1e-12);
    EXPECT_LT(std::abs(fzzb[s] - 1.0), 1e-11);
  }
}

TEST(Derivatives, ShiftedLaplacianInvertsTorus) {
  Domain d = torus(1, 16);
  FormField f = smooth_form(d, 0, 0, 3);
  std::vector<cd> u(d.sites());
  d.shifted_laplacian_solve(f.data(), u, 0.5, 2.0);
  FormField uf(d, 0, 0);
  uf.data() = u;
  FormField back = 2.0 * uf + 0.5 * laplacian(uf);
  for (std::size_t s = 0; s < d.sites(); ++s) EXPECT_LT(std::abs(back(s, 0) - f(s, 0)), 1e-10);
}

TEST(Derivatives, ShiftedLaplacianInvertsPatchInterior) {
  Domain d = patch(1, 12, 0.7);
  CounterRng rng(5);
  FormField f(d, 0, 0);
  for (std::size_t s = 0; s < d.sites(); ++s)
    if (!d.on_boundary(s)) f(s, 0) = rng.complex_normal();
  std::vector<cd> u(d.sites());
  d.shifted_laplacian_solve(f.data(), u, 0.5, 0.3);
  FormField uf(d, 0, 0);
  uf.data() = u;
  FormField back = 0.3 * uf + 0.5 * laplacian(uf);
  for (std::size_t s = 0; s < d.sites(); ++s) {
    if (d.on_boundary(s)) {
      EXPECT_EQ(u[s], cd(0.0));
    } else {
      EXPECT_LT(std::abs(back(s, 0) - f(s, 0)), 1e-9);
    }
  }
}

TEST(Derivatives, Parseval) {
  Domain d = torus(1, 16, 3.0);
  FormField f = smooth_form(d, 0, 0, 11);
  auto F = d.fourier(f.data());
  double lhs = 0, rhs = 0;
  for (std::size_t s = 0; s < d.sites(); ++s) {
    lhs += std::norm(f(s, 0));
    rhs += std::norm(F[s]);
  }
  EXPECT_NEAR(lhs, rhs / d.sites(), 1e-10 * lhs);
}

TEST(Forms, LambdaOmegaIsDimension) {
  for (int n : {1, 2}) {
    Domain d = torus(n, 8);
    FormField lw = lambda(kaehler_form(d));
    for (std::size_t s = 0; s < d.sites(); ++s) EXPECT_EQ(lw(s, 0), cd(n));
  }
}

TEST(Forms, ContractLambdaRejectsOtherDegrees) {
  Domain d = torus(2, 8);
  EXPECT_THROW(contract_lambda(FormField(d, 1, 0)), InvalidDegreeError);
  EXPECT_THROW(dbar(FormField(d, 0, 2)), InvalidDegreeError);
}

TEST(Forms, DbarAndDelSquareToZero) {
  Domain d = torus(2, 12);
  FormField f = smooth_form(d, 0, 0, 1);
  FormField g = smooth_form(d, 1, 0, 2);
  EXPECT_LT(dbar(dbar(f)).max_abs(), 1e-12 * f.max_abs() * 100);
  EXPECT_LT(del(del(f)).max_abs(), 1e-12 * f.max_abs() * 100);
  EXPECT_LT(dbar(dbar(g)).max_abs(), 1e-12 * g.max_abs() * 100);
}

TEST(Forms, KaehlerIdentitiesTorus) {
  for (int n : {1, 2}) {
    Domain d = torus(n, n == 1 ? 32 : 12);
    FormField f10 = smooth_form(d, 1, 0, 7);
    FormField f11 = smooth_form(d, 1, 1, 8);
    EXPECT_LE(kahler_identity_residual(f10), 1e-10 * l2_norm(f10));
    EXPECT_LE(kahler_identity_residual(f11), 1e-10 * l2_norm(f11));
    FormField f01 = smooth_form(d, 0, 1, 9);
    EXPECT_LE(kahler_identity_residual_conjugate(f01), 1e-10 * l2_norm(f01));
    EXPECT_LE(kahler_identity_residual_conjugate(f11), 1e-10 * l2_norm(f11));
  }
}

TEST(Forms, AdjointsArePairings) {
  Domain d = torus(2, 8);
  FormField f = smooth_form(d, 0, 0, 21);
  FormField g = smooth_form(d, 0, 1, 22) + dbar(f);
  cd lhs = l2_inner(dbar(f), g);
  cd rhs = l2_inner(f, adjoint_dbar(g));
  EXPECT_LT(std::abs(lhs - rhs), 1e-9 * std::abs(lhs));
  FormField h = smooth_form(d, 1, 0, 23) + del(f);
  EXPECT_LT(std::abs(l2_inner(del(f), h) - l2_inner(f, adjoint_del(h))), 1e-9 * std::abs(l2_inner(del(f), h)));
}

TEST(Forms, LambdaMatchesLefschetzPairing) {
  // Lambda(alpha) vol = alpha ^ omega^{n-1}/(n-1)! on (1,1)-forms.
  Domain d = torus(2, 8);
  FormField a = smooth_form(d, 1, 1, 4);
  FormField top = wedge(a, kaehler_form(d));
  cd vf = top_form_volume_factor(2);
  FormField la = lambda(a);
  for (std::size_t s = 0; s < d.sites(); ++s) EXPECT_LT(std::abs(top(s, 0) * vf - la(s, 0)), 1e-10);
}

TEST(Forms, TopFormFactorMatchesOmegaPower) {
  // omega^n / n! = vol
  for (int n : {1, 2}) {
    Domain d = torus(n, 8);
    FormField w = kaehler_form(d);
    FormField top = w;
    double fact = 1;
    for (int k = 2; k <= n; ++k) {
      top = wedge(top, w);
      fact *= k;
    }
    cd v = top(0, 0) * top_form_volume_factor(n) / fact;
    EXPECT_LT(std::abs(v - 1.0), 1e-14);
  }
}

TEST(Forms, PatchKaehlerDelAdjointConverges) {
  // On the patch del* is compared against the analytic value for a polynomial form; the error
  // is second order in h.
  auto err = [](int N) {
    Domain d = patch(1, N, 1.0);
    FormField f(d, 1, 1);
    for (std::size_t s = 0; s < d.sites(); ++s) {
      cd z = d.z(s, 0);
      f(s, 0) = std::exp(z) * std::conj(z) * std::conj(z);
    }
    FormField g = adjoint_del(f);
    double m = 0;
    for (std::size_t s = 0; s < d.sites(); ++s) {
      if (d.on_boundary(s)) continue;
      cd z = d.z(s, 0);
      cd exact = -2.0 * std::exp(z) * 2.0 * std::conj(z);
      m = std::max(m, std::abs(g(s, 0) - exact));
    }
    return m;
  };
  double e1 = err(17), e2 = err(33);
  EXPECT_GT(std::log2(e1 / e2), 1.8);
}

TEST(FieldIo, RoundTrip) {
  Domain d = patch(1, 9, 0.5);
  FormField f = smooth_form(d, 1, 0, 3);
  auto dir = std::filesystem::temp_directory_path() / "hitchin_fld_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "f.fld").string();
  io::write_form_field(path, f, "test", 1);
  int rank = 0;
  FormField g = io::read_form_field(path, &rank);
  EXPECT_EQ(rank, 1);
  EXPECT_TRUE(g.domain().same_as(d));
  EXPECT_EQ(g.data(), f.data());
}
