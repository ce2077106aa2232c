#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "hitchin/higgs.hpp"

namespace hitchin::higgs {

EigenProjections eigen_projections(const std::vector<Mat>& phis, const Mat& H, double gap_tol) {
  if (phis.empty()) throw ShapeMismatchError("eigen_projections needs at least one matrix");
  const int r = static_cast<int>(H.rows());
  // A fixed generic combination separates the joint spectrum of a commuting family.
  static const double weights[] = {1.0, 0.7548776662466927, 0.5698402909980532, 0.4301597090019468};
  Mat m = Mat::Zero(r, r);
  for (std::size_t k = 0; k < phis.size(); ++k) m += weights[k % 4] * phis[k];
  Eigen::ComplexEigenSolver<Mat> es(m);
  Mat v = es.eigenvectors();
  Mat w = v.inverse();

  EigenProjections out;
  std::vector<Covector> lam(r, Covector(phis.size()));
  for (int i = 0; i < r; ++i)
    for (std::size_t k = 0; k < phis.size(); ++k) lam[i][k] = (w.row(i) * phis[k] * v.col(i))(0, 0);

  std::vector<int> order(r);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (std::size_t k = 0; k < lam[a].size(); ++k) {
      if (lam[a][k].real() != lam[b][k].real()) return lam[a][k].real() < lam[b][k].real();
      if (lam[a][k].imag() != lam[b][k].imag()) return lam[a][k].imag() < lam[b][k].imag();
    }
    return a < b;
  });

  double gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) {
      double d = 0;
      for (std::size_t k = 0; k < phis.size(); ++k) d += std::norm(lam[i][k] - lam[j][k]);
      gap = std::min(gap, std::sqrt(d));
    }
  if (!(gap >= gap_tol)) throw DegenerateSpectrumError("joint spectrum is degenerate (gap " + std::to_string(gap) + ")");
  out.gap = gap;

  for (int idx : order) {
    Mat vi = v.col(idx);
    Mat pi = vi * w.row(idx);
    cd denom = (vi.adjoint() * H * vi)(0, 0);
    Mat pip = vi * (vi.adjoint() * H) / denom;
    out.pi.push_back(pi);
    out.pi_prime.push_back(pip);
    out.chi.push_back(pi - pip);
    out.eigenvalues.push_back(lam[idx]);
  }
  return out;
}

double commutator_gap_ratio(const Mat& A, double tol) {
  Eigen::ComplexSchur<Mat> schur(A);
  const Mat& t = schur.matrixT();
  double g = 0;
  for (int i = 0; i < t.rows(); ++i) g += std::norm(t(i, i));
  double a2 = A.squaredNorm();
  double diff = a2 - g;
  if (diff <= tol * a2) return std::numeric_limits<double>::infinity();
  Mat c = A * A.adjoint() - A.adjoint() * A;
  return c.squaredNorm() / (diff * diff);
}

}  // namespace hitchin::higgs

namespace hitchin::higgs {

namespace {

struct Planted {
  Mat theta, H;
  double d = 0;
};

Planted draw_planted(CounterRng& rng, int r, const LemmaSampling& smp, std::size_t& rejections) {
  for (int attempt = 0; attempt < smp.max_redraws; ++attempt) {
    Planted p;
    p.d = rng.uniform(smp.d_min, smp.d_max);
    std::vector<cd> lam(r);
    for (auto& l : lam) l = rng.complex_normal();
    double g = std::numeric_limits<double>::infinity();
    for (int i = 0; i < r; ++i)
      for (int j = i + 1; j < r; ++j) g = std::min(g, std::abs(lam[i] - lam[j]));
    Mat D = Mat::Zero(r, r);
    for (int i = 0; i < r; ++i) D(i, i) = lam[i] * (p.d / g);
    Mat P = Mat::Identity(r, r) + 0.5 * random_complex_matrix(rng, r, r);
    p.H = random_hermitian_pd(rng, r, 4.0);
    Eigen::PartialPivLU<Mat> lu(P);
    p.theta = P * D * lu.inverse();
    if (h_norm(p.theta, p.H) <= smp.c0 * (p.d + 1.0)) return p;
    ++rejections;
  }
  throw NumericalError("planted-gap sampler exceeded its redraw budget");
}

}  // namespace

LemmaSuiteReport run_lemma_suite(int rank, std::size_t samples, std::uint64_t seed,
                                 const std::optional<LemmaConstants>& frozen, const LemmaSampling& sampling) {
  if (rank < 2 || rank > kMaxRank) throw Error("lemma suite rank must be in [2, 16]");
  LemmaSuiteReport rep;
  rep.rank = rank;
  rep.samples = samples;
  rep.seed = seed;
  rep.checked = frozen.has_value();
  rep.gap_ratio_min = std::numeric_limits<double>::infinity();
  rep.bracket_ratio_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < samples; ++k) {
    CounterRng rng(seed, 2 * k);
    Mat A = random_complex_matrix(rng, rank, rank);
    Eigen::ComplexEigenSolver<Mat> es(A, false);
    double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    double an = A.norm();
    rep.eigen_ratio_max = std::max(rep.eigen_ratio_max, lmax / an);
    if (lmax > an * (1 + 1e-12)) ++rep.eigen_violations;
    double ratio = commutator_gap_ratio(A);
    if (std::isinf(ratio)) {
      ++rep.gap_ratio_sentinels;
    } else {
      rep.gap_ratio_min = std::min(rep.gap_ratio_min, ratio);
      if (frozen && ratio < frozen->c_r) ++rep.gap_ratio_violations;
    }

    CounterRng prng(seed, 2 * k + 1);
    Planted p = draw_planted(prng, rank, sampling, rep.planted_rejections);
    EigenProjections ep = eigen_projections({p.theta}, p.H, 0.0);
    Mat Hinv = p.H.inverse();
    Mat td = h_adjoint(p.theta, p.H, Hinv);
    for (int i = 0; i < rank; ++i) {
      double chi = h_norm(ep.chi[i], p.H);
      double pin = h_norm(ep.pi[i], p.H);
      rep.pi_identity_error = std::max(rep.pi_identity_error, std::abs(pin * pin - 1.0 - chi * chi));
      rep.chi_max = std::max(rep.chi_max, chi);
      if (frozen && chi > frozen->b) ++rep.chi_violations;
      if (chi > 1e-12) {
        double br = h_norm(td * ep.pi[i] - ep.pi[i] * td, p.H) / (p.d * chi);
        rep.bracket_ratio_min = std::min(rep.bracket_ratio_min, br);
        if (frozen && br < frozen->b_prime) ++rep.bracket_violations;
      }
    }
  }
  return rep;
}

}  // namespace hitchin::higgs
