#include "hitchin/solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <utility>

#include <Eigen/Eigenvalues>

namespace hitchin::solver {

using higgs::MetricFrame;
using higgs::metric_frame;
using lattice::FormBasis;
using Op = Domain::Op;
using Spec = Domain::DerivSpec;

namespace {

constexpr cd kI{0.0, 1.0};

void require_compatible(const HermitianMetricField& H, const EndoFormField& x, const char* what) {
  if (x.sites() == 0) return;
  if (H.rank() != x.rank() || !H.domain().same_as(x.domain())) {
    std::ostringstream os;
    os << what << " differs from the metric in rank or domain";
    throw ShapeMismatchError(os.str());
  }
}

void require_higgs(const EndoFormField& phi) {
  if (phi.p() != 1 || phi.q() != 0) throw InvalidDegreeError("phi must be a (1,0) field");
}

void require_beta(const EndoFormField& beta) {
  if (beta.sites() > 0 && (beta.p() != 0 || beta.q() != 1)) throw InvalidDegreeError("beta must be a (0,1) field");
}

std::vector<MetricFrame> frames_of(const HermitianMetricField& H) {
  std::vector<MetricFrame> out(H.sites());
  for (std::size_t s = 0; s < H.sites(); ++s) out[s] = metric_frame(H.at(s));
  return out;
}

// Derivatives of `count` interleaved channels stored as data[s * stride + offset + e].
// Result layout: out[spec][s * count + e].
std::vector<std::vector<cd>> entry_derivatives(const Domain& dom, const cd* data, std::size_t stride,
                                               std::size_t offset, int count, std::span<const Spec> specs) {
  const std::size_t ns = dom.sites();
  std::vector<std::vector<cd>> out(specs.size(), std::vector<cd>(ns * count));
  std::vector<cd> ch(ns);
  std::vector<std::vector<cd>> d;
  for (int e = 0; e < count; ++e) {
    for (std::size_t s = 0; s < ns; ++s) ch[s] = data[s * stride + offset + e];
    dom.derivatives(ch, specs, d);
    for (std::size_t i = 0; i < specs.size(); ++i)
      for (std::size_t s = 0; s < ns; ++s) out[i][s * count + e] = d[i][s];
  }
  return out;
}

int one_form_comp(const FormBasis& b, int j, bool bar) {
  return bar ? b.index(0u, 1u << j) : b.index(1u << j, 0u);
}

// Curvature blocks F_{j kbar} at every site for the requested (j, k) pairs, plus the
// connection coefficients a_j.
struct CurvatureData {
  std::vector<std::pair<int, int>> pairs;
  std::vector<std::vector<Mat>> F;  // [pair][site]
  std::vector<std::vector<Mat>> a;  // [j][site]
};

CurvatureData curvature_blocks(const HermitianMetricField& H, const std::vector<MetricFrame>& fr,
                               const EndoFormField& beta, std::vector<std::pair<int, int>> pairs) {
  const Domain& dom = H.domain();
  const int n = dom.complex_dim(), r = H.rank(), r2 = r * r;
  const std::size_t ns = dom.sites();
  const bool has_beta = beta.sites() > 0;

  std::vector<Spec> specs;
  for (int j = 0; j < n; ++j) specs.push_back({Op::Dz, j});
  for (int k = 0; k < n; ++k) specs.push_back({Op::Dzbar, k});
  for (auto [j, k] : pairs) specs.push_back({Op::DzDzbar, j, k});
  auto dH = entry_derivatives(dom, H.data().data(), r2, 0, r2, specs);

  CurvatureData out;
  out.pairs = pairs;
  out.a.assign(n, std::vector<Mat>(ns));
  out.F.assign(pairs.size(), std::vector<Mat>(ns));

  // B_j = H^{-1} beta_j^* H, its dbar derivatives, and del derivatives of beta.
  std::vector<std::vector<cd>> B;                    // [j][s*r2+e]
  std::vector<std::vector<std::vector<cd>>> dB;      // [j][k][...] = d/dzbar_k B_j
  std::vector<std::vector<std::vector<cd>>> dbeta;   // [k][j][...] = d/dz_j beta_k
  std::vector<int> bcomp(n);
  if (has_beta) {
    B.assign(n, std::vector<cd>(ns * r2));
    for (int j = 0; j < n; ++j) bcomp[j] = one_form_comp(beta.basis(), j, true);
    for (int j = 0; j < n; ++j)
      for (std::size_t s = 0; s < ns; ++s) {
        Mat b = fr[s].Hinv * beta.at(s, bcomp[j]).adjoint() * fr[s].H;
        for (int e = 0; e < r2; ++e) B[j][s * r2 + e] = b(e / r, e % r);
      }
    std::vector<Spec> dbar_specs, del_specs;
    for (int k = 0; k < n; ++k) dbar_specs.push_back({Op::Dzbar, k});
    for (int j = 0; j < n; ++j) del_specs.push_back({Op::Dz, j});
    dB.resize(n);
    dbeta.resize(n);
    for (int j = 0; j < n; ++j) dB[j] = entry_derivatives(dom, B[j].data(), r2, 0, r2, dbar_specs);
    const std::size_t stride = beta.form().site_stride();
    for (int k = 0; k < n; ++k)
      dbeta[k] = entry_derivatives(dom, beta.form().data().data(), stride, static_cast<std::size_t>(bcomp[k]) * r2,
                                   r2, del_specs);
  }

  auto block = [&](const std::vector<cd>& v, std::size_t s) { return ConstMatMap(v.data() + s * r2, r, r); };

  for (std::size_t s = 0; s < ns; ++s) {
    const Mat& Hinv = fr[s].Hinv;
    for (int j = 0; j < n; ++j) {
      Mat aj = Hinv * block(dH[j], s);
      if (has_beta) aj -= block(B[j], s);
      out.a[j][s] = aj;
    }
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
      auto [j, k] = pairs[pi];
      Mat dj = block(dH[j], s);
      Mat dkbar = block(dH[n + k], s);
      Mat d2 = block(dH[2 * n + pi], s);
      Mat F = Hinv * dkbar * Hinv * dj - Hinv * d2;
      if (has_beta) {
        Mat bk = beta.at(s, bcomp[k]);
        const Mat& aj = out.a[j][s];
        F += block(dB[j][k], s) + block(dbeta[k][j], s) + aj * bk - bk * aj;
      }
      out.F[pi][s] = F;
    }
  }
  return out;
}

EndoFormField empty_or(const EndoFormField& beta) { return beta.sites() > 0 ? beta : EndoFormField(); }

std::vector<double> h_norms(const std::vector<MetricFrame>& fr, const std::vector<Mat>& K) {
  std::vector<double> out(K.size());
  for (std::size_t s = 0; s < K.size(); ++s) out[s] = std::sqrt(higgs::h_norm_sq(K[s], fr[s].H, fr[s].Hinv));
  return out;
}

ResidualNorms norms_from_pointwise(const Domain& dom, const std::vector<double>& pw) {
  auto act = active_sites(dom);
  double acc = 0, vol = 0, mx = 0;
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    if (!act[s]) continue;
    const double w = dom.weight(s);
    acc += w * pw[s] * pw[s];
    vol += w;
    mx = std::max(mx, pw[s]);
    if (!std::isfinite(pw[s])) mx = pw[s];
  }
  ResidualNorms r;
  r.l2 = vol > 0 ? std::sqrt(acc / vol) : 0.0;
  r.linf = mx;
  if (!std::isfinite(acc)) r.l2 = std::numeric_limits<double>::quiet_NaN();
  return r;
}

std::vector<Mat> moment_map_with(const HermitianMetricField& H, const std::vector<MetricFrame>& fr,
                                 const EndoFormField& phi, const EndoFormField& beta) {
  const Domain& dom = H.domain();
  const int n = dom.complex_dim(), r = H.rank();
  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < n; ++j) pairs.push_back({j, j});
  CurvatureData cd_ = curvature_blocks(H, fr, beta, pairs);
  std::vector<int> pcomp(n);
  for (int j = 0; j < n; ++j) pcomp[j] = one_form_comp(phi.basis(), j, false);
  std::vector<Mat> K(dom.sites());
  const Mat id = Mat::Identity(r, r);
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    Mat k = Mat::Zero(r, r);
    for (int j = 0; j < n; ++j) {
      Mat pj = phi.at(s, pcomp[j]);
      Mat pd = higgs::h_adjoint(pj, fr[s].H, fr[s].Hinv);
      k += cd_.F[j][s] + pj * pd - pd * pj;
    }
    k *= 2.0;
    k -= (k.trace() / static_cast<double>(r)) * id;
    K[s] = k;
  }
  return K;
}

}  // namespace

std::vector<std::uint8_t> active_sites(const Domain& domain) {
  std::vector<std::uint8_t> act(domain.sites(), 1);
  if (!domain.periodic())
    for (std::size_t s = 0; s < domain.sites(); ++s) act[s] = domain.on_boundary(s) ? 0 : 1;
  return act;
}

ChernConnectionField chern_connection(const HermitianMetricField& H, const EndoFormField& beta) {
  require_beta(beta);
  require_compatible(H, beta, "beta");
  auto fr = frames_of(H);
  CurvatureData d = curvature_blocks(H, fr, beta, {});
  const int n = H.domain().complex_dim();
  EndoFormField a(H.domain(), H.rank(), 1, 0);
  for (int j = 0; j < n; ++j) {
    int c = one_form_comp(a.basis(), j, false);
    for (std::size_t s = 0; s < H.sites(); ++s) a.at(s, c) = d.a[j][s];
  }
  return ChernConnectionField(H, std::move(a), empty_or(beta));
}

EndoFormField curvature(const ChernConnectionField& A) {
  const HermitianMetricField& H = A.metric();
  const int n = H.domain().complex_dim();
  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) pairs.push_back({j, k});
  auto fr = frames_of(H);
  CurvatureData d = curvature_blocks(H, fr, A.beta(), pairs);
  EndoFormField F(H.domain(), H.rank(), 1, 1);
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    auto [j, k] = pairs[pi];
    int c = F.basis().index(1u << j, 1u << k);
    for (std::size_t s = 0; s < H.sites(); ++s) F.at(s, c) = d.F[pi][s];
  }
  return F;
}

EndoFormField covariant_del(const ChernConnectionField& A, const EndoFormField& x) {
  EndoFormField out(lattice::del(x.form()), x.rank());
  out += higgs::graded_bracket(A.coefficient(), x);
  return out;
}

EndoFormField covariant_dbar(const ChernConnectionField& A, const EndoFormField& x) {
  EndoFormField out(lattice::dbar(x.form()), x.rank());
  if (A.has_beta()) out += higgs::graded_bracket(A.beta(), x);
  return out;
}

std::vector<Mat> moment_map(const HermitianMetricField& H, const EndoFormField& phi, const EndoFormField& beta) {
  require_higgs(phi);
  require_beta(beta);
  require_compatible(H, phi, "phi");
  require_compatible(H, beta, "beta");
  return moment_map_with(H, frames_of(H), phi, beta);
}

ResidualNorms residual_norms(const HermitianMetricField& H, const std::vector<Mat>& K) {
  return norms_from_pointwise(H.domain(), h_norms(frames_of(H), K));
}

HsResidual hs_residual(const HermitianMetricField& H, const EndoFormField& phi, const EndoFormField& beta) {
  require_higgs(phi);
  require_beta(beta);
  require_compatible(H, phi, "phi");
  require_compatible(H, beta, "beta");
  auto fr = frames_of(H);
  HsResidual out;
  out.momentmap = h_norms(fr, moment_map_with(H, fr, phi, beta));
  out.momentmap_norms = norms_from_pointwise(H.domain(), out.momentmap);
  ChernConnectionField A = chern_connection(H, beta);
  out.holomorphy = higgs::pointwise_norm(H, covariant_dbar(A, phi));
  EndoFormField sq = higgs::wedge_square(phi);
  out.integrability = sq.sites() > 0 ? higgs::pointwise_norm(H, sq) : std::vector<double>(H.sites(), 0.0);
  auto act = active_sites(H.domain());
  for (std::size_t s = 0; s < H.sites(); ++s) {
    if (!act[s]) continue;
    out.holomorphy_max = std::max(out.holomorphy_max, out.holomorphy[s]);
    out.integrability_max = std::max(out.integrability_max, out.integrability[s]);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

namespace {

// Matrix fields in the unitary frame, flattened as [site][r*r].
using Flat = std::vector<cd>;

double dot(const Flat& x, const Flat& y) {
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (std::conj(x[i]) * y[i]).real();
  return acc;
}

struct FlowOperator {
  const Domain& dom;
  int r;
  std::vector<std::uint8_t> active;
  std::vector<std::vector<Mat>> phihat;  // [j][site]
  double eps;
  double shift;

  void mask(Flat& x) const {
    const int r2 = r * r;
    for (std::size_t s = 0; s < dom.sites(); ++s)
      if (!active[s])
        for (int e = 0; e < r2; ++e) x[s * r2 + e] = 0.0;
  }

  // (Delta/2 + M + eps) x
  Flat apply(const Flat& x) const {
    const int n = dom.complex_dim(), r2 = r * r;
    const std::size_t ns = dom.sites();
    std::vector<Spec> specs;
    for (int j = 0; j < n; ++j) specs.push_back({Op::DzDzbar, j, j});
    auto d = entry_derivatives(dom, x.data(), r2, 0, r2, specs);
    Flat y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      cd lap = 0.0;
      for (int j = 0; j < n; ++j) lap += d[j][i];
      y[i] = -2.0 * lap + eps * x[i];
    }
    for (std::size_t s = 0; s < ns; ++s) {
      ConstMatMap xs(x.data() + s * r2, r, r);
      MatMap ys(y.data() + s * r2, r, r);
      for (int j = 0; j < n; ++j) {
        const Mat& p = phihat[j][s];
        Mat inner = p.adjoint() * xs - xs * p.adjoint();
        ys += 2.0 * (p * inner - inner * p);
      }
    }
    mask(y);
    return y;
  }

  Flat precondition(const Flat& x) const {
    const int r2 = r * r;
    const std::size_t ns = dom.sites();
    Flat y(x.size());
    std::vector<cd> ch(ns), u(ns);
    for (int e = 0; e < r2; ++e) {
      for (std::size_t s = 0; s < ns; ++s) ch[s] = x[s * r2 + e];
      dom.shifted_laplacian_solve(ch, u, 0.5, shift);
      for (std::size_t s = 0; s < ns; ++s) y[s * r2 + e] = u[s];
    }
    mask(y);
    return y;
  }
};

Flat pcg(const FlowOperator& op, const Flat& b, int max_iter, double rtol) {
  Flat x(b.size(), cd(0.0));
  Flat res = b;
  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0) return x;
  Flat z = op.precondition(res);
  Flat p = z;
  double rz = dot(res, z);
  for (int it = 0; it < max_iter; ++it) {
    Flat q = op.apply(p);
    const double pq = dot(p, q);
    if (!(pq > 0)) break;
    const double alpha = rz / pq;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += alpha * p[i];
      res[i] -= alpha * q[i];
    }
    if (std::sqrt(dot(res, res)) <= rtol * bnorm) break;
    z = op.precondition(res);
    const double rz_new = dot(res, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < x.size(); ++i) p[i] = z[i] + beta * p[i];
  }
  return x;
}

// H' = G exp(-tau s) G at active sites, optionally renormalised to det 1.
HermitianMetricField update_metric(const HermitianMetricField& H, const std::vector<MetricFrame>& fr,
                                   const std::vector<Eigen::SelfAdjointEigenSolver<Mat>>& eig,
                                   const std::vector<std::uint8_t>& active, double tau, bool sl_mode) {
  HermitianMetricField out = H;
  const int r = H.rank();
  for (std::size_t s = 0; s < H.sites(); ++s) {
    if (!active[s]) continue;
    const auto& es = eig[s];
    Mat d = Mat::Zero(r, r);
    for (int i = 0; i < r; ++i) d(i, i) = std::exp(-tau * es.eigenvalues()(i));
    Mat e = es.eigenvectors() * d * es.eigenvectors().adjoint();
    Mat h = fr[s].G * e * fr[s].G;
    h = 0.5 * (h + h.adjoint()).eval();
    if (sl_mode) {
      const double det = h.determinant().real();
      if (det > 0) h /= std::pow(det, 1.0 / r);
    }
    out.at(s) = h;
  }
  return out;
}

double smallest_laplacian_eigenvalue(const Domain& dom) {
  double lo = std::numeric_limits<double>::infinity();
  for (int a = 0; a < dom.real_dim(); ++a) {
    const double L = dom.extent()[a];
    lo = std::min(lo, dom.periodic() ? std::pow(2 * std::numbers::pi / L, 2) : std::pow(std::numbers::pi / L, 2));
  }
  return lo;
}

}  // namespace

SolveResult solve_metric(const EndoFormField& phi, const HermitianMetricField& H0, const SolveParams& params,
                         const EndoFormField& beta) {
  require_higgs(phi);
  require_beta(beta);
  require_compatible(H0, phi, "phi");
  require_compatible(H0, beta, "beta");
  if (!(params.step > 0) || params.max_iter < 0 || !(params.tol > 0))
    throw Error("solver step and tolerance must be positive");
  H0.validate();
  if (params.sl_mode && H0.max_det_deviation() > 1e-8)
    throw ConditioningError("sl_mode requires an initial metric with det H = 1");

  const auto t0 = std::chrono::steady_clock::now();
  const Domain& dom = H0.domain();
  const int n = dom.complex_dim(), r = H0.rank(), r2 = r * r;
  const std::size_t ns = dom.sites();
  const auto active = active_sites(dom);
  std::vector<int> pcomp(n);
  for (int j = 0; j < n; ++j) pcomp[j] = one_form_comp(phi.basis(), j, false);

  SolveResult result;
  result.H = H0;
  result.H.set_sl_mode(params.sl_mode);
  SolveReport& rep = result.report;

  auto fr = frames_of(result.H);
  auto K = moment_map_with(result.H, fr, phi, beta);
  ResidualNorms cur = norms_from_pointwise(dom, h_norms(fr, K));
  rep.residual_l2.push_back(cur.l2);
  rep.residual_linf.push_back(cur.linf);
  if (!std::isfinite(cur.l2)) throw DivergenceError("initial residual is not finite", rep);
  double best = cur.l2;
  double tau_last = params.step;
  const double eps = 1e-2 * 0.5 * smallest_laplacian_eigenvalue(dom);

  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  while (true) {
    if (cur.l2 <= params.tol) {
      rep.converged = true;
      rep.stop_reason = "converged";
      break;
    }
    if (rep.iterations >= params.max_iter) {
      rep.stop_reason = "max_iter";
      break;
    }

    // Right-hand side and the linearised operator in the unitary frame G.
    FlowOperator op{dom, r, active, std::vector<std::vector<Mat>>(n, std::vector<Mat>(ns)), eps, 0.0};
    Flat rhs(ns * r2);
    double mscale = 0, wsum = 0;
    for (std::size_t s = 0; s < ns; ++s) {
      Mat kh = fr[s].G * K[s] * fr[s].Ginv;
      kh = 0.5 * (kh + kh.adjoint()).eval();
      for (int e = 0; e < r2; ++e) rhs[s * r2 + e] = kh(e / r, e % r);
      double m = 0;
      for (int j = 0; j < n; ++j) {
        op.phihat[j][s] = fr[s].G * phi.at(s, pcomp[j]) * fr[s].Ginv;
        m += 2.0 * op.phihat[j][s].squaredNorm();
      }
      if (active[s]) {
        mscale += m;
        wsum += 1;
      }
    }
    op.shift = eps + (wsum > 0 ? mscale / wsum : 0.0);
    op.mask(rhs);
    Flat dir = pcg(op, rhs, params.inner_iter, params.inner_rtol);

    std::vector<Eigen::SelfAdjointEigenSolver<Mat>> eig(ns);
    for (std::size_t s = 0; s < ns; ++s) {
      if (!active[s]) continue;
      Mat sh = ConstMatMap(dir.data() + s * r2, r, r);
      sh = 0.5 * (sh + sh.adjoint()).eval();
      if (params.sl_mode) sh -= (sh.trace() / static_cast<double>(r)) * Mat::Identity(r, r);
      eig[s].compute(sh);
    }

    double tau = std::min(params.step, 2.0 * tau_last);
    bool accepted = false;
    HermitianMetricField trial;
    std::vector<MetricFrame> tfr;
    std::vector<Mat> tK;
    ResidualNorms tn;
    while (tau >= params.min_step) {
      trial = update_metric(result.H, fr, eig, active, tau, params.sl_mode);
      bool ok = true;
      try {
        tfr = frames_of(trial);
        tK = moment_map_with(trial, tfr, phi, beta);
        tn = norms_from_pointwise(dom, h_norms(tfr, tK));
        ok = std::isfinite(tn.l2) && tn.l2 < cur.l2;
      } catch (const ConditioningError&) {
        ok = false;
      }
      if (ok) {
        accepted = true;
        break;
      }
      tau *= 0.5;
    }
    if (!accepted) {
      rep.stop_reason = "stalled";
      break;
    }
    ++rep.iterations;
    tau_last = tau;
    rep.step_sizes.push_back(tau);
    result.H = std::move(trial);
    fr = std::move(tfr);
    K = std::move(tK);
    cur = tn;
    rep.residual_l2.push_back(cur.l2);
    rep.residual_linf.push_back(cur.linf);
    if (cur.l2 > params.divergence_factor * best) {
      rep.wall_time = elapsed();
      throw DivergenceError("residual grew by more than the divergence factor", rep);
    }
    best = std::min(best, cur.l2);
  }

  Energy e = energy(result.H, phi, beta);
  rep.energy_direct = e.direct;
  rep.energy_identity = e.identity;
  rep.wall_time = elapsed();
  return result;
}

// ---------------------------------------------------------------------------------------------

namespace {

std::vector<double> squared(std::vector<double> v) {
  for (double& x : v) x *= x;
  return v;
}

void accumulate(std::vector<double>& acc, const std::vector<double>& v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

}  // namespace

Energy energy(const HermitianMetricField& H, const EndoFormField& phi, const EndoFormField& beta) {
  require_higgs(phi);
  require_beta(beta);
  require_compatible(H, phi, "phi");
  require_compatible(H, beta, "beta");
  const Domain& dom = H.domain();
  const int n = dom.complex_dim();
  ChernConnectionField A = chern_connection(H, beta);
  EndoFormField phid = higgs::adjoint_wrt(H, phi);
  EndoFormField X = curvature(A) + higgs::bracket(phi, phid);
  EndoFormField iLX = higgs::lambda(X);
  iLX *= kI;

  std::vector<double> direct = squared(higgs::pointwise_norm(H, X));
  // d_A(phi + phi^dagger) split by bidegree.
  EndoFormField mixed = covariant_dbar(A, phi) + covariant_del(A, phid);
  accumulate(direct, squared(higgs::pointwise_norm(H, mixed)));
  if (n >= 2) {
    accumulate(direct, squared(higgs::pointwise_norm(H, covariant_del(A, phi))));
    accumulate(direct, squared(higgs::pointwise_norm(H, covariant_dbar(A, phid))));
  }
  Energy e;
  e.direct = lattice::integrate(dom, direct);
  e.identity = lattice::integrate(dom, squared(higgs::pointwise_norm(H, iLX)));
  return e;
}

WeitzenbockReport weitzenbock(const HermitianMetricField& H, const EndoFormField& phi, const EndoFormField& beta) {
  require_higgs(phi);
  require_beta(beta);
  require_compatible(H, phi, "phi");
  require_compatible(H, beta, "beta");
  const Domain& dom = H.domain();
  const int n = dom.complex_dim(), r = H.rank(), r2 = r * r;
  const std::size_t ns = dom.sites();
  auto fr = frames_of(H);
  ChernConnectionField A = chern_connection(H, beta);

  // |phi|^2 and its Laplacian.
  std::vector<double> phi_sq = squared(higgs::pointwise_norm(H, phi));
  lattice::ScalarField f = lattice::scalar_field(dom);
  for (std::size_t s = 0; s < ns; ++s) f(s, 0) = phi_sq[s];
  lattice::ScalarField lap = lattice::laplacian(f);

  std::vector<Spec> specs;
  for (int j = 0; j < n; ++j) specs.push_back({Op::Dz, j});
  for (int j = 0; j < n; ++j) specs.push_back({Op::Dzbar, j});
  std::vector<int> pcomp(n), acomp(n), bcomp(n);
  for (int j = 0; j < n; ++j) {
    pcomp[j] = one_form_comp(phi.basis(), j, false);
    acomp[j] = one_form_comp(A.coefficient().basis(), j, false);
    if (A.has_beta()) bcomp[j] = one_form_comp(A.beta().basis(), j, true);
  }
  std::vector<std::vector<std::vector<cd>>> dphi(n);  // [k][spec][...]
  const std::size_t stride = phi.form().site_stride();
  for (int k = 0; k < n; ++k)
    dphi[k] = entry_derivatives(dom, phi.form().data().data(), stride, static_cast<std::size_t>(pcomp[k]) * r2, r2,
                                specs);

  WeitzenbockReport rep;
  rep.pointwise.resize(ns);
  std::vector<double> grad_sq(ns), comm_sq(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    const Mat& Hs = fr[s].H;
    const Mat& Hinv = fr[s].Hinv;
    double g = 0;
    for (int k = 0; k < n; ++k) {
      Mat pk = phi.at(s, pcomp[k]);
      for (int j = 0; j < n; ++j) {
        Mat aj = A.coefficient().at(s, acomp[j]);
        Mat dj = ConstMatMap(dphi[k][j].data() + s * r2, r, r);
        Mat dbj = ConstMatMap(dphi[k][n + j].data() + s * r2, r, r);
        Mat nab = dj + aj * pk - pk * aj;
        Mat nabbar = dbj;
        if (A.has_beta()) {
          Mat bj = A.beta().at(s, bcomp[j]);
          nabbar += bj * pk - pk * bj;
        }
        g += higgs::h_norm_sq(nab, Hs, Hinv) + higgs::h_norm_sq(nabbar, Hs, Hinv);
      }
    }
    grad_sq[s] = 4.0 * g;
    double c = 0;
    for (int j = 0; j < n; ++j) {
      Mat pj = phi.at(s, pcomp[j]);
      for (int k = 0; k < n; ++k) {
        Mat pk = phi.at(s, pcomp[k]);
        Mat pkd = higgs::h_adjoint(pk, Hs, Hinv);
        c += higgs::h_norm_sq(pj * pkd - pkd * pj, Hs, Hinv);
      }
    }
    comm_sq[s] = 4.0 * c;
    rep.pointwise[s] = lap(s, 0).real() + 2.0 * grad_sq[s] + 2.0 * comm_sq[s];
  }

  auto act = active_sites(dom);
  std::vector<double> absres(ns), integrand(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    absres[s] = act[s] ? std::abs(rep.pointwise[s]) : 0.0;
    integrand[s] = grad_sq[s] + comm_sq[s];
  }
  rep.residual_l1 = lattice::integrate(dom, absres);
  rep.integrated = lattice::integrate(dom, integrand);
  rep.phi_norm_sq = lattice::integrate(dom, phi_sq);
  return rep;
}

double weitzenbock_residual(const HermitianMetricField& H, const EndoFormField& phi, const EndoFormField& beta) {
  return weitzenbock(H, phi, beta).residual_l1;
}

GaugeTriple complex_gauge_act(const EndoFormField& g, const EndoFormField& beta, const EndoFormField& phi,
                              const HermitianMetricField& H) {
  if (g.p() != 0 || g.q() != 0) throw InvalidDegreeError("gauge transformation must be a (0,0) field");
  require_higgs(phi);
  require_beta(beta);
  require_compatible(H, g, "gauge");
  require_compatible(H, phi, "phi");
  require_compatible(H, beta, "beta");
  const Domain& dom = H.domain();
  const int n = dom.complex_dim(), r = H.rank();
  const std::size_t ns = dom.sites();

  std::vector<Mat> ginv(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    Mat gs = g.at(s, 0);
    const double scale = std::max(1.0, gs.norm());
    const double det = std::abs(gs.determinant());
    if (!(det > 1e-14 * std::pow(scale, r))) {
      std::ostringstream os;
      os << "gauge transformation is singular at site " << s;
      throw SingularGaugeError(os.str());
    }
    ginv[s] = gs.inverse();
  }

  GaugeTriple out;
  EndoFormField dg(lattice::dbar(g.form()), r);
  out.beta = EndoFormField(dom, r, 0, 1);
  out.phi = EndoFormField(dom, r, 1, 0);
  out.H = H;
  for (std::size_t s = 0; s < ns; ++s) {
    Mat gs = g.at(s, 0);
    for (int j = 0; j < n; ++j) {
      int bc = one_form_comp(out.beta.basis(), j, true);
      Mat b = ginv[s] * dg.at(s, bc);
      if (beta.sites() > 0) b += ginv[s] * beta.at(s, bc) * gs;
      out.beta.at(s, bc) = b;
      int pc = one_form_comp(out.phi.basis(), j, false);
      out.phi.at(s, pc) = ginv[s] * phi.at(s, pc) * gs;
    }
    Mat h = gs.adjoint() * H.at(s) * gs;
    out.H.at(s) = 0.5 * (h + h.adjoint());
  }
  return out;
}

}  // namespace hitchin::solver
