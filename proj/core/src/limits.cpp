#include "hitchin/limits.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace hitchin::limits {

using solver::ChernConnectionField;
using Op = Domain::Op;

namespace {

constexpr cd kI{0.0, 1.0};

int dz_comp(const lattice::FormBasis& b, int j) { return b.index(1u << j, 0u); }
int dzbar_comp(const lattice::FormBasis& b, int j) { return b.index(0u, 1u << j); }

// Physical displacement from site coordinates to a point, wrapped on the torus.
double distance_to(const Domain& dom, std::size_t site, const std::vector<double>& p) {
  double acc = 0;
  for (int a = 0; a < dom.real_dim(); ++a) {
    double dx = dom.coord(site, a) - p[a];
    if (dom.periodic()) {
      const double L = dom.extent()[a];
      dx -= L * std::round(dx / L);
    }
    acc += dx * dx;
  }
  return std::sqrt(acc);
}

std::vector<double> site_point(const Domain& dom, std::size_t s) {
  std::vector<double> p(dom.real_dim());
  for (int a = 0; a < dom.real_dim(); ++a) p[a] = dom.coord(s, a);
  return p;
}

std::size_t nearest_site(const Domain& dom, const std::vector<double>& p) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    double d = distance_to(dom, s, p);
    if (d < bd) {
      bd = d;
      best = s;
    }
  }
  return best;
}

double min_extent(const Domain& dom) { return *std::min_element(dom.extent().begin(), dom.extent().end()); }

std::vector<double> squared(std::vector<double> v) {
  for (double& x : v) x *= x;
  return v;
}

double sym_l2(const higgs::SymFormField& f) {
  const Domain& dom = f.domain();
  std::vector<double> d(dom.sites());
  for (std::size_t s = 0; s < dom.sites(); ++s) d[s] = std::pow(f.norm_at(s), 2);
  return std::sqrt(lattice::integrate(dom, d));
}

double root_gap(const SpectralData& kappa, std::size_t site) {
  auto roots = higgs::spectral_roots(kappa, site);
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < roots.size(); ++i)
    for (std::size_t j = i + 1; j < roots.size(); ++j) {
      double d = 0;
      for (std::size_t k = 0; k < roots[i].size(); ++k) d += std::norm(roots[i][k] - roots[j][k]);
      gap = std::min(gap, std::sqrt(d));
    }
  return roots.size() < 2 ? 0.0 : gap;
}

}  // namespace

std::vector<cd> companion_q(const EndoFormField& phi) {
  if (phi.rank() != 2 || phi.p() != 1 || phi.q() != 0)
    throw InvalidDegreeError("companion form needs a rank-2 (1,0) field");
  const int c = dz_comp(phi.basis(), 0);
  std::vector<cd> q(phi.sites());
  for (std::size_t s = 0; s < phi.sites(); ++s) {
    cd top = phi.at(s, c)(0, 1);
    if (top == cd(0.0)) throw ConditioningError("field is not in companion form (zero upper-right entry)");
    q[s] = phi.at(s, c)(1, 0) / top;
  }
  return q;
}

HermitianMetricField decoupled_metric(const EndoFormField& phi) {
  auto q = companion_q(phi);
  HermitianMetricField H(phi.domain(), 2, true);
  for (std::size_t s = 0; s < phi.sites(); ++s) {
    double m = std::sqrt(std::abs(q[s]));
    H.at(s)(0, 0) = m;
    H.at(s)(1, 1) = 1.0 / m;
  }
  return H;
}

HermitianMetricField patch_start_metric(const EndoFormField& phi, double eps) {
  const Domain& dom = phi.domain();
  if (dom.periodic()) throw Error("patch_start_metric needs a Dirichlet patch");
  auto q = companion_q(phi);
  HermitianMetricField H(dom, 2, true);
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    double b = 1.0;
    for (int a = 0; a < dom.real_dim(); ++a) {
      double x = dom.coord(s, a) / (0.5 * dom.extent()[a]);
      b *= std::max(0.0, 1.0 - x * x);
    }
    double rho = std::sqrt(std::norm(q[s]) + eps * eps * b);
    double m = std::sqrt(rho);
    H.at(s)(0, 0) = m;
    H.at(s)(1, 1) = 1.0 / m;
  }
  return H;
}

double probe_radius(const Domain& dom, const std::vector<double>& point, const std::vector<std::uint8_t>& z_mask) {
  if (static_cast<int>(point.size()) != dom.real_dim()) throw ShapeMismatchError("probe point has the wrong dimension");
  double dz = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < dom.sites(); ++s)
    if (!z_mask.empty() && z_mask[s]) dz = std::min(dz, distance_to(dom, s, point));
  return 0.5 * std::min(0.1 * min_extent(dom), dz);
}

std::vector<double> dstar_curvature_norm(const ChernConnectionField& A, const EndoFormField& F) {
  if (F.p() != 1 || F.q() != 1) throw InvalidDegreeError("d_A^* F expects a (1,1) field");
  const Domain& dom = F.domain();
  const int n = dom.complex_dim(), r = F.rank(), r2 = r * r;
  const std::size_t ns = dom.sites();
  EndoFormField out10(dom, r, 1, 0), out01(dom, r, 0, 1);
  std::vector<Domain::DerivSpec> specs;
  for (int k = 0; k < n; ++k) specs.push_back({Op::Dz, k});
  for (int k = 0; k < n; ++k) specs.push_back({Op::Dzbar, k});
  std::vector<std::vector<cd>> d;
  std::vector<cd> ch(ns);
  const auto& a = A.coefficient();
  for (int c = 0; c < F.components(); ++c) {
    // derivatives of every matrix entry of component c
    std::vector<std::vector<cd>> dz(n, std::vector<cd>(ns * r2)), dzb(n, std::vector<cd>(ns * r2));
    for (int e = 0; e < r2; ++e) {
      for (std::size_t s = 0; s < ns; ++s) ch[s] = F.form()(s, c, e);
      dom.derivatives(ch, specs, d);
      for (int k = 0; k < n; ++k)
        for (std::size_t s = 0; s < ns; ++s) {
          dz[k][s * r2 + e] = d[k][s];
          dzb[k][s * r2 + e] = d[n + k][s];
        }
    }
    for (int k = 0; k < n; ++k) {
      // dbar_A^* = -2 iota(dzbar_k) nabla_{z_k}  -> (1,0)
      lattice::BasisTerm tb = lattice::interior(F.basis(), out10.basis(), c, k, true);
      // del_A^* = -2 iota(dz_k) nabla_{zbar_k}  -> (0,1)
      lattice::BasisTerm th = lattice::interior(F.basis(), out01.basis(), c, k, false);
      for (std::size_t s = 0; s < ns; ++s) {
        Mat x = F.at(s, c);
        if (tb.sign != 0) {
          Mat ak = a.at(s, dz_comp(a.basis(), k));
          Mat nab = ConstMatMap(dz[k].data() + s * r2, r, r);
          nab += ak * x - x * ak;
          out10.at(s, tb.comp) += (-2.0 * tb.sign) * nab;
        }
        if (th.sign != 0) {
          Mat nab = ConstMatMap(dzb[k].data() + s * r2, r, r);
          if (A.has_beta()) {
            Mat bk = A.beta().at(s, dzbar_comp(A.beta().basis(), k));
            nab += bk * x - x * bk;
          }
          out01.at(s, th.comp) += (-2.0 * th.sign) * nab;
        }
      }
    }
  }
  auto n10 = higgs::pointwise_norm(A.metric(), out10);
  auto n01 = higgs::pointwise_norm(A.metric(), out01);
  std::vector<double> out(ns);
  for (std::size_t s = 0; s < ns; ++s) out[s] = std::hypot(n10[s], n01[s]);
  return out;
}

namespace {

// |d_A(psi + psi^dagger)|^2 split into its (1,0)-covariant and (0,1)-covariant parts.
struct CovariantParts {
  std::vector<double> del_sq, dbar_sq;
};

CovariantParts covariant_parts(const ChernConnectionField& A, const EndoFormField& psi) {
  const HermitianMetricField& H = A.metric();
  const int n = H.domain().complex_dim();
  EndoFormField psid = higgs::adjoint_wrt(H, psi);
  CovariantParts out;
  out.del_sq = squared(higgs::pointwise_norm(H, solver::covariant_del(A, psid)));
  out.dbar_sq = squared(higgs::pointwise_norm(H, solver::covariant_dbar(A, psi)));
  if (n >= 2) {
    auto a = squared(higgs::pointwise_norm(H, solver::covariant_del(A, psi)));
    auto b = squared(higgs::pointwise_norm(H, solver::covariant_dbar(A, psid)));
    for (std::size_t s = 0; s < a.size(); ++s) {
      out.del_sq[s] += a[s];
      out.dbar_sq[s] += b[s];
    }
  }
  return out;
}

}  // namespace

SweepRecord sweep_diagnostics(const HermitianMetricField& H, const EndoFormField& phi_t, double t, double r1,
                              const std::vector<std::vector<double>>& probes, std::optional<double> epsilon_disc) {
  const Domain& dom = H.domain();
  const std::size_t ns = dom.sites();
  SweepRecord rec;
  rec.t = t;
  rec.r_t = higgs::l2_norm(phi_t);
  rec.r_t_metric = higgs::l2_norm(H, phi_t);
  (void)r1;
  if (!(rec.r_t > 0)) throw NormalizationError("Higgs field has zero L2 norm");
  EndoFormField phi_hat = cd(1.0 / rec.r_t) * phi_t;

  rec.kappa = higgs::hitchin_map(phi_hat);
  higgs::Discriminant disc = higgs::discriminant(rec.kappa, epsilon_disc);
  higgs::attach_discriminant(rec.kappa, disc);
  const auto& zmask = disc.mask;

  auto active = solver::active_sites(dom);
  auto comm = higgs::pointwise_norm(H, higgs::bracket(phi_hat, higgs::adjoint_wrt(H, phi_hat)));
  ChernConnectionField A = solver::chern_connection(H);
  EndoFormField F = solver::curvature(A);
  EndoFormField ilf = higgs::lambda(F);
  ilf *= kI;
  auto ilf_norm = higgs::pointwise_norm(H, ilf);
  auto dstar = dstar_curvature_norm(A, F);

  for (std::size_t s = 0; s < ns; ++s)
    if (active[s] && !zmask[s]) rec.comm_sup = std::max(rec.comm_sup, comm[s]);

  for (const auto& p : probes) {
    ProbeValues pv;
    pv.point = p;
    pv.radius = probe_radius(dom, p, zmask);
    pv.gap = root_gap(rec.kappa, nearest_site(dom, p));
    for (std::size_t s = 0; s < ns; ++s) {
      if (!active[s] || distance_to(dom, s, p) > pv.radius) continue;
      ++pv.ball_sites;
      pv.comm_sup = std::max(pv.comm_sup, comm[s]);
      pv.ilf_sup = std::max(pv.ilf_sup, ilf_norm[s]);
      pv.dstar_f_sup = std::max(pv.dstar_f_sup, dstar[s]);
    }
    rec.probes.push_back(pv);
  }

  EndoFormField sq = higgs::wedge_square(phi_hat);
  rec.wedge_sq_int = sq.sites() > 0 ? lattice::integrate(dom, squared(higgs::pointwise_norm(H, sq))) : 0.0;
  auto parts = covariant_parts(A, phi_hat);
  std::vector<double> dsum(ns);
  for (std::size_t s = 0; s < ns; ++s) dsum[s] = parts.del_sq[s] + parts.dbar_sq[s];
  rec.dA_phi_int = lattice::integrate(dom, dsum);

  auto phin = higgs::pointwise_norm(H, phi_t);
  const double l2 = rec.r_t_metric;
  rec.sup_ratio = *std::max_element(phin.begin(), phin.end()) / (l2 / std::sqrt(dom.total_volume()));
  auto kt = higgs::hitchin_map(phi_t);
  double mk = 0;
  for (std::size_t k = 0; k < kt.p.size(); ++k) mk = std::max(mk, std::pow(sym_l2(kt.p[k]), 1.0 / (k + 1.0)));
  rec.norm_chain_upper = mk / l2;
  rec.norm_chain_lower = l2 / (mk + 1.0);
  return rec;
}

std::vector<SweepRecord> scaling_sweep(const EndoFormField& phi, const std::vector<double>& t_list,
                                       const SweepOptions& options) {
  if (t_list.size() < 4) throw Error("experiment.t_list needs at least 4 values");
  for (std::size_t i = 0; i < t_list.size(); ++i) {
    if (!(t_list[i] > 0)) throw Error("experiment.t_list values must be positive");
    if (i > 0 && !(t_list[i] > t_list[i - 1])) throw Error("experiment.t_list must be strictly increasing");
  }
  const double r1 = higgs::l2_norm(phi);
  HermitianMetricField H = options.initial ? *options.initial
                                           : HermitianMetricField(phi.domain(), phi.rank(), options.solver.sl_mode);
  std::vector<SweepRecord> out;
  for (double t : t_list) {
    EndoFormField phi_t = cd(t) * phi;
    solver::SolveResult res;
    try {
      res = solver::solve_metric(phi_t, H, options.solver);
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << "sweep failed at t = " << t << ": " << e.what();
      throw SweepError(os.str(), t);
    }
    SweepRecord rec = sweep_diagnostics(res.H, phi_t, t, r1, options.probes, options.epsilon_disc);
    rec.report = res.report;
    rec.H = res.H;
    H = res.H;
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<DecayFit> decay_fit(const std::vector<SweepRecord>& sweep, double floor) {
  if (sweep.size() < 4) throw Error("decay_fit needs at least 4 sweep records");
  const std::size_t np = sweep.front().probes.size();
  std::vector<DecayFit> fits(np);
  for (std::size_t i = 0; i < np; ++i) {
    DecayFit& f = fits[i];
    f.gap = sweep.front().probes[i].gap;
    std::vector<double> x, y;
    for (const auto& rec : sweep) {
      double v = rec.probes[i].comm_sup;
      if (!(v > floor)) {
        f.floored = true;
        break;
      }
      x.push_back(rec.r_t);
      y.push_back(std::log(v));
    }
    f.points_used = static_cast<int>(x.size());
    if (x.size() < 2) {
      f.degenerate = true;
      continue;
    }
    const double m = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / m;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / m;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      sxx += (x[k] - mx) * (x[k] - mx);
      sxy += (x[k] - mx) * (y[k] - my);
      syy += (y[k] - my) * (y[k] - my);
    }
    if (sxx == 0) {
      f.degenerate = true;
      continue;
    }
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssres = 0;
    for (std::size_t k = 0; k < x.size(); ++k) ssres += std::pow(y[k] - f.intercept - f.slope * x[k], 2);
    f.r2 = syy > 0 ? 1.0 - ssres / syy : 1.0;
    f.slope_over_gap = f.gap > 0 ? f.slope / f.gap : 0.0;
  }
  return fits;
}

UhlenbeckRadius uhlenbeck_radius_field(const EndoFormField& F, const HermitianMetricField& H, double eps0) {
  if (F.p() != 1 || F.q() != 1) throw InvalidDegreeError("Uhlenbeck radius expects a (1,1) curvature field");
  const Domain& dom = F.domain();
  const int n = dom.complex_dim(), d = dom.real_dim();
  UhlenbeckRadius out;
  out.r_max = 0.5 * min_extent(dom);
  out.radius = lattice::scalar_field(dom);
  if (n == 1) {
    for (std::size_t s = 0; s < dom.sites(); ++s) out.radius(s, 0) = out.r_max;
    out.note = "complex dimension 1: the scale factor r^{4-2n} = r^2 makes the radius trivial; returning R_max";
    return out;
  }
  auto dens = squared(higgs::pointwise_norm(H, F));
  for (std::size_t s = 0; s < dom.sites(); ++s) dens[s] *= dom.weight(s);

  // Lattice offsets inside the R_max ball, sorted by physical length.
  std::vector<int> kmax(d);
  for (int a = 0; a < d; ++a) kmax[a] = static_cast<int>(std::floor(out.r_max / dom.spacing()[a] + 1e-9));
  struct Offset {
    std::vector<int> k;
    double len;
  };
  std::vector<Offset> offs;
  std::vector<int> k(d);
  for (int a = 0; a < d; ++a) k[a] = -kmax[a];
  while (true) {
    double len = 0;
    for (int a = 0; a < d; ++a) len += std::pow(k[a] * dom.spacing()[a], 2);
    len = std::sqrt(len);
    if (len <= out.r_max + 1e-12) offs.push_back({k, len});
    int a = d - 1;
    while (a >= 0 && ++k[a] > kmax[a]) {
      k[a] = -kmax[a];
      --a;
    }
    if (a < 0) break;
  }
  std::stable_sort(offs.begin(), offs.end(), [](const Offset& x, const Offset& y) { return x.len < y.len; });

  std::vector<int> idx(d), nb(d);
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    dom.unravel(s, idx.data());
    double acc = 0;
    double radius = out.r_max;
    for (std::size_t o = 0; o < offs.size(); ++o) {
      bool inside = true;
      for (int a = 0; a < d; ++a) {
        int v = idx[a] + offs[o].k[a];
        const int N = dom.shape()[a];
        if (dom.periodic()) {
          v = ((v % N) + N) % N;
        } else if (v < 0 || v >= N) {
          inside = false;
          break;
        }
        nb[a] = v;
      }
      if (!inside) continue;
      acc += dens[dom.ravel(nb.data())];
      if (acc > eps0) {
        // The ball of radius offs[o].len breaks the bound; every smaller radius level is admissible.
        double r = 0;
        for (std::size_t p = o; p-- > 0;)
          if (offs[p].len < offs[o].len) {
            r = offs[p].len;
            break;
          }
        radius = r;
        break;
      }
    }
    out.radius(s, 0) = radius;
  }
  return out;
}

std::vector<std::uint8_t> dilate_mask(const Domain& dom, const std::vector<std::uint8_t>& mask, double radius) {
  std::vector<std::uint8_t> out(dom.sites(), 0);
  std::vector<std::vector<double>> centres;
  for (std::size_t s = 0; s < dom.sites(); ++s)
    if (mask[s]) centres.push_back(site_point(dom, s));
  for (std::size_t s = 0; s < dom.sites(); ++s)
    for (const auto& c : centres)
      if (distance_to(dom, s, c) <= radius) {
        out[s] = 1;
        break;
      }
  return out;
}

AdiabaticResidual adiabatic_residual(const HermitianMetricField& H, const EndoFormField& phi,
                                     const std::vector<std::uint8_t>& exclude) {
  const Domain& dom = H.domain();
  const std::size_t ns = dom.sites();
  const double norm = higgs::l2_norm(H, phi);
  if (!(norm > 0)) throw NormalizationError("cannot normalise a zero Higgs field");
  EndoFormField ph = cd(1.0 / norm) * phi;
  auto active = solver::active_sites(dom);
  auto l2 = [&](const std::vector<double>& sq) {
    double acc = 0;
    for (std::size_t s = 0; s < ns; ++s)
      if (active[s] && (exclude.empty() || !exclude[s])) acc += dom.weight(s) * sq[s];
    return std::sqrt(acc);
  };
  ChernConnectionField A = solver::chern_connection(H);
  EndoFormField ilf = higgs::lambda(solver::curvature(A));
  ilf *= kI;
  AdiabaticResidual r;
  r.ilf = l2(squared(higgs::pointwise_norm(H, ilf)));
  r.commutator = l2(squared(higgs::pointwise_norm(H, higgs::bracket(ph, higgs::adjoint_wrt(H, ph)))));
  auto parts = covariant_parts(A, ph);
  r.del = l2(parts.del_sq);
  r.dbar = l2(parts.dbar_sq);
  EndoFormField sq = higgs::wedge_square(ph);
  r.wedge = sq.sites() > 0 ? l2(squared(higgs::pointwise_norm(H, sq))) : 0.0;
  r.norm_defect = std::abs(norm - 1.0);
  return r;
}

}  // namespace hitchin::limits
