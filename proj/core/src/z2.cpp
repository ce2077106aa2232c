#include "hitchin/z2.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace hitchin::limits {

namespace {

double re_inner(const cd* a, const cd* b, int n) {
  double acc = 0;
  for (int j = 0; j < n; ++j) acc += (a[j] * std::conj(b[j])).real();
  return acc;
}

double coeff_norm(const cd* a, int n) {
  double acc = 0;
  for (int j = 0; j < n; ++j) acc += std::norm(a[j]);
  return std::sqrt(acc);
}

// Signed edge value between neighbouring sites u and w; 0 if they are not adjacent or the edge
// is excluded.
int edge_between(const Z2OneForm& w, std::size_t u, std::size_t x) {
  const Domain& dom = w.domain;
  for (int a = 0; a < dom.real_dim(); ++a) {
    if (dom.neighbor(u, a, 1) == x) return w.sign(u, a);
    if (dom.neighbor(x, a, 1) == u) return w.sign(x, a);
  }
  return 0;
}

}  // namespace

double Z2OneForm::v_norm_sq(std::size_t site) const {
  const int d = domain.real_dim();
  double acc = 0;
  for (int a = 0; a < d; ++a) acc += v[site * d + a] * v[site * d + a];
  return 0.5 * acc;
}

Z2OneForm extract_z2(const SpectralData& theta, const EndoFormField& phi_hat, const HermitianMetricField& H,
                     double floor) {
  if (theta.rank != 2 || phi_hat.rank() != 2) throw Error("Z2 extraction needs rank-2 spectral data");
  const Domain& dom = theta.domain();
  const int n = dom.complex_dim(), d = dom.real_dim();
  const std::size_t ns = dom.sites();
  if (theta.p[1].max_norm() == 0) throw NoSpectralDataError("p_2 vanishes identically; no spectral cover to extract");
  const double p1max = theta.p[0].max_norm();
  if (p1max > 1e-10 * (1.0 + std::sqrt(theta.p[1].max_norm())))
    throw DegenerateSpectrumError("Z2 extraction needs trace-free spectral data (p_1 = 0)");

  Z2OneForm w;
  w.domain = dom;
  higgs::Discriminant disc = higgs::discriminant(theta);
  w.z_mask = theta.mask.empty() ? disc.mask : theta.mask;
  std::vector<double> delta_abs(ns);
  for (std::size_t s = 0; s < ns; ++s)
    delta_abs[s] = theta.delta ? theta.delta->norm_at(s) : disc.section.norm_at(s);

  w.lambda.assign(ns * n, cd(0.0));
  for (std::size_t s = 0; s < ns; ++s) {
    auto roots = higgs::spectral_roots(theta, s);
    for (int j = 0; j < n; ++j) w.lambda[s * n + j] = roots[0][j];
  }

  // Breadth-first sign propagation over the complement of Z, one tree per component.
  std::vector<std::uint8_t> seen(ns, 0);
  while (true) {
    // Near-ties go to the lowest index so that rounding in Delta cannot move the root.
    double best = -1;
    for (std::size_t s = 0; s < ns; ++s)
      if (!seen[s] && !w.z_mask[s]) best = std::max(best, delta_abs[s]);
    if (best < 0) break;
    std::size_t root = 0;
    while (seen[root] || w.z_mask[root] || delta_abs[root] < best * (1 - 1e-9)) ++root;
    w.roots.push_back(root);
    std::deque<std::size_t> queue{root};
    seen[root] = 1;
    while (!queue.empty()) {
      std::size_t x = queue.front();
      queue.pop_front();
      for (int a = 0; a < d; ++a)
        for (int dir : {1, -1}) {
          std::size_t y = dom.neighbor(x, a, dir);
          if (y == Domain::npos || seen[y] || w.z_mask[y]) continue;
          seen[y] = 1;
          if (re_inner(&w.lambda[x * n], &w.lambda[y * n], n) < 0)
            for (int j = 0; j < n; ++j) w.lambda[y * n + j] = -w.lambda[y * n + j];
          queue.push_back(y);
        }
    }
  }

  w.edge_sign.assign(ns * d, 0);
  for (std::size_t s = 0; s < ns; ++s) {
    if (w.z_mask[s]) continue;
    for (int a = 0; a < d; ++a) {
      std::size_t y = dom.neighbor(s, a, 1);
      if (y == Domain::npos || w.z_mask[y]) continue;
      w.edge_sign[s * d + a] = re_inner(&w.lambda[s * n], &w.lambda[y * n], n) < 0 ? -1 : 1;
    }
  }

  w.v.assign(ns * d, 0.0);
  for (std::size_t s = 0; s < ns; ++s)
    for (int j = 0; j < n; ++j) {
      w.v[s * d + 2 * j] = 2.0 * w.lambda[s * n + j].real();
      w.v[s * d + 2 * j + 1] = -2.0 * w.lambda[s * n + j].imag();
    }

  // sigma = phi_hat_j / c_j using the dominant coefficient, normalised in the H-norm.
  double lmax = 0;
  for (std::size_t s = 0; s < ns; ++s) lmax = std::max(lmax, coeff_norm(&w.lambda[s * n], n));
  w.sigma = EndoFormField(dom, 2, 0, 0);
  w.flagged.assign(ns, 0);
  const auto& pb = phi_hat.basis();
  for (std::size_t s = 0; s < ns; ++s) {
    int jm = 0;
    for (int j = 1; j < n; ++j)
      if (std::abs(w.lambda[s * n + j]) > std::abs(w.lambda[s * n + jm])) jm = j;
    cd c = w.lambda[s * n + jm];
    Mat ph = phi_hat.at(s, pb.index(1u << jm, 0u));
    if (std::abs(c) <= floor * lmax || ph.norm() <= floor) {
      if (!w.z_mask[s]) w.flagged[s] = 1;
      continue;
    }
    Mat sg = ph / c;
    w.sigma.at(s, 0) = sg / higgs::h_norm(sg, H.at(s));
  }
  for (std::size_t s = 0; s < ns; ++s) {
    if (!w.flagged[s]) continue;
    Mat acc = Mat::Zero(2, 2);
    for (int a = 0; a < d; ++a)
      for (int dir : {1, -1}) {
        std::size_t y = dom.neighbor(s, a, dir);
        if (y != Domain::npos && !w.flagged[y] && !w.z_mask[y]) acc += w.sigma.at(y, 0);
      }
    double nrm = higgs::h_norm(acc, H.at(s));
    if (nrm > 0) w.sigma.at(s, 0) = acc / nrm;
  }
  return w;
}

higgs::SymFormField v_tensor_square(const Z2OneForm& w) {
  const Domain& dom = w.domain;
  const int n = dom.complex_dim();
  higgs::SymFormField out(dom, 2);
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    const cd* c = &w.lambda[s * n];
    if (n == 1) {
      out(s, 0) = c[0] * c[0];
    } else {
      out(s, 0) = c[0] * c[0];
      out(s, 1) = 2.0 * c[0] * c[1];
      out(s, 2) = c[1] * c[1];
    }
  }
  return out;
}

double z2_consistency(const Z2OneForm& w, const higgs::SymFormField& p2) {
  auto vv = v_tensor_square(w);
  double m = 0;
  for (std::size_t s = 0; s < w.domain.sites(); ++s) {
    if (w.z_mask[s]) continue;
    double acc = 0;
    for (int i = 0; i < vv.monomials(); ++i) acc += std::norm(vv(s, i) + p2(s, i));
    m = std::max(m, std::sqrt(acc));
  }
  return m;
}

Z2Harmonicity z2_harmonicity_residual(const Z2OneForm& w, double exclusion_radius) {
  const Domain& dom = w.domain;
  const int d = dom.real_dim();
  const std::size_t ns = dom.sites();
  auto excluded = exclusion_radius > 0 ? dilate_mask(dom, w.z_mask, exclusion_radius) : w.z_mask;
  Z2Harmonicity out;
  double dv2 = 0, ds2 = 0, v2 = 0;
  std::vector<double> grad(d * d);
  for (std::size_t s = 0; s < ns; ++s) {
    bool ok = !excluded[s];
    for (int a = 0; ok && a < d; ++a) {
      std::size_t up = dom.neighbor(s, a, 1), dn = dom.neighbor(s, a, -1);
      if (up == Domain::npos || dn == Domain::npos || excluded[up] || excluded[dn] || w.sign(s, a) == 0 ||
          w.sign(dn, a) == 0) {
        ok = false;
        break;
      }
      const double h2 = 2.0 * dom.spacing()[a];
      for (int b = 0; b < d; ++b)
        grad[a * d + b] = (w.sign(s, a) * w.v[up * d + b] - w.sign(dn, a) * w.v[dn * d + b]) / h2;
    }
    if (!ok) {
      ++out.excluded_sites;
      continue;
    }
    ++out.used_sites;
    const double wt = dom.weight(s);
    double curl = 0, div = 0, g = 0, vs = 0;
    for (int a = 0; a < d; ++a) {
      div += grad[a * d + a];
      vs += w.v[s * d + a] * w.v[s * d + a];
      for (int b = 0; b < d; ++b) {
        g += grad[a * d + b] * grad[a * d + b];
        if (a < b) curl += std::pow(grad[a * d + b] - grad[b * d + a], 2);
      }
    }
    dv2 += wt * curl;
    ds2 += wt * div * div;
    v2 += wt * vs;
    out.grad_energy += wt * g;
  }
  out.dv = std::sqrt(dv2);
  out.dstar_v = std::sqrt(ds2);
  out.v_norm = std::sqrt(v2);

  // |v| is single-valued, so the Hoelder proxy needs no sign correction.
  for (std::size_t s = 0; s < ns; ++s) {
    if (w.z_mask[s]) continue;
    for (int a = 0; a < d; ++a) {
      std::size_t y = dom.neighbor(s, a, 1);
      if (y == Domain::npos || w.z_mask[y]) continue;
      double diff = std::abs(std::sqrt(w.v_norm_sq(s)) - std::sqrt(w.v_norm_sq(y)));
      out.holder_proxy = std::max(out.holder_proxy, diff / std::sqrt(dom.spacing()[a]));
    }
  }
  return out;
}

std::size_t cocycle_defects(const Z2OneForm& w) {
  const Domain& dom = w.domain;
  const int d = dom.real_dim();
  std::size_t bad = 0;
  for (std::size_t s = 0; s < dom.sites(); ++s)
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b) {
        std::size_t sa = dom.neighbor(s, a, 1), sb = dom.neighbor(s, b, 1);
        if (sa == Domain::npos || sb == Domain::npos) continue;
        int prod = w.sign(s, a) * w.sign(sa, b) * w.sign(sb, a) * w.sign(s, b);
        if (prod == 0) continue;  // touches Z
        if (prod < 0) ++bad;
      }
  return bad;
}

int loop_monodromy(const Z2OneForm& w, const std::vector<std::size_t>& loop) {
  if (loop.size() < 4) return 0;
  int prod = 1;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    int e = edge_between(w, loop[i], loop[(i + 1) % loop.size()]);
    if (e == 0) return 0;
    prod *= e;
  }
  return prod;
}

std::vector<std::size_t> square_loop(const Domain& dom, std::size_t centre, int k, int axis0) {
  const int d = dom.real_dim();
  const int a0 = axis0, a1 = axis0 + 1;
  if (k < 1 || a1 >= d) return {};
  std::vector<int> idx(d);
  dom.unravel(centre, idx.data());
  auto site_at = [&](int i, int j, std::size_t& out) {
    std::vector<int> t = idx;
    t[a0] += i;
    t[a1] += j;
    for (int a : {a0, a1}) {
      const int N = dom.shape()[a];
      if (dom.periodic()) {
        t[a] = ((t[a] % N) + N) % N;
      } else if (t[a] < 0 || t[a] >= N) {
        return false;
      }
    }
    out = dom.ravel(t.data());
    return true;
  };
  std::vector<std::size_t> loop;
  std::size_t s;
  // bottom edge left to right, then up, then right to left, then down
  for (int i = -k; i < k; ++i) {
    if (!site_at(i, -k, s)) return {};
    loop.push_back(s);
  }
  for (int j = -k; j < k; ++j) {
    if (!site_at(k, j, s)) return {};
    loop.push_back(s);
  }
  for (int i = k; i > -k; --i) {
    if (!site_at(i, k, s)) return {};
    loop.push_back(s);
  }
  for (int j = k; j > -k; --j) {
    if (!site_at(-k, j, s)) return {};
    loop.push_back(s);
  }
  return loop;
}

std::vector<ZMonodromy> z_monodromies(const Z2OneForm& w) {
  const Domain& dom = w.domain;
  const int d = dom.real_dim();
  const std::size_t ns = dom.sites();
  std::vector<std::uint8_t> seen(ns, 0);
  std::vector<ZMonodromy> out;
  std::vector<int> i0(d), ix(d);
  for (std::size_t s0 = 0; s0 < ns; ++s0) {
    if (!w.z_mask[s0] || seen[s0]) continue;
    // Component in unwrapped index offsets relative to s0.
    std::vector<std::pair<std::size_t, std::vector<int>>> comp;
    std::deque<std::pair<std::size_t, std::vector<int>>> queue{{s0, std::vector<int>(d, 0)}};
    seen[s0] = 1;
    while (!queue.empty()) {
      auto cur = queue.front();
      queue.pop_front();
      comp.push_back(cur);
      for (int a = 0; a < d; ++a)
        for (int dir : {1, -1}) {
          std::size_t y = dom.neighbor(cur.first, a, dir);
          if (y == Domain::npos || seen[y] || !w.z_mask[y]) continue;
          seen[y] = 1;
          auto off = cur.second;
          off[a] += dir;
          queue.push_back({y, off});
        }
    }
    std::vector<int> lo(d, 0), hi(d, 0);
    for (const auto& [site, off] : comp)
      for (int a = 0; a < d; ++a) {
        lo[a] = std::min(lo[a], off[a]);
        hi[a] = std::max(hi[a], off[a]);
      }
    dom.unravel(s0, i0.data());
    for (int a = 0; a < d; ++a) {
      int v = i0[a] + (lo[a] + hi[a]) / 2;
      const int N = dom.shape()[a];
      ix[a] = dom.periodic() ? ((v % N) + N) % N : std::clamp(v, 0, N - 1);
    }
    std::size_t centre = dom.ravel(ix.data());
    ZMonodromy m;
    m.sites = comp.size();
    m.half_size = std::max(hi[0] - lo[0], hi[1] - lo[1]) / 2 + 2;
    for (int a = 0; a < d; ++a) m.centre.push_back(dom.coord(centre, a));
    m.value = loop_monodromy(w, square_loop(dom, centre, m.half_size));
    out.push_back(m);
  }
  return out;
}

Z2OneForm scramble_signs(const Z2OneForm& w, double fraction, std::uint64_t seed) {
  Z2OneForm out = w;
  CounterRng rng(seed, 7);
  for (auto& e : out.edge_sign) {
    double u = rng.uniform();
    if (e != 0 && u < fraction) e = static_cast<std::int8_t>(-e);
  }
  return out;
}

RealizationReport realization_experiment(const EndoFormField& phi, const std::vector<double>& t_list,
                                         const RealizationOptions& options) {
  if (phi.rank() != 2) throw Error("realization experiment needs a rank-2 preset");
  RealizationReport rep;
  try {
    rep.sweep = scaling_sweep(phi, t_list, options.sweep);
  } catch (const NumericalError& e) {
    throw StageError("sweep", e.what());
  }
  const SweepRecord& last = rep.sweep.back();
  const EndoFormField phi_hat = cd(1.0 / last.r_t) * (cd(last.t) * phi);
  try {
    rep.z2 = extract_z2(last.kappa, phi_hat, last.H);
  } catch (const NumericalError& e) {
    throw StageError("extract_z2", e.what());
  }
  const auto excl = dilate_mask(phi.domain(), rep.z2.z_mask, options.exclusion_radius);
  try {
    for (const auto& rec : rep.sweep) rep.adiabatic.push_back(adiabatic_residual(rec.H, cd(rec.t / rec.r_t) * phi, excl));
  } catch (const NumericalError& e) {
    throw StageError("adiabatic", e.what());
  }
  rep.harmonicity = z2_harmonicity_residual(rep.z2, options.exclusion_radius);
  rep.cocycle_defects = cocycle_defects(rep.z2);
  rep.monodromy = z_monodromies(rep.z2);

  const Domain& dom = phi.domain();
  const auto& pT = last.kappa.p[1];
  for (const auto& rec : rep.sweep) {
    rep.consistency = std::max(rep.consistency, z2_consistency(rep.z2, rec.kappa.p[1]));
    for (std::size_t s = 0; s < dom.sites(); ++s)
      for (int i = 0; i < pT.monomials(); ++i)
        rep.det_drift = std::max(rep.det_drift, std::abs(rec.kappa.p[1](s, i) - pT(s, i)));
  }
  for (std::size_t s = 0; s < dom.sites(); ++s)
    if (!rep.z2.z_mask[s])
      rep.sigma_norm_error =
          std::max(rep.sigma_norm_error, std::abs(higgs::h_norm(rep.z2.sigma.at(s, 0), last.H.at(s)) - 1.0));

  double offdiag = 0;
  for (std::size_t s = 0; s < dom.sites(); ++s)
    for (int c = 0; c < phi.components(); ++c)
      offdiag = std::max({offdiag, std::abs(phi.at(s, c)(0, 1)), std::abs(phi.at(s, c)(1, 0))});
  rep.branch = offdiag == 0 ? "degenerate" : "generic";

  const double harm = std::max(rep.harmonicity.dv_rel(), rep.harmonicity.dstar_rel());
  if (rep.consistency > options.consistency_tol) {
    rep.failed_check = "consistency";
  } else if (rep.cocycle_defects != 0) {
    rep.failed_check = "cocycle";
  } else if (harm > options.harmonic_tol) {
    rep.failed_check = "harmonicity";
  } else if (rep.sigma_norm_error > 1e-10) {
    rep.failed_check = "sigma_norm";
  } else if (!last.report.converged) {
    rep.failed_check = "sweep_convergence";
  }
  rep.pass = rep.failed_check.empty();
  return rep;
}

}  // namespace hitchin::limits
