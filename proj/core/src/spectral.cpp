#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "hitchin/field_io.hpp"
#include "hitchin/higgs.hpp"

namespace hitchin::higgs {

namespace {

double binomial(int k, int i) {
  double b = 1;
  for (int t = 1; t <= i; ++t) b = b * (k - i + t) / t;
  return b;
}

int monomial_count(int n, int degree) { return n == 1 ? 1 : degree + 1; }

// Homogeneous polynomial in (dz_1, dz_2) with coefficients indexed by the power of dz_2.
using Poly = std::vector<cd>;

Poly poly_mul(const Poly& a, const Poly& b, int n) {
  if (n == 1) return {a[0] * b[0]};
  Poly out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

std::vector<cd> scalar_roots(const std::vector<cd>& c) {
  // lambda^r + c[0] lambda^{r-1} + ... + c[r-1]
  const int r = static_cast<int>(c.size());
  if (r == 1) return {-c[0]};
  if (r == 2) {
    cd half = 0.5 * c[0];
    cd w = std::sqrt(half * half - c[1]);
    return {-half + w, -half - w};
  }
  Eigen::MatrixXcd comp = Eigen::MatrixXcd::Zero(r, r);
  for (int i = 0; i < r; ++i) comp(0, i) = -c[i];
  for (int i = 1; i < r; ++i) comp(i, i - 1) = 1.0;
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(comp, false);
  std::vector<cd> out(r);
  for (int i = 0; i < r; ++i) out[i] = es.eigenvalues()(i);
  return out;
}

bool lex_less(const Covector& a, const Covector& b) {
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j].real() != b[j].real()) return a[j].real() < b[j].real();
    if (a[j].imag() != b[j].imag()) return a[j].imag() < b[j].imag();
  }
  double aa = a.empty() ? 0 : std::arg(a[0]), ab = b.empty() ? 0 : std::arg(b[0]);
  return aa < ab;
}

double covector_dist_sq(const Covector& a, const Covector& b) {
  double d = 0;
  for (std::size_t j = 0; j < a.size(); ++j) d += std::norm(a[j] - b[j]);
  return d;
}

std::vector<Covector> site_roots_unsorted(const SpectralData& theta, std::size_t site) {
  const int r = theta.rank;
  const int n = theta.domain().complex_dim();
  if (n == 1) {
    std::vector<cd> c(r);
    for (int k = 0; k < r; ++k) c[k] = theta.p[k](site, 0);
    std::vector<Covector> out;
    for (cd m : scalar_roots(c)) out.push_back({m});
    return out;
  }
  // n = 2: every p_k must be c_k l^k for one covector l.
  int kstar = -1;
  double best = 0, scale = 0;
  for (int k = 1; k <= r; ++k) {
    double nk = theta.p[k - 1].norm_at(site);
    scale = std::max(scale, std::pow(nk, 1.0 / k));
    if (nk > best) {
      best = nk;
      kstar = k;
    }
  }
  if (kstar < 0) return std::vector<Covector>(r, Covector(2, 0.0));
  const SymFormField& ps = theta.p[kstar - 1];
  cd a0 = ps(site, 0), ak = ps(site, kstar);
  cd l1, l2;
  bool lead_first = std::abs(a0) >= std::abs(ak);
  if (lead_first) {
    l1 = 1.0;
    l2 = ps(site, 1) / (static_cast<double>(kstar) * a0);
  } else {
    l2 = 1.0;
    l1 = ps(site, kstar - 1) / (static_cast<double>(kstar) * ak);
  }
  std::vector<cd> c(r);
  const double tol = 1e-8;
  for (int k = 1; k <= r; ++k) {
    const SymFormField& pk = theta.p[k - 1];
    c[k - 1] = lead_first ? pk(site, 0) : pk(site, k);
    double res = 0;
    for (int i = 0; i <= k; ++i) {
      cd model = c[k - 1] * binomial(k, i) * std::pow(l1, k - i) * std::pow(l2, i);
      res += std::norm(pk(site, i) - model) * monomial_weight(2, k, i);
    }
    if (std::sqrt(res) > tol * (pk.norm_at(site) + std::pow(scale, k))) {
      throw NotInHitchinBaseError("spectral coefficients are not powers of a single covector at site " +
                                  std::to_string(site));
    }
  }
  std::vector<Covector> out;
  for (cd m : scalar_roots(c)) out.push_back({m * l1, m * l2});
  return out;
}

void collect_snake(const Domain& dom, int axis, std::size_t base, bool reversed, std::vector<std::size_t>& out) {
  const int N = dom.shape()[axis];
  const bool last = axis == dom.real_dim() - 1;
  for (int t = 0; t < N; ++t) {
    int i = reversed ? N - 1 - t : t;
    std::size_t s = base + static_cast<std::size_t>(i) * dom.stride(axis);
    if (last)
      out.push_back(s);
    else
      collect_snake(dom, axis + 1, s, (t % 2) == 1, out);
  }
}

}  // namespace

double monomial_weight(int n, int degree, int i) {
  if (n == 1) return 1.0;
  return 1.0 / binomial(degree, i);
}

SymFormField::SymFormField(const Domain& domain, int degree)
    : domain_(domain), degree_(degree), monomials_(monomial_count(domain.complex_dim(), degree)) {
  data_.assign(domain.sites() * monomials_, cd(0.0));
}

double SymFormField::norm_at(std::size_t site) const {
  const int n = domain_.complex_dim();
  double acc = 0;
  for (int i = 0; i < monomials_; ++i) acc += std::norm((*this)(site, i)) * monomial_weight(n, degree_, i);
  return std::sqrt(acc);
}

double SymFormField::max_norm() const {
  double m = 0;
  for (std::size_t s = 0; s < domain_.sites(); ++s) m = std::max(m, norm_at(s));
  return m;
}

SpectralData hitchin_map(const EndoFormField& phi, double integrability_tol) {
  if (phi.p() != 1 || phi.q() != 0) throw InvalidDegreeError("hitchin_map expects a (1,0) Higgs field");
  const Domain& dom = phi.domain();
  const int n = dom.complex_dim();
  const int r = phi.rank();
  if (n == 2) {
    double scale = 0, worst = 0;
    for (std::size_t s = 0; s < phi.sites(); ++s) {
      scale = std::max(scale, phi.at(s, 0).squaredNorm() + phi.at(s, 1).squaredNorm());
      Mat c = phi.at(s, 0) * phi.at(s, 1) - phi.at(s, 1) * phi.at(s, 0);
      worst = std::max(worst, c.norm());
    }
    if (worst > integrability_tol * std::max(1.0, scale))
      throw IntegrabilityError("phi ^ phi does not vanish (max |[phi_1, phi_2]| = " + std::to_string(worst) + ")");
  }
  SpectralData out;
  out.rank = r;
  for (int k = 1; k <= r; ++k) out.p.emplace_back(dom, k);
  std::vector<Poly> power(r + 1), e(r + 1);
  std::vector<Mat> cur, next;
  for (std::size_t s = 0; s < phi.sites(); ++s) {
    // cur holds the matrix coefficients of (phi_1 dz_1 + phi_2 dz_2)^m.
    cur.assign(1, Mat::Identity(r, r));
    for (int m = 1; m <= r; ++m) {
      next.assign(monomial_count(n, m), Mat::Zero(r, r));
      for (std::size_t i = 0; i < cur.size(); ++i) {
        next[i] += cur[i] * phi.at(s, 0);
        if (n == 2) next[i + 1] += cur[i] * phi.at(s, 1);
      }
      cur.swap(next);
      power[m].assign(cur.size(), 0.0);
      for (std::size_t i = 0; i < cur.size(); ++i) power[m][i] = cur[i].trace();
    }
    // Newton: k e_k = sum_{i=1}^k (-1)^{i-1} e_{k-i} P_i
    e[0] = Poly{1.0};
    for (int k = 1; k <= r; ++k) {
      Poly acc(monomial_count(n, k), 0.0);
      for (int i = 1; i <= k; ++i) {
        Poly term = poly_mul(e[k - i], power[i], n);
        double sg = (i % 2) ? 1.0 : -1.0;
        for (std::size_t t = 0; t < acc.size(); ++t) acc[t] += sg * term[t];
      }
      for (auto& v : acc) v /= static_cast<double>(k);
      e[k] = acc;
      double sk = (k % 2) ? -1.0 : 1.0;
      for (std::size_t t = 0; t < acc.size(); ++t) out.p[k - 1](s, static_cast<int>(t)) = sk * acc[t];
    }
  }
  return out;
}

std::vector<Covector> spectral_roots(const SpectralData& theta, std::size_t site) {
  auto roots = site_roots_unsorted(theta, site);
  std::sort(roots.begin(), roots.end(), lex_less);
  return roots;
}

std::vector<std::size_t> boustrophedon_order(const Domain& domain) {
  std::vector<std::size_t> out;
  out.reserve(domain.sites());
  collect_snake(domain, 0, 0, false, out);
  return out;
}

double RootField::max_norm() const {
  double m = 0;
  std::size_t nsites = values.size() / (static_cast<std::size_t>(rank) * n);
  for (std::size_t s = 0; s < nsites; ++s)
    for (int i = 0; i < rank; ++i) {
      double acc = 0;
      for (int j = 0; j < n; ++j) acc += std::norm(at(s, i, j));
      m = std::max(m, std::sqrt(acc));
    }
  return m;
}

RootField continued_roots(const SpectralData& theta) {
  const Domain& dom = theta.domain();
  const int r = theta.rank;
  const int n = dom.complex_dim();
  RootField out;
  out.rank = r;
  out.n = n;
  out.values.assign(dom.sites() * r * n, 0.0);
  auto order = boustrophedon_order(dom);
  std::vector<Covector> prev;
  std::vector<int> perm(r), best_perm(r);
  for (std::size_t t = 0; t < order.size(); ++t) {
    const std::size_t s = order[t];
    auto roots = site_roots_unsorted(theta, s);
    if (t == 0) {
      std::sort(roots.begin(), roots.end(), lex_less);
    } else if (r <= 7) {
      std::iota(perm.begin(), perm.end(), 0);
      double best = std::numeric_limits<double>::infinity();
      do {
        double cost = 0;
        for (int i = 0; i < r; ++i) cost += covector_dist_sq(roots[perm[i]], prev[i]);
        if (cost < best) {
          best = cost;
          best_perm = perm;
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
      std::vector<Covector> matched(r);
      for (int i = 0; i < r; ++i) matched[i] = roots[best_perm[i]];
      roots.swap(matched);
    } else {
      std::vector<Covector> matched(r);
      std::vector<bool> used(r, false);
      for (int i = 0; i < r; ++i) {
        int arg = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < r; ++j)
          if (!used[j]) {
            double c = covector_dist_sq(roots[j], prev[i]);
            if (c < best) {
              best = c;
              arg = j;
            }
          }
        used[arg] = true;
        matched[i] = roots[arg];
      }
      roots.swap(matched);
    }
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < n; ++j) out.at(s, i, j) = roots[i][j];
    prev = roots;
  }
  return out;
}

std::size_t Discriminant::masked_sites() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

Discriminant discriminant(const SpectralData& theta, const RootField& roots, std::optional<double> epsilon) {
  const Domain& dom = theta.domain();
  const int r = theta.rank;
  const int n = dom.complex_dim();
  Discriminant out;
  out.section = SymFormField(dom, 2);
  out.gap.assign(dom.sites(), std::numeric_limits<double>::infinity());
  for (std::size_t s = 0; s < dom.sites(); ++s)
    for (int i = 0; i < r; ++i)
      for (int j = i + 1; j < r; ++j) {
        double dist = 0;
        if (n == 1) {
          cd d = roots.at(s, i, 0) - roots.at(s, j, 0);
          out.section(s, 0) += d * d;
          dist = std::norm(d);
        } else {
          cd d1 = roots.at(s, i, 0) - roots.at(s, j, 0);
          cd d2 = roots.at(s, i, 1) - roots.at(s, j, 1);
          out.section(s, 0) += d1 * d1;
          out.section(s, 1) += 2.0 * d1 * d2;
          out.section(s, 2) += d2 * d2;
          dist = std::norm(d1) + std::norm(d2);
        }
        out.gap[s] = std::min(out.gap[s], std::sqrt(dist));
      }
  double h = *std::max_element(dom.spacing().begin(), dom.spacing().end());
  if (!epsilon) {
    // One grid cell of the zero set: h * sup |grad Delta| (first differences between neighbours).
    double g = 0;
    for (std::size_t s = 0; s < dom.sites(); ++s) {
      double acc = 0;
      for (int a = 0; a < dom.real_dim(); ++a) {
        std::size_t up = dom.neighbor(s, a, 1);
        if (up == Domain::npos) continue;
        for (int i = 0; i < out.section.monomials(); ++i)
          acc += std::norm((out.section(up, i) - out.section(s, i)) / dom.spacing()[a]);
      }
      g = std::max(g, std::sqrt(acc));
    }
    epsilon = h * g;
  }
  out.epsilon = *epsilon;
  out.mask.assign(dom.sites(), 0);
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    double v = out.section.norm_at(s);
    out.mask[s] = (v < out.epsilon || v == 0.0) ? 1 : 0;
  }
  return out;
}

Discriminant discriminant(const SpectralData& theta, std::optional<double> epsilon) {
  return discriminant(theta, continued_roots(theta), epsilon);
}

SymFormField discriminant_from_coefficients(const SpectralData& theta) {
  const Domain& dom = theta.domain();
  const int n = dom.complex_dim();
  const int r = theta.rank;
  SymFormField out(dom, 2);
  if (r < 2) return out;
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    Poly p1(theta.p[0].monomials()), p2(theta.p[1].monomials());
    for (int i = 0; i < theta.p[0].monomials(); ++i) p1[i] = theta.p[0](s, i);
    for (int i = 0; i < theta.p[1].monomials(); ++i) p2[i] = theta.p[1](s, i);
    Poly sq = poly_mul(p1, p1, n);
    for (int i = 0; i < out.monomials(); ++i)
      out(s, i) = static_cast<double>(r - 1) * sq[i] - 2.0 * r * p2[i];
  }
  return out;
}

void attach_discriminant(SpectralData& theta, const Discriminant& disc) {
  theta.delta = disc.section;
  theta.mask = disc.mask;
  theta.gap = disc.gap;
  theta.epsilon = disc.epsilon;
}

std::vector<std::size_t> rle_encode(const std::vector<std::uint8_t>& mask) {
  std::vector<std::size_t> runs;
  std::uint8_t cur = 0;
  std::size_t len = 0;
  for (std::uint8_t v : mask) {
    std::uint8_t b = v ? 1 : 0;
    if (b == cur) {
      ++len;
    } else {
      runs.push_back(len);
      cur = b;
      len = 1;
    }
  }
  runs.push_back(len);
  return runs;
}

std::vector<std::uint8_t> rle_decode(const std::vector<std::size_t>& runs) {
  std::vector<std::uint8_t> out;
  std::uint8_t cur = 0;
  for (std::size_t len : runs) {
    out.insert(out.end(), len, cur);
    cur = cur ? 0 : 1;
  }
  return out;
}

void export_spectral_data(const std::string& dir, const SpectralData& theta) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest = {{"rank", theta.rank}, {"domain", io::domain_to_json(theta.domain())}};
  nlohmann::json files = nlohmann::json::array();
  auto dump = [&](const SymFormField& f, const std::string& name) {
    nlohmann::json h = {{"kind", "symform"},
                        {"domain", io::domain_to_json(f.domain())},
                        {"degree", f.degree()},
                        {"components", f.monomials()},
                        {"rank", 1}};
    io::write_fld((fs::path(dir) / name).string(), h, f.data());
    files.push_back({{"file", name}, {"degree", f.degree()}});
  };
  for (int k = 1; k <= theta.rank; ++k) dump(theta.p[k - 1], "p" + std::to_string(k) + ".fld");
  if (theta.delta) {
    dump(*theta.delta, "delta.fld");
    manifest["epsilon_disc"] = theta.epsilon;
    manifest["mask_rle"] = rle_encode(theta.mask);
    manifest["mask_encoding"] = "alternating run lengths, first run counts unmasked sites";
  }
  manifest["coefficients"] = files;
  std::ofstream os(fs::path(dir) / "spectral.json");
  os << manifest.dump(2) << '\n';
}

}  // namespace hitchin::higgs
