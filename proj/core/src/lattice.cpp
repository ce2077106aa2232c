#include "hitchin/lattice.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>

#include <fftw3.h>

namespace hitchin::lattice {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

int parity_sign(int count) { return (count & 1) ? -1 : 1; }

int lower_count(unsigned mask, int k) { return std::popcount(mask & ((1u << k) - 1u)); }

int merge_sign(unsigned x, unsigned y) {
  int inversions = 0;
  for (int b = 0; b < 32; ++b)
    if (y & (1u << b)) inversions += std::popcount(x >> (b + 1));
  return parity_sign(inversions);
}

constexpr cd kI{0.0, 1.0};

}  // namespace

std::string to_string(DomainKind kind) {
  return kind == DomainKind::PeriodicTorus ? "periodic-torus" : "dirichlet-patch";
}

DomainKind domain_kind_from_string(const std::string& s) {
  if (s == "periodic-torus") return DomainKind::PeriodicTorus;
  if (s == "dirichlet-patch") return DomainKind::DirichletPatch;
  throw Error("unknown domain kind '" + s + "'");
}

struct Domain::Impl {
  DomainKind kind = DomainKind::PeriodicTorus;
  int n = 1;
  std::vector<int> shape;
  std::vector<double> spacing, extent, origin;
  std::vector<std::size_t> strides;
  std::size_t nsites = 0;
  double volume = 0;

  // Torus: per-axis wavenumbers laid out per site.
  std::vector<std::vector<double>> k1, k2;
  fftw_complex* buf = nullptr;
  fftw_plan fwd = nullptr, bwd = nullptr;

  // Patch: DST-I of the interior grid.
  double* rbuf = nullptr;
  fftw_plan dst = nullptr;
  std::size_t ninterior = 0;

  std::mutex exec_mutex;

  ~Impl() {
    std::lock_guard<std::mutex> lk(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
    if (dst) fftw_destroy_plan(dst);
    if (buf) fftw_free(buf);
    if (rbuf) fftw_free(rbuf);
  }

  int axis_index(std::size_t site, int axis) const {
    return static_cast<int>((site / strides[axis]) % static_cast<std::size_t>(shape[axis]));
  }

  void setup_common(int n_, const std::vector<int>& shape_) {
    n = n_;
    if (n != 1 && n != 2) throw Error("complex dimension must be 1 or 2");
    if (static_cast<int>(shape_.size()) != 2 * n) throw ShapeMismatchError("domain shape must list 2n site counts");
    for (int s : shape_)
      if (s < 8) throw Error("every axis needs at least 8 sites");
    shape = shape_;
    int d = 2 * n;
    strides.assign(d, 1);
    for (int a = d - 2; a >= 0; --a) strides[a] = strides[a + 1] * static_cast<std::size_t>(shape[a + 1]);
    nsites = strides[0] * static_cast<std::size_t>(shape[0]);
  }

  void setup_torus() {
    int d = 2 * n;
    k1.assign(d, std::vector<double>(nsites));
    k2.assign(d, std::vector<double>(nsites));
    for (int a = 0; a < d; ++a) {
      int N = shape[a];
      double L = extent[a];
      for (std::size_t s = 0; s < nsites; ++s) {
        int m = axis_index(s, a);
        int mm = m <= N / 2 ? m : m - N;
        double kk = 2.0 * std::numbers::pi * mm / L;
        bool nyquist = (N % 2 == 0) && (m == N / 2);
        k1[a][s] = nyquist ? 0.0 : kk;
        k2[a][s] = kk * kk;
      }
    }
    std::lock_guard<std::mutex> lk(planner_mutex());
    buf = fftw_alloc_complex(nsites);
    fwd = fftw_plan_dft(d, shape.data(), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd = fftw_plan_dft(d, shape.data(), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }

  void setup_patch() {
    int d = 2 * n;
    std::vector<int> inner(d);
    ninterior = 1;
    for (int a = 0; a < d; ++a) {
      inner[a] = shape[a] - 2;
      ninterior *= static_cast<std::size_t>(inner[a]);
    }
    std::lock_guard<std::mutex> lk(planner_mutex());
    rbuf = fftw_alloc_real(ninterior);
    std::vector<fftw_r2r_kind> kinds(d, FFTW_RODFT00);
    dst = fftw_plan_r2r(d, inner.data(), rbuf, rbuf, kinds.data(), FFTW_ESTIMATE);
  }

  void forward(std::span<const cd> in) {
    for (std::size_t s = 0; s < nsites; ++s) {
      buf[s][0] = in[s].real();
      buf[s][1] = in[s].imag();
    }
    fftw_execute(fwd);
  }

  void backward_into(std::span<cd> out, const std::vector<cd>& spectrum) {
    for (std::size_t s = 0; s < nsites; ++s) {
      buf[s][0] = spectrum[s].real();
      buf[s][1] = spectrum[s].imag();
    }
    fftw_execute(bwd);
    double inv = 1.0 / static_cast<double>(nsites);
    for (std::size_t s = 0; s < nsites; ++s) out[s] = cd(buf[s][0], buf[s][1]) * inv;
  }

  cd multiplier(const DerivSpec& spec, std::size_t s) const {
    switch (spec.op) {
      case Op::Dz:
        return 0.5 * cd(k1[2 * spec.j + 1][s], k1[2 * spec.j][s]);
      case Op::Dzbar:
        return 0.5 * cd(-k1[2 * spec.j + 1][s], k1[2 * spec.j][s]);
      case Op::DzDzbar:
        if (spec.j == spec.k) return -0.25 * (k2[2 * spec.j][s] + k2[2 * spec.j + 1][s]);
        return 0.25 * cd(k1[2 * spec.j + 1][s], k1[2 * spec.j][s]) * cd(-k1[2 * spec.k + 1][s], k1[2 * spec.k][s]);
    }
    return 0.0;
  }

  // Patch stencils along one real axis.
  void first_diff(std::span<const cd> in, std::span<cd> out, int a) const {
    const std::size_t st = strides[a];
    const int N = shape[a];
    const double inv2h = 1.0 / (2.0 * spacing[a]);
    for (std::size_t s = 0; s < nsites; ++s) {
      int i = axis_index(s, a);
      if (i == 0)
        out[s] = (-3.0 * in[s] + 4.0 * in[s + st] - in[s + 2 * st]) * inv2h;
      else if (i == N - 1)
        out[s] = (3.0 * in[s] - 4.0 * in[s - st] + in[s - 2 * st]) * inv2h;
      else
        out[s] = (in[s + st] - in[s - st]) * inv2h;
    }
  }

  void second_diff(std::span<const cd> in, std::span<cd> out, int a) const {
    const std::size_t st = strides[a];
    const int N = shape[a];
    const double invh2 = 1.0 / (spacing[a] * spacing[a]);
    for (std::size_t s = 0; s < nsites; ++s) {
      int i = axis_index(s, a);
      if (i == 0)
        out[s] = (2.0 * in[s] - 5.0 * in[s + st] + 4.0 * in[s + 2 * st] - in[s + 3 * st]) * invh2;
      else if (i == N - 1)
        out[s] = (2.0 * in[s] - 5.0 * in[s - st] + 4.0 * in[s - 2 * st] - in[s - 3 * st]) * invh2;
      else
        out[s] = (in[s + st] - 2.0 * in[s] + in[s - st]) * invh2;
    }
  }

  void patch_derivative(std::span<const cd> in, const DerivSpec& spec, std::vector<cd>& out) const {
    out.assign(nsites, 0.0);
    std::vector<cd> tx(nsites), ty(nsites);
    switch (spec.op) {
      case Op::Dz:
      case Op::Dzbar: {
        first_diff(in, tx, 2 * spec.j);
        first_diff(in, ty, 2 * spec.j + 1);
        cd sgn = spec.op == Op::Dz ? -kI : kI;
        for (std::size_t s = 0; s < nsites; ++s) out[s] = 0.5 * (tx[s] + sgn * ty[s]);
        return;
      }
      case Op::DzDzbar: {
        if (spec.j == spec.k) {
          second_diff(in, tx, 2 * spec.j);
          second_diff(in, ty, 2 * spec.j + 1);
          for (std::size_t s = 0; s < nsites; ++s) out[s] = 0.25 * (tx[s] + ty[s]);
          return;
        }
        std::vector<cd> inner;
        patch_derivative(in, DerivSpec{Op::Dzbar, spec.k}, inner);
        patch_derivative(inner, DerivSpec{Op::Dz, spec.j}, out);
        return;
      }
    }
  }
};

Domain Domain::torus(int n, const std::vector<int>& shape, const std::vector<double>& span) {
  Domain d;
  d.impl_ = std::make_shared<Impl>();
  Impl& m = *d.impl_;
  m.kind = DomainKind::PeriodicTorus;
  m.setup_common(n, shape);
  if (span.size() != shape.size()) throw ShapeMismatchError("torus span must list one length per axis");
  m.extent = span;
  m.spacing.resize(shape.size());
  m.origin.assign(shape.size(), 0.0);
  m.volume = 1.0;
  for (std::size_t a = 0; a < shape.size(); ++a) {
    if (!(span[a] > 0)) throw Error("torus span must be positive");
    m.spacing[a] = span[a] / shape[a];
    m.volume *= span[a];
  }
  m.setup_torus();
  return d;
}

Domain Domain::patch(int n, const std::vector<int>& shape, const std::vector<double>& half_width) {
  Domain d;
  d.impl_ = std::make_shared<Impl>();
  Impl& m = *d.impl_;
  m.kind = DomainKind::DirichletPatch;
  m.setup_common(n, shape);
  if (half_width.size() != shape.size()) throw ShapeMismatchError("patch half-width must list one value per axis");
  m.extent.resize(shape.size());
  m.spacing.resize(shape.size());
  m.origin.resize(shape.size());
  m.volume = 1.0;
  for (std::size_t a = 0; a < shape.size(); ++a) {
    if (!(half_width[a] > 0)) throw Error("patch half-width must be positive");
    m.extent[a] = 2.0 * half_width[a];
    m.spacing[a] = m.extent[a] / (shape[a] - 1);
    m.origin[a] = -half_width[a];
    m.volume *= m.extent[a];
  }
  m.setup_patch();
  return d;
}

DomainKind Domain::kind() const { return impl_->kind; }
int Domain::complex_dim() const { return impl_->n; }
const std::vector<int>& Domain::shape() const { return impl_->shape; }
const std::vector<double>& Domain::spacing() const { return impl_->spacing; }
const std::vector<double>& Domain::extent() const { return impl_->extent; }
std::size_t Domain::sites() const { return impl_ ? impl_->nsites : 0; }
double Domain::total_volume() const { return impl_->volume; }
std::size_t Domain::stride(int axis) const { return impl_->strides[axis]; }

bool Domain::same_as(const Domain& other) const {
  if (impl_ == other.impl_) return true;
  if (!impl_ || !other.impl_) return false;
  return impl_->kind == other.impl_->kind && impl_->shape == other.impl_->shape &&
         impl_->spacing == other.impl_->spacing && impl_->origin == other.impl_->origin;
}

void Domain::unravel(std::size_t site, int* idx) const {
  for (int a = 0; a < real_dim(); ++a) idx[a] = impl_->axis_index(site, a);
}

std::size_t Domain::ravel(const int* idx) const {
  std::size_t s = 0;
  for (int a = 0; a < real_dim(); ++a) s += static_cast<std::size_t>(idx[a]) * impl_->strides[a];
  return s;
}

double Domain::coord(std::size_t site, int axis) const {
  return impl_->origin[axis] + impl_->axis_index(site, axis) * impl_->spacing[axis];
}

cd Domain::z(std::size_t site, int j) const { return {coord(site, 2 * j), coord(site, 2 * j + 1)}; }

double Domain::weight(std::size_t site) const {
  double w = 1.0;
  for (int a = 0; a < real_dim(); ++a) {
    w *= impl_->spacing[a];
    if (!periodic()) {
      int i = impl_->axis_index(site, a);
      if (i == 0 || i == impl_->shape[a] - 1) w *= 0.5;
    }
  }
  return w;
}

bool Domain::on_boundary(std::size_t site) const {
  if (periodic()) return false;
  for (int a = 0; a < real_dim(); ++a) {
    int i = impl_->axis_index(site, a);
    if (i == 0 || i == impl_->shape[a] - 1) return true;
  }
  return false;
}

std::size_t Domain::neighbor(std::size_t site, int axis, int dir) const {
  int i = impl_->axis_index(site, axis);
  int N = impl_->shape[axis];
  int j = i + dir;
  if (j < 0 || j >= N) {
    if (!periodic()) return npos;
    j = (j + N) % N;
  }
  return site + (static_cast<std::ptrdiff_t>(j) - i) * static_cast<std::ptrdiff_t>(impl_->strides[axis]);
}

void Domain::derivatives(std::span<const cd> in, std::span<const DerivSpec> specs,
                         std::vector<std::vector<cd>>& out) const {
  Impl& m = *impl_;
  if (in.size() != m.nsites) throw ShapeMismatchError("grid function has the wrong number of sites");
  out.resize(specs.size());
  if (m.kind == DomainKind::DirichletPatch) {
    for (std::size_t i = 0; i < specs.size(); ++i) m.patch_derivative(in, specs[i], out[i]);
    return;
  }
  std::lock_guard<std::mutex> lk(m.exec_mutex);
  m.forward(in);
  std::vector<cd> spectrum(m.nsites), scaled(m.nsites);
  for (std::size_t s = 0; s < m.nsites; ++s) spectrum[s] = cd(m.buf[s][0], m.buf[s][1]);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (std::size_t s = 0; s < m.nsites; ++s) scaled[s] = spectrum[s] * m.multiplier(specs[i], s);
    out[i].resize(m.nsites);
    m.backward_into(out[i], scaled);
  }
}

std::vector<cd> Domain::derivative(std::span<const cd> in, DerivSpec spec) const {
  std::vector<std::vector<cd>> out;
  derivatives(in, std::span<const DerivSpec>(&spec, 1), out);
  return std::move(out[0]);
}

void Domain::shifted_laplacian_solve(std::span<const cd> f, std::span<cd> u, double alpha, double c) const {
  Impl& m = *impl_;
  std::lock_guard<std::mutex> lk(m.exec_mutex);
  const int d = real_dim();
  if (m.kind == DomainKind::PeriodicTorus) {
    m.forward(f);
    std::vector<cd> spectrum(m.nsites);
    for (std::size_t s = 0; s < m.nsites; ++s) {
      double lap = 0;
      for (int a = 0; a < d; ++a) lap += m.k2[a][s];
      double den = c + alpha * lap;
      spectrum[s] = den != 0.0 ? cd(m.buf[s][0], m.buf[s][1]) / den : cd(0.0);
    }
    m.backward_into(u, spectrum);
    return;
  }
  // Interior multi-index enumeration in row-major order of the (N-2)^d grid.
  std::vector<int> inner(d);
  for (int a = 0; a < d; ++a) inner[a] = m.shape[a] - 2;
  double norm = 1.0;
  for (int a = 0; a < d; ++a) norm *= 2.0 * (inner[a] + 1);
  std::vector<double> eig(m.ninterior);
  std::vector<std::size_t> site_of(m.ninterior);
  {
    std::vector<int> idx(d, 0);
    for (std::size_t t = 0; t < m.ninterior; ++t) {
      double lam = 0;
      std::size_t s = 0;
      for (int a = 0; a < d; ++a) {
        double sn = std::sin(std::numbers::pi * (idx[a] + 1) / (2.0 * (inner[a] + 1)));
        lam += 4.0 * sn * sn / (m.spacing[a] * m.spacing[a]);
        s += static_cast<std::size_t>(idx[a] + 1) * m.strides[a];
      }
      eig[t] = c + alpha * lam;
      site_of[t] = s;
      for (int a = d - 1; a >= 0; --a) {
        if (++idx[a] < inner[a]) break;
        idx[a] = 0;
      }
    }
  }
  std::fill(u.begin(), u.end(), cd(0.0));
  std::vector<double> part(m.ninterior);
  for (int comp = 0; comp < 2; ++comp) {
    for (std::size_t t = 0; t < m.ninterior; ++t) {
      cd v = f[site_of[t]];
      m.rbuf[t] = comp == 0 ? v.real() : v.imag();
    }
    fftw_execute(m.dst);
    for (std::size_t t = 0; t < m.ninterior; ++t) m.rbuf[t] /= eig[t] * norm;
    fftw_execute(m.dst);
    for (std::size_t t = 0; t < m.ninterior; ++t) {
      if (comp == 0)
        u[site_of[t]] = cd(m.rbuf[t], 0.0);
      else
        u[site_of[t]] += cd(0.0, m.rbuf[t]);
    }
  }
}

std::vector<cd> Domain::fourier(std::span<const cd> in) const {
  Impl& m = *impl_;
  if (m.kind != DomainKind::PeriodicTorus) throw Error("fourier transform requires a periodic domain");
  std::lock_guard<std::mutex> lk(m.exec_mutex);
  m.forward(in);
  std::vector<cd> out(m.nsites);
  for (std::size_t s = 0; s < m.nsites; ++s) out[s] = cd(m.buf[s][0], m.buf[s][1]);
  return out;
}

// ---------------------------------------------------------------------------------------------

FormBasis::FormBasis(int n, int p, int q) : n_(n), p_(p), q_(q) {
  if (p < 0 || q < 0 || p > n || q > n) throw InvalidDegreeError("form degree out of range");
  auto subsets = [n](int k) {
    std::vector<unsigned> out;
    for (unsigned m = 0; m < (1u << n); ++m)
      if (std::popcount(m) == k) out.push_back(m);
    auto as_list = [](unsigned m) {
      std::vector<int> v;
      for (int b = 0; b < 32; ++b)
        if (m & (1u << b)) v.push_back(b);
      return v;
    };
    std::sort(out.begin(), out.end(), [&](unsigned a, unsigned b) { return as_list(a) < as_list(b); });
    return out;
  };
  auto hs = subsets(p);
  auto as = subsets(q);
  lookup_.assign(1u << (2 * n), -1);
  for (unsigned h : hs)
    for (unsigned a : as) {
      lookup_[h | (a << n)] = static_cast<int>(holo_.size());
      holo_.push_back(h);
      anti_.push_back(a);
    }
}

int FormBasis::index(unsigned holo, unsigned anti) const {
  if (std::popcount(holo) != p_ || std::popcount(anti) != q_) return -1;
  return lookup_[holo | (anti << n_)];
}

std::string FormBasis::label(int c) const {
  std::ostringstream os;
  bool first = true;
  for (int b = 0; b < n_; ++b)
    if (holo_[c] & (1u << b)) {
      os << (first ? "" : "^") << "dz" << (b + 1);
      first = false;
    }
  for (int b = 0; b < n_; ++b)
    if (anti_[c] & (1u << b)) {
      os << (first ? "" : "^") << "dzbar" << (b + 1);
      first = false;
    }
  return first ? "1" : os.str();
}

BasisTerm wedge_dz(const FormBasis& from, const FormBasis& to, int c, int k, bool bar) {
  unsigned I = from.holo(c), J = from.anti(c);
  if (!bar) {
    if (I & (1u << k)) return {};
    return {to.index(I | (1u << k), J), parity_sign(lower_count(I, k))};
  }
  if (J & (1u << k)) return {};
  return {to.index(I, J | (1u << k)), parity_sign(from.p() + lower_count(J, k))};
}

BasisTerm interior(const FormBasis& from, const FormBasis& to, int c, int k, bool bar) {
  unsigned I = from.holo(c), J = from.anti(c);
  if (!bar) {
    if (!(I & (1u << k))) return {};
    return {to.index(I & ~(1u << k), J), parity_sign(lower_count(I, k))};
  }
  if (!(J & (1u << k))) return {};
  return {to.index(I, J & ~(1u << k)), parity_sign(from.p() + lower_count(J, k))};
}

BasisTerm wedge_basis(const FormBasis& a, int ca, const FormBasis& b, int cb, const FormBasis& to) {
  unsigned I1 = a.holo(ca), J1 = a.anti(ca), I2 = b.holo(cb), J2 = b.anti(cb);
  if ((I1 & I2) || (J1 & J2)) return {};
  int sign = parity_sign(std::popcount(J1) * std::popcount(I2)) * merge_sign(I1, I2) * merge_sign(J1, J2);
  return {to.index(I1 | I2, J1 | J2), sign};
}

// ---------------------------------------------------------------------------------------------

FormField::FormField(const Domain& domain, int p, int q, int fibre)
    : domain_(domain), basis_(domain.complex_dim(), p, q), fibre_(fibre) {
  if (fibre < 1) throw ShapeMismatchError("fibre dimension must be positive");
  data_.assign(domain.sites() * site_stride(), cd(0.0));
}

std::vector<cd> FormField::channel(int comp, int f) const {
  std::vector<cd> out(sites());
  const std::size_t st = site_stride();
  const std::size_t off = static_cast<std::size_t>(comp) * fibre_ + f;
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = data_[s * st + off];
  return out;
}

void FormField::set_channel(int comp, int f, std::span<const cd> values) {
  const std::size_t st = site_stride();
  const std::size_t off = static_cast<std::size_t>(comp) * fibre_ + f;
  for (std::size_t s = 0; s < values.size(); ++s) data_[s * st + off] = values[s];
}

void FormField::add_channel(int comp, int f, std::span<const cd> values, cd scale) {
  const std::size_t st = site_stride();
  const std::size_t off = static_cast<std::size_t>(comp) * fibre_ + f;
  for (std::size_t s = 0; s < values.size(); ++s) data_[s * st + off] += scale * values[s];
}

bool FormField::compatible(const FormField& other) const {
  return p() == other.p() && q() == other.q() && fibre_ == other.fibre_ && domain_.same_as(other.domain_);
}

FormField& FormField::operator+=(const FormField& other) {
  if (!compatible(other)) throw ShapeMismatchError("adding fields of different shape");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

FormField& FormField::operator-=(const FormField& other) {
  if (!compatible(other)) throw ShapeMismatchError("subtracting fields of different shape");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

FormField& FormField::operator*=(cd s) {
  for (auto& v : data_) v *= s;
  return *this;
}

double FormField::max_abs() const {
  double m = 0;
  for (const auto& v : data_) m = std::max(m, std::abs(v));
  return m;
}

FormField operator+(FormField a, const FormField& b) { return a += b; }
FormField operator-(FormField a, const FormField& b) { return a -= b; }
FormField operator*(cd s, FormField a) { return a *= s; }

ScalarField scalar_field(const Domain& domain) { return FormField(domain, 0, 0, 1); }

FormField kaehler_form(const Domain& domain) {
  FormField w(domain, 1, 1, 1);
  for (int k = 0; k < domain.complex_dim(); ++k) {
    int c = w.basis().index(1u << k, 1u << k);
    for (std::size_t s = 0; s < domain.sites(); ++s) w(s, c) = 0.5 * kI;
  }
  return w;
}

namespace {

// Applies sum_k op_k(D_k f) where D_k is a derivative and op_k a one-index basis operator.
template <class BasisOp>
FormField derivative_sum(const FormField& f, int dp, int dq, Domain::Op op, BasisOp basis_op, cd scale) {
  const Domain& dom = f.domain();
  const int n = dom.complex_dim();
  FormField out(dom, f.p() + dp, f.q() + dq, f.fibre());
  std::vector<Domain::DerivSpec> specs;
  for (int k = 0; k < n; ++k) specs.push_back({op, k});
  std::vector<std::vector<cd>> d;
  for (int c = 0; c < f.components(); ++c) {
    std::vector<BasisTerm> terms(n);
    bool any = false;
    for (int k = 0; k < n; ++k) {
      terms[k] = basis_op(f.basis(), out.basis(), c, k);
      any = any || terms[k].sign != 0;
    }
    if (!any) continue;
    for (int fb = 0; fb < f.fibre(); ++fb) {
      dom.derivatives(f.channel(c, fb), specs, d);
      for (int k = 0; k < n; ++k)
        if (terms[k].sign != 0) out.add_channel(terms[k].comp, fb, d[k], scale * static_cast<double>(terms[k].sign));
    }
  }
  return out;
}

}  // namespace

FormField dbar(const FormField& f) {
  if (f.q() + 1 > f.domain().complex_dim()) throw InvalidDegreeError("dbar would exceed the anti-holomorphic degree n");
  return derivative_sum(
      f, 0, 1, Domain::Op::Dzbar,
      [](const FormBasis& a, const FormBasis& b, int c, int k) { return wedge_dz(a, b, c, k, true); }, 1.0);
}

FormField del(const FormField& f) {
  if (f.p() + 1 > f.domain().complex_dim()) throw InvalidDegreeError("del would exceed the holomorphic degree n");
  return derivative_sum(
      f, 1, 0, Domain::Op::Dz,
      [](const FormBasis& a, const FormBasis& b, int c, int k) { return wedge_dz(a, b, c, k, false); }, 1.0);
}

FormField adjoint_dbar(const FormField& f) {
  if (f.q() < 1) throw InvalidDegreeError("dbar* needs anti-holomorphic degree >= 1");
  return derivative_sum(
      f, 0, -1, Domain::Op::Dz,
      [](const FormBasis& a, const FormBasis& b, int c, int k) { return interior(a, b, c, k, true); }, -2.0);
}

FormField adjoint_del(const FormField& f) {
  if (f.p() < 1) throw InvalidDegreeError("del* needs holomorphic degree >= 1");
  return derivative_sum(
      f, -1, 0, Domain::Op::Dzbar,
      [](const FormBasis& a, const FormBasis& b, int c, int k) { return interior(a, b, c, k, false); }, -2.0);
}

FormField lambda(const FormField& f) {
  if (f.p() < 1 || f.q() < 1) throw InvalidDegreeError("Lambda needs bidegree (p,q) with p,q >= 1");
  const Domain& dom = f.domain();
  const int n = dom.complex_dim();
  FormBasis mid(n, f.p() - 1, f.q());
  FormField out(dom, f.p() - 1, f.q() - 1, f.fibre());
  const std::size_t ns = dom.sites();
  for (int c = 0; c < f.components(); ++c)
    for (int k = 0; k < n; ++k) {
      BasisTerm t1 = interior(f.basis(), mid, c, k, false);
      if (t1.sign == 0) continue;
      BasisTerm t2 = interior(mid, out.basis(), t1.comp, k, true);
      if (t2.sign == 0) continue;
      cd coef = -2.0 * kI * static_cast<double>(t1.sign * t2.sign);
      for (std::size_t s = 0; s < ns; ++s)
        for (int fb = 0; fb < f.fibre(); ++fb) out(s, t2.comp, fb) += coef * f(s, c, fb);
    }
  return out;
}

FormField contract_lambda(const FormField& alpha) {
  if (alpha.p() != 1 || alpha.q() != 1) throw InvalidDegreeError("contract_lambda expects a (1,1)-form");
  return lambda(alpha);
}

FormField lefschetz(const FormField& f) {
  const Domain& dom = f.domain();
  const int n = dom.complex_dim();
  if (f.p() + 1 > n || f.q() + 1 > n) throw InvalidDegreeError("omega ^ f exceeds the top degree");
  FormBasis mid(n, f.p(), f.q() + 1);
  FormField out(dom, f.p() + 1, f.q() + 1, f.fibre());
  const std::size_t ns = dom.sites();
  for (int c = 0; c < f.components(); ++c)
    for (int k = 0; k < n; ++k) {
      BasisTerm t1 = wedge_dz(f.basis(), mid, c, k, true);
      if (t1.sign == 0) continue;
      BasisTerm t2 = wedge_dz(mid, out.basis(), t1.comp, k, false);
      if (t2.sign == 0) continue;
      cd coef = 0.5 * kI * static_cast<double>(t1.sign * t2.sign);
      for (std::size_t s = 0; s < ns; ++s)
        for (int fb = 0; fb < f.fibre(); ++fb) out(s, t2.comp, fb) += coef * f(s, c, fb);
    }
  return out;
}

FormField laplacian(const FormField& f) {
  const Domain& dom = f.domain();
  const int n = dom.complex_dim();
  FormField out(dom, f.p(), f.q(), f.fibre());
  std::vector<Domain::DerivSpec> specs;
  for (int j = 0; j < n; ++j) specs.push_back({Domain::Op::DzDzbar, j, j});
  std::vector<std::vector<cd>> d;
  for (int c = 0; c < f.components(); ++c)
    for (int fb = 0; fb < f.fibre(); ++fb) {
      dom.derivatives(f.channel(c, fb), specs, d);
      for (int j = 0; j < n; ++j) out.add_channel(c, fb, d[j], -4.0);
    }
  return out;
}

FormField wedge(const FormField& a, const FormField& b) {
  if (a.fibre() != 1 || b.fibre() != 1) throw ShapeMismatchError("scalar wedge expects fibre dimension 1");
  if (!a.domain().same_as(b.domain())) throw ShapeMismatchError("wedge of fields on different domains");
  const int n = a.domain().complex_dim();
  if (a.p() + b.p() > n || a.q() + b.q() > n) throw InvalidDegreeError("wedge exceeds the top degree");
  FormField out(a.domain(), a.p() + b.p(), a.q() + b.q(), 1);
  const std::size_t ns = a.sites();
  for (int ca = 0; ca < a.components(); ++ca)
    for (int cb = 0; cb < b.components(); ++cb) {
      BasisTerm t = wedge_basis(a.basis(), ca, b.basis(), cb, out.basis());
      if (t.sign == 0) continue;
      for (std::size_t s = 0; s < ns; ++s) out(s, t.comp) += static_cast<double>(t.sign) * a(s, ca) * b(s, cb);
    }
  return out;
}

cd l2_inner(const FormField& a, const FormField& b) {
  if (!a.compatible(b)) throw ShapeMismatchError("l2_inner of fields with different shape");
  const Domain& dom = a.domain();
  const double nrm = a.basis().norm_sq();
  const std::size_t st = a.site_stride();
  cd total = 0.0;
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    cd local = 0.0;
    const cd* x = a.data().data() + s * st;
    const cd* y = b.data().data() + s * st;
    for (std::size_t i = 0; i < st; ++i) local += x[i] * std::conj(y[i]);
    total += dom.weight(s) * local;
  }
  return nrm * total;
}

double l2_norm(const FormField& f) { return std::sqrt(std::max(0.0, l2_inner(f, f).real())); }

double integrate(const Domain& domain, std::span<const double> density) {
  double total = 0;
  for (std::size_t s = 0; s < domain.sites(); ++s) total += domain.weight(s) * density[s];
  return total;
}

cd integrate(const Domain& domain, std::span<const cd> density) {
  cd total = 0;
  for (std::size_t s = 0; s < domain.sites(); ++s) total += domain.weight(s) * density[s];
  return total;
}

namespace {

FormField zero_like(const Domain& dom, int p, int q, int fibre) { return FormField(dom, p, q, fibre); }

}  // namespace

double kahler_identity_residual(const FormField& f) {
  const bool ok = (f.p() == 1 && f.q() == 0) || (f.p() == 1 && f.q() == 1);
  if (!ok) throw InvalidDegreeError("Kaehler identity check expects a (1,0) or (1,1) form");
  const Domain& dom = f.domain();
  const int n = dom.complex_dim();
  FormField lhs = adjoint_del(f);
  FormField comm = zero_like(dom, f.p() - 1, f.q(), f.fibre());
  if (f.q() + 1 <= n) comm += lambda(dbar(f));
  if (f.q() >= 1) comm -= dbar(lambda(f));
  lhs -= cd(0.0, 1.0) * comm;
  return l2_norm(lhs);
}

double kahler_identity_residual_conjugate(const FormField& f) {
  const bool ok = (f.p() == 0 && f.q() == 1) || (f.p() == 1 && f.q() == 1);
  if (!ok) throw InvalidDegreeError("conjugate Kaehler identity check expects a (0,1) or (1,1) form");
  const Domain& dom = f.domain();
  const int n = dom.complex_dim();
  FormField lhs = adjoint_dbar(f);
  FormField comm = zero_like(dom, f.p(), f.q() - 1, f.fibre());
  if (f.p() + 1 <= n) comm += lambda(del(f));
  if (f.p() >= 1) comm -= del(lambda(f));
  lhs += cd(0.0, 1.0) * comm;
  return l2_norm(lhs);
}

cd top_form_volume_factor(int n) {
  cd f = (n * (n - 1) / 2) % 2 ? -1.0 : 1.0;
  for (int k = 0; k < n; ++k) f *= cd(0.0, -2.0);
  return f;
}

cd integrate_top_form(const FormField& top) {
  const int n = top.domain().complex_dim();
  if (top.p() != n || top.q() != n || top.fibre() != 1) throw InvalidDegreeError("expected a scalar (n,n)-form");
  return top_form_volume_factor(n) * integrate(top.domain(), top.channel(0, 0));
}

}  // namespace hitchin::lattice
