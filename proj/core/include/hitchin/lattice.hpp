#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hitchin/common.hpp"

namespace hitchin::lattice {

enum class DomainKind { PeriodicTorus, DirichletPatch };

std::string to_string(DomainKind kind);
DomainKind domain_kind_from_string(const std::string& s);

// A flat Kaehler grid on C^n (n = 1, 2). Real axis 2j is Re z_j and axis 2j+1 is Im z_j.
// Torus sites sit at x = k*h with h = span/N; patch sites at x = -a + k*h with h = 2a/(N-1),
// so the patch includes its boundary nodes.
class Domain {
 public:
  enum class Op { Dz, Dzbar, DzDzbar };
  struct DerivSpec {
    Op op;
    int j;
    int k = 0;  // only used by DzDzbar: d/dz_j d/dzbar_k
  };

  Domain() = default;
  static Domain torus(int n, const std::vector<int>& shape, const std::vector<double>& span);
  static Domain patch(int n, const std::vector<int>& shape, const std::vector<double>& half_width);

  DomainKind kind() const;
  bool periodic() const { return kind() == DomainKind::PeriodicTorus; }
  int complex_dim() const;
  int real_dim() const { return 2 * complex_dim(); }
  const std::vector<int>& shape() const;
  const std::vector<double>& spacing() const;
  // Per-axis span: L for the torus, 2a for the patch.
  const std::vector<double>& extent() const;
  std::size_t sites() const;
  double total_volume() const;
  bool same_as(const Domain& other) const;

  std::size_t stride(int axis) const;
  void unravel(std::size_t site, int* idx) const;
  std::size_t ravel(const int* idx) const;
  double coord(std::size_t site, int axis) const;
  cd z(std::size_t site, int j) const;
  // Quadrature weight: h^d on the torus, tensor trapezoid on the patch.
  double weight(std::size_t site) const;
  bool on_boundary(std::size_t site) const;
  // Neighbour one step along `axis` (dir = +1/-1). Wraps on the torus; returns npos off the patch.
  std::size_t neighbor(std::size_t site, int axis, int dir) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  // Derivatives of a scalar grid function. On the torus every op is a Fourier multiplier
  // (Nyquist zeroed for first derivatives); on the patch first derivatives are centred with
  // one-sided second-order closures and d/dz_j d/dzbar_j uses the compact 3-point Laplacian.
  void derivatives(std::span<const cd> in, std::span<const DerivSpec> specs,
                   std::vector<std::vector<cd>>& out) const;
  std::vector<cd> derivative(std::span<const cd> in, DerivSpec spec) const;

  // Solves (c + alpha * Delta) u = f with Delta = -nabla^2 (spectral on the torus; compact
  // stencil with zero Dirichlet data on the patch, boundary entries of u are set to zero).
  void shifted_laplacian_solve(std::span<const cd> f, std::span<cd> u, double alpha, double c) const;

  // Unnormalised forward DFT of a torus grid function (used by the Parseval check).
  std::vector<cd> fourier(std::span<const cd> in) const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Index set for (p,q)-forms: pairs (I, J) of increasing index sets stored as bit masks,
// ordered by I then J. Basis element dz_I ^ dzbar_J has squared norm 2^{p+q}.
class FormBasis {
 public:
  FormBasis() = default;
  FormBasis(int n, int p, int q);

  int n() const { return n_; }
  int p() const { return p_; }
  int q() const { return q_; }
  int size() const { return static_cast<int>(holo_.size()); }
  unsigned holo(int c) const { return holo_[c]; }
  unsigned anti(int c) const { return anti_[c]; }
  int index(unsigned holo, unsigned anti) const;
  double norm_sq() const { return static_cast<double>(1u << (p_ + q_)); }
  std::string label(int c) const;

 private:
  int n_ = 0, p_ = 0, q_ = 0;
  std::vector<unsigned> holo_, anti_;
  std::vector<int> lookup_;
};

// Result of acting with a one-index operator on basis element c: target component and sign
// (sign 0 when the result vanishes).
struct BasisTerm {
  int comp = -1;
  int sign = 0;
};

// dz_k ^ (.) and dzbar_k ^ (.)
BasisTerm wedge_dz(const FormBasis& from, const FormBasis& to, int c, int k, bool bar);
// Contraction with the coordinate vector d/dz_k (resp. d/dzbar_k).
BasisTerm interior(const FormBasis& from, const FormBasis& to, int c, int k, bool bar);
// dz_I1 dzbar_J1 ^ dz_I2 dzbar_J2 in the basis `to`.
BasisTerm wedge_basis(const FormBasis& a, int ca, const FormBasis& b, int cb, const FormBasis& to);

// Form-valued grid field. Storage is [site][component][fibre]; fibre 1 for scalar forms and
// r*r (row-major) for End(E)-valued forms.
class FormField {
 public:
  FormField() = default;
  FormField(const Domain& domain, int p, int q, int fibre = 1);

  const Domain& domain() const { return domain_; }
  const FormBasis& basis() const { return basis_; }
  int p() const { return basis_.p(); }
  int q() const { return basis_.q(); }
  int fibre() const { return fibre_; }
  int components() const { return basis_.size(); }
  std::size_t sites() const { return domain_.sites(); }
  std::size_t site_stride() const { return static_cast<std::size_t>(components()) * fibre_; }

  cd& operator()(std::size_t site, int comp, int f = 0) { return data_[site * site_stride() + comp * fibre_ + f]; }
  const cd& operator()(std::size_t site, int comp, int f = 0) const {
    return data_[site * site_stride() + comp * fibre_ + f];
  }
  cd* ptr(std::size_t site, int comp) { return data_.data() + site * site_stride() + comp * fibre_; }
  const cd* ptr(std::size_t site, int comp) const { return data_.data() + site * site_stride() + comp * fibre_; }

  std::vector<cd>& data() { return data_; }
  const std::vector<cd>& data() const { return data_; }

  std::vector<cd> channel(int comp, int f) const;
  void set_channel(int comp, int f, std::span<const cd> values);
  void add_channel(int comp, int f, std::span<const cd> values, cd scale = 1.0);

  bool compatible(const FormField& other) const;
  FormField& operator+=(const FormField& other);
  FormField& operator-=(const FormField& other);
  FormField& operator*=(cd s);
  double max_abs() const;

 private:
  Domain domain_;
  FormBasis basis_;
  int fibre_ = 1;
  std::vector<cd> data_;
};

FormField operator+(FormField a, const FormField& b);
FormField operator-(FormField a, const FormField& b);
FormField operator*(cd s, FormField a);

using ScalarField = FormField;

ScalarField scalar_field(const Domain& domain);
// The Kaehler form omega = (i/2) sum dz_k ^ dzbar_k.
FormField kaehler_form(const Domain& domain);

FormField dbar(const FormField& f);
FormField del(const FormField& f);
// Generic contraction Lambda: (p,q) -> (p-1,q-1), Lambda = -2i sum_k iota(dzbar_k) iota(dz_k).
FormField lambda(const FormField& f);
// Spec-facing contraction on (1,1)-forms only: -2i * trace of the coefficient matrix.
FormField contract_lambda(const FormField& alpha);
// omega ^ f
FormField lefschetz(const FormField& f);
// Formal L2 adjoints: dbar* = -2 sum iota(dzbar_k) d/dz_k, del* = -2 sum iota(dz_k) d/dzbar_k.
FormField adjoint_dbar(const FormField& f);
FormField adjoint_del(const FormField& f);
// Delta = 2i Lambda dbar del = -4 sum_j d/dz_j d/dzbar_j, applied channel-wise.
FormField laplacian(const FormField& f);
// Scalar-valued wedge product (both fibres must be 1).
FormField wedge(const FormField& a, const FormField& b);

// Quadrature of sum_c 2^{p+q} a_c conj(b_c), linear in a.
cd l2_inner(const FormField& a, const FormField& b);
double l2_norm(const FormField& f);
// Integral of a real/complex scalar density given per site.
double integrate(const Domain& domain, std::span<const double> density);
cd integrate(const Domain& domain, std::span<const cd> density);

// ||del* f - i[Lambda, dbar] f||_{L2} for f of bidegree (1,0) or (1,1).
double kahler_identity_residual(const FormField& f);
// ||dbar* f + i[Lambda, del] f||_{L2}, the conjugate identity with the sign valid in these conventions.
double kahler_identity_residual_conjugate(const FormField& f);

// Coefficient c with dz_1..dz_n ^ dzbar_1..dzbar_n = c * vol.
cd top_form_volume_factor(int n);
// Integral of the top-degree coefficient times the factor above.
cd integrate_top_form(const FormField& top);

}  // namespace hitchin::lattice
