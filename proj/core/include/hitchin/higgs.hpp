#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hitchin/common.hpp"
#include "hitchin/lattice.hpp"

namespace hitchin::higgs {

using lattice::Domain;
using lattice::FormBasis;
using lattice::FormField;

// End(E)-valued (p,q)-form: a FormField whose fibre is an r x r row-major matrix.
class EndoFormField {
 public:
  EndoFormField() = default;
  EndoFormField(const Domain& domain, int rank, int p, int q);
  EndoFormField(FormField form, int rank);

  int rank() const { return rank_; }
  int p() const { return form_.p(); }
  int q() const { return form_.q(); }
  int components() const { return form_.components(); }
  std::size_t sites() const { return form_.sites(); }
  const Domain& domain() const { return form_.domain(); }
  const FormBasis& basis() const { return form_.basis(); }

  MatMap at(std::size_t site, int comp) { return MatMap(form_.ptr(site, comp), rank_, rank_); }
  ConstMatMap at(std::size_t site, int comp) const { return ConstMatMap(form_.ptr(site, comp), rank_, rank_); }

  FormField& form() { return form_; }
  const FormField& form() const { return form_; }

  EndoFormField& operator+=(const EndoFormField& o);
  EndoFormField& operator-=(const EndoFormField& o);
  EndoFormField& operator*=(cd s);
  double max_abs() const { return form_.max_abs(); }

 private:
  FormField form_;
  int rank_ = 0;
};

EndoFormField operator+(EndoFormField a, const EndoFormField& b);
EndoFormField operator-(EndoFormField a, const EndoFormField& b);
EndoFormField operator*(cd s, EndoFormField a);

// Per-site positive-definite Hermitian matrix. `sl_mode` marks metrics constrained to det H = 1.
class HermitianMetricField {
 public:
  HermitianMetricField() = default;
  // Identity metric.
  HermitianMetricField(const Domain& domain, int rank, bool sl_mode = false);

  int rank() const { return rank_; }
  bool sl_mode() const { return sl_mode_; }
  void set_sl_mode(bool on) { sl_mode_ = on; }
  const Domain& domain() const { return domain_; }
  std::size_t sites() const { return domain_.sites(); }

  MatMap at(std::size_t site) { return MatMap(data_.data() + site * rank_ * rank_, rank_, rank_); }
  ConstMatMap at(std::size_t site) const { return ConstMatMap(data_.data() + site * rank_ * rank_, rank_, rank_); }
  std::vector<cd>& data() { return data_; }
  const std::vector<cd>& data() const { return data_; }

  // Throws ConditioningError on non-Hermitian, non-positive or ill-conditioned entries.
  void validate(double herm_tol = 1e-12, double max_condition = 1e12) const;
  double max_det_deviation() const;

 private:
  Domain domain_;
  int rank_ = 0;
  bool sl_mode_ = false;
  std::vector<cd> data_;
};

// Pointwise metric data: H, H^{-1}, the Hermitian square root G (G G = H) and G^{-1}.
struct MetricFrame {
  Mat H, Hinv, G, Ginv;
};
MetricFrame metric_frame(const Mat& H, double max_condition = 1e12);

// phi^dagger = H^{-1} phi^* H.
Mat h_adjoint(const Mat& A, const Mat& H, const Mat& Hinv);
// |A|_H^2 = tr(A A^dagger).
double h_norm_sq(const Mat& A, const Mat& H, const Mat& Hinv);
double h_norm(const Mat& A, const Mat& H);

// Adjoint w.r.t. H with the form part conjugated; (p,q) -> (q,p).
EndoFormField adjoint_wrt(const HermitianMetricField& H, const EndoFormField& phi);
// Matrix-valued wedge (A ^ B with matrix products).
EndoFormField wedge(const EndoFormField& a, const EndoFormField& b);
// [A, B] = A ^ B - (-1)^{deg A deg B} B ^ A.
EndoFormField graded_bracket(const EndoFormField& a, const EndoFormField& b);
// phi ^ phi for a (1,0) field; component dz_i ^ dz_j equals [phi_i, phi_j]. When n = 1 there are
// no (2,0)-forms and the result is an empty field (zero components, zero sites).
EndoFormField wedge_square(const EndoFormField& phi);
// [phi, psi] = phi ^ psi + psi ^ phi for phi of type (1,0) and psi of type (0,1).
EndoFormField bracket(const EndoFormField& phi, const EndoFormField& psi);
// Lambda applied to the form part.
EndoFormField lambda(const EndoFormField& a);
// Pointwise |A|_H including the frame weights 2^{p+q}.
std::vector<double> pointwise_norm(const HermitianMetricField& H, const EndoFormField& a);
// Pointwise Frobenius norm (identity metric).
std::vector<double> pointwise_norm(const EndoFormField& a);
double l2_norm(const HermitianMetricField& H, const EndoFormField& a);
double l2_norm(const EndoFormField& a);

// ---------------------------------------------------------------------------------------------
// Symmetric forms: degree-k polynomials in dz_1..dz_n. Monomial i of a degree-k form is
// dz_1^{k-i} dz_2^{i} (only i = 0 when n = 1). Norms treat dz_j as unit covectors, so
// |dz^alpha|^2 = alpha!/k!.
class SymFormField {
 public:
  SymFormField() = default;
  SymFormField(const Domain& domain, int degree);

  const Domain& domain() const { return domain_; }
  int degree() const { return degree_; }
  int monomials() const { return monomials_; }
  cd& operator()(std::size_t site, int i) { return data_[site * monomials_ + i]; }
  const cd& operator()(std::size_t site, int i) const { return data_[site * monomials_ + i]; }
  std::vector<cd>& data() { return data_; }
  const std::vector<cd>& data() const { return data_; }
  double norm_at(std::size_t site) const;
  double max_norm() const;

 private:
  Domain domain_;
  int degree_ = 0;
  int monomials_ = 1;
  std::vector<cd> data_;
};

double monomial_weight(int n, int degree, int i);

struct SpectralData {
  int rank = 0;
  std::vector<SymFormField> p;  // p[k-1] has degree k
  // Filled by attach_discriminant.
  std::optional<SymFormField> delta;
  std::vector<std::uint8_t> mask;
  std::vector<double> gap;
  double epsilon = 0;
  const Domain& domain() const { return p.front().domain(); }
};

// kappa(phi) = (p_1..p_r), the coefficients of det(lambda - phi) = lambda^r + p_1 lambda^{r-1} + ...
// (so p_k = (-1)^k e_k), built from traces of powers with Newton's identities.
SpectralData hitchin_map(const EndoFormField& phi, double integrability_tol = 1e-8);

using Covector = std::vector<cd>;  // n coefficients on dz_1..dz_n

// Roots at one site, sorted lexicographically (real then imaginary part of each coefficient).
std::vector<Covector> spectral_roots(const SpectralData& theta, std::size_t site);

// Roots at every site, labelled by nearest-neighbour continuation along a boustrophedon scan.
struct RootField {
  int rank = 0;
  int n = 1;
  std::vector<cd> values;  // [site][root][coefficient]
  cd& at(std::size_t site, int root, int j) { return values[(site * rank + root) * n + j]; }
  const cd& at(std::size_t site, int root, int j) const { return values[(site * rank + root) * n + j]; }
  double max_norm() const;
};
RootField continued_roots(const SpectralData& theta);
std::vector<std::size_t> boustrophedon_order(const Domain& domain);

struct Discriminant {
  SymFormField section;
  std::vector<std::uint8_t> mask;
  std::vector<double> gap;
  double epsilon = 0;
  std::size_t masked_sites() const;
};
// Delta = sum_{i<j} (lambda_i - lambda_j)^2 from the roots. `epsilon` defaults to
// h * sup |grad Delta|, one grid cell of the zero set; a site is in the locus when
// |Delta| < epsilon (or Delta == 0).
Discriminant discriminant(const SpectralData& theta, const RootField& roots, std::optional<double> epsilon = {});
Discriminant discriminant(const SpectralData& theta, std::optional<double> epsilon = {});
// The same section from the coefficients: (r-1) p_1^2 - 2 r p_2.
SymFormField discriminant_from_coefficients(const SpectralData& theta);
void attach_discriminant(SpectralData& theta, const Discriminant& disc);

// Run-length encoding of a boolean mask: alternating run lengths starting with a run of 0s.
std::vector<std::size_t> rle_encode(const std::vector<std::uint8_t>& mask);
std::vector<std::uint8_t> rle_decode(const std::vector<std::size_t>& runs);
// Writes spectral.json plus p<k>.fld (and delta.fld when present) into `dir`.
void export_spectral_data(const std::string& dir, const SpectralData& theta);

EndoFormField tensor_product(const EndoFormField& phi1, const EndoFormField& phi2, int max_rank = kMaxRank);

// ---------------------------------------------------------------------------------------------
// Pointwise matrix lemmas.

struct EigenProjections {
  std::vector<Mat> pi, pi_prime, chi;
  std::vector<Covector> eigenvalues;
  double gap = 0;
};
// Joint spectral projections of commuting matrices phis[k] with H-orthogonal counterparts.
EigenProjections eigen_projections(const std::vector<Mat>& phis, const Mat& H, double gap_tol = 1e-10);

// |[A,A^*]|^2 / (|A|^2 - g(A))^2 with g(A) the sum of |lambda_i|^2 from the Schur form.
// Returns +inf when |A|^2 - g(A) <= tol * |A|^2.
double commutator_gap_ratio(const Mat& A, double tol = 1e-12);

// ---------------------------------------------------------------------------------------------
// Random sampling suite for the pointwise lemmas.
//
// Sample k draws from CounterRng(seed, 2k) for the unconstrained checks and CounterRng(seed, 2k+1)
// for the planted-gap check, so single samples can be replayed.
//  - Unconstrained: A with i.i.d. standard complex Gaussian entries. Eigenvalue bound
//    max|lambda| <= |A| and the commutator-gap ratio.
//  - Planted gap: d ~ U[d_min, d_max]; r complex Gaussian eigenvalues rescaled so their minimum
//    pairwise distance is d; theta = P D P^{-1} with P = Id + 0.5 G (G Gaussian); H random positive
//    definite with condition spread 4. Draws with |theta|_H > c0 (d + 1) are rejected and redrawn.
//    Measured: |chi_i|_H and |[theta^dagger, pi_i]|_H / (d |chi_i|_H).

struct LemmaSampling {
  double c0 = 10.0;
  double d_min = 0.5;
  double d_max = 3.0;
  int max_redraws = 1000;
};

struct LemmaConstants {
  double c_r = 0;      // lower bound for the commutator-gap ratio
  double b = 0;        // upper bound for |chi_i|
  double b_prime = 0;  // lower bound for |[theta^dagger, pi_i]| / (d |chi_i|)
};

struct LemmaSuiteReport {
  int rank = 0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double eigen_ratio_max = 0;  // max over samples of max|lambda| / |A|
  std::size_t eigen_violations = 0;
  double gap_ratio_min = 0;
  std::size_t gap_ratio_sentinels = 0;
  std::size_t gap_ratio_violations = 0;
  std::size_t planted_rejections = 0;
  double chi_max = 0;
  double bracket_ratio_min = 0;  // over projections with |chi_i| > 1e-12
  std::size_t chi_violations = 0;
  std::size_t bracket_violations = 0;
  double pi_identity_error = 0;  // max | |pi_i|^2 - 1 - |chi_i|^2 |
  bool checked = false;          // violations counted against `frozen`
};

LemmaSuiteReport run_lemma_suite(int rank, std::size_t samples, std::uint64_t seed,
                                 const std::optional<LemmaConstants>& frozen = {}, const LemmaSampling& sampling = {});

}  // namespace hitchin::higgs
