#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hitchin/higgs.hpp"
#include "hitchin/solver.hpp"

namespace hitchin::limits {

using higgs::EndoFormField;
using higgs::HermitianMetricField;
using higgs::SpectralData;
using lattice::Domain;

// ---------------------------------------------------------------------------------------------
// Boundary and starting metrics for rank-2 Hitchin sections phi = [[0, 1], [q, 0]] dz_1.

// q read off a companion-form field (phi_{10} / phi_{01} in the dz_1 component).
std::vector<cd> companion_q(const EndoFormField& phi);
// diag(|q|^{1/2}, |q|^{-1/2}): the det-1 metric in which the companion matrix is normal.
HermitianMetricField decoupled_metric(const EndoFormField& phi);
// Smooth det-1 interpolant equal to the decoupled metric on the patch boundary:
// diag(rho^{1/2}, rho^{-1/2}) with rho = sqrt(|q|^2 + eps^2 b(x)) and b = prod_a (1 - (x_a/a_a)^2).
HermitianMetricField patch_start_metric(const EndoFormField& phi, double eps);

// ---------------------------------------------------------------------------------------------
// Scaling sweeps.

struct ProbeValues {
  std::vector<double> point;  // real coordinates
  double gap = 0;             // d(p) = min |lambda_i - lambda_j| of phi_hat at the nearest site
  double radius = 0;          // probe-ball radius
  std::size_t ball_sites = 0;
  double comm_sup = 0;        // sup_B |[phi_hat, phi_hat^dagger]|_H
  double ilf_sup = 0;         // sup_B |i Lambda F_A|_H
  double dstar_f_sup = 0;     // sup_B |d_A^* F_A|_H
};

struct SweepRecord {
  double t = 0;
  double r_t = 0;         // ||t phi||_{L2} in the background (identity) metric
  double r_t_metric = 0;  // ||t phi||_{L2(H_t)}
  std::vector<ProbeValues> probes;
  double comm_sup = 0;         // sup over sites outside the Z mask
  double wedge_sq_int = 0;     // int |phi_hat ^ phi_hat|^2
  double dA_phi_int = 0;       // int |d_A (phi_hat + phi_hat^dagger)|^2
  double sup_ratio = 0;        // sup |phi_t| / (||phi_t|| / sqrt(Vol))
  double norm_chain_upper = 0; // max_k ||p_k(phi_t)||^{1/k} / ||phi_t||
  double norm_chain_lower = 0; // ||phi_t|| / (max_k ||p_k(phi_t)||^{1/k} + 1)
  SpectralData kappa;          // kappa(phi_hat_t)
  HermitianMetricField H;
  solver::SolveReport report;
};

struct SweepOptions {
  solver::SolveParams solver;
  std::vector<std::vector<double>> probes;  // real coordinates, one vector per point
  std::optional<HermitianMetricField> initial;  // default: identity (sl_mode per solver params)
  std::optional<double> epsilon_disc;          // discriminant threshold for the Z mask
};

class SweepError : public NumericalError {
 public:
  SweepError(const std::string& what, double t) : NumericalError(what), t_(t) {}
  double t() const { return t_; }

 private:
  double t_;
};

// Solves for t * phi at every t (warm-started from the previous metric) and records diagnostics.
std::vector<SweepRecord> scaling_sweep(const EndoFormField& phi, const std::vector<double>& t_list,
                                       const SweepOptions& options);

// Diagnostics for one (H, phi_t) pair, as recorded in a SweepRecord (report and H excluded).
SweepRecord sweep_diagnostics(const HermitianMetricField& H, const EndoFormField& phi_t, double t, double r1,
                              const std::vector<std::vector<double>>& probes, std::optional<double> epsilon_disc);

// Probe-ball radius min(0.1 * span, dist(p, Z)) / 2, span the smallest axis extent.
double probe_radius(const Domain& domain, const std::vector<double>& point, const std::vector<std::uint8_t>& z_mask);

// Pointwise |d_A^* F| for a (1,1) curvature field.
std::vector<double> dstar_curvature_norm(const solver::ChernConnectionField& A, const EndoFormField& F);

struct DecayFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
  int points_used = 0;
  bool floored = false;     // some values were at or below the floor and dropped
  bool degenerate = false;  // fewer than two usable points, or no spread
  double gap = 0;
  double slope_over_gap = 0;
};

// Least-squares fit of log sup_B |[phi_hat, phi_hat^dagger]| against r_t at each probe.
std::vector<DecayFit> decay_fit(const std::vector<SweepRecord>& sweep, double floor = 1e-14);

// ---------------------------------------------------------------------------------------------

struct UhlenbeckRadius {
  lattice::ScalarField radius;
  double r_max = 0;
  std::string note;
};
// r_A(x) = sup{ r : r^{4-2n} int_{B_r(x)} |F|^2 <= eps0 } over the discrete radii k*h, k <= R_max/h.
UhlenbeckRadius uhlenbeck_radius_field(const EndoFormField& F, const HermitianMetricField& H, double eps0);

struct AdiabaticResidual {
  double ilf = 0;        // ||i Lambda F_A||
  double commutator = 0; // ||[phi_hat, phi_hat^dagger]||
  double del = 0;        // ||d'_A (phi_hat + phi_hat^dagger)||
  double dbar = 0;       // ||d''_A (phi_hat + phi_hat^dagger)||
  double wedge = 0;      // ||phi_hat ^ phi_hat||
  double norm_defect = 0;  // | ||phi||_{L2(H)} - 1 |
  std::vector<double> as_vector() const { return {ilf, commutator, del, dbar, wedge, norm_defect}; }
};
// phi is normalised in the H-norm before the first five residuals are taken. Sites with
// exclude[s] != 0 (e.g. near the discriminant locus) and patch boundary sites are skipped.
AdiabaticResidual adiabatic_residual(const HermitianMetricField& H, const EndoFormField& phi,
                                     const std::vector<std::uint8_t>& exclude = {});

// Sites within `radius` of any masked site (mask dilation in physical units).
std::vector<std::uint8_t> dilate_mask(const Domain& domain, const std::vector<std::uint8_t>& mask, double radius);

}  // namespace hitchin::limits
