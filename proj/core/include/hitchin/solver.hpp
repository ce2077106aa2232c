#pragma once

#include <string>
#include <vector>

#include "hitchin/higgs.hpp"

namespace hitchin::solver {

using higgs::EndoFormField;
using higgs::HermitianMetricField;
using lattice::Domain;

// The holomorphic structure is dbar + beta on the trivial bundle; an empty beta means beta = 0.
// The Chern connection of (beta, H) is d_A = dbar + beta + del + a with
// a_j = H^{-1} d/dz_j H - H^{-1} beta_j^* H.
class ChernConnectionField {
 public:
  ChernConnectionField() = default;
  ChernConnectionField(HermitianMetricField H, EndoFormField a, EndoFormField beta)
      : H_(std::move(H)), a_(std::move(a)), beta_(std::move(beta)) {}

  const HermitianMetricField& metric() const { return H_; }
  // (1,0) coefficient a.
  const EndoFormField& coefficient() const { return a_; }
  // (0,1) part beta (empty when zero).
  const EndoFormField& beta() const { return beta_; }
  bool has_beta() const { return beta_.sites() > 0; }

 private:
  HermitianMetricField H_;
  EndoFormField a_;
  EndoFormField beta_;
};

ChernConnectionField chern_connection(const HermitianMetricField& H, const EndoFormField& beta = {});

// (1,1) curvature F_{j kbar} = -dbar_k a_j + del_j beta_k + a_j beta_k - beta_k a_j, with the
// second derivative of H taken by the lattice's d/dz d/dzbar operator.
EndoFormField curvature(const ChernConnectionField& A);

// d_A^{1,0} X = del X + [a, X] and d_A^{0,1} X = dbar X + [beta, X] (graded brackets).
EndoFormField covariant_del(const ChernConnectionField& A, const EndoFormField& x);
EndoFormField covariant_dbar(const ChernConnectionField& A, const EndoFormField& x);

// Per-site K = i Lambda (F_A^perp + [phi, phi^dagger]) (trace-free part; deg E = 0 so gamma = 0).
std::vector<Mat> moment_map(const HermitianMetricField& H, const EndoFormField& phi, const EndoFormField& beta = {});

struct ResidualNorms {
  double l2 = 0;    // sqrt(int |K|_H^2 / Vol) over active sites
  double linf = 0;  // max |K|_H over active sites
};
// Active sites: all sites on the torus, interior sites on the patch.
ResidualNorms residual_norms(const HermitianMetricField& H, const std::vector<Mat>& K);
std::vector<std::uint8_t> active_sites(const Domain& domain);

struct HsResidual {
  std::vector<double> momentmap, holomorphy, integrability;
  ResidualNorms momentmap_norms;
  double holomorphy_max = 0, integrability_max = 0;
};
HsResidual hs_residual(const HermitianMetricField& H, const EndoFormField& phi, const EndoFormField& beta = {});

struct SolveParams {
  double step = 1.0;
  int max_iter = 500;
  double tol = 1e-8;
  bool sl_mode = true;
  // Inner preconditioned-CG controls for the search direction.
  int inner_iter = 40;
  double inner_rtol = 1e-3;
  double min_step = 1e-10;
  double divergence_factor = 10.0;
};

struct SolveReport {
  int iterations = 0;
  std::vector<double> residual_l2, residual_linf, step_sizes;
  double energy_direct = 0, energy_identity = 0;
  double wall_time = 0;
  bool converged = false;
  std::string stop_reason;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, SolveReport report) : NumericalError(what), report_(std::move(report)) {}
  const SolveReport& report() const { return report_; }

 private:
  SolveReport report_;
};

struct SolveResult {
  HermitianMetricField H;
  SolveReport report;
};

// Moment-map flow for H with phi (and beta) fixed. On the Dirichlet patch the boundary
// values of H0 are kept. Each step moves H -> G exp(-tau s) G (G = H^{1/2}) along a
// preconditioned direction s ~ (Delta/2 + M)^{-1} K and backtracks tau until the L2
// residual decreases.
SolveResult solve_metric(const EndoFormField& phi, const HermitianMetricField& H0, const SolveParams& params,
                         const EndoFormField& beta = {});

struct Energy {
  double direct = 0;
  double identity = 0;
};
// E_direct = int |F + [phi,phi^dagger]|^2 + |d_A(phi + phi^dagger)|^2,
// E_identity = int |i Lambda (F + [phi,phi^dagger])|^2 (gamma = 0, ch_2 = 0).
Energy energy(const HermitianMetricField& H, const EndoFormField& phi, const EndoFormField& beta = {});

struct WeitzenbockReport {
  std::vector<double> pointwise;  // Delta|phi|^2 + 2|nabla_A phi|^2 + 2|[phi,phi^dagger]|^2
  double residual_l1 = 0;
  double integrated = 0;  // int |nabla_A phi|^2 + |[phi,phi^dagger]|^2
  double phi_norm_sq = 0;  // int |phi|^2
};
WeitzenbockReport weitzenbock(const HermitianMetricField& H, const EndoFormField& phi, const EndoFormField& beta = {});
double weitzenbock_residual(const HermitianMetricField& H, const EndoFormField& phi, const EndoFormField& beta = {});

struct GaugeTriple {
  EndoFormField beta;
  EndoFormField phi;
  HermitianMetricField H;
};
// beta^g = g^{-1} beta g + g^{-1} dbar g, phi^g = g^{-1} phi g, H^g = g^* H g.
// `g` is an End(E)-valued (0,0) field.
GaugeTriple complex_gauge_act(const EndoFormField& g, const EndoFormField& beta, const EndoFormField& phi,
                              const HermitianMetricField& H);

}  // namespace hitchin::solver
