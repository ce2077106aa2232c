#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hitchin/limits.hpp"

namespace hitchin::limits {

// A Z2 harmonic 1-form candidate read off rank-2 trace-free spectral data. v is stored as real
// components on the axes x_1, y_1, ...: lambda = sum c_j dz_j gives v_{x_j} = 2 Re c_j and
// v_{y_j} = -2 Im c_j. Edge signs compare the branches at the two ends of an edge; an edge
// touching Z has sign 0.
struct Z2OneForm {
  Domain domain;
  std::vector<std::uint8_t> z_mask;
  std::vector<std::int8_t> edge_sign;  // [site * real_dim + axis], edge to the +1 neighbour
  std::vector<cd> lambda;              // [site * n + j]
  std::vector<double> v;               // [site * real_dim + a]
  EndoFormField sigma;                 // (0,0) field, |sigma|_H = 1 off Z
  std::vector<std::uint8_t> flagged;   // sites where sigma had to be interpolated
  std::vector<std::size_t> roots;      // spanning-tree roots, one per component of the complement

  int sign(std::size_t site, int axis) const { return edge_sign[site * domain.real_dim() + axis]; }
  // |v|^2 with |dz| = 1 (so |c dz + conj|^2 = 2|c|^2).
  double v_norm_sq(std::size_t site) const;
};

// Branch choice along a breadth-first tree rooted at max |Delta| and edge-sign cocycle.
// `floor` is relative to max |lambda|; sites below it get an interpolated sigma and are flagged.
Z2OneForm extract_z2(const SpectralData& theta, const EndoFormField& phi_hat, const HermitianMetricField& H,
                     double floor = 1e-10);

// (v (x) v)^{2,0} = lambda (x) lambda as a degree-2 symmetric form.
higgs::SymFormField v_tensor_square(const Z2OneForm& w);
// max over sites off Z of |(v (x) v)^{2,0} + p_2|.
double z2_consistency(const Z2OneForm& w, const higgs::SymFormField& p2);

struct Z2Harmonicity {
  double dv = 0;       // L2 norm of dv over the sites used
  double dstar_v = 0;  // L2 norm of d*v
  double v_norm = 0;   // L2 norm of v over the same sites (Euclidean components)
  double holder_proxy = 0;
  double grad_energy = 0;  // int |nabla v|^2 over the sites used
  std::size_t used_sites = 0;
  std::size_t excluded_sites = 0;  // stencil touches Z, the exclusion ball or the patch boundary
  double dv_rel() const { return v_norm > 0 ? dv / v_norm : 0.0; }
  double dstar_rel() const { return v_norm > 0 ? dstar_v / v_norm : 0.0; }
};
// Centred differences on sign-corrected branches. Sites within `exclusion_radius` of Z are skipped.
Z2Harmonicity z2_harmonicity_residual(const Z2OneForm& w, double exclusion_radius = 0.0);

// Number of elementary plaquettes off Z whose edge-sign product is -1 (zero for a valid cocycle).
std::size_t cocycle_defects(const Z2OneForm& w);
// Product of edge signs along a closed lattice path of adjacent sites; 0 if the path touches Z.
int loop_monodromy(const Z2OneForm& w, const std::vector<std::size_t>& loop);
// Counter-clockwise square loop in the (axis0, axis0+1) plane around `centre` with half-size k
// sites. Empty when it leaves the patch.
std::vector<std::size_t> square_loop(const Domain& domain, std::size_t centre, int k, int axis0 = 0);

struct ZMonodromy {
  std::vector<double> centre;
  std::size_t sites = 0;
  int half_size = 0;
  int value = 0;
};
// One loop per connected component of Z, just outside its bounding box.
std::vector<ZMonodromy> z_monodromies(const Z2OneForm& w);

// Negative control: flips each nonzero edge sign with probability `fraction`.
Z2OneForm scramble_signs(const Z2OneForm& w, double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------------------------

struct RealizationOptions {
  SweepOptions sweep;
  double exclusion_radius = 0.15;
  double consistency_tol = 1e-8;
  double harmonic_tol = 1e-2;  // on max(dv_rel, dstar_rel)
};

struct RealizationReport {
  std::vector<SweepRecord> sweep;
  std::vector<AdiabaticResidual> adiabatic;
  Z2OneForm z2;
  Z2Harmonicity harmonicity;
  std::vector<ZMonodromy> monodromy;
  std::size_t cocycle_defects = 0;
  double det_drift = 0;     // max_t |p_2(phi_hat_t) - p_2(phi_hat_T)|
  double consistency = 0;   // max_t max_x |det(phi_hat_t) + (v (x) v)^{2,0}|
  double sigma_norm_error = 0;  // max | |sigma|_H - 1 | off Z
  std::string branch;  // "generic" or "degenerate" (diagonal field)
  bool pass = false;
  std::string failed_check;  // empty on success
};

class StageError : public NumericalError {
 public:
  StageError(const std::string& stage, const std::string& what) : NumericalError(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// sweep -> per-t adiabatic residuals -> extract_z2 at the last t -> harmonicity and consistency.
// Numerical failures are rethrown as StageError naming the stage.
RealizationReport realization_experiment(const EndoFormField& phi, const std::vector<double>& t_list,
                                         const RealizationOptions& options);

}  // namespace hitchin::limits
