#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hitchin/z2.hpp"

namespace hitchin::cli {

using nlohmann::json;
using higgs::EndoFormField;
using higgs::HermitianMetricField;

// Bad or inconsistent configuration; `path` is the offending field ("experiment.t_list").
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what) : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct DomainSpec {
  std::string kind = "torus";  // torus | patch
  int n = 1;
  std::vector<int> shape;      // 2n entries
  std::vector<double> size;    // torus span or patch half-width, 2n entries
};

struct HiggsSpec {
  std::string preset;          // diagonal | hitchin-section | custom-dump
  int rank = 2;
  std::vector<cd> q_coeffs;    // hitchin-section: q(z_1) = sum_k q_coeffs[k] z_1^k
  std::vector<std::vector<cd>> values;  // diagonal: values[j] = eigenvalues on dz_j
  std::string path;            // custom-dump: .fld with a (1,0) End(E)-valued form
};

struct SolverSpec {
  solver::SolveParams params;
  // auto | identity | perturbed | decoupled | interpolant. On the patch the initial metric also
  // supplies the fixed boundary values.
  std::string initial = "auto";
  double perturbation = 0.3;             // amplitude for "perturbed"
  std::optional<double> interpolant_eps; // default 0.5 max|q|
};

struct ExperimentSpec {
  std::string kind = "none";  // none | sweep | realization
  std::vector<double> t_list;
  std::vector<std::vector<double>> probes;
  std::optional<double> epsilon_disc;
  bool sl2_only = false;
  double exclusion_radius = 0.15;
  double consistency_tol = 1e-8;
  double harmonic_tol = 1e-2;
  double uhlenbeck_eps0 = 1e-2;
};

struct RunConfig {
  DomainSpec domain;
  HiggsSpec higgs;
  SolverSpec solver;
  ExperimentSpec experiment;
  std::uint64_t seed = 0;
};

// Validates and fills every default; the returned config serialises with all fields explicit.
RunConfig config_from_json(const json& j);
RunConfig parse_config(const std::string& path);
json config_to_json(const RunConfig& cfg);

lattice::Domain build_domain(const DomainSpec& spec);
EndoFormField build_phi(const RunConfig& cfg, const lattice::Domain& domain);
HermitianMetricField build_initial_metric(const RunConfig& cfg, const EndoFormField& phi);
// Smooth random metric exp(s) with s a few low Fourier modes of traceless Hermitian matrices.
HermitianMetricField perturbed_metric(const lattice::Domain& domain, int rank, double amplitude, std::uint64_t seed);

// ---------------------------------------------------------------------------------------------
// Check suites shared by check-identities and the acceptance binary.

struct Check {
  std::string name;
  double value = 0;
  double tol = 0;
  bool pass = false;
};
json checks_to_json(const std::vector<Check>& checks);

// Kaehler identities, Lambda omega = n, Lefschetz pairing and dbar^2 = del^2 = 0 on smooth
// random fields (n = 2 entries need a complex-2 domain and are skipped otherwise).
std::vector<Check> identity_suite(const lattice::Domain& domain, std::uint64_t seed);
// Random H-unitary gauge: moment-map, holomorphy and integrability residuals, |F|_H,
// |phi ^ phi|_H and |phi|_H compared pointwise.
std::vector<Check> gauge_suite(const EndoFormField& phi, const HermitianMetricField& H, std::uint64_t seed,
                               double tol = 1e-10);

// ---------------------------------------------------------------------------------------------
// Runs and manifests.

struct FileEntry {
  std::string path;  // relative to the run directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct StageStatus {
  std::string name;
  std::string status;  // ok | failed
  std::string message;
  double wall_time = 0;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string tool_version;
  std::vector<StageStatus> stages;
  std::vector<FileEntry> files;
  int exit_code = 0;
  json to_json() const;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);
std::string tool_version();

// Each run writes its artifacts into out_dir and the manifest last (manifest.json, via rename).
// Numerical failures are recorded as a failed stage with exit_code 3; config errors throw.
RunManifest run_solve(const RunConfig& cfg, const std::string& out_dir);
RunManifest run_sweep(const RunConfig& cfg, const std::string& out_dir);
RunManifest run_extract_z2(const std::string& run_dir, const std::string& out_dir);
RunManifest run_check_identities(const RunConfig& cfg, const std::string& out_dir);
RunManifest run_matrix_lemmas(int rank, std::size_t samples, std::uint64_t seed, const std::string& out_dir);

// Verifies every checksum listed in out_dir/manifest.json.
bool verify_manifest(const std::string& out_dir, std::string* problem = nullptr);

}  // namespace hitchin::cli
