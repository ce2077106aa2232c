#include "hitchin/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <openssl/evp.h>

#include "hitchin/field_io.hpp"

#ifndef HITCHIN_VERSION
#define HITCHIN_VERSION "dev"
#endif

namespace hitchin::cli {

namespace fs = std::filesystem;
using lattice::Domain;
using lattice::FormField;

namespace {

// ---------------------------------------------------------------------------------------------
// JSON field readers with path-qualified errors.

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError(path.empty() ? k : path + "." + k, "unknown field");
  }
}

double get_double(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

double positive(const json& j, const std::string& path) {
  double v = get_double(j, path);
  if (!(v > 0)) throw ConfigError(path, "must be positive");
  return v;
}

int get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<int>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  return j.get<bool>();
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

// A complex number is either a real number or [re, im].
cd get_complex(const json& j, const std::string& path) {
  if (j.is_number()) return {get_double(j, path), 0.0};
  if (j.is_array() && j.size() == 2) return {get_double(j[0], path + "[0]"), get_double(j[1], path + "[1]")};
  throw ConfigError(path, "expected a number or [re, im]");
}

json complex_json(cd z) { return json::array({z.real(), z.imag()}); }

std::vector<cd> get_complex_list(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a non-empty array");
  std::vector<cd> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_complex(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

template <class T, class F>
std::vector<T> broadcast(const json& j, const std::string& path, int count, F read) {
  std::vector<T> out;
  if (j.is_array()) {
    if (static_cast<int>(j.size()) != count)
      throw ConfigError(path, "expected " + std::to_string(count) + " entries (one per real axis)");
    for (int i = 0; i < count; ++i) out.push_back(read(j[i], path + "[" + std::to_string(i) + "]"));
  } else {
    out.assign(count, read(j, path));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Output helpers.

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  os << s;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string t_label(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

json solve_report_json(const solver::SolveReport& r) {
  // Wall time is left out so reports are byte-reproducible; it goes into the manifest stages.
  return {{"iterations", r.iterations},
          {"converged", r.converged},
          {"stop_reason", r.stop_reason},
          {"residual_l2", r.residual_l2.empty() ? 0.0 : r.residual_l2.back()},
          {"residual_linf", r.residual_linf.empty() ? 0.0 : r.residual_linf.back()},
          {"energy_direct", r.energy_direct},
          {"energy_identity", r.energy_identity}};
}

void write_metric(const fs::path& p, const HermitianMetricField& H) {
  json h = {{"kind", "metric"},
            {"domain", io::domain_to_json(H.domain())},
            {"rank", H.rank()},
            {"sl_mode", H.sl_mode()},
            {"bidegree", {0, 0}},
            {"fibre", H.rank() * H.rank()}};
  io::write_fld(p.string(), h, H.data());
}

HermitianMetricField read_metric(const fs::path& p) {
  auto ff = io::read_fld(p.string());
  if (ff.header.value("kind", "") != "metric") throw ConfigError(p.string(), "not a metric field");
  Domain dom = io::domain_from_json(ff.header.at("domain"));
  const int r = ff.header.at("rank").get<int>();
  HermitianMetricField H(dom, r, ff.header.value("sl_mode", false));
  if (ff.values.size() != H.data().size()) throw ShapeMismatchError("metric payload does not match its header");
  H.data() = ff.values;
  return H;
}

class RunContext {
 public:
  RunContext(std::string command, const std::string& out_dir, const json& config)
      : dir_(out_dir), write_(!out_dir.empty()) {
    manifest_.command = std::move(command);
    manifest_.tool_version = tool_version();
    manifest_.config_hash = sha256_hex(config.dump());
    if (write_) {
      fs::create_directories(dir_);
      fs::remove(dir_ / "manifest.json");
    }
  }

  bool writing() const { return write_; }
  const fs::path& dir() const { return dir_; }

  // Runs one stage; numerical failures are recorded and stop the run.
  bool stage(const std::string& name, const std::function<void()>& body) {
    if (failed_) return false;
    auto t0 = std::chrono::steady_clock::now();
    StageStatus st{name, "ok", "", 0.0};
    try {
      body();
    } catch (const ConfigError&) {
      throw;
    } catch (const NumericalError& e) {
      st.status = "failed";
      st.message = e.what();
      failed_ = true;
      manifest_.exit_code = 3;
    }
    st.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest_.stages.push_back(st);
    return !failed_;
  }

  void fail(const std::string& name, const std::string& message) {
    manifest_.stages.push_back({name, "failed", message, 0.0});
    failed_ = true;
    manifest_.exit_code = 3;
  }

  void text(const std::string& rel, const std::string& content) {
    if (!write_) return;
    fs::path p = dir_ / rel;
    fs::create_directories(p.parent_path());
    write_text(p, content);
    add(rel);
  }

  void add(const std::string& rel) {
    if (!write_) return;
    fs::path p = dir_ / rel;
    manifest_.files.push_back({rel, sha256_file(p.string()), fs::file_size(p)});
  }

  RunManifest finish() {
    if (write_) {
      json j = manifest_.to_json();
      std::time_t now = std::time(nullptr);
      char buf[32];
      std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
      j["created_at"] = buf;
      fs::path tmp = dir_ / "manifest.json.tmp";
      write_text(tmp, dump(j));
      fs::rename(tmp, dir_ / "manifest.json");
    }
    return manifest_;
  }

  RunManifest& manifest() { return manifest_; }

 private:
  fs::path dir_;
  bool write_;
  bool failed_ = false;
  RunManifest manifest_;
};

Mat herm_exp(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  return es.eigenvectors() * es.eigenvalues().array().exp().matrix().asDiagonal() * es.eigenvectors().adjoint();
}

// Sum of a few low modes of random traceless Hermitian matrices.
std::vector<Mat> smooth_hermitian(const Domain& d, int r, double amp, CounterRng& rng) {
  std::vector<Mat> modes;
  std::vector<std::vector<int>> ks;
  for (int m = 0; m < 3; ++m) {
    Mat a = random_complex_matrix(rng, r, r);
    a = 0.5 * (a + a.adjoint()).eval();
    a -= (a.trace() / double(r)) * Mat::Identity(r, r);
    modes.push_back(a / a.norm());
    std::vector<int> k(d.real_dim());
    for (int& x : k) x = static_cast<int>(std::floor(rng.uniform(-1.0, 2.0)));
    ks.push_back(k);
  }
  std::vector<Mat> out(d.sites(), Mat::Zero(r, r));
  for (std::size_t s = 0; s < d.sites(); ++s)
    for (int m = 0; m < 3; ++m) {
      double ph = m;
      for (int a = 0; a < d.real_dim(); ++a) ph += 2 * std::numbers::pi * ks[m][a] * d.coord(s, a) / d.extent()[a];
      out[s] += amp * std::cos(ph) * modes[m];
    }
  return out;
}

FormField smooth_form(const Domain& dom, int p, int q, CounterRng& rng) {
  FormField f(dom, p, q);
  const int d = dom.real_dim();
  for (int c = 0; c < f.components(); ++c)
    for (int m = 0; m < 3; ++m) {
      std::vector<int> k(d);
      for (int a = 0; a < d; ++a) k[a] = static_cast<int>(std::floor(rng.uniform(-3.0, 4.0)));
      cd amp = rng.complex_normal();
      for (std::size_t s = 0; s < dom.sites(); ++s) {
        double ph = 0;
        for (int a = 0; a < d; ++a) ph += 2 * std::numbers::pi * k[a] * dom.coord(s, a) / dom.extent()[a];
        f(s, c) += amp * std::exp(cd(0, ph));
      }
    }
  double m = f.max_abs();
  if (m > 0) f *= cd(1.0 / m);
  return f;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

json probe_json(const limits::ProbeValues& p) {
  return {{"point", p.point},       {"gap", p.gap},         {"radius", p.radius},
          {"ball_sites", p.ball_sites}, {"comm_sup", p.comm_sup}, {"ilf_sup", p.ilf_sup},
          {"dstar_f_sup", p.dstar_f_sup}};
}

double sym_diff(const higgs::SymFormField& a, const higgs::SymFormField& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

json z2_json(const limits::Z2OneForm& w, const limits::Z2Harmonicity& h, std::size_t defects,
             const std::vector<limits::ZMonodromy>& mono, double consistency, double sigma_err) {
  std::size_t flagged = std::count(w.flagged.begin(), w.flagged.end(), std::uint8_t{1});
  std::size_t zsites = std::count(w.z_mask.begin(), w.z_mask.end(), std::uint8_t{1});
  std::size_t negative = std::count(w.edge_sign.begin(), w.edge_sign.end(), std::int8_t{-1});
  double vmin = std::numeric_limits<double>::infinity(), vmax = 0;
  for (std::size_t s = 0; s < w.domain.sites(); ++s)
    if (!w.z_mask[s]) {
      vmin = std::min(vmin, w.v_norm_sq(s));
      vmax = std::max(vmax, w.v_norm_sq(s));
    }
  json jm = json::array();
  for (const auto& m : mono)
    jm.push_back({{"centre", m.centre}, {"z_sites", m.sites}, {"half_size", m.half_size}, {"monodromy", m.value}});
  return {{"z_sites", zsites},
          {"z_mask_rle", higgs::rle_encode(w.z_mask)},
          {"tree_roots", w.roots},
          {"negative_edges", negative},
          {"cocycle_defects", defects},
          {"monodromy", jm},
          {"flagged_sites", flagged},
          {"v_norm_sq_min", zsites == w.domain.sites() ? 0.0 : vmin},
          {"v_norm_sq_max", vmax},
          {"consistency", consistency},
          {"sigma_norm_error", sigma_err},
          {"harmonicity",
           {{"dv", h.dv},
            {"dstar_v", h.dstar_v},
            {"v_norm", h.v_norm},
            {"dv_rel", h.dv_rel()},
            {"dstar_rel", h.dstar_rel()},
            {"holder_proxy", h.holder_proxy},
            {"grad_energy", h.grad_energy},
            {"used_sites", h.used_sites},
            {"excluded_sites", h.excluded_sites}}}};
}

void write_z2_fields(RunContext& ctx, const limits::Z2OneForm& w) {
  if (!ctx.writing()) return;
  const Domain& dom = w.domain;
  FormField lam(dom, 1, 0);
  for (std::size_t s = 0; s < dom.sites(); ++s)
    for (int j = 0; j < dom.complex_dim(); ++j) lam(s, lam.basis().index(1u << j, 0u)) = w.lambda[s * dom.complex_dim() + j];
  io::write_form_field((ctx.dir() / "lambda.fld").string(), lam, "z2-branch", 1);
  ctx.add("lambda.fld");
  io::write_form_field((ctx.dir() / "sigma.fld").string(), w.sigma.form(), "endo", 2);
  ctx.add("sigma.fld");
  std::ostringstream os;
  os << "site,axis,sign\n";
  const int d = dom.real_dim();
  for (std::size_t s = 0; s < dom.sites(); ++s)
    for (int a = 0; a < d; ++a)
      if (w.sign(s, a) < 0) os << s << ',' << a << ",-1\n";
  ctx.text("branch_cut.csv", os.str());
}

}  // namespace

// ---------------------------------------------------------------------------------------------

RunConfig config_from_json(const json& j) {
  check_keys(j, "", {"domain", "higgs", "solver", "experiment", "seed"});
  RunConfig cfg;

  if (!j.contains("domain")) throw ConfigError("domain", "missing required block");
  const json& jd = j["domain"];
  check_keys(jd, "domain", {"kind", "n", "shape", "size"});
  if (jd.contains("kind")) cfg.domain.kind = get_string(jd["kind"], "domain.kind");
  if (cfg.domain.kind != "torus" && cfg.domain.kind != "patch")
    throw ConfigError("domain.kind", "expected \"torus\" or \"patch\"");
  if (jd.contains("n")) cfg.domain.n = get_int(jd["n"], "domain.n");
  if (cfg.domain.n != 1 && cfg.domain.n != 2) throw ConfigError("domain.n", "complex dimension must be 1 or 2");
  const int d = 2 * cfg.domain.n;
  if (!jd.contains("shape")) throw ConfigError("domain.shape", "missing required field");
  cfg.domain.shape = broadcast<int>(jd["shape"], "domain.shape", d, get_int);
  for (int i = 0; i < d; ++i)
    if (cfg.domain.shape[i] < 8) throw ConfigError("domain.shape[" + std::to_string(i) + "]", "need at least 8 sites");
  if (jd.contains("size")) {
    cfg.domain.size = broadcast<double>(jd["size"], "domain.size", d, positive);
  } else {
    cfg.domain.size.assign(d, cfg.domain.kind == "torus" ? 2 * std::numbers::pi : 1.0);
  }

  if (!j.contains("higgs")) throw ConfigError("higgs", "missing required block");
  const json& jh = j["higgs"];
  check_keys(jh, "higgs", {"preset", "rank", "q_coeffs", "values", "path"});
  if (!jh.contains("preset")) throw ConfigError("higgs.preset", "missing required field");
  cfg.higgs.preset = get_string(jh["preset"], "higgs.preset");
  std::optional<int> rank;
  if (jh.contains("rank")) {
    rank = get_int(jh["rank"], "higgs.rank");
    if (*rank < 1 || *rank > kMaxRank) throw ConfigError("higgs.rank", "must be in [1, 16]");
  }
  if (cfg.higgs.preset == "diagonal") {
    if (!jh.contains("values")) throw ConfigError("higgs.values", "diagonal preset needs eigenvalues per direction");
    const json& jv = jh["values"];
    if (!jv.is_array() || jv.empty()) throw ConfigError("higgs.values", "expected a non-empty array");
    if (cfg.domain.n == 1 && !jv[0].is_array()) {
      cfg.higgs.values.push_back(get_complex_list(jv, "higgs.values"));
    } else {
      if (static_cast<int>(jv.size()) != cfg.domain.n)
        throw ConfigError("higgs.values", "expected one eigenvalue list per complex direction");
      for (int k = 0; k < cfg.domain.n; ++k)
        cfg.higgs.values.push_back(get_complex_list(jv[k], "higgs.values[" + std::to_string(k) + "]"));
    }
    cfg.higgs.rank = static_cast<int>(cfg.higgs.values[0].size());
    for (std::size_t k = 1; k < cfg.higgs.values.size(); ++k)
      if (static_cast<int>(cfg.higgs.values[k].size()) != cfg.higgs.rank)
        throw ConfigError("higgs.values[" + std::to_string(k) + "]", "all directions need the same rank");
    if (rank && *rank != cfg.higgs.rank) throw ConfigError("higgs.rank", "does not match the number of eigenvalues");
  } else if (cfg.higgs.preset == "hitchin-section") {
    if (rank && *rank != 2) throw ConfigError("higgs.rank", "hitchin-section is a rank-2 preset");
    cfg.higgs.rank = 2;
    cfg.higgs.q_coeffs = jh.contains("q_coeffs") ? get_complex_list(jh["q_coeffs"], "higgs.q_coeffs")
                                                 : std::vector<cd>{cd(1.0)};
  } else if (cfg.higgs.preset == "custom-dump") {
    if (!jh.contains("path")) throw ConfigError("higgs.path", "custom-dump needs a .fld path");
    cfg.higgs.path = get_string(jh["path"], "higgs.path");
    int file_rank = 0;
    try {
      io::read_form_field(cfg.higgs.path, &file_rank);
    } catch (const std::exception& e) {
      throw ConfigError("higgs.path", e.what());
    }
    if (rank && *rank != file_rank) throw ConfigError("higgs.rank", "does not match the dumped field");
    cfg.higgs.rank = file_rank;
  } else {
    throw ConfigError("higgs.preset", "unknown preset '" + cfg.higgs.preset +
                                          "' (expected diagonal, hitchin-section or custom-dump)");
  }

  const bool patch = cfg.domain.kind == "patch";
  auto& sp = cfg.solver.params;
  sp.tol = patch ? 1e-6 : 1e-8;
  if (j.contains("solver")) {
    const json& js = j["solver"];
    check_keys(js, "solver",
               {"step", "tol", "max_iter", "sl_mode", "inner_iter", "inner_rtol", "min_step", "divergence_factor",
                "initial", "perturbation", "interpolant_eps"});
    if (js.contains("step")) sp.step = positive(js["step"], "solver.step");
    if (js.contains("tol")) sp.tol = positive(js["tol"], "solver.tol");
    if (js.contains("max_iter")) sp.max_iter = get_int(js["max_iter"], "solver.max_iter");
    if (sp.max_iter < 1) throw ConfigError("solver.max_iter", "must be at least 1");
    if (js.contains("sl_mode")) sp.sl_mode = get_bool(js["sl_mode"], "solver.sl_mode");
    if (js.contains("inner_iter")) sp.inner_iter = get_int(js["inner_iter"], "solver.inner_iter");
    if (sp.inner_iter < 1) throw ConfigError("solver.inner_iter", "must be at least 1");
    if (js.contains("inner_rtol")) sp.inner_rtol = positive(js["inner_rtol"], "solver.inner_rtol");
    if (js.contains("min_step")) sp.min_step = positive(js["min_step"], "solver.min_step");
    if (js.contains("divergence_factor")) sp.divergence_factor = positive(js["divergence_factor"], "solver.divergence_factor");
    if (js.contains("initial")) cfg.solver.initial = get_string(js["initial"], "solver.initial");
    if (js.contains("perturbation")) cfg.solver.perturbation = positive(js["perturbation"], "solver.perturbation");
    if (js.contains("interpolant_eps") && !js["interpolant_eps"].is_null())
      cfg.solver.interpolant_eps = positive(js["interpolant_eps"], "solver.interpolant_eps");
  }
  const std::string& init = cfg.solver.initial;
  if (init != "auto" && init != "identity" && init != "perturbed" && init != "decoupled" && init != "interpolant")
    throw ConfigError("solver.initial", "expected auto, identity, perturbed, decoupled or interpolant");
  if ((init == "decoupled" || init == "interpolant") && cfg.higgs.preset != "hitchin-section")
    throw ConfigError("solver.initial", "'" + init + "' needs the hitchin-section preset");
  if (init == "interpolant" && !patch) throw ConfigError("solver.initial", "'interpolant' is a patch start");
  if (cfg.higgs.preset == "hitchin-section" && patch && !cfg.solver.interpolant_eps) {
    Domain dom = build_domain(cfg.domain);
    double m = 0;
    for (std::size_t s = 0; s < dom.sites(); ++s) {
      cd z = dom.z(s, 0), q = 0, zk = 1;
      for (cd c : cfg.higgs.q_coeffs) {
        q += c * zk;
        zk *= z;
      }
      m = std::max(m, std::abs(q));
    }
    cfg.solver.interpolant_eps = 0.5 * m;
  }

  auto& ex = cfg.experiment;
  if (j.contains("experiment")) {
    const json& je = j["experiment"];
    check_keys(je, "experiment",
               {"kind", "t_list", "probes", "epsilon_disc", "sl2_only", "exclusion_radius", "consistency_tol",
                "harmonic_tol", "uhlenbeck_eps0"});
    if (je.contains("kind")) ex.kind = get_string(je["kind"], "experiment.kind");
    if (je.contains("t_list")) {
      const json& jt = je["t_list"];
      if (!jt.is_array()) throw ConfigError("experiment.t_list", "expected an array");
      for (std::size_t i = 0; i < jt.size(); ++i)
        ex.t_list.push_back(positive(jt[i], "experiment.t_list[" + std::to_string(i) + "]"));
    }
    if (je.contains("probes")) {
      const json& jp = je["probes"];
      if (!jp.is_array()) throw ConfigError("experiment.probes", "expected an array of points");
      for (std::size_t i = 0; i < jp.size(); ++i) {
        const std::string p = "experiment.probes[" + std::to_string(i) + "]";
        if (!jp[i].is_array() || static_cast<int>(jp[i].size()) != d)
          throw ConfigError(p, "expected " + std::to_string(d) + " real coordinates");
        std::vector<double> pt;
        for (int a = 0; a < d; ++a) pt.push_back(get_double(jp[i][a], p));
        ex.probes.push_back(pt);
      }
    }
    if (je.contains("epsilon_disc") && !je["epsilon_disc"].is_null())
      ex.epsilon_disc = positive(je["epsilon_disc"], "experiment.epsilon_disc");
    ex.sl2_only = ex.kind == "realization";
    if (je.contains("sl2_only")) ex.sl2_only = get_bool(je["sl2_only"], "experiment.sl2_only");
    if (je.contains("exclusion_radius")) ex.exclusion_radius = get_double(je["exclusion_radius"], "experiment.exclusion_radius");
    if (ex.exclusion_radius < 0) throw ConfigError("experiment.exclusion_radius", "must be non-negative");
    if (je.contains("consistency_tol")) ex.consistency_tol = positive(je["consistency_tol"], "experiment.consistency_tol");
    if (je.contains("harmonic_tol")) ex.harmonic_tol = positive(je["harmonic_tol"], "experiment.harmonic_tol");
    if (je.contains("uhlenbeck_eps0")) ex.uhlenbeck_eps0 = positive(je["uhlenbeck_eps0"], "experiment.uhlenbeck_eps0");
  }
  if (ex.kind != "none" && ex.kind != "sweep" && ex.kind != "realization")
    throw ConfigError("experiment.kind", "expected none, sweep or realization");
  if (ex.kind != "none") {
    if (ex.t_list.size() < 4) throw ConfigError("experiment.t_list", "needs at least 4 values");
    for (std::size_t i = 1; i < ex.t_list.size(); ++i)
      if (!(ex.t_list[i] > ex.t_list[i - 1])) throw ConfigError("experiment.t_list", "must be strictly increasing");
  }
  if (ex.sl2_only && cfg.higgs.rank != 2)
    throw ConfigError("experiment.sl2_only", "the experiment is SL(2)-only but the preset has rank " +
                                                 std::to_string(cfg.higgs.rank));

  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("--config", "cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const RunConfig& cfg) {
  json values = json::array();
  for (const auto& row : cfg.higgs.values) {
    json r = json::array();
    for (cd z : row) r.push_back(complex_json(z));
    values.push_back(r);
  }
  json q = json::array();
  for (cd z : cfg.higgs.q_coeffs) q.push_back(complex_json(z));
  const auto& sp = cfg.solver.params;
  const auto& ex = cfg.experiment;
  return {
      {"domain", {{"kind", cfg.domain.kind}, {"n", cfg.domain.n}, {"shape", cfg.domain.shape}, {"size", cfg.domain.size}}},
      {"higgs",
       {{"preset", cfg.higgs.preset}, {"rank", cfg.higgs.rank}, {"q_coeffs", q}, {"values", values}, {"path", cfg.higgs.path}}},
      {"solver",
       {{"step", sp.step},
        {"tol", sp.tol},
        {"max_iter", sp.max_iter},
        {"sl_mode", sp.sl_mode},
        {"inner_iter", sp.inner_iter},
        {"inner_rtol", sp.inner_rtol},
        {"min_step", sp.min_step},
        {"divergence_factor", sp.divergence_factor},
        {"initial", cfg.solver.initial},
        {"perturbation", cfg.solver.perturbation},
        {"interpolant_eps", cfg.solver.interpolant_eps ? json(*cfg.solver.interpolant_eps) : json(nullptr)}}},
      {"experiment",
       {{"kind", ex.kind},
        {"t_list", ex.t_list},
        {"probes", ex.probes},
        {"epsilon_disc", ex.epsilon_disc ? json(*ex.epsilon_disc) : json(nullptr)},
        {"sl2_only", ex.sl2_only},
        {"exclusion_radius", ex.exclusion_radius},
        {"consistency_tol", ex.consistency_tol},
        {"harmonic_tol", ex.harmonic_tol},
        {"uhlenbeck_eps0", ex.uhlenbeck_eps0}}},
      {"seed", cfg.seed}};
}

Domain build_domain(const DomainSpec& spec) {
  return spec.kind == "torus" ? Domain::torus(spec.n, spec.shape, spec.size) : Domain::patch(spec.n, spec.shape, spec.size);
}

EndoFormField build_phi(const RunConfig& cfg, const Domain& dom) {
  const auto& hs = cfg.higgs;
  if (hs.preset == "custom-dump") {
    int rank = 0;
    FormField f = io::read_form_field(hs.path, &rank);
    if (f.p() != 1 || f.q() != 0 || f.fibre() != rank * rank) throw ConfigError("higgs.path", "expected a (1,0) End(E)-valued field");
    if (!f.domain().same_as(dom)) throw ConfigError("higgs.path", "field domain differs from the configured domain");
    return EndoFormField(std::move(f), rank);
  }
  EndoFormField phi(dom, hs.rank, 1, 0);
  const auto& b = phi.basis();
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    if (hs.preset == "diagonal") {
      for (int j = 0; j < dom.complex_dim(); ++j)
        for (int i = 0; i < hs.rank; ++i) phi.at(s, b.index(1u << j, 0u))(i, i) = hs.values[j][i];
    } else {
      cd z = dom.z(s, 0), q = 0, zk = 1;
      for (cd c : hs.q_coeffs) {
        q += c * zk;
        zk *= z;
      }
      auto m = phi.at(s, b.index(1u, 0u));
      m(0, 1) = 1.0;
      m(1, 0) = q;
    }
  }
  return phi;
}

HermitianMetricField perturbed_metric(const Domain& dom, int rank, double amplitude, std::uint64_t seed) {
  CounterRng rng(seed, 11);
  auto s = smooth_hermitian(dom, rank, amplitude, rng);
  HermitianMetricField H(dom, rank, true);
  for (std::size_t i = 0; i < dom.sites(); ++i) {
    Mat h = herm_exp(s[i]);
    H.at(i) = 0.5 * (h + h.adjoint());
  }
  return H;
}

HermitianMetricField build_initial_metric(const RunConfig& cfg, const EndoFormField& phi) {
  const Domain& dom = phi.domain();
  std::string init = cfg.solver.initial;
  if (init == "auto")
    init = !dom.periodic() && cfg.higgs.preset == "hitchin-section" ? "interpolant" : "identity";
  HermitianMetricField H;
  if (init == "identity") {
    H = HermitianMetricField(dom, phi.rank(), cfg.solver.params.sl_mode);
  } else if (init == "perturbed") {
    H = perturbed_metric(dom, phi.rank(), cfg.solver.perturbation, cfg.seed);
  } else if (init == "decoupled") {
    H = limits::decoupled_metric(phi);
  } else {
    H = limits::patch_start_metric(phi, cfg.solver.interpolant_eps.value_or(0.5));
  }
  H.set_sl_mode(cfg.solver.params.sl_mode);
  return H;
}

// ---------------------------------------------------------------------------------------------

json checks_to_json(const std::vector<Check>& checks) {
  json out = json::array();
  for (const auto& c : checks) out.push_back({{"name", c.name}, {"value", c.value}, {"tol", c.tol}, {"pass", c.pass}});
  return out;
}

std::vector<Check> identity_suite(const Domain& dom, std::uint64_t seed) {
  using namespace lattice;
  std::vector<Check> out;
  auto add = [&](std::string name, double v, double tol) { out.push_back({std::move(name), v, tol, v <= tol}); };
  const int n = dom.complex_dim();
  const std::string tag = "n" + std::to_string(n) + ".";
  CounterRng rng(seed, 21);

  FormField f10 = smooth_form(dom, 1, 0, rng), f11 = smooth_form(dom, 1, 1, rng), f01 = smooth_form(dom, 0, 1, rng);
  add(tag + "kahler.del_star(1,0)", kahler_identity_residual(f10) / l2_norm(f10), 1e-10);
  add(tag + "kahler.del_star(1,1)", kahler_identity_residual(f11) / l2_norm(f11), 1e-10);
  add(tag + "kahler.dbar_star(0,1)", kahler_identity_residual_conjugate(f01) / l2_norm(f01), 1e-10);
  add(tag + "kahler.dbar_star(1,1)", kahler_identity_residual_conjugate(f11) / l2_norm(f11), 1e-10);

  FormField lw = lambda(kaehler_form(dom));
  double lw_err = 0;
  for (std::size_t s = 0; s < dom.sites(); ++s) lw_err = std::max(lw_err, std::abs(lw(s, 0) - cd(n)));
  add(tag + "lambda_omega_equals_n", lw_err, 0.0);

  // Lambda(alpha) vol = alpha ^ omega^{n-1} / (n-1)!
  FormField pw = scalar_field(dom);
  for (std::size_t s = 0; s < dom.sites(); ++s) pw(s, 0) = 1.0;
  double fact = 1;
  for (int k = 1; k < n; ++k) {
    pw = wedge(pw, kaehler_form(dom));
    fact *= k;
  }
  FormField top = wedge(f11, pw);
  FormField la = lambda(f11);
  const cd vf = top_form_volume_factor(n) / fact;
  double lef = 0;
  for (std::size_t s = 0; s < dom.sites(); ++s) lef = std::max(lef, std::abs(top(s, 0) * vf - la(s, 0)));
  add(tag + "lefschetz_pairing", lef, 1e-10);

  if (n >= 2) {
    FormField f00 = smooth_form(dom, 0, 0, rng);
    add(tag + "dbar_squared(0,0)", dbar(dbar(f00)).max_abs(), 1e-12);
    add(tag + "dbar_squared(1,0)", dbar(dbar(f10)).max_abs(), 1e-12);
    add(tag + "del_squared(0,0)", del(del(f00)).max_abs(), 1e-12);
    add(tag + "del_squared(0,1)", del(del(f01)).max_abs(), 1e-12);
  }
  return out;
}

std::vector<Check> gauge_suite(const EndoFormField& phi, const HermitianMetricField& H, std::uint64_t seed, double tol) {
  const Domain& dom = phi.domain();
  const int r = phi.rank();
  CounterRng rng(seed, 31);
  auto herm = smooth_hermitian(dom, r, 0.4, rng);
  EndoFormField g(dom, r, 0, 0);
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    // u = exp(i s) is unitary for the identity; G^{-1} u G is unitary for H.
    auto f = higgs::metric_frame(H.at(s));
    Eigen::SelfAdjointEigenSolver<Mat> es(herm[s]);
    Eigen::Matrix<cd, Eigen::Dynamic, 1> ph = (cd(0, 1) * es.eigenvalues().cast<cd>()).array().exp();
    Mat u = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
    g.at(s, 0) = f.Ginv * u * f.G;
  }
  auto tr = solver::complex_gauge_act(g, EndoFormField(), phi, H);
  auto r0 = solver::hs_residual(H, phi);
  auto r1 = solver::hs_residual(tr.H, tr.phi, tr.beta);
  std::vector<Check> out;
  auto add = [&](std::string name, double v) { out.push_back({std::move(name), v, tol, v <= tol}); };
  add("gauge.momentmap", max_abs_diff(r0.momentmap, r1.momentmap));
  add("gauge.holomorphy", max_abs_diff(r0.holomorphy, r1.holomorphy));
  add("gauge.integrability", max_abs_diff(r0.integrability, r1.integrability));
  auto f0 = higgs::pointwise_norm(H, solver::curvature(solver::chern_connection(H)));
  auto f1 = higgs::pointwise_norm(tr.H, solver::curvature(solver::chern_connection(tr.H, tr.beta)));
  add("gauge.curvature_norm", max_abs_diff(f0, f1));
  add("gauge.phi_norm", max_abs_diff(higgs::pointwise_norm(H, phi), higgs::pointwise_norm(tr.H, tr.phi)));
  if (dom.complex_dim() >= 2)
    add("gauge.wedge_square_norm", max_abs_diff(higgs::pointwise_norm(H, higgs::wedge_square(phi)),
                                                higgs::pointwise_norm(tr.H, higgs::wedge_square(tr.phi))));
  return out;
}

// ---------------------------------------------------------------------------------------------

json RunManifest::to_json() const {
  json st = json::array();
  for (const auto& s : stages)
    st.push_back({{"name", s.name}, {"status", s.status}, {"message", s.message}, {"wall_time", s.wall_time}});
  json fl = json::array();
  for (const auto& f : files) fl.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return {{"command", command}, {"config_hash", config_hash}, {"tool_version", tool_version},
          {"stages", st},       {"files", fl},                {"exit_code", exit_code}};
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return sha256_hex(ss.str());
}

std::string tool_version() { return HITCHIN_VERSION; }

RunManifest run_solve(const RunConfig& cfg, const std::string& out_dir) {
  const json cj = config_to_json(cfg);
  RunContext ctx("solve", out_dir, cj);
  ctx.text("config.json", dump(cj));
  Domain dom;
  EndoFormField phi;
  HermitianMetricField H0;
  solver::SolveResult res;
  ctx.stage("setup", [&] {
    dom = build_domain(cfg.domain);
    phi = build_phi(cfg, dom);
    H0 = build_initial_metric(cfg, phi);
  });
  bool solved = ctx.stage("solve", [&] {
    try {
      res = solver::solve_metric(phi, H0, cfg.solver.params);
    } catch (const solver::DivergenceError& e) {
      res.report = e.report();
      throw;
    }
  });
  std::ostringstream csv;
  csv << "iteration,residual_l2,residual_linf,step\n";
  for (std::size_t i = 0; i < res.report.residual_l2.size(); ++i)
    csv << i << ',' << fmt(res.report.residual_l2[i]) << ',' << fmt(res.report.residual_linf[i]) << ','
        << fmt(i == 0 || i - 1 >= res.report.step_sizes.size() ? 0.0 : res.report.step_sizes[i - 1]) << '\n';
  ctx.text("residuals.csv", csv.str());
  if (solved) {
    ctx.stage("diagnostics", [&] {
      auto hs = solver::hs_residual(res.H, phi);
      auto w = solver::weitzenbock(res.H, phi);
      json rep = {{"kind", "solve"},
                  {"solve", solve_report_json(res.report)},
                  {"momentmap_l2", hs.momentmap_norms.l2},
                  {"momentmap_linf", hs.momentmap_norms.linf},
                  {"holomorphy_max", hs.holomorphy_max},
                  {"integrability_max", hs.integrability_max},
                  {"det_deviation", res.H.max_det_deviation()},
                  {"weitzenbock_residual_l1", w.residual_l1},
                  {"weitzenbock_integrated", w.integrated},
                  {"phi_norm_sq", w.phi_norm_sq},
                  {"metric_file", "H.fld"},
                  {"t", 1.0}};
      ctx.text("report.json", dump(rep));
      if (ctx.writing()) {
        write_metric(ctx.dir() / "H.fld", res.H);
        ctx.add("H.fld");
        io::write_form_field((ctx.dir() / "phi.fld").string(), phi.form(), "endo", phi.rank());
        ctx.add("phi.fld");
      }
    });
  } else {
    ctx.text("report.json", dump({{"kind", "solve"}, {"solve", solve_report_json(res.report)}}));
  }
  return ctx.finish();
}

RunManifest run_sweep(const RunConfig& cfg, const std::string& out_dir) {
  const auto& ex = cfg.experiment;
  if (ex.kind != "sweep" && ex.kind != "realization")
    throw ConfigError("experiment.kind", "the sweep command needs experiment.kind = sweep or realization");
  const json cj = config_to_json(cfg);
  RunContext ctx("sweep", out_dir, cj);
  ctx.text("config.json", dump(cj));

  Domain dom;
  EndoFormField phi;
  limits::RealizationOptions ro;
  ctx.stage("setup", [&] {
    dom = build_domain(cfg.domain);
    phi = build_phi(cfg, dom);
    ro.sweep.solver = cfg.solver.params;
    ro.sweep.probes = ex.probes;
    ro.sweep.epsilon_disc = ex.epsilon_disc;
    ro.sweep.initial = build_initial_metric(cfg, phi);
    ro.exclusion_radius = ex.exclusion_radius;
    ro.consistency_tol = ex.consistency_tol;
    ro.harmonic_tol = ex.harmonic_tol;
  });

  std::vector<limits::SweepRecord> sweep;
  std::optional<limits::RealizationReport> real;
  bool ok = ctx.stage(ex.kind, [&] {
    if (ex.kind == "realization") {
      real = limits::realization_experiment(phi, ex.t_list, ro);
      sweep = real->sweep;
    } else {
      sweep = limits::scaling_sweep(phi, ex.t_list, ro.sweep);
    }
  });
  if (!ok) {
    ctx.text("report.json", dump({{"kind", "sweep"}, {"status", "failed"}}));
    return ctx.finish();
  }

  ctx.stage("diagnostics", [&] {
    json rep = {{"kind", "sweep"}, {"experiment", ex.kind}, {"t_list", ex.t_list}};
    json recs = json::array();
    std::ostringstream res_csv, sw_csv;
    res_csv << "t,iteration,residual_l2,residual_linf,step\n";
    sw_csv << "t,r_t,r_t_metric,comm_sup,wedge_sq_int,dA_phi_int,sup_ratio,norm_chain_upper,norm_chain_lower,kappa_drift";
    for (std::size_t i = 0; i < ex.probes.size(); ++i)
      sw_csv << ",probe" << i << "_comm_sup,probe" << i << "_ilf_sup,probe" << i << "_dstar_f_sup";
    sw_csv << '\n';
    for (const auto& rec : sweep) {
      double drift = 0;
      for (std::size_t k = 0; k < rec.kappa.p.size(); ++k) drift = std::max(drift, sym_diff(rec.kappa.p[k], sweep.front().kappa.p[k]));
      const std::string hf = "H_t" + t_label(rec.t) + ".fld";
      json probes = json::array();
      for (const auto& p : rec.probes) probes.push_back(probe_json(p));
      recs.push_back({{"t", rec.t},
                      {"r_t", rec.r_t},
                      {"r_t_metric", rec.r_t_metric},
                      {"comm_sup", rec.comm_sup},
                      {"wedge_sq_int", rec.wedge_sq_int},
                      {"dA_phi_int", rec.dA_phi_int},
                      {"sup_ratio", rec.sup_ratio},
                      {"norm_chain_upper", rec.norm_chain_upper},
                      {"norm_chain_lower", rec.norm_chain_lower},
                      {"kappa_drift", drift},
                      {"probes", probes},
                      {"solve", solve_report_json(rec.report)},
                      {"metric_file", hf}});
      const auto& r = rec.report;
      for (std::size_t i = 0; i < r.residual_l2.size(); ++i)
        res_csv << fmt(rec.t) << ',' << i << ',' << fmt(r.residual_l2[i]) << ',' << fmt(r.residual_linf[i]) << ','
                << fmt(i == 0 || i - 1 >= r.step_sizes.size() ? 0.0 : r.step_sizes[i - 1]) << '\n';
      sw_csv << fmt(rec.t) << ',' << fmt(rec.r_t) << ',' << fmt(rec.r_t_metric) << ',' << fmt(rec.comm_sup) << ','
             << fmt(rec.wedge_sq_int) << ',' << fmt(rec.dA_phi_int) << ',' << fmt(rec.sup_ratio) << ','
             << fmt(rec.norm_chain_upper) << ',' << fmt(rec.norm_chain_lower) << ',' << fmt(drift);
      for (const auto& p : rec.probes) sw_csv << ',' << fmt(p.comm_sup) << ',' << fmt(p.ilf_sup) << ',' << fmt(p.dstar_f_sup);
      sw_csv << '\n';
      if (ctx.writing()) {
        write_metric(ctx.dir() / hf, rec.H);
        ctx.add(hf);
      }
    }
    rep["records"] = recs;

    if (!ex.probes.empty()) {
      json fits = json::array();
      auto df = limits::decay_fit(sweep);
      for (std::size_t i = 0; i < df.size(); ++i) {
        bool monotone = true;
        for (std::size_t k = 1; k < sweep.size(); ++k)
          monotone = monotone && sweep[k].probes[i].comm_sup < sweep[k - 1].probes[i].comm_sup;
        fits.push_back({{"probe", i},
                        {"slope", df[i].slope},
                        {"intercept", df[i].intercept},
                        {"r2", df[i].r2},
                        {"points_used", df[i].points_used},
                        {"floored", df[i].floored},
                        {"degenerate", df[i].degenerate},
                        {"gap", df[i].gap},
                        {"slope_over_gap", df[i].slope_over_gap},
                        {"strictly_decreasing", monotone}});
      }
      rep["decay_fits"] = fits;
    }

    const auto& last = sweep.back();
    auto F = solver::curvature(solver::chern_connection(last.H));
    auto uh = limits::uhlenbeck_radius_field(F, last.H, ex.uhlenbeck_eps0);
    double rmin = uh.r_max;
    for (std::size_t s = 0; s < dom.sites(); ++s) rmin = std::min(rmin, uh.radius(s, 0).real());
    rep["uhlenbeck"] = {{"eps0", ex.uhlenbeck_eps0}, {"r_max", uh.r_max}, {"min_radius", rmin}, {"note", uh.note}};

    if (real) {
      json adi = json::array();
      for (const auto& a : real->adiabatic) adi.push_back(a.as_vector());
      rep["adiabatic_residuals"] = adi;
      rep["adiabatic_columns"] = {"ilf", "commutator", "del", "dbar", "wedge", "norm_defect"};
      json z = z2_json(real->z2, real->harmonicity, real->cocycle_defects, real->monodromy, real->consistency,
                       real->sigma_norm_error);
      z["det_drift"] = real->det_drift;
      z["branch"] = real->branch;
      z["pass"] = real->pass;
      z["failed_check"] = real->failed_check;
      rep["realization"] = z;
      write_z2_fields(ctx, real->z2);
    }
    ctx.text("report.json", dump(rep));
    ctx.text("residuals.csv", res_csv.str());
    ctx.text("sweep.csv", sw_csv.str());
    if (ctx.writing()) {
      io::write_form_field((ctx.dir() / "phi.fld").string(), phi.form(), "endo", phi.rank());
      ctx.add("phi.fld");
      auto kappa = last.kappa;
      higgs::export_spectral_data((ctx.dir() / "spectral").string(), kappa);
      for (const auto& e : fs::directory_iterator(ctx.dir() / "spectral"))
        if (e.path().extension() == ".json" || e.path().extension() == ".fld")
          ctx.add("spectral/" + e.path().filename().string());
    }
  });
  if (real && !real->pass) ctx.fail("realization_checks", "failed check: " + real->failed_check);
  return ctx.finish();
}

RunManifest run_extract_z2(const std::string& run_dir, const std::string& out_dir) {
  std::string problem;
  if (!verify_manifest(run_dir, &problem)) throw ConfigError("--run", problem);
  RunConfig cfg = parse_config((fs::path(run_dir) / "config.json").string());
  json rj;
  {
    std::ifstream is(fs::path(run_dir) / "report.json");
    rj = json::parse(is);
  }
  std::string hfile;
  double t = 1;
  if (rj.value("kind", "") == "solve") {
    hfile = rj.value("metric_file", "");
  } else if (rj.contains("records") && !rj["records"].empty()) {
    hfile = rj["records"].back().value("metric_file", "");
    t = rj["records"].back().value("t", 1.0);
  }
  if (hfile.empty()) throw ConfigError("--run", "run directory has no converged metric");

  const json cj = config_to_json(cfg);
  RunContext ctx("extract-z2", out_dir, cj);
  ctx.stage("extract", [&] {
    HermitianMetricField H = read_metric(fs::path(run_dir) / hfile);
    int rank = 0;
    FormField pf = io::read_form_field((fs::path(run_dir) / "phi.fld").string(), &rank);
    EndoFormField phi(std::move(pf), rank);
    if (rank != 2) throw ConfigError("--run", "Z2 extraction needs a rank-2 run");
    EndoFormField phi_t = cd(t) * phi;
    const double r = higgs::l2_norm(phi_t);
    if (!(r > 0)) throw NormalizationError("zero Higgs field");
    EndoFormField phi_hat = cd(1.0 / r) * phi_t;
    auto kappa = higgs::hitchin_map(phi_hat);
    higgs::attach_discriminant(kappa, higgs::discriminant(kappa, cfg.experiment.epsilon_disc));
    auto w = limits::extract_z2(kappa, phi_hat, H);
    auto h = limits::z2_harmonicity_residual(w, cfg.experiment.exclusion_radius);
    double sig = 0;
    for (std::size_t s = 0; s < w.domain.sites(); ++s)
      if (!w.z_mask[s]) sig = std::max(sig, std::abs(higgs::h_norm(w.sigma.at(s, 0), H.at(s)) - 1.0));
    json rep = z2_json(w, h, limits::cocycle_defects(w), limits::z_monodromies(w), limits::z2_consistency(w, kappa.p[1]), sig);
    rep["kind"] = "extract-z2";
    rep["t"] = t;
    rep["source_metric"] = hfile;
    ctx.text("z2.json", dump(rep));
    write_z2_fields(ctx, w);
  });
  return ctx.finish();
}

RunManifest run_check_identities(const RunConfig& cfg, const std::string& out_dir) {
  const json cj = config_to_json(cfg);
  RunContext ctx("check-identities", out_dir, cj);
  json rep = {{"kind", "check-identities"}};
  bool all = true;
  ctx.stage("identities", [&] {
    Domain dom = build_domain(cfg.domain);
    auto ids = identity_suite(dom, cfg.seed);
    EndoFormField phi = build_phi(cfg, dom);
    HermitianMetricField H = perturbed_metric(dom, phi.rank(), 0.3, cfg.seed);
    auto gs = gauge_suite(phi, H, cfg.seed);
    ids.insert(ids.end(), gs.begin(), gs.end());
    for (const auto& c : ids) all = all && c.pass;
    rep["checks"] = checks_to_json(ids);
    rep["pass"] = all;
  });
  ctx.text("identities.json", dump(rep));
  if (!all) ctx.fail("verdict", "identity checks failed");
  RunManifest m = ctx.finish();
  if (!ctx.writing()) std::fputs(dump(rep).c_str(), stdout);
  return m;
}

RunManifest run_matrix_lemmas(int rank, std::size_t samples, std::uint64_t seed, const std::string& out_dir) {
  const json cj = {{"rank", rank}, {"samples", samples}, {"seed", seed}};
  RunContext ctx("matrix-lemmas", out_dir, cj);
  json rep;
  ctx.stage("sample", [&] {
    auto r = higgs::run_lemma_suite(rank, samples, seed);
    rep = {{"kind", "matrix-lemmas"},
           {"rank", r.rank},
           {"samples", r.samples},
           {"seed", r.seed},
           {"eigen_ratio_max", r.eigen_ratio_max},
           {"eigen_violations", r.eigen_violations},
           {"gap_ratio_min", r.gap_ratio_min},
           {"gap_ratio_sentinels", r.gap_ratio_sentinels},
           {"planted_rejections", r.planted_rejections},
           {"chi_max", r.chi_max},
           {"bracket_ratio_min", r.bracket_ratio_min},
           {"pi_identity_error", r.pi_identity_error}};
  });
  ctx.text("lemmas.json", dump(rep));
  RunManifest m = ctx.finish();
  if (!ctx.writing()) std::fputs(dump(rep).c_str(), stdout);
  return m;
}

bool verify_manifest(const std::string& out_dir, std::string* problem) {
  auto say = [&](const std::string& s) {
    if (problem) *problem = s;
    return false;
  };
  fs::path mp = fs::path(out_dir) / "manifest.json";
  if (!fs::exists(mp)) return say("no manifest.json in " + out_dir + " (incomplete run?)");
  json m;
  try {
    std::ifstream is(mp);
    m = json::parse(is);
  } catch (const std::exception& e) {
    return say(std::string("unreadable manifest: ") + e.what());
  }
  for (const auto& f : m.at("files")) {
    fs::path p = fs::path(out_dir) / f.at("path").get<std::string>();
    if (!fs::exists(p)) return say("missing artifact " + p.string());
    if (sha256_file(p.string()) != f.at("sha256").get<std::string>()) return say("checksum mismatch for " + p.string());
  }
  return true;
}

}  // namespace hitchin::cli
