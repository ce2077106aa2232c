#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "hitchin/cli.hpp"

using namespace hitchin;
using namespace hitchin::cli;
namespace fs = std::filesystem;

namespace {

json minimal_torus() {
  return json::parse(R"({"domain": {"kind": "torus", "shape": 16}, "higgs": {"preset": "diagonal", "values": [1, -1]}})");
}

std::string error_path(const json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("hitchin_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, MinimalTorusMaterialisesDefaults) {
  auto cfg = config_from_json(minimal_torus());
  EXPECT_EQ(cfg.domain.n, 1);
  EXPECT_EQ(cfg.domain.shape, (std::vector<int>{16, 16}));
  EXPECT_NEAR(cfg.domain.size[0], 2 * std::numbers::pi, 1e-15);
  EXPECT_EQ(cfg.higgs.rank, 2);
  EXPECT_EQ(cfg.solver.params.tol, 1e-8);
  EXPECT_EQ(cfg.solver.params.max_iter, 500);
  EXPECT_EQ(cfg.experiment.kind, "none");
  json out = config_to_json(cfg);
  for (const char* k : {"step", "tol", "max_iter", "sl_mode", "initial", "perturbation", "interpolant_eps"})
    EXPECT_TRUE(out["solver"].contains(k)) << k;
  EXPECT_EQ(config_to_json(config_from_json(out)), out);
}

TEST(Config, PatchRelaxesTheTolerance) {
  json j = json::parse(R"({"domain": {"kind": "patch", "shape": 16, "size": 0.6},
                           "higgs": {"preset": "hitchin-section", "q_coeffs": [0, 1]}})");
  auto cfg = config_from_json(j);
  EXPECT_EQ(cfg.solver.params.tol, 1e-6);
  ASSERT_TRUE(cfg.solver.interpolant_eps.has_value());
  EXPECT_NEAR(*cfg.solver.interpolant_eps, 0.5 * 0.6 * std::sqrt(2.0), 0.05);
}

TEST(Config, NonIncreasingScaleListNamesTheField) {
  json j = minimal_torus();
  j["experiment"] = {{"kind", "sweep"}, {"t_list", {1, 2, 2, 4}}};
  EXPECT_EQ(error_path(j), "experiment.t_list");
  j["experiment"]["t_list"] = {1, 2, 4};
  EXPECT_EQ(error_path(j), "experiment.t_list");
}

TEST(Config, RankThreeUnderSl2ExperimentIsRejected) {
  json j = json::parse(R"({"domain": {"kind": "torus", "shape": 16},
                           "higgs": {"preset": "diagonal", "values": [1, 2, -3]},
                           "experiment": {"kind": "realization", "t_list": [1, 2, 4, 8]}})");
  EXPECT_EQ(error_path(j), "experiment.sl2_only");
}

TEST(Config, SchemaViolationsCarryFieldPaths) {
  json j = minimal_torus();
  j["solver"] = {{"tolerance", 1e-6}};
  EXPECT_EQ(error_path(j), "solver.tolerance");
  j = minimal_torus();
  j["higgs"]["preset"] = "monopole";
  EXPECT_EQ(error_path(j), "higgs.preset");
  j = minimal_torus();
  j["domain"]["shape"] = {16, 4};
  EXPECT_EQ(error_path(j), "domain.shape[1]");
  j = minimal_torus();
  j["higgs"]["rank"] = 3;
  EXPECT_EQ(error_path(j), "higgs.rank");
  j = minimal_torus();
  j["experiment"] = {{"kind", "sweep"}, {"t_list", {1, 2, 4, 8}}, {"probes", {{0.1}}}};
  EXPECT_EQ(error_path(j), "experiment.probes[0]");
}

TEST(Config, MissingFileAndBadJson) {
  EXPECT_THROW(parse_config("/nonexistent/config.json"), ConfigError);
  fs::path p = scratch("bad.json");
  std::ofstream(p) << "{\"domain\": ";
  EXPECT_THROW(parse_config(p.string()), ConfigError);
}

TEST(Run, SolveListsEveryArtifactAndVerifies) {
  auto cfg = config_from_json(minimal_torus());
  fs::path out = scratch("solve");
  auto m = run_solve(cfg, out.string());
  EXPECT_EQ(m.exit_code, 0);
  std::set<std::string> listed;
  for (const auto& f : m.files) listed.insert(f.path);
  for (const char* f : {"config.json", "report.json", "residuals.csv", "H.fld", "phi.fld"}) EXPECT_TRUE(listed.count(f)) << f;
  for (const auto& e : fs::directory_iterator(out))
    if (e.path().filename() != "manifest.json") EXPECT_TRUE(listed.count(e.path().filename().string())) << e.path();
  std::string why;
  EXPECT_TRUE(verify_manifest(out.string(), &why)) << why;
  EXPECT_EQ(slurp(out / "residuals.csv").substr(0, 41), "iteration,residual_l2,residual_linf,step\n");

  std::ofstream(out / "report.json", std::ios::app) << " ";
  EXPECT_FALSE(verify_manifest(out.string(), &why));
  EXPECT_NE(why.find("report.json"), std::string::npos);
}

TEST(Run, SweepInventoryAndDeterminism) {
  json j = json::parse(R"({"domain": {"kind": "patch", "shape": 16, "size": 0.6},
                           "higgs": {"preset": "hitchin-section", "q_coeffs": [0, 1]},
                           "experiment": {"kind": "sweep", "t_list": [1, 2, 4, 8], "probes": [[0.3, 0]]}})");
  auto cfg = config_from_json(j);
  fs::path a = scratch("sweep_a"), b = scratch("sweep_b");
  auto ma = run_sweep(cfg, a.string());
  auto mb = run_sweep(cfg, b.string());
  EXPECT_EQ(ma.exit_code, 0);
  std::set<std::string> listed;
  for (const auto& f : ma.files) listed.insert(f.path);
  for (const char* f : {"report.json", "residuals.csv", "sweep.csv", "H_t1.fld", "H_t2.fld", "H_t4.fld", "H_t8.fld"})
    EXPECT_TRUE(listed.count(f)) << f;
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
  ASSERT_EQ(ma.files.size(), mb.files.size());
  for (std::size_t i = 0; i < ma.files.size(); ++i) EXPECT_EQ(ma.files[i].sha256, mb.files[i].sha256) << ma.files[i].path;
  EXPECT_EQ(ma.config_hash, mb.config_hash);

  fs::path z = scratch("z2");
  auto mz = run_extract_z2(a.string(), z.string());
  EXPECT_EQ(mz.exit_code, 0);
  json rep = json::parse(slurp(z / "z2.json"));
  ASSERT_EQ(rep["monodromy"].size(), 1u);
  EXPECT_EQ(rep["monodromy"][0]["monodromy"], -1);
}

TEST(Run, ExtractRefusesAnIncompleteRun) {
  fs::path out = scratch("incomplete");
  fs::create_directories(out);
  EXPECT_THROW(run_extract_z2(out.string(), scratch("incomplete_out").string()), ConfigError);
}

TEST(Run, CheckIdentitiesPassesOnTorus) {
  json j = minimal_torus();
  j["domain"]["shape"] = 64;
  auto cfg = config_from_json(j);
  fs::path out = scratch("ids");
  auto m = run_check_identities(cfg, out.string());
  EXPECT_EQ(m.exit_code, 0);
  json rep = json::parse(slurp(out / "identities.json"));
  EXPECT_TRUE(rep["pass"].get<bool>());
}

TEST(Manifest, Sha256MatchesKnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
