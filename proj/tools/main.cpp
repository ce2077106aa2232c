#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "hitchin/cli.hpp"

namespace cli = hitchin::cli;

namespace {

int finish(const cli::RunManifest& m) {
  for (const auto& s : m.stages)
    if (s.status != "ok") std::fprintf(stderr, "stage %s failed: %s\n", s.name.c_str(), s.message.c_str());
  return m.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lattice Hitchin-Simpson solver and limit diagnostics"};
  app.set_version_flag("--version", cli::tool_version());
  app.require_subcommand(1);

  std::string config, out, run;
  std::size_t samples = 1000000;
  int rank = 2;
  std::uint64_t seed = 0;

  auto* solve = app.add_subcommand("solve", "Solve for the metric at a fixed Higgs field");
  solve->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  solve->add_option("--out", out, "Run directory; created if missing")->required();

  auto* sweep = app.add_subcommand("sweep", "Scaling sweep t*phi (experiment.kind = sweep or realization)");
  sweep->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "Run directory; created if missing")->required();

  auto* z2 = app.add_subcommand("extract-z2", "Read off the Z2 1-form from a finished solve or sweep run");
  z2->add_option("--run", run, "Directory of a completed run (its manifest is verified)")->required()->check(CLI::ExistingDirectory);
  z2->add_option("--out", out, "Output directory")->required();

  auto* ids = app.add_subcommand("check-identities", "Kaehler identities, Lefschetz pairing and gauge invariance");
  ids->add_option("--config", config, "Configuration giving the domain, the Higgs field and the seed")->required()->check(CLI::ExistingFile);
  ids->add_option("--out", out, "Optional output directory; the report goes to stdout otherwise");

  auto* lem = app.add_subcommand("matrix-lemmas", "Random-matrix checks of the pointwise commutator and projection bounds");
  lem->add_option("--samples", samples, "Number of random samples")->capture_default_str()->check(CLI::PositiveNumber);
  lem->add_option("--rank", rank, "Matrix rank")->capture_default_str()->check(CLI::Range(2, 16));
  lem->add_option("--seed", seed, "Counter-based generator seed")->capture_default_str();
  lem->add_option("--out", out, "Optional output directory; the report goes to stdout otherwise");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*solve) return finish(cli::run_solve(cli::parse_config(config), out));
    if (*sweep) return finish(cli::run_sweep(cli::parse_config(config), out));
    if (*z2) return finish(cli::run_extract_z2(run, out));
    if (*ids) return finish(cli::run_check_identities(cli::parse_config(config), out));
    if (*lem) return finish(cli::run_matrix_lemmas(rank, samples, seed, out));
  } catch (const cli::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const hitchin::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
