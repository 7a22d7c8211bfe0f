// gabor-adapt: command-line driver for the Gabor basis learning pipeline.

#include "gabor_adapt/cli.hpp"
#include "gabor_adapt/errors.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace gabor_adapt;

namespace {

std::string absolute(const std::string& p) { return fs::weakly_canonical(fs::absolute(p)).string(); }

void print_summary(const cli::RunManifest& m, const fs::path& out) {
  std::cout << m.command << ": wrote " << m.outputs.size() << " files to " << out.string() << "\n";
  for (const auto& o : m.outputs) std::cout << "  " << o.path << "  " << o.digest << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn, generate, benchmark and probe adaptive Gabor bases"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  app.add_option("--seed", seed, "Base random seed")->capture_default_str();
  app.add_option("--config", config_path, "Key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Config override key=value (repeatable)");
  app.add_option("--out", out, "Output directory");

  std::string corpus, patches, init, variant, fit, manifest;
  std::vector<std::string> bases, lambdas;
  bool swap = false;
  int iterations = -1;

  auto* pre = app.add_subcommand("preprocess", "Whiten a corpus and write training and test patch caches");
  pre->add_option("corpus", corpus, "Directory of PGM/PPM/PNG images")->required();

  auto* learn = app.add_subcommand("learn", "Adapt Gabor parameters to a patch cache");
  learn->add_option("patches", patches, "Patch cache")->required()->check(CLI::ExistingFile);
  learn->add_option("--init", init, "Initial basis CSV (default: uniform draw)")->check(CLI::ExistingFile);
  learn->add_flag("--swap-rates", swap, "Exchange the sigma_x and sigma_y learning rates");
  learn->add_option("--iterations", iterations, "Override the iteration count");

  auto* bench = app.add_subcommand("bench", "Reconstruction error against sparseness over a lambda sweep");
  bench->add_option("patches", patches, "Held-out patch cache")->required()->check(CLI::ExistingFile);
  bench->add_option("--basis", bases, "Basis CSV (repeatable)")->required();
  bench->add_option("--lambdas", lambdas, "Fixed lambda list instead of the adaptive sweep");

  auto* gen = app.add_subcommand("generate", "Sample a basis from a generative model");
  gen->add_option("variant", variant, "model1, model2, model3 or uniform")->required();
  gen->add_option("--fit", fit, "Fit report JSON (default: built-in model parameters)")->check(CLI::ExistingFile);

  auto* fitc = app.add_subcommand("fit", "Fit marginals and correlations to a learned basis");
  fitc->add_option("basis", init, "Basis CSV")->required()->check(CLI::ExistingFile);

  auto* probe = app.add_subcommand("probe", "Run the unconstrained learner from a basis and report drift");
  probe->add_option("basis", init, "Basis CSV")->required()->check(CLI::ExistingFile);
  probe->add_option("patches", patches, "Patch cache")->required()->check(CLI::ExistingFile);
  probe->add_option("--iterations", iterations, "Override the iteration count");

  auto* rep = app.add_subcommand("replay", "Rerun a command from its manifest and compare outputs");
  rep->add_option("manifest", manifest, "manifest.json")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (rep->parsed()) {
      fs::path target = out.empty() ? fs::path(manifest).parent_path() / "replay" : fs::path(out);
      auto res = cli::replay(manifest, target);
      print_summary(res.replayed, target);
      if (!res.identical()) {
        for (const auto& m : res.mismatched) std::cerr << "mismatch: " << m << "\n";
        return 3;
      }
      std::cout << "replay identical\n";
      return 0;
    }

    cli::Invocation inv;
    inv.seed = seed;
    if (!config_path.empty()) inv.config = cli::load_config(config_path);
    for (const auto& kv : overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      inv.config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (out.empty()) throw ArgumentError("--out is required");
    inv.out = out;

    if (pre->parsed()) {
      inv.command = "preprocess";
      inv.args["corpus"] = {absolute(corpus)};
    } else if (learn->parsed()) {
      inv.command = "learn";
      inv.args["patches"] = {absolute(patches)};
      if (!init.empty()) inv.args["init"] = {absolute(init)};
      if (swap) inv.config.swap_rates = true;
      if (iterations >= 0) inv.config.learning.iterations = iterations;
    } else if (bench->parsed()) {
      inv.command = "bench";
      inv.args["patches"] = {absolute(patches)};
      for (const auto& b : bases) inv.args["basis"].push_back(absolute(b));
      if (!lambdas.empty()) inv.args["lambdas"] = lambdas;
    } else if (gen->parsed()) {
      inv.command = "generate";
      inv.args["variant"] = {variant};
      if (!fit.empty()) inv.args["fit"] = {absolute(fit)};
    } else if (fitc->parsed()) {
      inv.command = "fit";
      inv.args["basis"] = {absolute(init)};
    } else if (probe->parsed()) {
      inv.command = "probe";
      inv.args["basis"] = {absolute(init)};
      inv.args["patches"] = {absolute(patches)};
      if (iterations >= 0) inv.config.nonparam.iterations = iterations;
    }
    print_summary(cli::run(inv), inv.out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
