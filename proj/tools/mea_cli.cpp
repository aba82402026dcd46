#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mea/errors.hpp"
#include "mea/harness/commands.hpp"
#include "mea/harness/config.hpp"
#include "mea/harness/manifest.hpp"
#include "mea/kernels.hpp"

using namespace mea;
using namespace mea::harness;

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Multi-embedding attack experiments: train, fine-tune, attack, ablate, report"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  bool reference = false;
  app.add_option("-c,--config", config_path, "JSON experiment config (defaults apply when omitted)");
  app.add_option("-s,--set", overrides, "Override a config field, e.g. train.steps=500 (repeatable)");
  app.add_option("-o,--output-dir", output_dir, "Output directory (overrides MEA_OUTPUT_ROOT and the config file)");
  app.add_option("--seed", seed, "Master seed");
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");
  app.add_flag("--reference-kernels", reference, "Use the serial reference kernels");

  bool force = false;
  std::vector<std::string> train_models;
  auto* train = app.add_subcommand("train", "Train baseline codecs (all configured models by default)");
  train->add_option("-m,--model", train_models, "Model id (repeatable)");
  train->add_flag("-f,--force", force, "Retrain even if the checkpoint is up to date");

  std::string ft_model = "baseline";
  std::optional<double> ft_lambda;
  std::string ft_out;
  auto* finetune = app.add_subcommand("finetune", "AIS fine-tune of a trained codec");
  finetune->add_option("-m,--model", ft_model, "Baseline model id")->capture_default_str();
  finetune->add_option("--lambda-a", ft_lambda, "Resilience weight (overrides finetune.weights.lambda_a)");
  finetune->add_option("--out", ft_out, "Id of the produced model (default <model>_ais)");
  finetune->add_flag("-f,--force", force, "Retrain even if the checkpoint is up to date");

  std::string attack_model = "baseline";
  bool no_cross = false;
  auto* attack = app.add_subcommand("attack", "Run the intra-model and cross-model MEA suites");
  attack->add_option("-m,--model", attack_model, "Defender model id")->capture_default_str();
  attack->add_flag("--no-cross", no_cross, "Skip the cross-model suite");

  auto* ablate = app.add_subcommand("ablate", "Fine-tune over the lambda_A grid and attack each model");
  ablate->add_flag("-f,--force", force, "Retrain even if checkpoints are up to date");
  auto* report = app.add_subcommand("report", "Aggregate CSVs into charts and summary.md");
  auto* pipeline = app.add_subcommand("pipeline", "train, finetune, attack, ablate and report in sequence");
  pipeline->add_flag("-f,--force", force, "Retrain even if checkpoints are up to date");
  auto* verify = app.add_subcommand("verify", "Check every manifest digest against the files on disk");

  CLI11_PARSE(app, argc, argv);

  try {
    if (reference) kernels::set_backend(kernels::Backend::reference);
    if (!output_dir.empty()) overrides.push_back("output_dir=\"" + output_dir + "\"");
    if (seed) overrides.push_back("seed=" + std::to_string(*seed));
    const ExperimentConfig config = load_config(config_path, overrides);
    CommandOptions opt{.force = force, .log = quiet ? nullptr : &std::cerr};

    if (*train) cmd_train(config, train_models, opt);
    if (*finetune) std::cout << cmd_finetune(config, ft_model, ft_lambda, ft_out, opt) << '\n';
    if (*attack) cmd_attack(config, attack_model, !no_cross, opt);
    if (*ablate) cmd_ablate(config, opt);
    if (*report) cmd_report(config, opt);
    if (*pipeline) cmd_pipeline(config, opt);
    if (*verify) {
      const auto stale = verify_manifest(config.output_dir);
      for (const auto& p : stale) std::cerr << "digest mismatch: " << p << '\n';
      if (!stale.empty()) throw IntegrityError(std::to_string(stale.size()) + " artifact(s) changed since recorded");
      std::cerr << "manifest ok\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "mea: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
