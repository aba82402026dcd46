#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mea/attacks.hpp"
#include "mea/codec.hpp"
#include "mea/harness/config.hpp"
#include "mea/harness/dataset.hpp"

namespace mea::harness {

// Output layout, relative to config.output_dir:
//   checkpoints/<id>.ckpt       logs/<id>_loss.csv
//   attack/<id>/intra_model.csv attack/<id>/cross_model.csv
//   ablation/ablation.csv       report/{fig2_before_after.png, residuals.png, summary.md, *.csv}
struct Paths {
  std::string root;

  std::string checkpoint(const std::string& id) const;
  std::string loss_log(const std::string& id) const;
  std::string intra_csv(const std::string& id) const;
  std::string cross_csv(const std::string& id) const;
  std::string ablation_csv() const;
  std::string report_dir() const;
  // Path relative to root, as recorded in the manifest.
  std::string relative(const std::string& path) const;
};

struct CommandOptions {
  bool force = false;        // retrain even when an up-to-date checkpoint exists
  std::ostream* log = nullptr;  // progress messages; nullptr silences them
};

std::string ais_model_id(const std::string& base_id);
std::string ablation_model_id(const std::string& base_id, double lambda_a, const ExperimentConfig& config);

DatasetSplits load_dataset(const ExperimentConfig& config);
// Throws StageDependencyError when the checkpoint is missing.
CodecModel load_stage_model(const ExperimentConfig& config, const std::string& id);

// Trains every listed model (all configured models when empty).
void cmd_train(const ExperimentConfig& config, const std::vector<std::string>& model_ids, const CommandOptions& opt = {});
// AIS fine-tune of a trained model into ais_model_id(model_id). lambda_a overrides
// finetune.weights.lambda_a; out_id overrides the produced id.
std::string cmd_finetune(const ExperimentConfig& config, const std::string& model_id,
                         std::optional<double> lambda_a = std::nullopt, const std::string& out_id = "",
                         const CommandOptions& opt = {});
// Intra-model suite, plus the cross-model suite when `cross` and attackers are configured.
void cmd_attack(const ExperimentConfig& config, const std::string& model_id, bool cross = true,
                const CommandOptions& opt = {});
// Fine-tunes config.ablation.model once per lambda_A and runs the intra-model suite on each.
void cmd_ablate(const ExperimentConfig& config, const CommandOptions& opt = {});
// Aggregates whatever attack/ablation CSVs exist into report/.
void cmd_report(const ExperimentConfig& config, const CommandOptions& opt = {});
// train -> finetune (single and multi-head) -> attack -> ablate -> report.
void cmd_pipeline(const ExperimentConfig& config, const CommandOptions& opt = {});

// Maps the error hierarchy onto process exit codes.
int exit_code_for(const std::exception& e);

// Keeps freed activation buffers in the heap instead of returning them to the
// kernel after every training step. No-op outside glibc.
void tune_allocator();

}  // namespace mea::harness
