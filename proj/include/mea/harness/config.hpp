#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mea/codec.hpp"
#include "mea/harness/dataset.hpp"
#include "mea/training.hpp"

namespace mea::harness {

// A codec trained from scratch by `mea train`.
struct ModelSpec {
  std::string id;
  CodecConfig codec;
  TrainConfig train;
};

struct AttackSettings {
  std::vector<int> depths{1, 2, 3, 4, 5};
  std::uint64_t seed = 7;
  std::size_t max_images = 0;  // 0: the whole test split
  int cross_max = 5;
  std::vector<std::string> attackers;
  // Attack with each attacker's AIS fine-tune (<id>_ais) instead of the vanilla model.
  bool ais_attackers = false;
};

struct AblationSettings {
  std::string model = "baseline";
  std::vector<double> lambda_a{0, 2, 4, 6, 8, 10};
};

// Resolved experiment description. `resolved` keeps the merged JSON the fields
// were read from; its digest identifies the run.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/desk";
  std::string dataset_path = "synthetic";
  int image_size = 64;
  SplitFractions splits;
  std::size_t synthetic_count = 600;
  std::map<std::string, ModelSpec> models;
  // Models that get AIS fine-tuned and attacked by the pipeline.
  std::vector<std::string> defenders;
  TrainConfig finetune;
  AttackSettings attack;
  AblationSettings ablation;
  nlohmann::json resolved;

  const ModelSpec& model(const std::string& id) const;
  std::string digest() const;
};

// Defaults as JSON. Per-model "codec" and "train" objects are merge-patched
// over the top-level "codec" and "train" objects.
nlohmann::json default_config_json();

// Precedence, lowest first: defaults, config file, MEA_OUTPUT_ROOT for
// output_dir, then overrides ("a.b.c=value", value parsed as JSON and falling
// back to a string).
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
ExperimentConfig config_from_json(const nlohmann::json& merged);

void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace mea::harness
