#include "mea/harness/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "mea/digest.hpp"
#include "mea/errors.hpp"
#include "mea/serialization.hpp"

namespace mea::harness {

using nlohmann::json;

namespace {

const char* kModelsKey = "models";

template <class T>
T get(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) throw ConfigError(where.empty() ? key : where + "." + key, "missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where.empty() ? key : where + "." + key, "wrong type");
  }
}

json patched(json base, const json& patch) {
  base.merge_patch(patch);
  return base;
}

}  // namespace

json default_config_json() {
  TrainConfig train;
  train.steps = 2000;
  TrainConfig finetune = train;
  finetune.steps = 3000;
  finetune.ais_enabled = true;

  json j;
  j["seed"] = 1;
  j["output_dir"] = "runs/desk";
  j["dataset"] = {{"path", "synthetic"}, {"image_size", 64}, {"splits", {0.8, 0.1, 0.1}}, {"synthetic_count", 600}};
  j["codec"] = to_json(CodecConfig{});
  j["train"] = to_json(train);
  j["finetune"] = to_json(finetune);
  j[kModelsKey] = {
      {"baseline", {{"train", {{"seed", 11}}}}},
      {"baseline_multi", {{"codec", {{"architecture", "multi_head_aux"}}}, {"train", {{"seed", 12}}}}},
      {"attacker_seed", {{"train", {{"seed", 13}}}}},
      {"attacker_wide", {{"codec", {{"encoder_channels", 12}, {"decoder_channels", 12}}}, {"train", {{"seed", 14}}}}},
  };
  j["defenders"] = {"baseline", "baseline_multi"};
  j["attack"] = {{"depths", {1, 2, 3, 4, 5}},
                 {"seed", 7},
                 {"max_images", 0},
                 {"cross_max", 5},
                 {"attackers", {"attacker_seed", "attacker_wide", "baseline_multi"}},
                 {"ais_attackers", false}};
  j["ablation"] = {{"model", "baseline"}, {"lambda_a", {0, 2, 4, 6, 8, 10}}};
  return j;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(path, "empty key in override path");
    if (!node->is_object()) throw ConfigError(path, "cannot descend into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

const ModelSpec& ExperimentConfig::model(const std::string& id) const {
  auto it = models.find(id);
  if (it == models.end()) throw ConfigError("models." + id, "no such model in the config");
  return it->second;
}

std::string ExperimentConfig::digest() const { return sha256_hex(resolved.dump()); }

ExperimentConfig config_from_json(const json& merged) {
  ExperimentConfig c;
  c.resolved = merged;
  c.seed = get<std::uint64_t>(merged, "", "seed");
  c.output_dir = get<std::string>(merged, "", "output_dir");

  const json& ds = merged.at("dataset");
  c.dataset_path = get<std::string>(ds, "dataset", "path");
  c.image_size = get<int>(ds, "dataset", "image_size");
  const auto splits = get<std::vector<double>>(ds, "dataset", "splits");
  if (splits.size() != 3) throw ConfigError("dataset.splits", "expected [train, val, test]");
  c.splits = {splits[0], splits[1], splits[2]};
  c.splits.validate();
  c.synthetic_count = get<std::size_t>(ds, "dataset", "synthetic_count");
  if (c.dataset_path != "synthetic" && !std::filesystem::is_directory(c.dataset_path)) {
    throw ConfigError("dataset.path", "directory '" + c.dataset_path + "' does not exist");
  }

  const json& codec = merged.at("codec");
  const json& train = merged.at("train");
  if (!merged.at(kModelsKey).is_object() || merged.at(kModelsKey).empty()) {
    throw ConfigError(kModelsKey, "at least one model is required");
  }
  for (const auto& [id, spec] : merged.at(kModelsKey).items()) {
    const std::string where = std::string(kModelsKey) + "." + id;
    ModelSpec m;
    m.id = id;
    json codec_json = patched(codec, spec.value("codec", json::object()));
    codec_json["image_size"] = c.image_size;
    try {
      m.codec = codec_config_from_json(codec_json);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ".codec." + e.field(), e.detail());
    }
    m.train = train_config_from_json(patched(train, spec.value("train", json::object())), where + ".train");
    if (m.train.ais_enabled) throw ConfigError(where + ".train.ais_enabled", "models are trained without AIS");
    c.models.emplace(id, std::move(m));
  }
  c.defenders = get<std::vector<std::string>>(merged, "", "defenders");
  for (const auto& d : c.defenders) {
    if (!c.models.count(d)) throw ConfigError("defenders", "unknown model '" + d + "'");
  }
  c.finetune = train_config_from_json(merged.at("finetune"), "finetune");
  if (!c.finetune.ais_enabled) throw ConfigError("finetune.ais_enabled", "must be true");

  const json& at = merged.at("attack");
  c.attack.depths = get<std::vector<int>>(at, "attack", "depths");
  if (c.attack.depths.empty()) throw ConfigError("attack.depths", "must not be empty");
  for (int d : c.attack.depths)
    if (d < 1) throw ConfigError("attack.depths", "depths start at 1");
  c.attack.seed = get<std::uint64_t>(at, "attack", "seed");
  c.attack.max_images = get<std::size_t>(at, "attack", "max_images");
  c.attack.cross_max = get<int>(at, "attack", "cross_max");
  if (c.attack.cross_max < 0) throw ConfigError("attack.cross_max", "must be non-negative");
  c.attack.attackers = get<std::vector<std::string>>(at, "attack", "attackers");
  c.attack.ais_attackers = get<bool>(at, "attack", "ais_attackers");
  for (const auto& a : c.attack.attackers) {
    if (!c.models.count(a)) throw ConfigError("attack.attackers", "unknown model '" + a + "'");
  }

  const json& ab = merged.at("ablation");
  c.ablation.model = get<std::string>(ab, "ablation", "model");
  if (!c.models.count(c.ablation.model)) throw ConfigError("ablation.model", "unknown model '" + c.ablation.model + "'");
  c.ablation.lambda_a = get<std::vector<double>>(ab, "ablation", "lambda_a");
  if (c.ablation.lambda_a.empty()) throw ConfigError("ablation.lambda_a", "grid must not be empty");
  for (double v : c.ablation.lambda_a)
    if (!(v >= 0.0)) throw ConfigError("ablation.lambda_a", "weights must be non-negative");
  return c;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json merged = default_config_json();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path + "'");
    json file;
    try {
      file = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
      throw ConfigError("config", std::string("'") + path + "' is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw ConfigError("config", "top level must be an object");
    // Model tables replace the defaults rather than merging into them.
    if (file.contains(kModelsKey)) merged[kModelsKey] = json::object();
    merged.merge_patch(file);
  }
  if (const char* root = std::getenv("MEA_OUTPUT_ROOT"); root && *root) merged["output_dir"] = root;
  for (const auto& o : overrides) apply_override(merged, o);
  return config_from_json(merged);
}

}  // namespace mea::harness
