#include "mea/harness/manifest.hpp"

#include <filesystem>
#include <fstream>

#include "mea/digest.hpp"
#include "mea/errors.hpp"

namespace fs = std::filesystem;

namespace mea::harness {

Manifest::Manifest(std::string output_dir) : dir_(std::move(output_dir)) {
  fs::create_directories(dir_);
  std::ifstream in(file_path());
  if (in) {
    try {
      doc_ = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception&) {
      throw IntegrityError("'" + file_path() + "' is not a valid manifest");
    }
  } else {
    doc_ = {{"version", kToolVersion}, {"artifacts", nlohmann::json::object()}, {"stages", nlohmann::json::array()}};
  }
}

std::string Manifest::file_path() const { return (fs::path(dir_) / "manifest.json").string(); }

void Manifest::record_config(const ExperimentConfig& config, const std::string& stage) {
  const std::string rel = "config.json";
  {
    std::ofstream out(fs::path(dir_) / rel);
    out << config.resolved.dump(2) << '\n';
  }
  doc_["config_digest"] = config.digest();
  nlohmann::json seeds{{"master", config.seed}, {"attack", config.attack.seed}, {"finetune", config.finetune.seed}};
  for (const auto& [id, m] : config.models) seeds["models"][id] = m.train.seed;
  doc_["seeds"] = seeds;
  doc_["version"] = kToolVersion;
  doc_["stages"].push_back(stage);
  record_artifact(rel, stage);
}

void Manifest::record_artifact(const std::string& path, const std::string& stage) {
  doc_["artifacts"][path] = {{"sha256", sha256_file((fs::path(dir_) / path).string())}, {"stage", stage}};
}

void Manifest::save() const {
  const fs::path tmp = fs::path(dir_) / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    out << doc_.dump(2) << '\n';
  }
  fs::rename(tmp, file_path());
}

std::vector<std::string> verify_manifest(const std::string& output_dir) {
  Manifest m(output_dir);
  std::vector<std::string> stale;
  for (const auto& [path, entry] : m.json().at("artifacts").items()) {
    const fs::path full = fs::path(output_dir) / path;
    if (!fs::exists(full) || sha256_file(full.string()) != entry.at("sha256").get<std::string>()) stale.push_back(path);
  }
  return stale;
}

}  // namespace mea::harness
