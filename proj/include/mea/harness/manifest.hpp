#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mea/harness/config.hpp"

namespace mea::harness {

inline constexpr const char* kToolVersion = "0.1.0";

// manifest.json in the output directory. Artifacts are keyed by their path
// relative to the output directory and carry a SHA-256 of their contents.
class Manifest {
 public:
  // Loads an existing manifest from `output_dir`, or starts an empty one.
  explicit Manifest(std::string output_dir);

  // Writes config.json for this run, records its digest and the seeds.
  void record_config(const ExperimentConfig& config, const std::string& stage);
  // Hashes the file now; `path` is relative to the output directory.
  void record_artifact(const std::string& path, const std::string& stage);
  void save() const;

  const nlohmann::json& json() const { return doc_; }
  std::string file_path() const;

 private:
  std::string dir_;
  nlohmann::json doc_;
};

// Recomputes every artifact digest; returns the paths that no longer match.
std::vector<std::string> verify_manifest(const std::string& output_dir);

}  // namespace mea::harness
