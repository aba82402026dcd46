#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mea/codec.hpp"
#include "mea/distortion.hpp"

namespace mea {

// Read-only lookup of codecs by model_id.
class ModelRegistry {
 public:
  void add(const CodecModel& model);
  // Throws RegistryError for unknown ids.
  const CodecModel& get(const std::string& model_id) const;
  bool contains(const std::string& model_id) const { return models_.count(model_id) != 0; }

 private:
  std::unordered_map<std::string, const CodecModel*> models_;
};

// Ordered embedding steps. Step 1 carries the defender's forensic message w1.
struct AttackChain {
  struct Step {
    std::string model_id;
    MessageBits message;
  };
  std::vector<Step> steps;

  int depth() const { return static_cast<int>(steps.size()); }
  // Depth >= 1 and every message matches its model's payload length.
  void validate(const ModelRegistry& registry) const;
};

struct ChainOptions {
  // Pass the image through `between` before every embedding after the first.
  std::optional<DistortionSpec> between;
  std::uint64_t seed = 0;
};

// X -> X_w1 -> X_w1,2 -> ... applying every step in order with evaluation-mode embeds.
Image run_chain(const AttackChain& chain, const Image& image, const ModelRegistry& registry,
                const ChainOptions& options = {});

// MSE between the primary-head decoding of `attacked` and the ±alpha signal of w1.
double forensic_loss(const CodecModel& model, const Image& attacked, const MessageBits& w1);

struct AttackResult {
  int depth = 0;
  Image attacked_image;
  MessageBits recovered_bits;
  double ber_percent = 0.0;
  double forensic_loss = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

// One image at one depth. head_bers holds the BER of every primary head (index 0
// is head 1); aux_energy is mean(De_0^2) when the aux head exists, else NaN.
struct MetricsRecord {
  std::size_t image_index = 0;
  int depth = 0;
  double ber_percent = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double forensic_loss = 0.0;
  std::vector<double> head_bers;
  double aux_energy = 0.0;
  double residual_sparsity = 0.0;
};

// Per-depth means. CSV columns:
// suite,defender_id,attacker_id,depth,ber_percent,psnr_db,ssim,n_images,seed
struct MetricsRow {
  std::string suite;
  std::string defender_id;
  std::string attacker_id;
  int depth = 0;
  double ber_percent = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::size_t n_images = 0;
  std::uint64_t seed = 0;
  std::vector<double> head_bers;  // mean BER per primary head
  double aux_energy = 0.0;
  double forensic_loss = 0.0;
  double residual_sparsity = 0.0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  std::vector<MetricsRecord> records;  // per image, grouped by row

  const MetricsRow& row(const std::string& attacker_id, int depth) const;
  const MetricsRow& row(int depth) const;
  void append(const MetricsTable& other);
};

inline constexpr const char* kMetricsCsvHeader =
    "suite,defender_id,attacker_id,depth,ber_percent,psnr_db,ssim,n_images,seed";

void write_metrics_csv(const MetricsTable& table, const std::string& path);
std::string format_metrics_csv(const MetricsTable& table);
// Parses rows written by write_metrics_csv (extra trailing columns ignored).
MetricsTable read_metrics_csv(const std::string& path);
MetricsTable parse_metrics_csv(std::istream& in, const std::string& source);

struct SuiteOptions {
  std::optional<DistortionSpec> between;  // off by default
};

// Depth d embeds w1 then d-1 fresh uniform messages with the defender itself.
// Per-image randomness comes from sub-streams of `seed`.
MetricsTable run_intra_model_suite(const CodecModel& defender, std::span<const Image> dataset,
                                   std::span<const int> depths, std::uint64_t seed, const SuiteOptions& options = {});

// For each attacker, n = 0..n_max additional embeddings by that attacker on top of
// the defender's X_w1; BER of w1 under the defender's primary decoder.
MetricsTable run_cross_model_suite(const CodecModel& defender, std::span<const CodecModel* const> attackers,
                                   std::span<const Image> dataset, int n_max, std::uint64_t seed,
                                   const SuiteOptions& options = {});

}  // namespace mea
