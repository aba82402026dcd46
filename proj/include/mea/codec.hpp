#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mea/autograd.hpp"
#include "mea/image.hpp"
#include "mea/nn.hpp"

namespace mea {

enum class Architecture { single_head, multi_head_aux };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

// Training mode uses a smooth saturation so gradients survive at the range
// limits; evaluation mode hard-clamps to [0, 1].
enum class Mode { train, eval };

struct CodecConfig {
  Architecture architecture = Architecture::single_head;
  int image_size = 64;
  int payload_bits = 30;
  double alpha = 1.0;
  int encoder_channels = 8;
  int message_channels = 4;
  // Side of the low-resolution grid the message and context live on.
  int message_grid = 16;
  int context_dim = 32;
  int decoder_channels = 8;
  int discriminator_channels = 8;
  double clamp_sharpness = 50.0;
  // Per-pixel residual amplitude limit: residual = bound * tanh(.).
  double residual_bound = 0.1;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
  int primary_heads() const { return architecture == Architecture::multi_head_aux ? 2 : 1; }
  bool has_aux_head() const { return architecture == Architecture::multi_head_aux; }
  bool operator==(const CodecConfig&) const = default;
};

// Encoder, decoder heads (1..k, plus the auxiliary zero head 0 for
// multi_head_aux) and discriminator. Copying a model deep-copies its parameters.
//
// Parameter groups: "encoder", "decoder1".."decoderk", "decoder0", "discriminator".
class CodecModel {
 public:
  CodecModel(std::string model_id, CodecConfig config, nn::ParameterSet params);

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }
  const CodecConfig& config() const { return config_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

  int primary_heads() const { return config_.primary_heads(); }
  bool has_aux_head() const { return config_.has_aux_head(); }
  std::size_t parameter_count() const { return params_.scalar_count(); }

  // images {N,3,H,W}, signal {N,L,1,1} -> watermarked images {N,3,H,W}.
  ag::Var encode(const ag::Var& images, const ag::Var& signal, Mode mode) const;
  // -> logits {N,L,1,1}. head 1..k addresses primary heads, 0 the auxiliary head.
  ag::Var decode(const ag::Var& images, int head) const;
  // -> one realness logit per image {N,1,1,1}.
  ag::Var discriminate(const ag::Var& images) const;

  // Throws ModelStateError on non-finite parameters.
  void check_finite() const;

 private:
  void check_images(const ag::Var& images) const;

  std::string id_;
  CodecConfig config_;
  nn::ParameterSet params_;
};

std::string head_group(int head);

// Deterministic for a given (config, seed).
CodecModel init_model(const CodecConfig& config, std::uint64_t seed, std::string model_id = "codec");

// Evaluation-mode single-image primitives.
Image embed(const CodecModel& model, const Image& image, const MessageBits& message);
std::vector<Image> embed_batch(const CodecModel& model, std::span<const Image> images,
                               std::span<const MessageBits> messages);
SoftMessage decode(const CodecModel& model, const Image& image, int head = 1);

// Checkpoint container; see docs/checkpoint_format.md.
inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  std::string config_snapshot = "{}";  // JSON text of the producing run's config
  std::string rng_state_digest;
  long training_step = 0;
};

void save_checkpoint(const CodecModel& model, const std::string& path, const CheckpointMeta& meta = {});
CodecModel load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace mea
