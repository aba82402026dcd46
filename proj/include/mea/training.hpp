#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mea/codec.hpp"
#include "mea/distortion.hpp"

namespace mea {

// L_total = image * L_I + decoder * L_D + adversarial * L_A + resilience * L_AIS.
// beta[i] weighs primary head i+1 inside L_AIS, beta0 the auxiliary zero head.
struct LossWeights {
  double image = 1.0;
  double decoder = 1.0;
  double adversarial = 0.01;
  double resilience = 10.0;
  std::vector<double> beta;  // empty: 1 for every primary head
  double beta0 = 1.0;        // forced to 0 when the model has no auxiliary head

  void validate() const;
  double beta_for(int head) const;
  double beta0_for(const CodecModel& model) const { return model.has_aux_head() ? beta0 : 0.0; }
};

struct TrainConfig {
  long steps = 1000;
  int batch_size = 8;
  double lr_codec = 1e-3;
  double lr_discriminator = 1e-3;
  std::uint64_t seed = 1;
  DistortionPool pool = DistortionPool::default_training();
  LossWeights weights;
  bool ais_enabled = false;
  // Also pass the doubly embedded image through the pool before decoding.
  bool distort_after_second_embedding = false;
  bool train_discriminator = true;
  long checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string checkpoint_path;
  std::string checkpoint_snapshot = "{}";  // stored in periodic checkpoints

  void validate() const;
};

// ---- loss terms on batches -------------------------------------------------

// Mean squared error over all pixels and channels.
ag::Var image_loss(const ag::Var& x, const ag::Var& x_w);
// Sum over primary heads of MSE(De_i, w) plus MSE(De_0, 0) when the aux head exists.
ag::Var decoder_loss(const CodecModel& model, const ag::Var& images, const ag::Var& signal);

struct AdversarialTerms {
  ag::Var generator;      // softplus(-G(x_w)): penalizes detected watermarks
  ag::Var discriminator;  // softplus(-G(x)) + softplus(G(x_w))
};
// Non-saturating logistic GAN objective.
AdversarialTerms adversarial_losses(const CodecModel& model, const ag::Var& x, const ag::Var& x_w);

// sum_i beta_i MSE(De_i(x_w12), w1) + beta0 MSE(De_0(x_w12), 0).
ag::Var resilience_loss(const CodecModel& model, const ag::Var& x_w12, const ag::Var& w1_signal,
                        const LossWeights& weights);

struct TaskTerms {
  ag::Var image;
  ag::Var decoder;
  ag::Var adversarial;
};
// Throws NumericError naming the first non-finite term.
ag::Var total_loss(const TaskTerms& task, const ag::Var& resilience, const LossWeights& weights);

struct LossValues {
  double image = 0.0;
  double decoder = 0.0;
  double adversarial = 0.0;
  double resilience = 0.0;
};
double total_loss(const LossValues& terms, const LossWeights& weights);

// Single-image conveniences.
double image_loss(const Image& x, const Image& x_w);
double decoder_loss(const CodecModel& model, const Image& image, const WatermarkSignal& w1);
double resilience_loss(const CodecModel& model, const Image& x_w12, const WatermarkSignal& w1,
                       const LossWeights& weights);

// ---- training loops --------------------------------------------------------

struct LossLogRow {
  long step = 0;
  LossValues terms;
  double total = 0.0;
};

// Alternating codec / discriminator updates over X -> En -> N -> De. With
// ais_enabled each step additionally builds X_w1,2 = En(N(En(X, w1)), w2) through
// the live encoder and adds the resilience term.
//
// Randomness comes from three streams derived from config.seed: data (batches,
// w1), channel (task distortion) and ais (w2, AIS distortion). Skipping the AIS
// branch leaves the other two untouched.
class Trainer {
 public:
  Trainer(CodecModel model, TrainConfig config);

  // One update on a batch drawn from `dataset`. Throws TrainingError on divergence.
  const LossLogRow& step(std::span<const Image> dataset);
  // One update on a fixed batch, bypassing batch sampling.
  const LossLogRow& step_on(std::span<const Image> batch, std::span<const MessageBits> w1);

  const CodecModel& model() const { return model_; }
  CodecModel& model() { return model_; }
  const std::vector<LossLogRow>& log() const { return log_; }
  long steps_done() const { return static_cast<long>(log_.size()); }
  long last_checkpoint_step() const { return last_checkpoint_; }
  std::string rng_digest() const;

 private:
  void maybe_checkpoint();

  CodecModel model_;
  TrainConfig config_;
  Rng data_rng_;
  Rng channel_rng_;
  Rng ais_rng_;
  nn::Adam codec_opt_;
  nn::Adam disc_opt_;
  std::vector<LossLogRow> log_;
  long last_checkpoint_ = -1;
};

struct TrainResult {
  CodecModel model;
  std::vector<LossLogRow> log;
};

TrainResult train_baseline(CodecModel initial, const TrainConfig& config, std::span<const Image> dataset);
TrainResult train_baseline(const CodecConfig& codec, const TrainConfig& config, std::span<const Image> dataset);
TrainResult finetune_ais(CodecModel baseline, const TrainConfig& config, std::span<const Image> dataset);

void write_loss_csv(const std::vector<LossLogRow>& log, const std::string& path);

// ---- gradient verification ---------------------------------------------------

enum class LossSelector { image, decoder, adversarial_generator, adversarial_discriminator, resilience, total };
std::string to_string(LossSelector s);

struct ProbeConfig {
  int image_size = 8;
  int payload_bits = 8;
  int batch = 2;
  std::uint64_t seed = 5;
  double epsilon = 1e-4;
  int samples_per_tensor = 6;
  // Gradients smaller than this are compared absolutely.
  double magnitude_floor = 1e-7;
  LossWeights weights;  // resilience = 10 by default
  std::vector<std::string> frozen_groups;
};

struct GradientSample {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradientCheckReport {
  LossSelector loss = LossSelector::total;
  double max_rel_error = 0.0;
  std::map<std::string, double> max_rel_error_by_group;
  std::vector<std::string> excluded_groups;
  std::vector<GradientSample> samples;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// 8x8, L=8 model suitable for finite differences.
CodecModel probe_model(const ProbeConfig& probe, Architecture architecture = Architecture::single_head);

// Central differences against the analytic gradient on a fixed probe batch.
GradientCheckReport gradient_check(CodecModel& model, LossSelector loss, const ProbeConfig& probe);

}  // namespace mea
