#include "mea/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mea/digest.hpp"
#include "mea/errors.hpp"

namespace mea {

void LossWeights::validate() const {
  auto non_negative = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(name, "must be a finite non-negative weight");
  };
  non_negative(image, "lambda_img");
  non_negative(decoder, "lambda_dec");
  non_negative(adversarial, "lambda_adv");
  non_negative(resilience, "lambda_a");
  non_negative(beta0, "beta0");
  for (double b : beta) non_negative(b, "beta");
}

double LossWeights::beta_for(int head) const {
  if (beta.empty()) return 1.0;
  if (head < 1 || head > static_cast<int>(beta.size())) {
    throw ConfigError("beta", "no weight for primary head " + std::to_string(head));
  }
  return beta[head - 1];
}

void TrainConfig::validate() const {
  if (steps <= 0) throw ConfigError("steps", "must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size", "must be positive");
  if (!(lr_codec > 0.0)) throw ConfigError("lr_codec", "must be positive");
  if (!(lr_discriminator > 0.0)) throw ConfigError("lr_discriminator", "must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every", "must be non-negative");
  weights.validate();
}

// ---- losses ------------------------------------------------------------------

ag::Var image_loss(const ag::Var& x, const ag::Var& x_w) {
  if (!(x.shape() == x_w.shape())) throw InputError("image_loss: shape mismatch " + x.shape().str() + " vs " + x_w.shape().str());
  return ag::mse(x_w, x);
}

ag::Var decoder_loss(const CodecModel& model, const ag::Var& images, const ag::Var& signal) {
  ag::Var total = ag::mse(model.decode(images, 1), signal);
  for (int head = 2; head <= model.primary_heads(); ++head) total = ag::add(total, ag::mse(model.decode(images, head), signal));
  if (model.has_aux_head()) total = ag::add(total, ag::mean_square(model.decode(images, 0)));
  return total;
}

AdversarialTerms adversarial_losses(const CodecModel& model, const ag::Var& x, const ag::Var& x_w) {
  ag::Var fake = model.discriminate(x_w);
  AdversarialTerms t;
  t.generator = ag::bce_with_logits(fake, 1.0);
  t.discriminator = ag::add(ag::bce_with_logits(model.discriminate(x), 1.0), ag::bce_with_logits(fake, 0.0));
  return t;
}

ag::Var resilience_loss(const CodecModel& model, const ag::Var& x_w12, const ag::Var& w1_signal,
                        const LossWeights& weights) {
  ag::Var total = ag::scale(ag::mse(model.decode(x_w12, 1), w1_signal), weights.beta_for(1));
  for (int head = 2; head <= model.primary_heads(); ++head) {
    total = ag::add(total, ag::scale(ag::mse(model.decode(x_w12, head), w1_signal), weights.beta_for(head)));
  }
  const double b0 = weights.beta0_for(model);
  if (b0 != 0.0) total = ag::add(total, ag::scale(ag::mean_square(model.decode(x_w12, 0)), b0));
  return total;
}

namespace {

void require_finite(const ag::Var& v, const char* name) {
  if (v.defined() && !std::isfinite(v.item())) throw NumericError(name, "non-finite loss term");
}

}  // namespace

ag::Var total_loss(const TaskTerms& task, const ag::Var& resilience, const LossWeights& weights) {
  require_finite(task.image, "L_I");
  require_finite(task.decoder, "L_D");
  require_finite(task.adversarial, "L_A");
  require_finite(resilience, "L_AIS");
  ag::Var total = ag::add(ag::scale(task.image, weights.image), ag::scale(task.decoder, weights.decoder));
  total = ag::add(total, ag::scale(task.adversarial, weights.adversarial));
  if (resilience.defined() && weights.resilience != 0.0) {
    total = ag::add(total, ag::scale(resilience, weights.resilience));
  }
  return total;
}

double total_loss(const LossValues& t, const LossWeights& w) {
  const std::pair<double, const char*> terms[] = {
      {t.image, "L_I"}, {t.decoder, "L_D"}, {t.adversarial, "L_A"}, {t.resilience, "L_AIS"}};
  for (const auto& [v, name] : terms)
    if (!std::isfinite(v)) throw NumericError(name, "non-finite loss term");
  return w.image * t.image + w.decoder * t.decoder + w.adversarial * t.adversarial + w.resilience * t.resilience;
}

namespace {

ag::Var signal_var(const WatermarkSignal& s) {
  return ag::Var::constant(Tensor(Shape{1, static_cast<int>(s.values.size()), 1, 1}, s.values));
}

}  // namespace

double image_loss(const Image& x, const Image& x_w) {
  ag::NoGradGuard g;
  return image_loss(ag::Var::constant(x.tensor()), ag::Var::constant(x_w.tensor())).item();
}

double decoder_loss(const CodecModel& model, const Image& image, const WatermarkSignal& w1) {
  ag::NoGradGuard g;
  return decoder_loss(model, ag::Var::constant(image.tensor()), signal_var(w1)).item();
}

double resilience_loss(const CodecModel& model, const Image& x_w12, const WatermarkSignal& w1,
                       const LossWeights& weights) {
  ag::NoGradGuard g;
  return resilience_loss(model, ag::Var::constant(x_w12.tensor()), signal_var(w1), weights).item();
}

// ---- trainer -------------------------------------------------------------------

namespace {

std::vector<std::string> codec_groups(const CodecModel& m) {
  auto groups = m.parameters().groups();
  groups.erase(std::remove(groups.begin(), groups.end(), std::string("discriminator")), groups.end());
  return groups;
}

MessageBits fresh_message(const MessageBits& avoid, Rng& rng) {
  MessageBits m = MessageBits::random(avoid.length(), rng);
  while (m == avoid) m = MessageBits::random(avoid.length(), rng);
  return m;
}

}  // namespace

Trainer::Trainer(CodecModel model, TrainConfig config)
    : model_(std::move(model)),
      config_(std::move(config)),
      data_rng_(make_rng(config_.seed, 1)),
      channel_rng_(make_rng(config_.seed, 2)),
      ais_rng_(make_rng(config_.seed, 3)),
      codec_opt_(codec_groups(model_), nn::Adam::Options{.lr = config_.lr_codec}),
      disc_opt_({"discriminator"}, nn::Adam::Options{.lr = config_.lr_discriminator}) {
  config_.validate();
  model_.check_finite();
}

std::string Trainer::rng_digest() const {
  std::ostringstream os;
  os << data_rng_ << ' ' << channel_rng_ << ' ' << ais_rng_;
  return sha256_hex(os.str());
}

const LossLogRow& Trainer::step(std::span<const Image> dataset) {
  if (dataset.empty()) throw InputError("training dataset is empty");
  std::vector<Image> batch;
  std::vector<MessageBits> w1;
  batch.reserve(config_.batch_size);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  for (int i = 0; i < config_.batch_size; ++i) batch.push_back(dataset[pick(data_rng_)]);
  for (int i = 0; i < config_.batch_size; ++i) w1.push_back(MessageBits::random(model_.config().payload_bits, data_rng_));
  return step_on(batch, w1);
}

const LossLogRow& Trainer::step_on(std::span<const Image> batch, std::span<const MessageBits> w1) {
  const auto& cfg = model_.config();
  const LossWeights& w = config_.weights;
  ag::Var x = ag::Var::constant(stack(batch));
  ag::Var s1 = ag::Var::constant(signal_tensor(w1, cfg.alpha));

  LossLogRow row;
  row.step = steps_done() + 1;
  try {
    ag::Var x_w = model_.encode(x, s1, Mode::train);
    const DistortionSpec& channel = config_.pool.sample(channel_rng_);
    ag::Var noisy = apply(channel, x_w, channel_rng_, Mode::train, &x, cfg.clamp_sharpness);

    TaskTerms task;
    task.image = image_loss(x, x_w);
    task.decoder = decoder_loss(model_, noisy, s1);
    task.adversarial = adversarial_losses(model_, x, x_w).generator;

    ag::Var resilience;
    if (config_.ais_enabled) {
      std::vector<MessageBits> w2;
      w2.reserve(w1.size());
      for (const auto& m : w1) w2.push_back(fresh_message(m, ais_rng_));
      const DistortionSpec& between = config_.pool.sample(ais_rng_);
      if (w.resilience != 0.0) {
        ag::Var tilde = apply(between, x_w, ais_rng_, Mode::train, &x, cfg.clamp_sharpness);
        ag::Var x_w12 = model_.encode(tilde, ag::Var::constant(signal_tensor(w2, cfg.alpha)), Mode::train);
        if (config_.distort_after_second_embedding) {
          const DistortionSpec& after = config_.pool.sample(ais_rng_);
          x_w12 = apply(after, x_w12, ais_rng_, Mode::train, &x, cfg.clamp_sharpness);
        }
        resilience = resilience_loss(model_, x_w12, s1, w);
      }
    }

    ag::Var total = total_loss(task, resilience, w);
    row.terms = LossValues{task.image.item(), task.decoder.item(), task.adversarial.item(),
                           resilience.defined() ? resilience.item() : 0.0};
    row.total = total.item();
    if (!std::isfinite(row.total)) throw NumericError("total", "non-finite loss");

    model_.parameters().zero_grad();
    ag::backward(total);
    codec_opt_.step(model_.parameters());
    model_.parameters().zero_grad();

    if (config_.train_discriminator) {
      ag::Var disc = adversarial_losses(model_, x, ag::detach(x_w)).discriminator;
      ag::backward(disc);
      disc_opt_.step(model_.parameters());
      model_.parameters().zero_grad();
    }
    if (!model_.parameters().all_finite()) throw NumericError("parameters", "non-finite after update");
  } catch (const NumericError& e) {
    model_.parameters().zero_grad();
    throw TrainingError(std::string("diverged at step ") + std::to_string(row.step) + ": " + e.what(),
                        last_checkpoint_);
  }
  log_.push_back(row);
  maybe_checkpoint();
  return log_.back();
}

void Trainer::maybe_checkpoint() {
  if (config_.checkpoint_every <= 0 || config_.checkpoint_path.empty()) return;
  if (steps_done() % config_.checkpoint_every != 0) return;
  save_checkpoint(model_, config_.checkpoint_path,
                  CheckpointMeta{.config_snapshot = config_.checkpoint_snapshot, .rng_state_digest = rng_digest(), .training_step = steps_done()});
  last_checkpoint_ = steps_done();
}

TrainResult train_baseline(CodecModel initial, const TrainConfig& config, std::span<const Image> dataset) {
  if (config.ais_enabled) throw ConfigError("ais_enabled", "baseline training requires ais_enabled = false");
  Trainer t(std::move(initial), config);
  for (long i = 0; i < config.steps; ++i) t.step(dataset);
  return TrainResult{t.model(), t.log()};
}

TrainResult train_baseline(const CodecConfig& codec, const TrainConfig& config, std::span<const Image> dataset) {
  return train_baseline(init_model(codec, config.seed), config, dataset);
}

TrainResult finetune_ais(CodecModel baseline, const TrainConfig& config, std::span<const Image> dataset) {
  if (!config.ais_enabled) throw ConfigError("ais_enabled", "AIS fine-tuning requires ais_enabled = true");
  Trainer t(std::move(baseline), config);
  for (long i = 0; i < config.steps; ++i) t.step(dataset);
  return TrainResult{t.model(), t.log()};
}

void write_loss_csv(const std::vector<LossLogRow>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "step,L_I,L_D,L_A,L_AIS,total\n";
  out.precision(17);
  for (const auto& r : log) {
    out << r.step << ',' << r.terms.image << ',' << r.terms.decoder << ',' << r.terms.adversarial << ','
        << r.terms.resilience << ',' << r.total << '\n';
  }
}

// ---- gradient check ----------------------------------------------------------------

std::string to_string(LossSelector s) {
  switch (s) {
    case LossSelector::image: return "image";
    case LossSelector::decoder: return "decoder";
    case LossSelector::adversarial_generator: return "adversarial_generator";
    case LossSelector::adversarial_discriminator: return "adversarial_discriminator";
    case LossSelector::resilience: return "resilience";
    case LossSelector::total: return "total";
  }
  return "?";
}

CodecModel probe_model(const ProbeConfig& probe, Architecture architecture) {
  CodecConfig c;
  c.architecture = architecture;
  c.image_size = probe.image_size;
  c.payload_bits = probe.payload_bits;
  c.encoder_channels = 4;
  c.message_channels = 2;
  c.message_grid = probe.image_size / 4;
  c.context_dim = 4;
  c.decoder_channels = 3;
  c.discriminator_channels = 3;
  // Pinned so the probe does not move with the desk defaults. At 0.1 a ReLU in
  // encoder.features sits within epsilon of its kink for the default seed.
  c.residual_bound = 0.2;
  return init_model(c, probe.seed, "probe");
}

namespace {

struct ProbeBatch {
  ag::Var x;
  ag::Var s1;
  ag::Var s2;
};

ProbeBatch make_probe_batch(const CodecModel& model, const ProbeConfig& probe) {
  Rng rng = make_rng(probe.seed, 0x9B0BE);
  const auto& cfg = model.config();
  Tensor x(Shape{probe.batch, 3, cfg.image_size, cfg.image_size});
  for (auto& v : x.values()) v = 0.2 + 0.6 * uniform01(rng);
  std::vector<MessageBits> w1, w2;
  for (int i = 0; i < probe.batch; ++i) {
    w1.push_back(MessageBits::random(cfg.payload_bits, rng));
    w2.push_back(fresh_message(w1.back(), rng));
  }
  return ProbeBatch{ag::Var::constant(std::move(x)), ag::Var::constant(signal_tensor(w1, cfg.alpha)),
                    ag::Var::constant(signal_tensor(w2, cfg.alpha))};
}

ag::Var probe_loss(const CodecModel& model, LossSelector sel, const ProbeBatch& b, const LossWeights& w) {
  ag::Var x_w = model.encode(b.x, b.s1, Mode::train);
  switch (sel) {
    case LossSelector::image: return image_loss(b.x, x_w);
    case LossSelector::decoder: return decoder_loss(model, x_w, b.s1);
    case LossSelector::adversarial_generator: return adversarial_losses(model, b.x, x_w).generator;
    case LossSelector::adversarial_discriminator: return adversarial_losses(model, b.x, x_w).discriminator;
    case LossSelector::resilience:
      return resilience_loss(model, model.encode(x_w, b.s2, Mode::train), b.s1, w);
    case LossSelector::total: {
      TaskTerms task{image_loss(b.x, x_w), decoder_loss(model, x_w, b.s1), adversarial_losses(model, b.x, x_w).generator};
      return total_loss(task, resilience_loss(model, model.encode(x_w, b.s2, Mode::train), b.s1, w), w);
    }
  }
  throw InputError("unknown loss selector");
}

}  // namespace

GradientCheckReport gradient_check(CodecModel& model, LossSelector loss, const ProbeConfig& probe) {
  GradientCheckReport report;
  report.loss = loss;
  auto& ps = model.parameters();
  for (const auto& g : probe.frozen_groups) {
    ps.set_trainable(g, false);
    report.excluded_groups.push_back(g);
  }
  const ProbeBatch batch = make_probe_batch(model, probe);

  ps.zero_grad();
  ag::backward(probe_loss(model, loss, batch, probe.weights));

  Rng pick_rng = make_rng(probe.seed, 0x5A3B1E);
  for (auto& p : ps.items()) {
    if (!p.var.requires_grad()) continue;
    const std::size_t n = p.var.value().size();
    const Tensor analytic = p.var.grad().empty() ? Tensor(p.var.shape(), 0.0) : p.var.grad();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), pick_rng);
    idx.resize(std::min<std::size_t>(n, probe.samples_per_tensor));

    for (std::size_t i : idx) {
      double& theta = p.var.mutable_value()[i];
      const double saved = theta;
      double plus, minus;
      {
        ag::NoGradGuard ng;
        theta = saved + probe.epsilon;
        plus = probe_loss(model, loss, batch, probe.weights).item();
        theta = saved - probe.epsilon;
        minus = probe_loss(model, loss, batch, probe.weights).item();
      }
      theta = saved;
      GradientSample s;
      s.parameter = p.name;
      s.index = i;
      s.analytic = analytic[i];
      s.numeric = (plus - minus) / (2.0 * probe.epsilon);
      const double denom = std::max({std::abs(s.analytic), std::abs(s.numeric), probe.magnitude_floor});
      s.rel_error = std::abs(s.analytic - s.numeric) / denom;
      report.max_rel_error = std::max(report.max_rel_error, s.rel_error);
      auto& g = report.max_rel_error_by_group[nn::group_of(p.name)];
      g = std::max(g, s.rel_error);
      report.samples.push_back(s);
    }
  }
  ps.zero_grad();
  for (const auto& g : probe.frozen_groups) ps.set_trainable(g, true);
  return report;
}

}  // namespace mea
