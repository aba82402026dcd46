#include "mea/codec.hpp"

#include "mea/errors.hpp"

namespace mea {

std::string to_string(Architecture a) {
  return a == Architecture::single_head ? "single_head" : "multi_head_aux";
}

Architecture architecture_from_string(const std::string& s) {
  if (s == "single_head") return Architecture::single_head;
  if (s == "multi_head_aux") return Architecture::multi_head_aux;
  throw ConfigError("architecture", "unknown architecture '" + s + "'");
}

void CodecConfig::validate() const {
  if (image_size <= 0 || image_size % 8 != 0) throw ConfigError("image_size", "must be a positive multiple of 8");
  if (payload_bits <= 0) throw ConfigError("payload_bits", "must be positive");
  if (!(alpha > 0.0)) throw ConfigError("alpha", "must be positive");
  if (encoder_channels <= 0) throw ConfigError("encoder_channels", "must be positive");
  if (message_channels <= 0) throw ConfigError("message_channels", "must be positive");
  if (message_grid < 2 || message_grid % 2 != 0 || image_size % message_grid != 0) {
    throw ConfigError("message_grid", "must be even and divide image_size");
  }
  if (context_dim < 0) throw ConfigError("context_dim", "must be non-negative");
  if (decoder_channels <= 0) throw ConfigError("decoder_channels", "must be positive");
  if (discriminator_channels <= 0) throw ConfigError("discriminator_channels", "must be positive");
  if (!(clamp_sharpness > 0.0)) throw ConfigError("clamp_sharpness", "must be positive");
  if (!(residual_bound > 0.0 && residual_bound <= 1.0)) throw ConfigError("residual_bound", "must lie in (0, 1]");
}

std::string head_group(int head) { return "decoder" + std::to_string(head); }

CodecModel::CodecModel(std::string model_id, CodecConfig config, nn::ParameterSet params)
    : id_(std::move(model_id)), config_(config), params_(std::move(params)) {
  config_.validate();
}

void CodecModel::check_finite() const {
  if (!params_.all_finite()) throw ModelStateError("model '" + id_ + "' has non-finite parameters");
}

void CodecModel::check_images(const ag::Var& images) const {
  const Shape s = images.shape();
  if (s.c != 3 || s.h != config_.image_size || s.w != config_.image_size) {
    throw InputError("model '" + id_ + "' expects 3x" + std::to_string(config_.image_size) + "x" +
                     std::to_string(config_.image_size) + " images, got " + s.str());
  }
}

ag::Var CodecModel::encode(const ag::Var& images, const ag::Var& signal, Mode mode) const {
  check_images(images);
  const Shape ss = signal.shape();
  if (ss.n != images.shape().n || static_cast<int>(ss.per_sample()) != config_.payload_bits) {
    throw InputError("model '" + id_ + "' expects " + std::to_string(config_.payload_bits) + "-bit messages, got " +
                     ss.str());
  }
  const int n = images.shape().n;
  const int g = config_.message_grid;
  const int factor = config_.image_size / g;

  ag::Var features = ag::relu(nn::conv(params_, "encoder.features", images));

  ag::Var message_in = signal;
  if (config_.context_dim > 0) {
    ag::Var coarse = ag::avg_pool(images, factor);
    ag::Var context = nn::dense(params_, "encoder.context", coarse);
    message_in = ag::concat_channels(signal, context);
  }
  ag::Var message_map = nn::dense(params_, "encoder.message", message_in);
  message_map = ag::reshape(message_map, Shape{n, config_.message_channels, g, g});
  message_map = ag::upsample(message_map, factor);

  ag::Var hidden = ag::relu(nn::conv(params_, "encoder.fuse", ag::concat_channels(features, message_map)));
  ag::Var residual = ag::scale(ag::tanh(nn::conv(params_, "encoder.residual", hidden)), config_.residual_bound);
  ag::Var out = ag::add(images, residual);
  return mode == Mode::train ? ag::smooth_clamp(out, config_.clamp_sharpness) : ag::hard_clamp(out);
}

ag::Var CodecModel::decode(const ag::Var& images, int head) const {
  check_images(images);
  if (head < 0 || head > primary_heads()) {
    throw AddressingError("head " + std::to_string(head) + " out of range [0," + std::to_string(primary_heads()) + "]");
  }
  if (head == 0 && !has_aux_head()) throw AddressingError("model '" + id_ + "' has no auxiliary head 0");
  const std::string prefix = head_group(head);
  const int factor = config_.image_size / config_.message_grid;
  ag::Var h = ag::relu(nn::conv(params_, prefix + ".conv1", images));
  h = ag::avg_pool(h, factor);
  h = ag::relu(nn::conv(params_, prefix + ".conv2", h));
  h = ag::avg_pool(h, 2);
  return nn::dense(params_, prefix + ".readout", h);
}

ag::Var CodecModel::discriminate(const ag::Var& images) const {
  check_images(images);
  const int factor = config_.image_size / config_.message_grid;
  ag::Var h = ag::leaky_relu(nn::conv(params_, "discriminator.conv1", images), 0.2);
  h = ag::avg_pool(h, factor);
  h = ag::leaky_relu(nn::conv(params_, "discriminator.conv2", h), 0.2);
  h = ag::global_avg_pool(h);
  return nn::dense(params_, "discriminator.score", h);
}

CodecModel init_model(const CodecConfig& config, std::uint64_t seed, std::string model_id) {
  config.validate();
  Rng rng = make_rng(seed, 0xC0DEC);
  nn::ParameterSet ps;
  const int g = config.message_grid;
  const int L = config.payload_bits;
  const int C = config.encoder_channels;
  const int Cm = config.message_channels;

  nn::add_conv(ps, "encoder.features", 3, C, 3, rng);
  if (config.context_dim > 0) nn::add_linear(ps, "encoder.context", 3 * g * g, config.context_dim, rng);
  nn::add_linear(ps, "encoder.message", L + config.context_dim, Cm * g * g, rng);
  nn::add_conv(ps, "encoder.fuse", C + Cm, C, 3, rng);
  nn::add_conv(ps, "encoder.residual", C, 3, 1, rng, 0.1);

  auto add_head = [&](int head) {
    const std::string p = head_group(head);
    const int Cd = config.decoder_channels;
    nn::add_conv(ps, p + ".conv1", 3, Cd, 3, rng);
    nn::add_conv(ps, p + ".conv2", Cd, Cd, 3, rng);
    nn::add_linear(ps, p + ".readout", Cd * (g / 2) * (g / 2), L, rng);
  };
  for (int head = 1; head <= config.primary_heads(); ++head) add_head(head);
  if (config.has_aux_head()) add_head(0);

  const int Cg = config.discriminator_channels;
  nn::add_conv(ps, "discriminator.conv1", 3, Cg, 3, rng);
  nn::add_conv(ps, "discriminator.conv2", Cg, Cg, 3, rng);
  nn::add_linear(ps, "discriminator.score", Cg, 1, rng);

  return CodecModel(std::move(model_id), config, std::move(ps));
}

std::vector<Image> embed_batch(const CodecModel& model, std::span<const Image> images,
                               std::span<const MessageBits> messages) {
  if (images.size() != messages.size()) throw InputError("embed_batch: images and messages differ in count");
  for (const auto& m : messages) {
    if (m.length() != model.config().payload_bits) {
      throw InputError("message length " + std::to_string(m.length()) + " != payload " +
                       std::to_string(model.config().payload_bits));
    }
  }
  model.check_finite();
  ag::NoGradGuard no_grad;
  ag::Var x = ag::Var::constant(stack(images));
  ag::Var s = ag::Var::constant(signal_tensor(messages, model.config().alpha));
  return unstack(model.encode(x, s, Mode::eval).value());
}

Image embed(const CodecModel& model, const Image& image, const MessageBits& message) {
  return embed_batch(model, std::span(&image, 1), std::span(&message, 1)).front();
}

SoftMessage decode(const CodecModel& model, const Image& image, int head) {
  ag::NoGradGuard no_grad;
  ag::Var out = model.decode(ag::Var::constant(image.tensor()), head);
  return SoftMessage(out.value().values().begin(), out.value().values().end());
}

}  // namespace mea
