#include "mea/serialization.hpp"

#include "mea/errors.hpp"

namespace mea {

namespace {

template <class T>
void read(const nlohmann::json& j, const std::string& where, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(field);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key, "wrong type");
  }
}

void require_object(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where, "expected an object");
}

// Re-raise validation failures with the enclosing path.
template <class F>
void validated(const std::string& where, F&& check) {
  try {
    check();
  } catch (const ConfigError& e) {
    throw ConfigError(where + "." + e.field(), e.detail());
  }
}

}  // namespace

nlohmann::json to_json(const DistortionSpec& s) {
  nlohmann::json j{{"kind", to_string(s.kind)}, {"probability", s.probability}};
  switch (s.kind) {
    case DistortionKind::identity: break;
    case DistortionKind::gaussian_noise: j["sigma"] = s.sigma; break;
    case DistortionKind::gaussian_blur:
      j["kernel_size"] = s.kernel_size;
      j["blur_sigma"] = s.blur_sigma;
      break;
    case DistortionKind::jpeg_approx: j["quality"] = s.quality; break;
    case DistortionKind::dropout: j["keep_probability"] = s.keep_probability; break;
    case DistortionKind::crop_resize: j["crop_fraction"] = s.crop_fraction; break;
  }
  return j;
}

DistortionSpec distortion_spec_from_json(const nlohmann::json& j, const std::string& where) {
  require_object(j, where);
  DistortionSpec s;
  std::string kind = "identity";
  read(j, where, "kind", kind);
  try {
    s.kind = distortion_kind_from_string(kind);
  } catch (const Error&) {
    throw ConfigError(where + ".kind", "unknown distortion '" + kind + "'");
  }
  read(j, where, "probability", s.probability);
  read(j, where, "sigma", s.sigma);
  read(j, where, "kernel_size", s.kernel_size);
  read(j, where, "blur_sigma", s.blur_sigma);
  read(j, where, "quality", s.quality);
  read(j, where, "keep_probability", s.keep_probability);
  read(j, where, "crop_fraction", s.crop_fraction);
  validated(where, [&] { s.validate(); });
  return s;
}

nlohmann::json to_json(const DistortionPool& p) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : p.specs()) j.push_back(to_json(s));
  return j;
}

DistortionPool distortion_pool_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where, "expected an array of distortions");
  std::vector<DistortionSpec> specs;
  for (std::size_t i = 0; i < j.size(); ++i) {
    specs.push_back(distortion_spec_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  }
  try {
    return DistortionPool(std::move(specs));
  } catch (const ConfigError& e) {
    throw ConfigError(where, e.detail());
  }
}

nlohmann::json to_json(const LossWeights& w) {
  return nlohmann::json{{"lambda_img", w.image},        {"lambda_dec", w.decoder}, {"lambda_adv", w.adversarial},
                        {"lambda_a", w.resilience},     {"beta", w.beta},          {"beta0", w.beta0}};
}

LossWeights loss_weights_from_json(const nlohmann::json& j, const std::string& where) {
  require_object(j, where);
  LossWeights w;
  read(j, where, "lambda_img", w.image);
  read(j, where, "lambda_dec", w.decoder);
  read(j, where, "lambda_adv", w.adversarial);
  read(j, where, "lambda_a", w.resilience);
  read(j, where, "beta", w.beta);
  read(j, where, "beta0", w.beta0);
  validated(where, [&] { w.validate(); });
  return w;
}

nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{{"steps", c.steps},
                        {"batch_size", c.batch_size},
                        {"lr_codec", c.lr_codec},
                        {"lr_discriminator", c.lr_discriminator},
                        {"seed", c.seed},
                        {"pool", to_json(c.pool)},
                        {"weights", to_json(c.weights)},
                        {"ais_enabled", c.ais_enabled},
                        {"distort_after_second_embedding", c.distort_after_second_embedding},
                        {"train_discriminator", c.train_discriminator},
                        {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& where) {
  require_object(j, where);
  TrainConfig c;
  read(j, where, "steps", c.steps);
  read(j, where, "batch_size", c.batch_size);
  read(j, where, "lr_codec", c.lr_codec);
  read(j, where, "lr_discriminator", c.lr_discriminator);
  read(j, where, "seed", c.seed);
  read(j, where, "ais_enabled", c.ais_enabled);
  read(j, where, "distort_after_second_embedding", c.distort_after_second_embedding);
  read(j, where, "train_discriminator", c.train_discriminator);
  read(j, where, "checkpoint_every", c.checkpoint_every);
  if (j.contains("pool")) c.pool = distortion_pool_from_json(j.at("pool"), where + ".pool");
  if (j.contains("weights")) c.weights = loss_weights_from_json(j.at("weights"), where + ".weights");
  validated(where, [&] { c.validate(); });
  return c;
}

}  // namespace mea
