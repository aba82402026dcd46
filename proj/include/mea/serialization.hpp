#pragma once

#include <json.hpp>

#include "mea/codec.hpp"
#include "mea/distortion.hpp"
#include "mea/training.hpp"

namespace mea {

// Readers start from defaults, overwrite the keys present and validate the
// result. Type errors and invalid values raise ConfigError naming the field,
// prefixed with `where`.

nlohmann::json to_json(const CodecConfig& c);
CodecConfig codec_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DistortionSpec& s);
DistortionSpec distortion_spec_from_json(const nlohmann::json& j, const std::string& where = "distortion");

nlohmann::json to_json(const DistortionPool& p);
DistortionPool distortion_pool_from_json(const nlohmann::json& j, const std::string& where = "pool");

nlohmann::json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j, const std::string& where = "weights");

// checkpoint_path is runtime state and not serialized.
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& where = "train");

}  // namespace mea
