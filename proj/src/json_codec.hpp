#pragma once

// nlohmann/json bindings for configuration types; internal to the library.

#include "json.hpp"
#include "stgcn/config.hpp"

namespace stgcn::codec {

using nlohmann::json;

json encode(const ModelConfig& cfg);
json encode(const TrainConfig& cfg);
json encode(const SynthConfig& cfg);
ModelConfig decode_model(const json& j);
TrainConfig decode_train(const json& j);
SynthConfig decode_synth(const json& j);

/// Parses `text`, turning syntax errors into ValidationError.
json parse(std::string_view text, const char* what);

}  // namespace stgcn::codec
