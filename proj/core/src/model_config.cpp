#include "traitfuse/model_config.hpp"

#include <json.hpp>

#include "traitfuse/errors.hpp"
#include "traitfuse/sample.hpp"

namespace traitfuse {

using nlohmann::json;

std::string disabled_names(const InputSet& inputs) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(inputs.behaviour, "behaviour");
  add(inputs.transcript, "transcript");
  add(inputs.metadata, "metadata");
  add(inputs.lstm, "lstm");
  return out;
}

InputSet inputs_without(std::string_view disabled_csv) {
  InputSet inputs;
  std::size_t pos = 0;
  while (pos <= disabled_csv.size()) {
    const auto comma = disabled_csv.find(',', pos);
    const auto end = comma == std::string_view::npos ? disabled_csv.size() : comma;
    auto name = disabled_csv.substr(pos, end - pos);
    while (!name.empty() && name.front() == ' ') name.remove_prefix(1);
    while (!name.empty() && name.back() == ' ') name.remove_suffix(1);
    if (name == "behaviour" || name == "behavior") {
      inputs.behaviour = false;
    } else if (name == "transcript") {
      inputs.transcript = false;
    } else if (name == "metadata") {
      inputs.metadata = false;
    } else if (name == "lstm") {
      inputs.lstm = false;
    } else if (!name.empty()) {
      throw ParameterError("unknown input '" + std::string(name) +
                           "' (expected behaviour, transcript, metadata or lstm)");
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return inputs;
}

ModelConfig ModelConfig::toy() {
  ModelConfig cfg;
  cfg.face_shape = {8, 2, 8, 8};
  cfg.context_shape = {8, 2, 2, 2};
  cfg.audio_dim = 16;
  cfg.transcript_dim = 16;
  return cfg;
}

void ModelConfig::validate() const {
  if (face_shape.size() != 4 || context_shape.size() != 4) {
    throw DimensionError("face and context grids must be (C, T, H, W), got " + shape_string(face_shape) + " and " +
                         shape_string(context_shape));
  }
  for (auto e : face_shape) {
    if (e == 0) throw DimensionError("face grid has a zero extent: " + shape_string(face_shape));
  }
  for (auto e : context_shape) {
    if (e == 0) throw DimensionError("context grid has a zero extent: " + shape_string(context_shape));
  }
  if (heads == 0 || model_dim % heads != 0) throw ParameterError("model_dim must be divisible by heads");
  if (layers == 0 || lstm_layers == 0) throw ParameterError("layer counts must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("dropout must lie in [0, 1)");
  for (auto e : {audio_dim, query_conv3d_kernels, query_conv2d_kernels, audio_projection, model_dim, ffn_hidden,
                 temporal_encoding, spatial_encoding, encoding_hidden}) {
    if (e == 0) throw ParameterError("layer widths must be positive");
  }
  if (inputs.transcript && transcript_dim == 0) throw ParameterError("transcript_dim must be positive");
}

std::size_t ModelConfig::tokens() const { return context_shape[1] * context_shape[2] * context_shape[3]; }

std::size_t ModelConfig::token_dim() const {
  return context_shape[0] + temporal_encoding + spatial_encoding + (inputs.behaviour ? kBehaviourCount : 0) +
         audio_projection;
}

std::string model_config_to_json(const ModelConfig& cfg) {
  json j{
      {"face_shape", cfg.face_shape},
      {"context_shape", cfg.context_shape},
      {"audio_dim", cfg.audio_dim},
      {"transcript_dim", cfg.transcript_dim},
      {"query_conv3d_kernels", cfg.query_conv3d_kernels},
      {"query_conv2d_kernels", cfg.query_conv2d_kernels},
      {"audio_projection", cfg.audio_projection},
      {"model_dim", cfg.model_dim},
      {"heads", cfg.heads},
      {"layers", cfg.layers},
      {"ffn_hidden", cfg.ffn_hidden},
      {"lstm_layers", cfg.lstm_layers},
      {"temporal_encoding", cfg.temporal_encoding},
      {"spatial_encoding", cfg.spatial_encoding},
      {"encoding_hidden", cfg.encoding_hidden},
      {"dropout", cfg.dropout},
      {"inputs",
       {{"behaviour", cfg.inputs.behaviour},
        {"transcript", cfg.inputs.transcript},
        {"metadata", cfg.inputs.metadata},
        {"lstm", cfg.inputs.lstm}}},
  };
  return j.dump(2);
}

ModelConfig model_config_from_json(std::string_view text) {
  ModelConfig cfg;
  try {
    const json j = json::parse(text);
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("face_shape", cfg.face_shape);
    get("context_shape", cfg.context_shape);
    get("audio_dim", cfg.audio_dim);
    get("transcript_dim", cfg.transcript_dim);
    get("query_conv3d_kernels", cfg.query_conv3d_kernels);
    get("query_conv2d_kernels", cfg.query_conv2d_kernels);
    get("audio_projection", cfg.audio_projection);
    get("model_dim", cfg.model_dim);
    get("heads", cfg.heads);
    get("layers", cfg.layers);
    get("ffn_hidden", cfg.ffn_hidden);
    get("lstm_layers", cfg.lstm_layers);
    get("temporal_encoding", cfg.temporal_encoding);
    get("spatial_encoding", cfg.spatial_encoding);
    get("encoding_hidden", cfg.encoding_hidden);
    get("dropout", cfg.dropout);
    if (j.contains("inputs")) {
      const auto& in = j.at("inputs");
      cfg.inputs.behaviour = in.value("behaviour", true);
      cfg.inputs.transcript = in.value("transcript", true);
      cfg.inputs.metadata = in.value("metadata", true);
      cfg.inputs.lstm = in.value("lstm", true);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace traitfuse
