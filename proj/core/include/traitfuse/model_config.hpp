#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "traitfuse/tensor.hpp"

namespace traitfuse {

/// Optional inputs of the model; every one is on in the full configuration.
struct InputSet {
  bool behaviour = true;
  bool transcript = true;
  bool metadata = true;
  bool lstm = true;

  friend bool operator==(const InputSet&, const InputSet&) = default;
};

/// Names of the inputs switched off in `inputs`, comma separated; "" if none.
std::string disabled_names(const InputSet& inputs);
/// Parses "behaviour,transcript,..." into the set with those inputs off.
/// Throws ParameterError for unknown names.
InputSet inputs_without(std::string_view disabled_csv);

struct ModelConfig {
  Shape face_shape{64, 8, 14, 14};    // (C, T, H, W)
  Shape context_shape{64, 8, 7, 7};   // (C, T, H, W)
  std::size_t audio_dim = 128;
  std::size_t transcript_dim = 768;

  std::size_t query_conv3d_kernels = 16;
  std::size_t query_conv2d_kernels = 128;
  std::size_t audio_projection = 100;
  std::size_t model_dim = 128;
  std::size_t heads = 2;
  std::size_t layers = 3;
  std::size_t ffn_hidden = 256;
  std::size_t lstm_layers = 2;
  std::size_t temporal_encoding = 16;
  std::size_t spatial_encoding = 16;
  std::size_t encoding_hidden = 32;
  double dropout = 0.2;

  InputSet inputs;

  /// Small grids for tests and synthetic runs: face (8,2,8,8), context
  /// (8,2,2,2), audio 16, transcript 16. Layer widths keep their defaults.
  static ModelConfig toy();

  /// Throws ParameterError/DimensionError for inconsistent settings.
  void validate() const;

  std::size_t tokens() const;
  /// Channels per key/value token: context + encoding + behaviour + audio.
  std::size_t token_dim() const;
  std::size_t head_dim() const { return model_dim / heads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(std::string_view text);

}  // namespace traitfuse
