#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "traitfuse/layers.hpp"
#include "traitfuse/model_config.hpp"
#include "traitfuse/positional.hpp"
#include "traitfuse/qkv.hpp"
#include "traitfuse/sample.hpp"

namespace traitfuse {

/// Keys are projected without a bias: a bias shifts every score by the same
/// amount, which softmax cancels, so it would never receive a gradient.
struct AttentionHeadParams {
  Linear query;   // model_dim -> head_dim
  Parameter key;  // [model_dim, head_dim]
  Linear value;

  void collect(std::vector<Parameter*>& out);
};

struct EncoderLayerParams {
  std::vector<AttentionHeadParams> heads;
  Linear output;  // model_dim -> model_dim
  LayerNormParams norm1;
  TwoLayerMlp ffn;
  LayerNormParams norm2;

  void collect(std::vector<Parameter*>& out);
};

struct TransformerParams {
  std::vector<EncoderLayerParams> layers;

  static TransformerParams init(const ModelConfig& cfg, std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

/// Gate order: input, forget, cell candidate, output.
struct LstmLayerParams {
  std::array<Linear, 4> input;         // x -> hidden, with bias
  std::array<Parameter, 4> recurrent;  // [hidden, hidden]

  void collect(std::vector<Parameter*>& out);
};

struct LstmParams {
  std::vector<LstmLayerParams> layers;

  static LstmParams init(std::size_t layers, std::size_t input_dim, std::size_t hidden, std::mt19937_64& rng);
  std::size_t hidden() const { return layers.front().recurrent[0].value.extent(0); }
  void collect(std::vector<Parameter*>& out);
};

struct HeadParams {
  Linear fuse;    // hidden (+ transcript) -> model_dim
  Linear output;  // model_dim -> 5

  static HeadParams init(const ModelConfig& cfg, std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

/// Attention weights seen during a forward pass, one (1, N) row per chunk,
/// layer and head in that nesting order.
struct ForwardProbe {
  std::vector<Tensor> attention;
  std::vector<Tensor> chunk_embeddings;
};

/// Single-head attention of q (1, D) over keys/values (N, D); returns (1, head_dim).
Var attention_head(const Var& q, const Var& keys, const Var& values, const AttentionHeadParams& head,
                   ForwardProbe* probe = nullptr);
/// Heads concatenated then projected back to (1, D).
Var cross_attention(const Var& q, const Var& keys, const Var& values, const EncoderLayerParams& layer,
                    ForwardProbe* probe = nullptr);
/// Post-norm: x = norm1(q + attention); out = norm2(x + ffn(x)).
Var encoder_layer(const Var& q, const Var& keys, const Var& values, const EncoderLayerParams& layer,
                  ForwardProbe* probe = nullptr);
/// Every layer attends to the same keys and values. q may be (D) or (1, D);
/// the result is (D).
Var transformer_forward(const Var& q, const Var& keys, const Var& values, const TransformerParams& params,
                        ForwardProbe* probe = nullptr);

/// Stacked LSTM from zero state over (D) vectors; returns the top layer's
/// final hidden state (hidden).
Var lstm_sequence(std::span<const Var> inputs, const LstmParams& params);

/// Concatenates the transcript (skipped when `transcript` is invalid), then
/// linear -> ReLU -> dropout -> linear. Returns raw (5) scores.
Var head_forward(const Var& hidden, const Var& transcript, const HeadParams& params, double dropout, bool training,
                 std::mt19937_64& rng);

struct FusionModel {
  ModelConfig config;
  EncodingTables positional;
  PipelineParams pipeline;
  TransformerParams transformer;
  LstmParams lstm;
  HeadParams head;

  /// Fresh parameters; every component draws from its own stream of `seed`.
  static FusionModel init(const ModelConfig& cfg, std::uint64_t seed);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
};

/// Raw (5) scores for one video. With the LSTM input disabled the head runs
/// per chunk and the median over chunks is returned.
Var model_forward(Tape& tape, const FusionModel& model, const VideoSample& sample, bool training,
                  std::mt19937_64& rng, ForwardProbe* probe = nullptr);

/// Inference scores, clamped to [0, 1].
TraitScores predict(const FusionModel& model, const VideoSample& sample, ForwardProbe* probe = nullptr);

/// Throws DimensionError when a sample's tensors do not match the config.
void check_sample(const ModelConfig& cfg, const VideoSample& sample);

}  // namespace traitfuse
