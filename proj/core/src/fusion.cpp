#include "traitfuse/fusion.hpp"

#include <cmath>
#include <string>

#include "traitfuse/errors.hpp"
#include "traitfuse/random.hpp"

namespace traitfuse {

namespace {

constexpr std::array<const char*, 4> kGateNames{"input", "forget", "cell", "output"};

Var as_row(const Var& v) {
  if (v.value().rank() == 2) return v;
  return reshape(v, {1, v.value().size()});
}

Var as_vector(const Var& v) { return v.value().rank() == 1 ? v : reshape(v, {v.value().size()}); }

}  // namespace

void AttentionHeadParams::collect(std::vector<Parameter*>& out) {
  query.collect(out);
  out.push_back(&key);
  value.collect(out);
}

void EncoderLayerParams::collect(std::vector<Parameter*>& out) {
  for (auto& h : heads) h.collect(out);
  output.collect(out);
  norm1.collect(out);
  ffn.collect(out);
  norm2.collect(out);
}

TransformerParams TransformerParams::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  TransformerParams p;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string prefix = "transformer." + std::to_string(l);
    EncoderLayerParams layer;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string hp = prefix + ".head" + std::to_string(h);
      const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.model_dim));
      AttentionHeadParams head;
      head.query = Linear(hp + ".query", cfg.model_dim, cfg.head_dim(), rng);
      head.key = {hp + ".key.weight", uniform_tensor({cfg.model_dim, cfg.head_dim()}, bound, rng)};
      head.value = Linear(hp + ".value", cfg.model_dim, cfg.head_dim(), rng);
      layer.heads.push_back(std::move(head));
    }
    layer.output = Linear(prefix + ".output", cfg.model_dim, cfg.model_dim, rng);
    layer.norm1 = LayerNormParams(prefix + ".norm1", cfg.model_dim);
    layer.ffn = TwoLayerMlp(prefix + ".ffn", cfg.model_dim, cfg.ffn_hidden, cfg.model_dim, rng);
    layer.norm2 = LayerNormParams(prefix + ".norm2", cfg.model_dim);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

void TransformerParams::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers) l.collect(out);
}

void LstmLayerParams::collect(std::vector<Parameter*>& out) {
  for (auto& g : input) g.collect(out);
  for (auto& r : recurrent) out.push_back(&r);
}

LstmParams LstmParams::init(std::size_t layers, std::size_t input_dim, std::size_t hidden, std::mt19937_64& rng) {
  LstmParams p;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string prefix = "lstm." + std::to_string(l) + ".";
    LstmLayerParams layer;
    for (std::size_t g = 0; g < 4; ++g) {
      layer.input[g] = Linear(prefix + kGateNames[g] + ".input", l == 0 ? input_dim : hidden, hidden, rng);
      layer.recurrent[g] = {prefix + kGateNames[g] + ".recurrent", uniform_tensor({hidden, hidden}, bound, rng)};
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

void LstmParams::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers) l.collect(out);
}

HeadParams HeadParams::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  const std::size_t in = cfg.model_dim + (cfg.inputs.transcript ? cfg.transcript_dim : 0);
  return {Linear("head.fuse", in, cfg.model_dim, rng), Linear("head.output", cfg.model_dim, kTraitCount, rng)};
}

void HeadParams::collect(std::vector<Parameter*>& out) {
  fuse.collect(out);
  output.collect(out);
}

Var attention_head(const Var& q, const Var& keys, const Var& values, const AttentionHeadParams& head,
                   ForwardProbe* probe) {
  if (keys.value().rank() != 2 || keys.shape()[0] == 0) {
    throw UsageError("attention needs at least one key token, got keys " + shape_string(keys.shape()));
  }
  if (values.shape()[0] != keys.shape()[0]) {
    throw DimensionError("attention: keys " + shape_string(keys.shape()) + " and values " +
                         shape_string(values.shape()) + " differ in token count");
  }
  const Var qh = head.query(as_row(q));
  const Var kh = matmul(keys, keys.tape().param(head.key));
  const Var vh = head.value(values);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head.query.out_features()));
  const Var weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
  if (probe) probe->attention.push_back(weights.value());
  return matmul(weights, vh);
}

Var cross_attention(const Var& q, const Var& keys, const Var& values, const EncoderLayerParams& layer,
                    ForwardProbe* probe) {
  std::vector<Var> heads;
  heads.reserve(layer.heads.size());
  for (const auto& h : layer.heads) heads.push_back(attention_head(q, keys, values, h, probe));
  return layer.output(concat(heads, 1));
}

Var encoder_layer(const Var& q, const Var& keys, const Var& values, const EncoderLayerParams& layer,
                  ForwardProbe* probe) {
  const Var row = as_row(q);
  const Var x = layer.norm1(add(row, cross_attention(row, keys, values, layer, probe)));
  return layer.norm2(add(x, layer.ffn(x)));
}

Var transformer_forward(const Var& q, const Var& keys, const Var& values, const TransformerParams& params,
                        ForwardProbe* probe) {
  Var x = as_row(q);
  for (const auto& layer : params.layers) x = encoder_layer(x, keys, values, layer, probe);
  return as_vector(x);
}

Var lstm_sequence(std::span<const Var> inputs, const LstmParams& params) {
  if (inputs.empty()) throw UsageError("lstm_sequence: empty chunk sequence");
  if (params.layers.empty()) throw ParameterError("lstm_sequence: no layers");
  Tape& tape = inputs.front().tape();
  const std::size_t hidden = params.hidden();
  std::vector<Var> sequence;
  sequence.reserve(inputs.size());
  for (const auto& x : inputs) sequence.push_back(as_row(x));

  for (const auto& layer : params.layers) {
    std::array<Var, 4> rec;
    for (std::size_t g = 0; g < 4; ++g) rec[g] = tape.param(layer.recurrent[g]);
    Var h = tape.constant(Tensor({1, hidden}));
    Var c = h;
    for (auto& x : sequence) {
      auto gate = [&](std::size_t g) { return add(layer.input[g](x), matmul(h, rec[g])); };
      const Var i = sigmoid(gate(0));
      const Var f = sigmoid(gate(1));
      const Var candidate = tanh(gate(2));
      const Var o = sigmoid(gate(3));
      c = add(mul(f, c), mul(i, candidate));
      h = mul(o, tanh(c));
      x = h;
    }
  }
  return as_vector(sequence.back());
}

Var head_forward(const Var& hidden, const Var& transcript, const HeadParams& params, double dropout_p, bool training,
                 std::mt19937_64& rng) {
  Var x = as_vector(hidden);
  if (transcript.valid()) {
    const std::array<Var, 2> parts{x, as_vector(transcript)};
    x = concat(parts, 0);
  }
  if (x.shape()[0] != params.fuse.in_features()) {
    throw DimensionError("head: input of " + std::to_string(x.shape()[0]) + " features, expected " +
                         std::to_string(params.fuse.in_features()));
  }
  return params.output(dropout(relu(params.fuse(x)), dropout_p, training, rng));
}

FusionModel FusionModel::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  FusionModel m;
  m.config = cfg;
  std::mt19937_64 pos_rng(derive_seed(seed, {0}));
  std::mt19937_64 pipe_rng(derive_seed(seed, {1}));
  std::mt19937_64 tf_rng(derive_seed(seed, {2}));
  std::mt19937_64 lstm_rng(derive_seed(seed, {3}));
  std::mt19937_64 head_rng(derive_seed(seed, {4}));
  const auto& ctx = cfg.context_shape;
  m.positional = init_tables(ctx[1], ctx[2], ctx[3], cfg.temporal_encoding, cfg.spatial_encoding,
                             cfg.encoding_hidden, pos_rng);
  m.pipeline = PipelineParams::init(cfg, pipe_rng);
  m.transformer = TransformerParams::init(cfg, tf_rng);
  if (cfg.inputs.lstm) m.lstm = LstmParams::init(cfg.lstm_layers, cfg.model_dim, cfg.model_dim, lstm_rng);
  m.head = HeadParams::init(cfg, head_rng);
  return m;
}

std::vector<Parameter*> FusionModel::parameters() {
  std::vector<Parameter*> out;
  positional.collect(out);
  pipeline.collect(out);
  transformer.collect(out);
  lstm.collect(out);
  head.collect(out);
  return out;
}

std::vector<const Parameter*> FusionModel::parameters() const {
  auto mutable_params = const_cast<FusionModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::size_t FusionModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

void check_sample(const ModelConfig& cfg, const VideoSample& sample) {
  if (sample.chunks.empty()) throw UsageError("video '" + sample.id + "' has no chunks");
  for (std::size_t i = 0; i < sample.chunks.size(); ++i) {
    const auto& ch = sample.chunks[i];
    auto where = [&] { return "video '" + sample.id + "' chunk " + std::to_string(i) + ": "; };
    if (ch.face.shape() != cfg.face_shape) {
      throw DimensionError(where() + "face " + shape_string(ch.face.shape()) + ", expected " +
                           shape_string(cfg.face_shape));
    }
    if (ch.context.shape() != cfg.context_shape) {
      throw DimensionError(where() + "context " + shape_string(ch.context.shape()) + ", expected " +
                           shape_string(cfg.context_shape));
    }
    if (ch.audio.shape() != Shape{cfg.audio_dim}) {
      throw DimensionError(where() + "audio " + shape_string(ch.audio.shape()) + ", expected (" +
                           std::to_string(cfg.audio_dim) + ")");
    }
  }
  if (cfg.inputs.transcript && sample.transcript.shape() != Shape{cfg.transcript_dim}) {
    throw DimensionError("video '" + sample.id + "': transcript " + shape_string(sample.transcript.shape()) +
                         ", expected (" + std::to_string(cfg.transcript_dim) + ")");
  }
}

Var model_forward(Tape& tape, const FusionModel& model, const VideoSample& sample, bool training,
                  std::mt19937_64& rng, ForwardProbe* probe) {
  const auto& cfg = model.config;
  check_sample(cfg, sample);
  const Var ste = spatiotemporal_encoding(tape, model.positional);
  const Var transcript = cfg.inputs.transcript ? tape.constant(sample.transcript) : Var{};

  std::vector<Var> embeddings;
  embeddings.reserve(sample.chunks.size());
  for (const auto& ch : sample.chunks) {
    const Var query = prepare_query(tape.constant(ch.face), sample.metadata, model.pipeline, cfg, training, rng);
    const Var behaviour = cfg.inputs.behaviour ? tape.constant(behaviour_tensor(ch.behaviour)) : Var{};
    const auto kv = prepare_keys_values(tape.constant(ch.context), ste, behaviour, tape.constant(ch.audio),
                                        model.pipeline, cfg);
    embeddings.push_back(transformer_forward(query, kv.keys, kv.values, model.transformer, probe));
    if (probe) probe->chunk_embeddings.push_back(embeddings.back().value());
  }

  if (cfg.inputs.lstm) {
    return head_forward(lstm_sequence(embeddings, model.lstm), transcript, model.head, cfg.dropout, training, rng);
  }
  std::vector<Var> per_chunk;
  per_chunk.reserve(embeddings.size());
  for (const auto& e : embeddings) {
    per_chunk.push_back(reshape(head_forward(e, transcript, model.head, cfg.dropout, training, rng), {1, kTraitCount}));
  }
  return reshape(median_rows(concat(per_chunk, 0)), {kTraitCount});
}

TraitScores predict(const FusionModel& model, const VideoSample& sample, ForwardProbe* probe) {
  Tape tape;
  std::mt19937_64 unused(0);
  const Var out = model_forward(tape, model, sample, false, unused, probe);
  return TraitScores::from_tensor(out.value()).clamped();
}

}  // namespace traitfuse
