#include "traitfuse/qkv.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "traitfuse/errors.hpp"
#include "traitfuse/random.hpp"

namespace traitfuse {

namespace {

constexpr std::array<std::size_t, 3> kPool3d{1, 2, 2};
constexpr std::array<std::size_t, 2> kPool2d{2, 2};
constexpr std::size_t kConv2dWindow = 2;

constexpr std::array<const char*, 7> kStepNames{
    "3D max pool", "3D conv", "ReLU + merge time into channels", "2D max pool", "2D conv", "ReLU + flatten",
    "linear + ReLU + dropout"};

[[noreturn]] void step_failure(std::size_t step, const std::string& detail) {
  throw DimensionError("query step " + std::to_string(step + 1) + " (" + kStepNames[step] + "): " + detail);
}

std::size_t fan_in(const Shape& kernel_shape) {
  std::size_t n = 1;
  for (std::size_t i = 1; i < kernel_shape.size(); ++i) n *= kernel_shape[i];
  return n;
}

}  // namespace

DemographicMetadata encode_metadata(std::string_view ethnicity, std::string_view gender, double age_years,
                                    std::optional<double> attractiveness, const MetadataEncoding& encoding) {
  if (encoding.ethnicities.size() != 3 || encoding.genders.size() != 2) {
    throw ParameterError("metadata encoding needs 3 ethnicity and 2 gender labels");
  }
  DemographicMetadata m;
  auto eth = std::find(encoding.ethnicities.begin(), encoding.ethnicities.end(), ethnicity);
  if (eth == encoding.ethnicities.end()) throw DataError("unknown ethnicity label '" + std::string(ethnicity) + "'");
  auto gen = std::find(encoding.genders.begin(), encoding.genders.end(), gender);
  if (gen == encoding.genders.end()) throw DataError("unknown gender label '" + std::string(gender) + "'");
  const auto eth_index = static_cast<std::size_t>(eth - encoding.ethnicities.begin());
  m.ethnicity = {0.0, 0.0, 0.0};
  m.ethnicity[eth_index] = 1.0;
  m.gender = {0.0, 0.0};
  m.gender[static_cast<std::size_t>(gen - encoding.genders.begin())] = 1.0;
  if (!(age_years >= 0.0 && age_years <= encoding.max_age)) {
    throw DataError("age " + std::to_string(age_years) + " outside [0, " + std::to_string(encoding.max_age) + "]");
  }
  m.age = age_years / encoding.max_age;
  m.attractiveness = 0.0;
  if (attractiveness && eth_index == 0) {
    if (!(*attractiveness >= 0.0 && *attractiveness <= 1.0)) {
      throw DataError("attractiveness " + std::to_string(*attractiveness) + " outside [0, 1]");
    }
    m.attractiveness = *attractiveness;
  }
  return m;
}

std::vector<Shape> query_shape_trace(const ModelConfig& cfg) {
  const auto& f = cfg.face_shape;
  if (f.size() != 4) throw DimensionError("face grid must be (C, T, H, W), got " + shape_string(f));
  std::vector<Shape> trace;
  const std::size_t c = f[0], t = f[1], h = f[2], w = f[3];
  if (h < kPool3d[1] || w < kPool3d[2]) step_failure(0, "spatial extent below pooling kernel 2 in " + shape_string(f));
  const std::size_t h1 = (h - 2) / 2 + 1, w1 = (w - 2) / 2 + 1;
  trace.push_back({c, t, h1, w1});
  trace.push_back({cfg.query_conv3d_kernels, t, h1, w1});
  trace.push_back({cfg.query_conv3d_kernels * t, h1, w1});
  if (h1 < kPool2d[0] || w1 < kPool2d[1]) {
    step_failure(3, "spatial extent below pooling kernel 2 in " + shape_string(trace.back()));
  }
  const std::size_t h2 = (h1 - 2) / 2 + 1, w2 = (w1 - 2) / 2 + 1;
  trace.push_back({cfg.query_conv3d_kernels * t, h2, w2});
  if (h2 < kConv2dWindow || w2 < kConv2dWindow) {
    step_failure(4, "spatial extent below convolution window 2 in " + shape_string(trace.back()));
  }
  const std::size_t h3 = h2 - kConv2dWindow + 1, w3 = w2 - kConv2dWindow + 1;
  trace.push_back({cfg.query_conv2d_kernels, h3, w3});
  trace.push_back({cfg.query_conv2d_kernels * h3 * w3});
  trace.push_back({cfg.model_dim});
  return trace;
}

PipelineParams PipelineParams::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const auto trace = query_shape_trace(cfg);
  const std::size_t face_channels = cfg.face_shape[0];
  const std::size_t merged = trace[2][0];
  PipelineParams p;
  Shape k3{cfg.query_conv3d_kernels, face_channels, 1, 1, 1};
  Shape k2{cfg.query_conv2d_kernels, merged, kConv2dWindow, kConv2dWindow};
  const double b3 = 1.0 / std::sqrt(static_cast<double>(fan_in(k3)));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(fan_in(k2)));
  p.conv3d_kernels = {"pipeline.conv3d.kernels", uniform_tensor(k3, b3, rng)};
  p.conv3d_bias = {"pipeline.conv3d.bias", uniform_tensor({cfg.query_conv3d_kernels}, b3, rng)};
  p.conv2d_kernels = {"pipeline.conv2d.kernels", uniform_tensor(k2, b2, rng)};
  p.conv2d_bias = {"pipeline.conv2d.bias", uniform_tensor({cfg.query_conv2d_kernels}, b2, rng)};
  p.query_reduce = Linear("pipeline.query_reduce", trace[5][0], cfg.model_dim, rng);
  p.query_fuse =
      Linear("pipeline.query_fuse", cfg.model_dim + (cfg.inputs.metadata ? kMetadataDim : 0), cfg.model_dim, rng);
  p.audio_projection = Linear("pipeline.audio_projection", cfg.audio_dim, cfg.audio_projection, rng);
  p.key = Linear("pipeline.key", cfg.token_dim(), cfg.model_dim, rng);
  p.value = Linear("pipeline.value", cfg.token_dim(), cfg.model_dim, rng);
  return p;
}

void PipelineParams::collect(std::vector<Parameter*>& out) {
  out.push_back(&conv3d_kernels);
  out.push_back(&conv3d_bias);
  out.push_back(&conv2d_kernels);
  out.push_back(&conv2d_bias);
  query_reduce.collect(out);
  query_fuse.collect(out);
  audio_projection.collect(out);
  key.collect(out);
  value.collect(out);
}

Var prepare_query(const Var& face, const DemographicMetadata& metadata, const PipelineParams& params,
                  const ModelConfig& cfg, bool training, std::mt19937_64& rng, std::vector<Shape>* trace) {
  Tape& tape = face.tape();
  if (face.value().rank() != 4) step_failure(0, "face tensor must be (C, T, H, W), got " + shape_string(face.shape()));
  Var x = face;
  auto run = [&](std::size_t step, auto&& fn) {
    try {
      x = fn(x);
    } catch (const DimensionError& e) {
      step_failure(step, e.what());
    }
    if (trace) trace->push_back(x.shape());
  };
  run(0, [&](const Var& v) { return pool_max(v, kPool3d, kPool3d); });
  run(1, [&](const Var& v) {
    return convolve(v, tape.param(params.conv3d_kernels), tape.param(params.conv3d_bias), 1, 3);
  });
  run(2, [&](const Var& v) {
    const auto& s = v.shape();
    return reshape(relu(v), {s[0] * s[1], s[2], s[3]});
  });
  run(3, [&](const Var& v) { return pool_max(v, kPool2d, kPool2d); });
  run(4, [&](const Var& v) {
    return convolve(v, tape.param(params.conv2d_kernels), tape.param(params.conv2d_bias), 1, 2);
  });
  run(5, [&](const Var& v) { return reshape(relu(v), {v.value().size()}); });
  run(6, [&](const Var& v) { return dropout(relu(params.query_reduce(v)), cfg.dropout, training, rng); });

  if (cfg.inputs.metadata) {
    const std::array<Var, 2> parts{x, tape.constant(metadata.to_tensor())};
    x = concat(parts, 0);
  }
  x = relu(params.query_fuse(x));
  if (trace) trace->push_back(x.shape());
  return x;
}

KeysValues prepare_keys_values(const Var& context, const Var& encoding, const Var& behaviour, const Var& audio,
                               const PipelineParams& params, const ModelConfig& cfg) {
  const auto& cs = context.shape();
  const auto& es = encoding.shape();
  if (cs.size() != 4 || es.size() != 4 || !std::equal(cs.begin() + 1, cs.end(), es.begin() + 1)) {
    throw DimensionError("keys/values: context grid " + shape_string(cs) + " does not match encoding grid " +
                         shape_string(es));
  }
  const std::array<Var, 2> parts{context, encoding};
  Var x = concat(parts, 0);
  if (cfg.inputs.behaviour) x = broadcast_concat(x, behaviour);
  x = broadcast_concat(x, params.audio_projection(audio));
  const std::size_t channels = x.shape()[0];
  const std::size_t tokens = x.value().size() / channels;
  const Var flat = transpose(reshape(x, {channels, tokens}));
  return {relu(params.key(flat)), relu(params.value(flat))};
}

Tensor behaviour_tensor(const BehaviourVector& b) { return Tensor::vector({b.values.begin(), b.values.end()}); }

}  // namespace traitfuse
