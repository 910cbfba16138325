#include "traitfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <numeric>
#include <random>

#include "traitfuse/errors.hpp"
#include "traitfuse/mprt.hpp"
#include "traitfuse/qkv.hpp"
#include "traitfuse/random.hpp"

namespace traitfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Neutral seated pose, root at the hips.
const std::array<std::pair<const char*, Vec3>, 10> kNeutralJoints{{
    {"head", {0, 65, 0}},
    {"root", {0, 0, 0}},
    {"left_shoulder", {-18, 50, 0}},
    {"right_shoulder", {18, 50, 0}},
    {"left_elbow", {-22, 25, 5}},
    {"right_elbow", {22, 25, 5}},
    {"left_wrist", {-15, 5, 25}},
    {"right_wrist", {15, 5, 25}},
    {"left_knee", {-12, 0, 45}},
    {"right_knee", {12, 0, 45}},
}};

// Canonical planted amounts at intensity 1.
constexpr double kTiltDegrees = 30.0;
constexpr double kThrustAmplitude = 15.0;  // cm over half a 1 s period
constexpr double kThrustPeriod = 1.0;
constexpr double kBobAmplitude = 20.0;  // degrees over half a 0.5 s period
constexpr double kBobPeriod = 0.5;
constexpr double kActionUnit = 3.0;
constexpr double kLipSuck = 5.0;
constexpr Vec3 kCrouchHead{0, 12, 45};
constexpr double kLean = 15.0;
constexpr double kFoldCross = 5.0;
constexpr double kHandFace = 10.0;
constexpr double kHandMouth = 5.0;
constexpr double kHandSlack = 40.0;
constexpr double kFoldSlack = 30.0;

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 lerp(const Vec3& a, const Vec3& b, double s) {
  return {a.x + (b.x - a.x) * s, a.y + (b.y - a.y) * s, a.z + (b.z - a.z) * s};
}

// 0 -> 1 -> 0 over one period.
double triangle(double u, double period) {
  const double f = u / period - std::floor(u / period);
  return f < 0.5 ? 2.0 * f : 2.0 - 2.0 * f;
}

double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// Sum of a per-channel plane wave and a fixed random pattern per behaviour.
Tensor feature_field(const Shape& shape, const BehaviourVector& behaviour, double modulation,
                     std::uint64_t pattern_seed, std::mt19937_64& rng) {
  Tensor out(shape);
  const std::size_t c = shape[0], t = shape[1], h = shape[2], w = shape[3];
  std::uniform_real_distribution<double> amp(0.5, 1.0), freq(0.0, 1.5), phase(0.0, 2.0 * std::numbers::pi);
  std::size_t k = 0;
  for (std::size_t ci = 0; ci < c; ++ci) {
    const double a = amp(rng), ft = freq(rng), fh = freq(rng), fw = freq(rng), ph = phase(rng);
    for (std::size_t ti = 0; ti < t; ++ti) {
      for (std::size_t hi = 0; hi < h; ++hi) {
        for (std::size_t wi = 0; wi < w; ++wi) {
          const double arg = 2.0 * std::numbers::pi *
                             (ft * static_cast<double>(ti) / static_cast<double>(t) +
                              fh * static_cast<double>(hi) / static_cast<double>(h) +
                              fw * static_cast<double>(wi) / static_cast<double>(w));
          out[k++] = a * std::sin(arg + ph);
        }
      }
    }
  }
  for (std::size_t b = 0; b < kBehaviourCount; ++b) {
    if (behaviour.values[b] == 0.0) continue;
    std::mt19937_64 prng(derive_seed(pattern_seed, {b}));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double gain = modulation * behaviour.values[b];
    for (auto& v : out.data()) v += gain * unit(prng);
  }
  for (auto& v : out.data()) v = as_f32(v);
  return out;
}

Tensor random_vector(std::size_t n, std::mt19937_64& rng) {
  Tensor out({n});
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : out.data()) v = as_f32(dist(rng));
  return out;
}

std::size_t frame_count_for(const SynthSpec& spec) {
  return static_cast<std::size_t>(std::floor(spec.duration * spec.fps + 1e-9));
}

}  // namespace

TraitFunction TraitFunction::standard() {
  TraitFunction f;
  f.bias = {0.46, 0.45, 0.45, 0.49, 0.32};
  // Columns follow the behaviour order: tilt, thrust, bob, lips in, mouth
  // corner, frown, small mouth, wrinkle, crouch, lean, fold arms, hand to
  // face, hand to mouth.
  f.behaviour_weights = {{
      {0.15, 0.06, -0.05, -0.09, 0.12, -0.08, -0.06, 0.03, -0.10, 0.14, -0.12, 0.08, 0.05},
      {-0.06, 0.09, 0.12, 0.08, -0.05, 0.10, 0.14, -0.09, 0.06, 0.08, 0.09, -0.12, -0.10},
      {0.10, 0.15, 0.14, -0.12, 0.16, -0.06, -0.09, 0.05, -0.14, 0.12, -0.15, 0.06, 0.03},
      {0.08, -0.05, 0.09, 0.06, 0.14, -0.16, -0.10, -0.12, 0.03, 0.05, -0.09, 0.08, 0.06},
      {-0.03, -0.08, -0.06, 0.14, -0.10, 0.15, 0.12, 0.10, 0.12, -0.09, 0.14, 0.09, 0.10},
  }};
  // ethnicity (3), gender (2), age, attractiveness
  f.metadata_weights = {{
      {0.01, -0.01, 0.00, 0.02, -0.02, -0.04, 0.05},
      {0.00, 0.01, -0.01, -0.01, 0.01, 0.06, 0.02},
      {-0.01, 0.00, 0.01, 0.02, -0.02, -0.05, 0.06},
      {0.01, 0.00, -0.01, -0.02, 0.02, 0.03, 0.03},
      {0.00, -0.01, 0.01, -0.02, 0.02, -0.03, -0.04},
  }};
  return f;
}

TraitScores TraitFunction::apply(const BehaviourVector& mean_behaviour, const DemographicMetadata& meta,
                                 double noise) const {
  TraitScores out;
  const auto m = meta.values();
  for (std::size_t j = 0; j < kTraitCount; ++j) {
    double v = bias[j] + noise;
    for (std::size_t b = 0; b < kBehaviourCount; ++b) v += behaviour_weights[j][b] * mean_behaviour.values[b];
    for (std::size_t k = 0; k < kMetadataDim; ++k) v += metadata_weights[j][k] * m[k];
    out.values[j] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

void SynthSpec::validate() const {
  if (videos == 0) throw ParameterError("synthetic spec: videos must be positive");
  if (!(fps > 0.0) || !(duration > 0.0)) throw ParameterError("synthetic spec: fps and duration must be positive");
  chunk_video(frame_count_for(*this), fps);
  if (!(noise >= 0.0)) throw ParameterError("synthetic spec: noise must be nonnegative");
  if (!(plant_probability >= 0.0 && plant_probability <= 1.0)) {
    throw ParameterError("synthetic spec: plant_probability must lie in [0, 1]");
  }
  for (std::size_t v = 0; v < schedules.size(); ++v) {
    for (const auto& p : schedules[v]) {
      if (!(p.intensity >= 0.0 && p.intensity <= 1.0) || !(p.start <= p.end)) {
        throw ParameterError("synthetic spec: video " + std::to_string(v) + " has a plant with intensity outside "
                             "[0, 1] or an inverted interval");
      }
    }
  }
  grid.validate();
}

std::string synth_spec_to_json(const SynthSpec& spec) {
  json schedules = json::array();
  for (const auto& sched : spec.schedules) {
    json plants = json::array();
    for (const auto& p : sched) {
      plants.push_back({{"behaviour", std::string(behaviour_name(p.behaviour))},
                        {"intensity", p.intensity},
                        {"start", p.start},
                        {"end", p.end}});
    }
    schedules.push_back(std::move(plants));
  }
  const json j{{"videos", spec.videos},
               {"duration", spec.duration},
               {"fps", spec.fps},
               {"seed", spec.seed},
               {"noise", spec.noise},
               {"plant_probability", spec.plant_probability},
               {"feature_modulation", spec.feature_modulation},
               {"schedules", schedules},
               {"traits",
                {{"bias", spec.traits.bias},
                 {"behaviour_weights", spec.traits.behaviour_weights},
                 {"metadata_weights", spec.traits.metadata_weights}}},
               {"grid", json::parse(model_config_to_json(spec.grid))}};
  return j.dump(2);
}

SynthSpec synth_spec_from_json(std::string_view text) {
  SynthSpec spec;
  try {
    const json j = json::parse(text);
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("videos", spec.videos);
    get("duration", spec.duration);
    get("fps", spec.fps);
    get("seed", spec.seed);
    get("noise", spec.noise);
    get("plant_probability", spec.plant_probability);
    get("feature_modulation", spec.feature_modulation);
    if (j.contains("schedules")) {
      for (const auto& sched : j.at("schedules")) {
        std::vector<Plant> plants;
        for (const auto& p : sched) {
          const auto name = p.at("behaviour").get<std::string>();
          const auto b = behaviour_from_name(name);
          if (!b) throw DataError("synthetic spec: unknown behaviour '" + name + "'");
          plants.push_back({*b, p.value("intensity", 1.0), p.at("start").get<double>(), p.at("end").get<double>()});
        }
        spec.schedules.push_back(std::move(plants));
      }
    }
    if (j.contains("traits")) {
      const auto& t = j.at("traits");
      if (t.contains("bias")) t.at("bias").get_to(spec.traits.bias);
      if (t.contains("behaviour_weights")) t.at("behaviour_weights").get_to(spec.traits.behaviour_weights);
      if (t.contains("metadata_weights")) t.at("metadata_weights").get_to(spec.traits.metadata_weights);
    }
    if (j.contains("grid")) spec.grid = model_config_from_json(j.at("grid").dump());
  } catch (const json::exception& e) {
    throw DataError(std::string("synthetic spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

KeypointFrame neutral_frame(std::int64_t index, double t, const Vec3& offset) {
  KeypointFrame f;
  f.frame_index = index;
  f.t = t;
  for (const auto& [name, p] : kNeutralJoints) f.joints[name] = p + offset;
  f.head.translation = f.joints.at("head");
  return f;
}

void apply_plants(KeypointFrame& f, std::span<const Plant> plants, const Vec3& offset) {
  auto active = [&](Behaviour b) -> std::optional<Plant> {
    for (const auto& p : plants) {
      if (p.behaviour == b && p.start <= f.t && f.t < p.end) return p;
    }
    return std::nullopt;
  };
  auto& j = f.joints;
  if (auto p = active(Behaviour::head_tilt)) f.head.roll = kTiltDegrees * p->intensity;
  if (auto p = active(Behaviour::thrust)) {
    f.head.translation.z += kThrustAmplitude * p->intensity * triangle(f.t - p->start, kThrustPeriod);
  }
  if (auto p = active(Behaviour::bob)) {
    f.head.pitch += kBobAmplitude * p->intensity * triangle(f.t - p->start, kBobPeriod);
  }
  for (auto b : {Behaviour::mouth_corner, Behaviour::frown, Behaviour::small_mouth, Behaviour::wrinkle}) {
    if (auto p = active(b)) f.aus[std::string(action_unit_of(b))] = kActionUnit * p->intensity;
  }
  if (auto p = active(Behaviour::lips_in)) f.aus[std::string(action_unit_of(Behaviour::lips_in))] = kLipSuck * p->intensity;
  if (auto p = active(Behaviour::crouch)) j["head"] = lerp(j["head"], kCrouchHead + offset, p->intensity);
  if (auto p = active(Behaviour::lean_forward)) {
    const double dz = kLean * p->intensity;
    j["left_shoulder"].z += dz;
    j["right_shoulder"].z += dz;
    j["head"].z += dz;
  }
  if (auto p = active(Behaviour::fold_arms)) {
    const double d = kFoldCross + kFoldSlack * (1.0 - p->intensity);
    j["left_elbow"] = Vec3{-12, 5, 20} + offset;
    j["right_elbow"] = Vec3{12, 5, 20} + offset;
    j["right_wrist"] = j["left_elbow"] + Vec3{d, 0, 0};
    j["left_wrist"] = j["right_elbow"] + Vec3{-d, 0, 0};
  }
  if (auto p = active(Behaviour::hand_to_face)) {
    j["right_wrist"] = j["head"] + Vec3{0, 0, kHandFace + kHandSlack * (1.0 - p->intensity)};
  }
  if (auto p = active(Behaviour::hand_to_mouth)) {
    j["left_wrist"] = j["head"] + Vec3{0, -kMouthBelowHead, kHandMouth + kHandSlack * (1.0 - p->intensity)};
  }
}

SyntheticVideo gen_synthetic_video(const SynthSpec& spec, std::size_t index) {
  const auto& grid = spec.grid;
  std::mt19937_64 rng(derive_seed(spec.seed, {index}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticVideo out;

  std::uniform_real_distribution<double> shift(-20.0, 20.0);
  const Vec3 offset{shift(rng), shift(rng), shift(rng)};

  if (index < spec.schedules.size()) {
    out.plants = spec.schedules[index];
  } else {
    for (auto b : all_behaviours()) {
      const double draw = unit(rng);
      const double intensity = 0.7 + 0.3 * unit(rng);
      const double fraction = 0.3 + 0.7 * unit(rng);
      const double start = (1.0 - fraction) * spec.duration * unit(rng);
      if (draw < spec.plant_probability) out.plants.push_back({b, intensity, start, start + fraction * spec.duration});
    }
  }

  const std::size_t frames = frame_count_for(spec);
  out.keypoints.reserve(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    KeypointFrame f = neutral_frame(static_cast<std::int64_t>(i), static_cast<double>(i) / spec.fps, offset);
    apply_plants(f, out.plants, offset);
    out.keypoints.push_back(std::move(f));
  }

  static constexpr std::array<const char*, 3> kEthnicities{"caucasian", "african_american", "asian"};
  static constexpr std::array<const char*, 2> kGenders{"male", "female"};
  const double e = unit(rng);
  const std::size_t ethnicity = e < 0.6 ? 0 : e < 0.8 ? 1 : 2;
  const std::size_t gender = unit(rng) < 0.5 ? 0 : 1;
  const double age = 18.0 + 52.0 * unit(rng);
  const double attractiveness = unit(rng);
  const double noise = spec.noise * std::normal_distribution<double>(0.0, 1.0)(rng);

  VideoSample& s = out.sample;
  char id[32];
  std::snprintf(id, sizeof id, "video_%04zu", index);
  s.id = id;
  s.metadata = encode_metadata(kEthnicities[ethnicity], kGenders[gender], age, attractiveness);
  s.transcript = random_vector(grid.transcript_dim, rng);

  out.ranges = chunk_video(frames, spec.fps);
  BehaviourVector mean;
  for (const auto& range : out.ranges) {
    ChunkFeatures ch;
    ch.behaviour = encode_chunk(out.keypoints, range);
    ch.face = feature_field(grid.face_shape, ch.behaviour, spec.feature_modulation,
                            derive_seed(spec.seed, {0xFACE}), rng);
    ch.context = feature_field(grid.context_shape, ch.behaviour, spec.feature_modulation,
                               derive_seed(spec.seed, {0xC0DE}), rng);
    ch.audio = random_vector(grid.audio_dim, rng);
    for (std::size_t b = 0; b < kBehaviourCount; ++b) mean.values[b] += ch.behaviour.values[b];
    s.chunks.push_back(std::move(ch));
  }
  for (auto& v : mean.values) v /= static_cast<double>(out.ranges.size());
  s.targets = spec.traits.apply(mean, s.metadata, noise);
  return out;
}

std::vector<Split> assign_splits(std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, {0x5B117}));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(count)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(count)));
  std::vector<Split> out(count, Split::test);
  for (std::size_t k = 0; k < count; ++k) {
    out[order[k]] = k < n_train ? Split::train : k < n_train + n_val ? Split::val : Split::test;
  }
  return out;
}

Dataset make_synthetic_dataset(const SynthSpec& spec) {
  spec.validate();
  const auto splits = assign_splits(spec.videos, spec.seed);
  Dataset data;
  data.videos.reserve(spec.videos);
  for (std::size_t i = 0; i < spec.videos; ++i) {
    auto video = gen_synthetic_video(spec, i);
    video.sample.split = splits[i];
    data.videos.push_back(std::move(video.sample));
  }
  return data;
}

fs::path write_synthetic_dataset(const SynthSpec& spec, const fs::path& dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  {
    std::ofstream out(dir / "spec.json");
    out << synth_spec_to_json(spec) << '\n';
    if (!out) throw IoError("cannot write " + (dir / "spec.json").string());
  }
  const auto splits = assign_splits(spec.videos, spec.seed);
  DatasetManifest manifest;
  for (std::size_t i = 0; i < spec.videos; ++i) {
    const auto video = gen_synthetic_video(spec, i);
    const auto& s = video.sample;
    const fs::path rel = fs::path("videos") / s.id;
    fs::create_directories(dir / rel, ec);
    if (ec) throw IoError("cannot create " + (dir / rel).string() + ": " + ec.message());
    ManifestEntry e;
    e.id = s.id;
    e.fps = spec.fps;
    e.frame_count = video.keypoints.size();
    e.keypoints = (rel / "keypoints.jsonl").generic_string();
    save_keypoints(dir / e.keypoints, video.keypoints);
    for (std::size_t k = 0; k < s.chunks.size(); ++k) {
      const auto& ch = s.chunks[k];
      const std::string stem = (rel / ("chunk" + std::to_string(k))).generic_string();
      ManifestChunk mc{stem + "_face.mprt", stem + "_context.mprt", stem + "_audio.mprt", ch.behaviour};
      write_mprt(dir / mc.face, ch.face);
      write_mprt(dir / mc.context, ch.context);
      write_mprt(dir / mc.audio, ch.audio);
      e.chunks.push_back(std::move(mc));
    }
    e.transcript = (rel / "transcript.mprt").generic_string();
    write_mprt(dir / e.transcript, s.transcript);
    e.metadata = s.metadata;
    e.targets = s.targets;
    e.split = splits[i];
    manifest.videos.push_back(std::move(e));
  }
  const fs::path manifest_path = dir / "manifest.json";
  save_manifest(manifest_path, manifest);
  return manifest_path;
}

}  // namespace traitfuse
