#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "traitfuse/dataset.hpp"
#include "traitfuse/model_config.hpp"

namespace traitfuse {

/// A behaviour acted out over [start, end) seconds. Intensity 1 drives the
/// feature to its canonical planted value; smaller values interpolate from
/// the neutral pose.
struct Plant {
  Behaviour behaviour = Behaviour::head_tilt;
  double intensity = 1.0;
  double start = 0.0;
  double end = 0.0;

  friend bool operator==(const Plant&, const Plant&) = default;
};

using TraitMatrix = std::array<std::array<double, kBehaviourCount>, kTraitCount>;
using MetadataMatrix = std::array<std::array<double, kMetadataDim>, kTraitCount>;

/// Targets = clamp(bias + behaviour_weights * mean chunk behaviour vector
///                 + metadata_weights * metadata + noise * N(0, 1), 0, 1).
struct TraitFunction {
  std::array<double, kTraitCount> bias{};
  TraitMatrix behaviour_weights{};
  MetadataMatrix metadata_weights{};

  static TraitFunction standard();
  TraitScores apply(const BehaviourVector& mean_behaviour, const DemographicMetadata& meta, double noise) const;
};

struct SynthSpec {
  std::size_t videos = 32;
  double duration = 4.5;  // seconds
  double fps = 15.0;
  std::uint64_t seed = 1;
  double noise = 0.0;
  /// Chance that a behaviour is planted in a video with a random interval
  /// when no explicit schedule is given.
  double plant_probability = 0.5;
  /// Amplitude of the behaviour-dependent pattern added to face/context fields.
  double feature_modulation = 0.03;
  /// Explicit per-video schedules; entry i applies to video i. Videos past
  /// the end of the list get random plants.
  std::vector<std::vector<Plant>> schedules;
  TraitFunction traits = TraitFunction::standard();
  /// Feature grids; face_shape, context_shape, audio_dim and transcript_dim
  /// are taken from here.
  ModelConfig grid = ModelConfig::toy();

  void validate() const;
};

std::string synth_spec_to_json(const SynthSpec& spec);
/// Missing keys keep their defaults.
SynthSpec synth_spec_from_json(std::string_view text);

struct SyntheticVideo {
  KeypointStream keypoints;
  std::vector<ChunkRange> ranges;
  std::vector<Plant> plants;
  VideoSample sample;
};

/// Neutral seated pose at time t, shifted by `offset` (all joints and the
/// head translation).
KeypointFrame neutral_frame(std::int64_t index, double t, const Vec3& offset = {});

/// Applies the plants active at frame.t to a neutral frame.
void apply_plants(KeypointFrame& frame, std::span<const Plant> plants, const Vec3& offset = {});

/// Pure function of (spec, index).
SyntheticVideo gen_synthetic_video(const SynthSpec& spec, std::size_t index);

/// Seeded 3:1:1 train/val/test assignment of `count` videos.
std::vector<Split> assign_splits(std::size_t count, std::uint64_t seed);

Dataset make_synthetic_dataset(const SynthSpec& spec);

/// Writes spec.json, manifest.json and per-video keypoints and tensors under
/// `dir`; returns the manifest path.
std::filesystem::path write_synthetic_dataset(const SynthSpec& spec, const std::filesystem::path& dir);

}  // namespace traitfuse
