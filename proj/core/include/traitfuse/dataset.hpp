#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "traitfuse/behaviour.hpp"
#include "traitfuse/training.hpp"

namespace traitfuse {

/// JSON Lines, one frame per line:
/// {"frame":0,"t":0.0,"head":{"roll":..,"pitch":..,"yaw":..,"tx":..,"ty":..,"tz":..},
///  "joints":{"head":[x,y,z],...},"aus":{"AU04":1.5,...}}
/// Errors carry the 1-based line number; the stream is validated as a whole.
KeypointStream parse_keypoints(std::istream& in);
KeypointStream load_keypoints(const std::filesystem::path& path);
void write_keypoints(std::ostream& out, const KeypointStream& stream);
void save_keypoints(const std::filesystem::path& path, const KeypointStream& stream);

/// `frame,t,head_tilt,...,hand_to_mouth` with one row per frame.
void write_behaviour_csv(std::ostream& out, const KeypointStream& stream, const RuleTable& rules = default_rules());

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

struct ManifestChunk {
  std::string face;
  std::string context;
  std::string audio;
  std::optional<BehaviourVector> behaviour;
};

struct ManifestEntry {
  std::string id;
  double fps = 0.0;
  std::size_t frame_count = 0;
  std::string keypoints;  // optional; used to recompute behaviour vectors
  std::vector<ManifestChunk> chunks;
  std::string transcript;
  DemographicMetadata metadata;
  TraitScores targets;
  Split split = Split::train;
};

/// File paths are relative to the manifest's directory.
struct DatasetManifest {
  std::vector<ManifestEntry> videos;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Reads every referenced tensor. A chunk without a stored behaviour vector
/// is encoded from the keypoint file. Throws DataError when the chunk count
/// disagrees with the chunking rule for (frame_count, fps).
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace traitfuse
