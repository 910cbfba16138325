#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "traitfuse/chunking.hpp"

namespace traitfuse {

/// Centimetres. Axes: x to the subject's left-right, y up, z towards the camera.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

double distance(const Vec3& a, const Vec3& b);

/// Head orientation in degrees and position in centimetres.
struct HeadPose {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
  Vec3 translation;

  friend bool operator==(const HeadPose&, const HeadPose&) = default;
};

struct KeypointFrame {
  std::int64_t frame_index = 0;
  double t = 0.0;  // seconds
  HeadPose head;
  std::map<std::string, Vec3> joints;
  /// FACS action-unit intensities in [0, 5], keyed "AU04", "AU09", ...
  std::map<std::string, double> aus;

  friend bool operator==(const KeypointFrame&, const KeypointFrame&) = default;
};

using KeypointStream = std::vector<KeypointFrame>;

inline constexpr std::array<std::string_view, 10> kRequiredJoints{
    "head",       "root",        "left_shoulder", "right_shoulder", "left_elbow",
    "right_elbow", "left_wrist", "right_wrist",   "left_knee",      "right_knee"};

enum class Behaviour : std::size_t {
  head_tilt,
  thrust,
  bob,
  lips_in,
  mouth_corner,
  frown,
  small_mouth,
  wrinkle,
  crouch,
  lean_forward,
  fold_arms,
  hand_to_face,
  hand_to_mouth,
};

inline constexpr std::size_t kBehaviourCount = 13;

/// All behaviours in encoding order.
std::span<const Behaviour> all_behaviours();
std::string_view behaviour_name(Behaviour b);
std::optional<Behaviour> behaviour_from_name(std::string_view name);
/// Action unit read by the facial behaviours; empty for the others.
std::string_view action_unit_of(Behaviour b);

struct SigmoidParams {
  double center = 0.0;
  double multiplier = 1.0;
};

/// How one behaviour's extracted feature maps to a confidence. Without
/// sigmoid parameters the AU intensity is scaled linearly onto [0, 1].
struct BehaviourRule {
  Behaviour behaviour = Behaviour::head_tilt;
  std::optional<SigmoidParams> sigmoid;
};

using RuleTable = std::array<BehaviourRule, kBehaviourCount>;

const RuleTable& default_rules();

// Gates on the derivative- and pose-based features.
inline constexpr double kThrustLateralRateLimit = 10.0;  // cm/s, |dx/dt| and |dy/dt|
inline constexpr double kBobYawRateLimit = 20.0;         // deg/s
inline constexpr double kFoldArmsElbowHeightLimit = 10.0;  // cm above root
inline constexpr double kMouthBelowHead = 10.0;            // cm
inline constexpr double kMaxActionUnit = 5.0;

/// Confidences in [0, 1], indexed by Behaviour.
struct BehaviourVector {
  std::array<double, kBehaviourCount> values{};

  double operator[](Behaviour b) const { return values[static_cast<std::size_t>(b)]; }
  double& operator[](Behaviour b) { return values[static_cast<std::size_t>(b)]; }

  friend bool operator==(const BehaviourVector&, const BehaviourVector&) = default;
};

/// 1 / (1 + exp(-multiplier * (x - center)))
double sigmoid_confidence(double x, double center, double multiplier);

/// (v[i+1] - v[i-1]) / (t[i+1] - t[i-1]); nullopt at either end of the series.
/// Throws DataError if the three timestamps are not strictly increasing.
std::optional<double> central_derivative(std::span<const double> values, std::span<const double> times,
                                         std::size_t i);

/// Checks timestamps, finiteness, AU ranges and required joints.
void validate_stream(const KeypointStream& stream);

/// Raw feature for one behaviour at frame i, or nullopt when a gate rejects
/// the frame or the frame sits on the stream boundary.
std::optional<double> extract_feature(const KeypointStream& stream, Behaviour b, std::size_t i);

BehaviourVector encode_frame(const KeypointStream& stream, std::size_t i, const RuleTable& rules = default_rules());

/// Mean of the frame vectors over the sampled frames of a chunk.
BehaviourVector encode_chunk(const KeypointStream& stream, const ChunkRange& range,
                             const RuleTable& rules = default_rules());

}  // namespace traitfuse
