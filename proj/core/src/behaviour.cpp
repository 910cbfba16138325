#include "traitfuse/behaviour.hpp"

#include <algorithm>
#include <cmath>

#include "traitfuse/errors.hpp"

namespace traitfuse {

namespace {

constexpr std::array<Behaviour, kBehaviourCount> kAll{
    Behaviour::head_tilt,    Behaviour::thrust,      Behaviour::bob,          Behaviour::lips_in,
    Behaviour::mouth_corner, Behaviour::frown,       Behaviour::small_mouth,  Behaviour::wrinkle,
    Behaviour::crouch,       Behaviour::lean_forward, Behaviour::fold_arms,   Behaviour::hand_to_face,
    Behaviour::hand_to_mouth};

constexpr std::array<std::string_view, kBehaviourCount> kNames{
    "head_tilt", "thrust", "bob",          "lips_in",   "mouth_corner", "frown",        "small_mouth",
    "wrinkle",   "crouch", "lean_forward", "fold_arms", "hand_to_face", "hand_to_mouth"};

const Vec3& joint(const KeypointFrame& f, std::string_view name) {
  auto it = f.joints.find(std::string(name));
  if (it == f.joints.end()) {
    throw DataError("frame " + std::to_string(f.frame_index) + ": missing required joint '" + std::string(name) + "'");
  }
  return it->second;
}

double action_unit(const KeypointFrame& f, std::string_view au) {
  auto it = f.aus.find(std::string(au));
  return it == f.aus.end() ? 0.0 : it->second;
}

// Rate of change between frames a < b.
double rate(double va, double vb, double ta, double tb) { return (vb - va) / (tb - ta); }

int direction(double rate) { return rate > 0.0 ? 1 : rate < 0.0 ? -1 : 0; }

// Central rate at i, provided the one-sided rates on both sides are nonzero
// and share a sign.
template <typename Get>
std::optional<double> gated_rate(const KeypointStream& s, std::size_t i, Get get) {
  if (i == 0 || i + 1 >= s.size()) return std::nullopt;
  const auto& a = s[i - 1];
  const auto& b = s[i];
  const auto& c = s[i + 1];
  if (!(a.t < b.t && b.t < c.t)) {
    throw DataError("frame " + std::to_string(b.frame_index) + ": timestamps are not strictly increasing");
  }
  // Motion must keep its direction across the previous and next frame.
  const int before = direction(rate(get(a), get(b), a.t, b.t));
  const int after = direction(rate(get(b), get(c), b.t, c.t));
  if (before == 0 || before != after) return std::nullopt;
  return rate(get(a), get(c), a.t, c.t);
}

double central_rate(const KeypointStream& s, std::size_t i, auto get) {
  const auto& a = s[i - 1];
  const auto& c = s[i + 1];
  return rate(get(a), get(c), a.t, c.t);
}

}  // namespace

double distance(const Vec3& a, const Vec3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

std::span<const Behaviour> all_behaviours() { return kAll; }

std::string_view behaviour_name(Behaviour b) { return kNames.at(static_cast<std::size_t>(b)); }

std::optional<Behaviour> behaviour_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kBehaviourCount; ++i) {
    if (kNames[i] == name) return kAll[i];
  }
  return std::nullopt;
}

std::string_view action_unit_of(Behaviour b) {
  switch (b) {
    case Behaviour::lips_in: return "AU28";       // lip suck
    case Behaviour::mouth_corner: return "AU20";  // lip stretcher
    case Behaviour::frown: return "AU04";         // brow lowerer
    case Behaviour::small_mouth: return "AU23";   // lip tightener
    case Behaviour::wrinkle: return "AU09";       // nose wrinkler
    default: return {};
  }
}

const RuleTable& default_rules() {
  static const RuleTable rules{{
      {Behaviour::head_tilt, SigmoidParams{10.0, 1.0}},
      {Behaviour::thrust, SigmoidParams{-25.0, 1.0}},
      {Behaviour::bob, SigmoidParams{-50.0, 1.0}},
      {Behaviour::lips_in, std::nullopt},
      {Behaviour::mouth_corner, SigmoidParams{1.2, 6.0}},
      {Behaviour::frown, SigmoidParams{1.2, 6.0}},
      {Behaviour::small_mouth, SigmoidParams{1.2, 6.0}},
      {Behaviour::wrinkle, SigmoidParams{1.2, 6.0}},
      {Behaviour::crouch, SigmoidParams{30.0, -0.35}},
      {Behaviour::lean_forward, SigmoidParams{10.0, 4.0}},
      {Behaviour::fold_arms, SigmoidParams{20.0, -0.5}},
      {Behaviour::hand_to_face, SigmoidParams{35.0, -0.5}},
      {Behaviour::hand_to_mouth, SigmoidParams{25.0, -0.5}},
  }};
  return rules;
}

double sigmoid_confidence(double x, double center, double multiplier) {
  return 1.0 / (1.0 + std::exp(-multiplier * (x - center)));
}

std::optional<double> central_derivative(std::span<const double> values, std::span<const double> times,
                                         std::size_t i) {
  if (values.size() != times.size()) throw UsageError("central_derivative: series lengths differ");
  if (i >= values.size()) throw UsageError("central_derivative: index out of range");
  if (i == 0 || i + 1 >= values.size()) return std::nullopt;
  if (!(times[i - 1] < times[i] && times[i] < times[i + 1])) {
    throw DataError("central_derivative: timestamps not strictly increasing around index " + std::to_string(i));
  }
  return (values[i + 1] - values[i - 1]) / (times[i + 1] - times[i - 1]);
}

void validate_stream(const KeypointStream& stream) {
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto& f = stream[i];
    const std::string where = "frame " + std::to_string(f.frame_index);
    if (!std::isfinite(f.t)) throw DataError(where + ": non-finite timestamp");
    if (i > 0 && !(stream[i - 1].t < f.t)) throw DataError(where + ": timestamp not strictly increasing");
    const auto& h = f.head;
    for (double v : {h.roll, h.pitch, h.yaw, h.translation.x, h.translation.y, h.translation.z}) {
      if (!std::isfinite(v)) throw DataError(where + ": non-finite head pose");
    }
    for (auto name : kRequiredJoints) joint(f, name);
    for (const auto& [name, p] : f.joints) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
        throw DataError(where + ": non-finite coordinate for joint '" + name + "'");
      }
    }
    for (const auto& [name, v] : f.aus) {
      if (!(v >= 0.0 && v <= kMaxActionUnit)) {
        throw DataError(where + ": action unit " + name + " intensity " + std::to_string(v) + " outside [0, 5]");
      }
    }
  }
}

std::optional<double> extract_feature(const KeypointStream& stream, Behaviour b, std::size_t i) {
  if (i >= stream.size()) throw UsageError("extract_feature: frame index out of range");
  const auto& f = stream[i];
  switch (b) {
    case Behaviour::head_tilt:
      return std::abs(f.head.roll);
    case Behaviour::thrust: {
      auto dz = gated_rate(stream, i, [](const KeypointFrame& k) { return k.head.translation.z; });
      if (!dz) return std::nullopt;
      const auto dx = central_rate(stream, i, [](const KeypointFrame& k) { return k.head.translation.x; });
      const auto dy = central_rate(stream, i, [](const KeypointFrame& k) { return k.head.translation.y; });
      if (std::abs(dx) >= kThrustLateralRateLimit || std::abs(dy) >= kThrustLateralRateLimit) return std::nullopt;
      return dz;
    }
    case Behaviour::bob: {
      auto dpitch = gated_rate(stream, i, [](const KeypointFrame& k) { return k.head.pitch; });
      if (!dpitch) return std::nullopt;
      const auto dyaw = central_rate(stream, i, [](const KeypointFrame& k) { return k.head.yaw; });
      if (std::abs(dyaw) >= kBobYawRateLimit) return std::nullopt;
      return dpitch;
    }
    case Behaviour::lips_in:
    case Behaviour::mouth_corner:
    case Behaviour::frown:
    case Behaviour::small_mouth:
    case Behaviour::wrinkle:
      return action_unit(f, action_unit_of(b));
    case Behaviour::crouch: {
      const auto& head = joint(f, "head");
      return 0.5 * (distance(joint(f, "left_knee"), head) + distance(joint(f, "right_knee"), head));
    }
    case Behaviour::lean_forward: {
      const auto& root = joint(f, "root");
      const double shoulders_z = 0.5 * (joint(f, "left_shoulder").z + joint(f, "right_shoulder").z);
      return shoulders_z - root.z;
    }
    case Behaviour::fold_arms: {
      const auto& root = joint(f, "root");
      const auto& le = joint(f, "left_elbow");
      const auto& re = joint(f, "right_elbow");
      const auto& lw = joint(f, "left_wrist");
      const auto& rw = joint(f, "right_wrist");
      if (le.y - root.y >= kFoldArmsElbowHeightLimit || re.y - root.y >= kFoldArmsElbowHeightLimit) {
        return std::nullopt;
      }
      return 0.5 * (distance(le, rw) + distance(re, lw));
    }
    case Behaviour::hand_to_face: {
      const auto& head = joint(f, "head");
      return std::min(distance(joint(f, "left_wrist"), head), distance(joint(f, "right_wrist"), head));
    }
    case Behaviour::hand_to_mouth: {
      Vec3 mouth = joint(f, "head");
      mouth.y -= kMouthBelowHead;
      return std::min(distance(joint(f, "left_wrist"), mouth), distance(joint(f, "right_wrist"), mouth));
    }
  }
  return std::nullopt;
}

BehaviourVector encode_frame(const KeypointStream& stream, std::size_t i, const RuleTable& rules) {
  BehaviourVector out;
  for (const auto& rule : rules) {
    const auto feature = extract_feature(stream, rule.behaviour, i);
    double conf = 0.0;
    if (feature) {
      conf = rule.sigmoid ? sigmoid_confidence(*feature, rule.sigmoid->center, rule.sigmoid->multiplier)
                          : std::clamp(*feature / kMaxActionUnit, 0.0, 1.0);
    }
    out[rule.behaviour] = conf;
  }
  return out;
}

BehaviourVector encode_chunk(const KeypointStream& stream, const ChunkRange& range, const RuleTable& rules) {
  if (range.count == 0) throw UsageError("encode_chunk: empty frame range");
  if (range.stride == 0 || range.frame(range.count - 1) >= stream.size()) {
    throw UsageError("encode_chunk: frame range exceeds stream of " + std::to_string(stream.size()) + " frames");
  }
  BehaviourVector total;
  for (std::size_t k = 0; k < range.count; ++k) {
    const auto frame = encode_frame(stream, range.frame(k), rules);
    for (std::size_t j = 0; j < kBehaviourCount; ++j) total.values[j] += frame.values[j];
  }
  for (auto& v : total.values) v /= static_cast<double>(range.count);
  return total;
}

}  // namespace traitfuse
