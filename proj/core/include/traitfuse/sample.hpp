#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "traitfuse/behaviour.hpp"
#include "traitfuse/tensor.hpp"

namespace traitfuse {

inline constexpr std::size_t kMetadataDim = 7;
inline constexpr std::size_t kTraitCount = 5;

/// Ethnicity (3, one-hot), gender (2, one-hot), age and attractiveness in [0, 1].
struct DemographicMetadata {
  std::array<double, 3> ethnicity{1.0, 0.0, 0.0};
  std::array<double, 2> gender{1.0, 0.0};
  double age = 0.0;
  double attractiveness = 0.0;

  std::array<double, kMetadataDim> values() const;
  Tensor to_tensor() const;

  friend bool operator==(const DemographicMetadata&, const DemographicMetadata&) = default;
};

/// Openness, conscientiousness, extroversion, agreeableness, neuroticism.
struct TraitScores {
  std::array<double, kTraitCount> values{};

  Tensor to_tensor() const;
  static TraitScores from_tensor(const Tensor& t);
  /// Each score clamped to [0, 1].
  TraitScores clamped() const;

  friend bool operator==(const TraitScores&, const TraitScores&) = default;
};

inline constexpr std::array<std::string_view, kTraitCount> kTraitNames{
    "openness", "conscientiousness", "extroversion", "agreeableness", "neuroticism"};
inline constexpr std::array<std::string_view, kTraitCount> kTraitLetters{"O", "C", "E", "A", "N"};

/// One transformer pass worth of features.
struct ChunkFeatures {
  Tensor face;     // (C_f, T, H_f, W_f)
  Tensor context;  // (C_c, T, H_c, W_c)
  Tensor audio;    // (A)
  BehaviourVector behaviour;
};

enum class Split { train, val, test };

std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

struct VideoSample {
  std::string id;
  std::vector<ChunkFeatures> chunks;
  DemographicMetadata metadata;
  Tensor transcript;  // (D_transcript)
  TraitScores targets;
  Split split = Split::train;
};

}  // namespace traitfuse
