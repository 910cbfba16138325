#include "traitfuse/sample.hpp"

#include <algorithm>

#include "traitfuse/errors.hpp"

namespace traitfuse {

std::array<double, kMetadataDim> DemographicMetadata::values() const {
  return {ethnicity[0], ethnicity[1], ethnicity[2], gender[0], gender[1], age, attractiveness};
}

Tensor DemographicMetadata::to_tensor() const {
  const auto v = values();
  return Tensor::vector({v.begin(), v.end()});
}

Tensor TraitScores::to_tensor() const { return Tensor::vector({values.begin(), values.end()}); }

TraitScores TraitScores::from_tensor(const Tensor& t) {
  if (t.size() != kTraitCount) throw DimensionError("trait tensor must hold 5 values, got " + shape_string(t.shape()));
  TraitScores s;
  std::copy(t.data().begin(), t.data().end(), s.values.begin());
  return s;
}

TraitScores TraitScores::clamped() const {
  TraitScores s = *this;
  for (auto& v : s.values) v = std::clamp(v, 0.0, 1.0);
  return s;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw DataError("unknown split tag '" + std::string(name) + "'");
}

}  // namespace traitfuse
