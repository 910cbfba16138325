#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "traitfuse/ops.hpp"
#include "traitfuse/tape.hpp"

namespace traitfuse {

/// Fully connected layer, weight [in, out] and bias [out], initialised
/// uniform in +-1/sqrt(in).
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);

  std::size_t in_features() const { return weight.value.extent(0); }
  std::size_t out_features() const { return weight.value.extent(1); }

  Var operator()(const Var& x) const;
  void collect(std::vector<Parameter*>& out);
};

/// Gain starts at one, bias at zero.
struct LayerNormParams {
  Parameter gain;
  Parameter bias;

  LayerNormParams() = default;
  LayerNormParams(const std::string& name, std::size_t dim);

  Var operator()(const Var& x) const;
  void collect(std::vector<Parameter*>& out);
};

/// linear -> ReLU -> linear
struct TwoLayerMlp {
  Linear first;
  Linear second;

  TwoLayerMlp() = default;
  TwoLayerMlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng);

  Var operator()(const Var& x) const { return second(relu(first(x))); }
  void collect(std::vector<Parameter*>& out);
};

}  // namespace traitfuse
