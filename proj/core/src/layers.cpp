#include "traitfuse/layers.hpp"

#include <cmath>

#include "traitfuse/random.hpp"

namespace traitfuse {

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = {name + ".weight", uniform_tensor({in, out}, bound, rng)};
  bias = {name + ".bias", uniform_tensor({out}, bound, rng)};
}

Var Linear::operator()(const Var& x) const {
  Tape& t = x.tape();
  return linear(x, t.param(weight), t.param(bias));
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

LayerNormParams::LayerNormParams(const std::string& name, std::size_t dim)
    : gain{name + ".gain", Tensor({dim}, 1.0)}, bias{name + ".bias", Tensor({dim}, 0.0)} {}

Var LayerNormParams::operator()(const Var& x) const {
  Tape& t = x.tape();
  return layer_norm(x, t.param(gain), t.param(bias));
}

void LayerNormParams::collect(std::vector<Parameter*>& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

TwoLayerMlp::TwoLayerMlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
                         std::mt19937_64& rng)
    : first(name + ".0", in, hidden, rng), second(name + ".1", hidden, out, rng) {}

void TwoLayerMlp::collect(std::vector<Parameter*>& out) {
  first.collect(out);
  second.collect(out);
}

}  // namespace traitfuse
