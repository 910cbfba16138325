#pragma once

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "traitfuse/ops.hpp"
#include "traitfuse/random.hpp"

namespace tf_test {

using namespace traitfuse;

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = d(rng);
  return t;
}

// Independent finite-difference oracle: evaluates f directly, never touching
// the tape's backward pass.
inline Tensor numeric_gradient(const std::function<double(const Tensor&)>& f, Tensor x, double eps = 1e-6) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f(x);
    x[i] = saved - eps;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2 * eps);
  }
  return g;
}

// Tape gradient of a scalar function of one input.
inline Tensor tape_gradient(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x) {
  Tape tape;
  const Var in = tape.input(x);
  tape.backward(f(tape, in));
  return tape.grad(in);
}

inline double max_rel(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
    worst = std::max(worst, std::abs(a[i] - b[i]) / d);
  }
  return worst;
}

inline void check_tensor(const Tensor& actual, const Tensor& expected, double tol = 1e-12) {
  REQUIRE(actual.shape() == expected.shape());
  for (std::size_t i = 0; i < actual.size(); ++i) CHECK(actual[i] == doctest::Approx(expected[i]).epsilon(tol));
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("traitfuse_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace tf_test
