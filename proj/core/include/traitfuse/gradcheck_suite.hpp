#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "traitfuse/model_config.hpp"
#include "traitfuse/sample.hpp"

namespace traitfuse {

struct GradCheckCase {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
  /// Coordinates too small to resolve, compared in absolute terms instead.
  std::size_t below_resolution = 0;
  double max_small_abs_error = 0.0;
  /// Tensor, index and both gradients at the worst coordinate.
  std::string worst;
  bool passed = false;
};

struct GradCheckSuiteOptions {
  double eps = 1e-6;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  /// Coordinates probed per parameter tensor in the model-level checks.
  std::size_t coords_per_param = 4;
  /// Gradient magnitude below which the model-level checks compare in
  /// absolute terms; the op-level checks always compare every coordinate
  /// relatively.
  double resolution = 1e-5;
};

/// Small model used by the model-level checks: face (8,2,8,8), context
/// (8,2,2,2) so 8 tokens, audio 16, transcript 16, default layer widths.
ModelConfig gradcheck_config();

/// Random sample matching `cfg` with `chunks` chunks.
VideoSample random_sample(const ModelConfig& cfg, std::size_t chunks, std::uint64_t seed);

/// Every differentiable op on random inputs, then positional encoding, query
/// and key/value pipelines, one encoder layer, the LSTM, the head and the
/// end-to-end model with and without the LSTM.
std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckSuiteOptions& options = {});

}  // namespace traitfuse
