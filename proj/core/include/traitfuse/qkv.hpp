#pragma once

#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "traitfuse/layers.hpp"
#include "traitfuse/model_config.hpp"
#include "traitfuse/sample.hpp"

namespace traitfuse {

struct MetadataEncoding {
  std::vector<std::string> ethnicities{"caucasian", "african_american", "asian"};
  std::vector<std::string> genders{"male", "female"};
  double max_age = 100.0;
};

/// One-hot ethnicity and gender, age / max_age, attractiveness as given.
/// Attractiveness is 0 when absent or when the subject is not in the first
/// (reference) ethnicity, which is the only group it is rated for.
/// Throws DataError for unknown labels or out-of-range values.
DemographicMetadata encode_metadata(std::string_view ethnicity, std::string_view gender, double age_years,
                                    std::optional<double> attractiveness, const MetadataEncoding& encoding = {});

/// Face-to-query reduction and key/value token projections.
struct PipelineParams {
  Parameter conv3d_kernels;  // (16, C_f, 1, 1, 1)
  Parameter conv3d_bias;
  Parameter conv2d_kernels;  // (128, 16 * T, 2, 2)
  Parameter conv2d_bias;
  Linear query_reduce;       // flatten -> model_dim
  Linear query_fuse;         // model_dim (+ 7 metadata) -> model_dim
  Linear audio_projection;   // A -> 100
  Linear key;                // token_dim -> model_dim
  Linear value;              // token_dim -> model_dim

  static PipelineParams init(const ModelConfig& cfg, std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

/// Shapes after each of the seven face-reduction steps for a face grid.
/// Throws DimensionError naming the first step the grid cannot pass.
std::vector<Shape> query_shape_trace(const ModelConfig& cfg);

/// 3D max-pool (1,2,2) -> 3D conv k=1 -> ReLU -> merge T into channels ->
/// 2D max-pool 2 -> 2D conv k=2 -> ReLU -> flatten -> linear, ReLU, dropout
/// -> concat metadata -> linear, ReLU. Returns a (model_dim) vector.
/// `metadata` is ignored when the metadata input is disabled. When `trace`
/// is given it receives the shape after every step.
Var prepare_query(const Var& face, const DemographicMetadata& metadata, const PipelineParams& params,
                  const ModelConfig& cfg, bool training, std::mt19937_64& rng, std::vector<Shape>* trace = nullptr);

struct KeysValues {
  Var keys;    // (N, model_dim)
  Var values;  // (N, model_dim)
};

/// Tokens are the (T, H, W) positions of context ++ encoding ++ behaviour ++
/// projected audio, flattened row-major. `behaviour` is skipped when the
/// behaviour input is disabled.
KeysValues prepare_keys_values(const Var& context, const Var& encoding, const Var& behaviour, const Var& audio,
                               const PipelineParams& params, const ModelConfig& cfg);

Tensor behaviour_tensor(const BehaviourVector& b);

}  // namespace traitfuse
