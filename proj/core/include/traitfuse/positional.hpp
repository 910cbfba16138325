#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "traitfuse/layers.hpp"

namespace traitfuse {

/// Learned temporal and spatial position tables, each refined by its own
/// two-layer network before being broadcast into a (d_t + d_s, T, H, W) grid.
struct EncodingTables {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  Parameter temporal_table;  // [T, d_t]
  Parameter spatial_table;   // [H * W, d_s]
  TwoLayerMlp temporal_mlp;
  TwoLayerMlp spatial_mlp;

  std::size_t temporal_dim() const { return temporal_table.value.extent(1); }
  std::size_t spatial_dim() const { return spatial_table.value.extent(1); }
  std::size_t channels() const { return temporal_dim() + spatial_dim(); }

  void collect(std::vector<Parameter*>& out);
};

/// Every parameter (tables and both networks) is drawn from U[-0.1, 0.1].
/// Throws ParameterError on a zero extent.
EncodingTables init_tables(std::size_t frames, std::size_t height, std::size_t width, std::size_t temporal_dim,
                           std::size_t spatial_dim, std::size_t hidden_dim, std::mt19937_64& rng);

/// Broadcasts temporal rows [T, d_t] over (H, W) and spatial rows [H*W, d_s]
/// over T, stacking them on the channel axis.
Var broadcast_positions(const Var& temporal, const Var& spatial, std::size_t height, std::size_t width);

/// Spatiotemporal encoding of shape (d_t + d_s, T, H, W).
Var spatiotemporal_encoding(Tape& tape, const EncodingTables& tables);

}  // namespace traitfuse
