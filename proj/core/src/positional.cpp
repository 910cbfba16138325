#include "traitfuse/positional.hpp"

#include <string>

#include "traitfuse/errors.hpp"
#include "traitfuse/random.hpp"

namespace traitfuse {

namespace {

constexpr double kInitBound = 0.1;

void reinit_uniform(std::vector<Parameter*> params, std::mt19937_64& rng) {
  for (Parameter* p : params) p->value = uniform_tensor(p->value.shape(), kInitBound, rng);
}

}  // namespace

void EncodingTables::collect(std::vector<Parameter*>& out) {
  out.push_back(&temporal_table);
  out.push_back(&spatial_table);
  temporal_mlp.collect(out);
  spatial_mlp.collect(out);
}

EncodingTables init_tables(std::size_t frames, std::size_t height, std::size_t width, std::size_t temporal_dim,
                           std::size_t spatial_dim, std::size_t hidden_dim, std::mt19937_64& rng) {
  for (auto e : {frames, height, width, temporal_dim, spatial_dim, hidden_dim}) {
    if (e == 0) throw ParameterError("positional encoding extents must be positive");
  }
  EncodingTables tables;
  tables.frames = frames;
  tables.height = height;
  tables.width = width;
  tables.temporal_table = {"positional.temporal_table", uniform_tensor({frames, temporal_dim}, kInitBound, rng)};
  tables.spatial_table = {"positional.spatial_table", uniform_tensor({height * width, spatial_dim}, kInitBound, rng)};
  tables.temporal_mlp = TwoLayerMlp("positional.temporal_mlp", temporal_dim, hidden_dim, temporal_dim, rng);
  tables.spatial_mlp = TwoLayerMlp("positional.spatial_mlp", spatial_dim, hidden_dim, spatial_dim, rng);
  std::vector<Parameter*> mlp;
  tables.temporal_mlp.collect(mlp);
  tables.spatial_mlp.collect(mlp);
  reinit_uniform(mlp, rng);
  return tables;
}

Var broadcast_positions(const Var& temporal, const Var& spatial, std::size_t height, std::size_t width) {
  const Tensor& tv = temporal.value();
  const Tensor& sv = spatial.value();
  if (tv.rank() != 2 || sv.rank() != 2 || sv.extent(0) != height * width) {
    throw DimensionError("broadcast_positions: temporal " + shape_string(tv.shape()) + " and spatial " +
                         shape_string(sv.shape()) + " do not fit a " + std::to_string(height) + "x" +
                         std::to_string(width) + " grid");
  }
  const std::size_t frames = tv.extent(0), dt = tv.extent(1), ds = sv.extent(1);
  const std::size_t cells = height * width;
  const std::size_t plane = frames * cells;
  Tensor out(Shape{dt + ds, frames, height, width});
  for (std::size_t c = 0; c < dt; ++c) {
    for (std::size_t t = 0; t < frames; ++t) {
      const double v = tv[t * dt + c];
      for (std::size_t s = 0; s < cells; ++s) out[c * plane + t * cells + s] = v;
    }
  }
  for (std::size_t c = 0; c < ds; ++c) {
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t s = 0; s < cells; ++s) out[(dt + c) * plane + t * cells + s] = sv[s * ds + c];
    }
  }
  const auto it = temporal.id(), is = spatial.id();
  return temporal.tape().record(
      "broadcast_positions", std::move(out), {it, is},
      [it, is, frames, cells, plane, dt, ds](Tape& tape, std::size_t self) {
        const auto& g = tape.grad_of(self);
        if (tape.needs_grad(it)) {
          auto& d = tape.grad_buffer(it);
          for (std::size_t c = 0; c < dt; ++c) {
            for (std::size_t t = 0; t < frames; ++t) {
              double acc = 0.0;
              for (std::size_t s = 0; s < cells; ++s) acc += g[c * plane + t * cells + s];
              d[t * dt + c] += acc;
            }
          }
        }
        if (tape.needs_grad(is)) {
          auto& d = tape.grad_buffer(is);
          for (std::size_t c = 0; c < ds; ++c) {
            for (std::size_t t = 0; t < frames; ++t) {
              for (std::size_t s = 0; s < cells; ++s) d[s * ds + c] += g[(dt + c) * plane + t * cells + s];
            }
          }
        }
      });
}

Var spatiotemporal_encoding(Tape& tape, const EncodingTables& tables) {
  const Var temporal = tables.temporal_mlp(tape.param(tables.temporal_table));
  const Var spatial = tables.spatial_mlp(tape.param(tables.spatial_table));
  return broadcast_positions(temporal, spatial, tables.height, tables.width);
}

}  // namespace traitfuse
