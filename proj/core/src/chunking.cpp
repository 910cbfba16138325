#include "traitfuse/chunking.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "traitfuse/errors.hpp"

namespace traitfuse {

std::size_t chunk_stride(double fps) {
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ParameterError("fps must be positive, got " + std::to_string(fps));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fps / 15.0)));
}

std::vector<ChunkRange> chunk_video(std::size_t frame_count, double fps) {
  const std::size_t stride = chunk_stride(fps);
  const std::size_t window = kFramesPerChunk * stride;
  if (frame_count < window) {
    throw DataError("video of " + std::to_string(frame_count) + " frames is shorter than one " +
                    std::to_string(window) + "-frame chunk window at " + std::to_string(fps) + " fps");
  }
  std::vector<ChunkRange> chunks;
  for (std::size_t begin = 0; begin + window <= frame_count; begin += window) {
    chunks.push_back({begin, stride, kFramesPerChunk});
  }
  return chunks;
}

}  // namespace traitfuse
