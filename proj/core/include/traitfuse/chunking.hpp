#pragma once

#include <cstddef>
#include <vector>

namespace traitfuse {

inline constexpr std::size_t kFramesPerChunk = 32;

/// Frames begin, begin + stride, ..., begin + (count - 1) * stride.
struct ChunkRange {
  std::size_t begin = 0;
  std::size_t stride = 1;
  std::size_t count = 0;

  std::size_t frame(std::size_t k) const { return begin + k * stride; }
  std::size_t end() const { return begin + count * stride; }

  friend bool operator==(const ChunkRange&, const ChunkRange&) = default;
};

/// Sampling stride for a frame rate: max(1, round(fps / 15)), so 30 fps
/// samples every second frame.
std::size_t chunk_stride(double fps);

/// Splits a video into consecutive non-overlapping windows of 32 * stride raw
/// frames, each sampled down to 32 frames. A trailing partial window is
/// dropped. Throws DataError when not even one window fits.
std::vector<ChunkRange> chunk_video(std::size_t frame_count, double fps);

}  // namespace traitfuse
