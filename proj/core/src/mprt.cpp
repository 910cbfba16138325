#include "traitfuse/mprt.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "traitfuse/errors.hpp"

namespace traitfuse {

namespace {

constexpr std::uint8_t kVersion = 1;

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(p[i]) << (8 * i);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_mprt(const Tensor& tensor, Dtype dtype) {
  if (tensor.rank() > 255) throw DimensionError("MPRT supports rank up to 255");
  std::vector<std::uint8_t> out{'M', 'P', 'R', 'T', kVersion, static_cast<std::uint8_t>(dtype),
                                static_cast<std::uint8_t>(tensor.rank())};
  for (auto e : tensor.shape()) {
    if (e > 0xFFFFFFFFu) throw DimensionError("MPRT extent exceeds u32: " + shape_string(tensor.shape()));
    put_le(out, static_cast<std::uint32_t>(e));
  }
  for (double v : tensor.data()) {
    if (dtype == Dtype::f32) {
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_le(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Tensor decode_mprt(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 7 || std::memcmp(bytes.data(), "MPRT", 4) != 0) throw DataError("MPRT: bad magic");
  if (bytes[4] != kVersion) throw DataError("MPRT: unsupported version " + std::to_string(bytes[4]));
  if (bytes[5] > 1) throw DataError("MPRT: unknown dtype code " + std::to_string(bytes[5]));
  const auto dtype = static_cast<Dtype>(bytes[5]);
  const std::size_t rank = bytes[6];
  std::size_t pos = 7;
  if (bytes.size() < pos + 4 * rank) throw DataError("MPRT: truncated header");
  Shape shape;
  for (std::size_t i = 0; i < rank; ++i, pos += 4) shape.push_back(get_le<std::uint32_t>(bytes.data() + pos));
  const std::size_t n = shape_numel(shape);
  const std::size_t width = dtype == Dtype::f32 ? 4 : 8;
  if (bytes.size() != pos + n * width) {
    throw DataError("MPRT: payload size " + std::to_string(bytes.size() - pos) + " does not match shape " +
                    shape_string(shape));
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i, pos += width) {
    data[i] = dtype == Dtype::f32 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + pos)))
                                  : std::bit_cast<double>(get_le<std::uint64_t>(bytes.data() + pos));
  }
  try {
    return Tensor(std::move(shape), std::move(data));
  } catch (const DimensionError& e) {
    throw DataError(std::string("MPRT: ") + e.what());
  }
}

void write_mprt(const std::filesystem::path& path, const Tensor& tensor, Dtype dtype) {
  const auto bytes = encode_mprt(tensor, dtype);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_mprt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_mprt(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace traitfuse
