// Copyright 2026 The speechkd Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "speechkd/data.hpp"
#include "speechkd/error.hpp"

namespace speechkd {

namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'T', 'D', 'T'};
constexpr std::size_t kFixedHeader = 8;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Shape& shape, std::span<const float> data) {
  if (shape.size() > std::numeric_limits<std::uint8_t>::max()) {
    throw ShapeOverflowError("tensor file: rank " + std::to_string(shape.size()) + " exceeds 255");
  }
  for (Index d : shape) {
    if (d < 0 || static_cast<std::uint64_t>(d) > std::numeric_limits<std::uint32_t>::max()) {
      throw ShapeOverflowError("tensor file: dimension " + std::to_string(d) + " does not fit u32");
    }
  }
  if (shape_size(shape) != static_cast<Index>(data.size())) {
    throw DimensionError("tensor file: " + std::to_string(data.size()) + " values for shape " +
                         shape_str(shape));
  }
  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeader + 4 * shape.size() + 4 * data.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u16(out, kTensorFileVersion);
  out.push_back(kDtypeFloat32);
  out.push_back(static_cast<std::uint8_t>(shape.size()));
  for (Index d : shape) put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor<float> decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw TruncatedFileError("tensor file: shorter than the magic number");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw BadMagicError("tensor file: bad magic, expected STDT");
  if (bytes.size() < kFixedHeader) throw TruncatedFileError("tensor file: truncated header");
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kTensorFileVersion) {
    throw VersionError("tensor file: unsupported version " + std::to_string(version));
  }
  if (bytes[6] != kDtypeFloat32) throw FormatError("tensor file: unsupported dtype " + std::to_string(bytes[6]));
  const std::size_t ndim = bytes[7];
  if (bytes.size() < kFixedHeader + 4 * ndim) throw TruncatedFileError("tensor file: truncated dims");

  Shape shape;
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    const std::uint32_t d = get_u32(bytes, kFixedHeader + 4 * i);
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / d) {
      throw ShapeOverflowError("tensor file: element count overflows");
    }
    count *= d;
    shape.push_back(static_cast<Index>(d));
  }
  const std::size_t payload_at = kFixedHeader + 4 * ndim;
  const std::uint64_t available = bytes.size() - payload_at;
  if (available < 4 * count) {
    throw TruncatedFileError("tensor file: payload holds " + std::to_string(available / 4) + " of " +
                             std::to_string(count) + " values");
  }
  if (available > 4 * count) throw FormatError("tensor file: trailing bytes after payload");

  const auto [rows, cols] = matrix_dims(shape);
  MatrixF values(rows, cols);
  for (std::uint64_t i = 0; i < count; ++i) {
    values.data()[i] = std::bit_cast<float>(get_u32(bytes, payload_at + 4 * i));
  }
  return Tensor<float>::constant(std::move(shape), std::move(values));
}

void write_tensor(const std::filesystem::path& path, const Tensor<float>& tensor) {
  const auto bytes = encode_tensor(tensor.shape(), tensor.data());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void write_tensor(const std::filesystem::path& path, const MatrixF& matrix) {
  write_tensor(path, Tensor<float>::constant(matrix));
}

Tensor<float> read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const TruncatedFileError& e) {
    throw TruncatedFileError(path.string() + ": " + e.what());
  } catch (const BadMagicError& e) {
    throw BadMagicError(path.string() + ": " + e.what());
  } catch (const VersionError& e) {
    throw VersionError(path.string() + ": " + e.what());
  } catch (const ShapeOverflowError& e) {
    throw ShapeOverflowError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

MatrixF read_matrix(const std::filesystem::path& path, Index rows, Index cols) {
  const Tensor<float> t = read_tensor(path);
  if (t.shape() != Shape{rows, cols}) {
    throw ConfigError(path.string() + ": shape " + shape_str(t.shape()) + ", expected " +
                      shape_str(Shape{rows, cols}));
  }
  return t.matrix();
}

}  // namespace speechkd
