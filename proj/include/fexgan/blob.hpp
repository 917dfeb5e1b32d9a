// SPDX-License-Identifier: Apache-2.0
#pragma once

// Binary tensor blobs. Layout, all integers little-endian:
//
//   "FXGB"  u32 version(=1)  u32 record_count
//   per record:
//     u32 name_length, name bytes (UTF-8, no terminator)
//     u8  dtype (1 = float32, 2 = float64)
//     u32 rank, u64 extent[rank]
//     raw values, row-major, little-endian IEEE-754

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include "fexgan/error.hpp"
#include "fexgan/layers.hpp"
#include "fexgan/tensor.hpp"

namespace fexgan {

static_assert(std::endian::native == std::endian::little,
              "blob I/O writes host byte order and assumes a little-endian host");

inline constexpr char kBlobMagic[4] = {'F', 'X', 'G', 'B'};
inline constexpr std::uint32_t kBlobVersion = 1;

enum class DType : std::uint8_t { float32 = 1, float64 = 2 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::float32 : DType::float64;
}

struct BlobRecord {
  std::string name;
  DType dtype = DType::float32;
  Shape shape;
  std::vector<char> bytes;
};

namespace detail {

template <typename I>
void put(std::ostream& os, I value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(I));
}

template <typename I>
I get(std::istream& is, const std::filesystem::path& path) {
  I value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(I)))
    throw DataError("truncated blob " + path.string());
  return value;
}

}  // namespace detail

template <typename T>
void write_blob(const std::filesystem::path& path, const std::vector<StateEntry<T>>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os.write(kBlobMagic, 4);
  detail::put<std::uint32_t>(os, kBlobVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(dtype_of<T>()));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(e.tensor->rank()));
    for (auto d : e.tensor->shape()) detail::put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(e.tensor->data()),
             static_cast<std::streamsize>(e.tensor->size() * sizeof(T)));
  }
  if (!os) throw Error("failed writing " + path.string());
}

inline std::vector<BlobRecord> read_blob(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open blob " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kBlobMagic, 4) != 0)
    throw DataError("not a tensor blob: " + path.string());
  if (detail::get<std::uint32_t>(is, path) != kBlobVersion)
    throw DataError("unsupported blob version in " + path.string());
  const auto count = detail::get<std::uint32_t>(is, path);
  std::vector<BlobRecord> records(count);
  for (auto& r : records) {
    r.name.resize(detail::get<std::uint32_t>(is, path));
    if (!is.read(r.name.data(), static_cast<std::streamsize>(r.name.size())))
      throw DataError("truncated blob " + path.string());
    r.dtype = static_cast<DType>(detail::get<std::uint8_t>(is, path));
    if (r.dtype != DType::float32 && r.dtype != DType::float64)
      throw DataError("unknown dtype for " + r.name + " in " + path.string());
    r.shape.resize(detail::get<std::uint32_t>(is, path));
    for (auto& d : r.shape) d = detail::get<std::uint64_t>(is, path);
    const std::size_t width = r.dtype == DType::float32 ? 4 : 8;
    r.bytes.resize(shape_volume(r.shape) * width);
    if (!is.read(r.bytes.data(), static_cast<std::streamsize>(r.bytes.size())))
      throw DataError("truncated blob " + path.string());
  }
  return records;
}

/// Restores every entry by name; shapes and dtype must match exactly.
template <typename T>
void read_blob_into(const std::filesystem::path& path, const std::vector<StateEntry<T>>& entries) {
  std::map<std::string, BlobRecord> by_name;
  for (auto& r : read_blob(path)) by_name.emplace(r.name, std::move(r));
  for (const auto& e : entries) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) throw DataError(path.string() + " lacks tensor " + e.name);
    const BlobRecord& r = it->second;
    if (r.dtype != dtype_of<T>()) throw DataError("dtype mismatch for " + e.name);
    if (r.shape != e.tensor->shape())
      throw DataError("shape mismatch for " + e.name + ": blob " + shape_string(r.shape) +
                      ", model " + shape_string(e.tensor->shape()));
    std::memcpy(e.tensor->data(), r.bytes.data(), r.bytes.size());
  }
  if (by_name.size() != entries.size())
    throw DataError(path.string() + " holds tensors the model does not define");
}

}  // namespace fexgan
