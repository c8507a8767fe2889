#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace anevrix {

struct TensorEntry {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;  // bytes into the blob

  std::size_t element_count() const;
  bool operator==(const TensorEntry&) const = default;
};

// Named float32 tensors stored as a text manifest plus a raw blob.
//
// Manifest (`<prefix>.manifest`), one record per line after the magic line:
//
//   anevrix-tensors 1
//   <name> <ndim> <dim_0> ... <dim_{ndim-1}> <byte_offset>
//
// Blob (`<prefix>.bin`): little-endian IEEE-754 float32 values, each tensor
// stored contiguously in row-major order (last dimension fastest) at its
// offset. Offsets are multiples of 4, tensors do not overlap, and the blob
// holds exactly 4 * sum(element counts) bytes. Names contain no whitespace.
class TensorBundle {
 public:
  void add(std::string name, std::vector<int> shape, std::vector<float> values);

  const std::vector<TensorEntry>& manifest() const { return entries_; }
  bool contains(std::string_view name) const;
  const TensorEntry& entry(std::string_view name) const;
  std::span<const float> tensor(std::string_view name) const;
  std::span<float> mutable_tensor(std::string_view name);
  std::size_t total_elements() const { return data_.size(); }

  std::string manifest_text() const;
  std::vector<std::uint8_t> blob() const;

  static TensorBundle parse(std::string_view manifest, std::span<const std::uint8_t> blob,
                            std::string_view source = "<memory>");
  static TensorBundle load(const std::filesystem::path& prefix);
  void save(const std::filesystem::path& prefix) const;

  bool operator==(const TensorBundle&) const = default;

 private:
  std::vector<TensorEntry> entries_;
  std::vector<float> data_;  // in offset order
};

}  // namespace anevrix
