#pragma once

#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "anevrix/random.hpp"
#include "anevrix/volume.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("anevrix_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline anevrix::Volume3D unit_volume(anevrix::Index3 shape, float fill = 0.0f) {
  return anevrix::Volume3D(shape, {1.0, 1.0, 1.0}, anevrix::Affine4x4::identity(), fill);
}

inline anevrix::Volume3D random_mask(anevrix::Index3 shape, double density, anevrix::Rng& rng) {
  auto v = unit_volume(shape);
  for (auto& x : v.voxels()) x = rng.uniform() < density ? 1.0f : 0.0f;
  return v;
}

// Little- or big-endian byte writer at absolute offsets.
class ByteWriter {
 public:
  ByteWriter(std::size_t size, bool big_endian) : bytes_(size, 0), big_(big_endian) {}

  template <typename T>
  void put(std::size_t offset, T value) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.at(offset + i) = raw[big_ ? sizeof(T) - 1 - i : i];
  }
  void put_bytes(std::size_t offset, const void* data, std::size_t n) {
    std::memcpy(bytes_.data() + offset, data, n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
  bool big_;
};

}  // namespace testutil
