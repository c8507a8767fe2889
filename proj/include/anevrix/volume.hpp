#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace anevrix {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<int, 3>;

double distance(const Vec3& a, const Vec3& b);

/// Homogeneous voxel-to-world transform (mm). The last row is always (0,0,0,1)
/// and the upper-left 3x3 block is invertible.
class Affine4x4 {
 public:
  Affine4x4();
  explicit Affine4x4(const Eigen::Matrix4d& m);

  static Affine4x4 identity() { return Affine4x4(); }
  static Affine4x4 scaling(const Vec3& scale, const Vec3& translation = {0.0, 0.0, 0.0});

  const Eigen::Matrix4d& matrix() const { return m_; }
  double operator()(int row, int col) const { return m_(row, col); }

  Vec3 apply(const Vec3& p) const;
  Affine4x4 inverse() const;
  Affine4x4 operator*(const Affine4x4& rhs) const;

  // Euclidean norm of each of the first three columns: the voxel size along
  // each index axis.
  Vec3 column_norms() const;

  bool operator==(const Affine4x4& rhs) const { return m_ == rhs.m_; }

 private:
  Eigen::Matrix4d m_;
};

/// Scalar voxel grid in x-fastest order together with its spacing and affine.
class Volume3D {
 public:
  Volume3D();
  Volume3D(const Index3& shape, const Vec3& spacing, const Affine4x4& affine, float fill = 0.0f);
  Volume3D(const Index3& shape, const Vec3& spacing, const Affine4x4& affine,
           std::vector<float> voxels);

  // Same geometry as `tmpl`, every voxel set to `fill`.
  static Volume3D like(const Volume3D& tmpl, float fill = 0.0f);

  const Index3& shape() const { return shape_; }
  const Vec3& spacing() const { return spacing_; }
  const Affine4x4& affine() const { return affine_; }
  std::size_t size() const { return voxels_.size(); }

  std::span<const float> voxels() const { return voxels_; }
  std::span<float> voxels() { return voxels_; }

  std::size_t linear_index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(shape_[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(shape_[1]) * static_cast<std::size_t>(k));
  }
  Index3 index_of_linear(std::size_t linear) const;

  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < shape_[0] && j < shape_[1] && k < shape_[2];
  }

  float operator()(int i, int j, int k) const { return voxels_[linear_index(i, j, k)]; }
  float& operator()(int i, int j, int k) { return voxels_[linear_index(i, j, k)]; }

  // World position (mm) of a voxel center.
  Vec3 world(const Vec3& index) const { return affine_.apply(index); }
  Vec3 world(int i, int j, int k) const { return affine_.apply({double(i), double(j), double(k)}); }
  // Continuous voxel index of a world position.
  Vec3 continuous_index(const Vec3& world_mm) const;

  bool same_geometry(const Volume3D& other) const;

 private:
  Index3 shape_;
  Vec3 spacing_;
  Affine4x4 affine_;
  Affine4x4 inverse_;
  std::vector<float> voxels_;
};

/// Plain real-valued 3D grid without geometry; used for patches.
struct Grid3 {
  Index3 shape{0, 0, 0};
  std::vector<float> values;

  Grid3() = default;
  explicit Grid3(const Index3& s, float fill = 0.0f);
  static Grid3 cube(int side, float fill = 0.0f) { return Grid3({side, side, side}, fill); }

  std::size_t size() const { return values.size(); }
  bool is_cubic() const { return shape[0] == shape[1] && shape[1] == shape[2]; }

  std::size_t linear_index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(shape[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(shape[1]) * static_cast<std::size_t>(z));
  }
  float operator()(int x, int y, int z) const { return values[linear_index(x, y, z)]; }
  float& operator()(int x, int y, int z) { return values[linear_index(x, y, z)]; }

  bool operator==(const Grid3&) const = default;
};

}  // namespace anevrix
