#include "anevrix/volume.hpp"

#include <cmath>
#include <string>

#include <Eigen/LU>

#include "anevrix/errors.hpp"

namespace anevrix {

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

Affine4x4::Affine4x4() : m_(Eigen::Matrix4d::Identity()) {}

Affine4x4::Affine4x4(const Eigen::Matrix4d& m) : m_(m) {
  if (m_(3, 0) != 0.0 || m_(3, 1) != 0.0 || m_(3, 2) != 0.0 || m_(3, 3) != 1.0) {
    throw ValidationError("affine: last row must be (0,0,0,1)");
  }
  const double det = m_.topLeftCorner<3, 3>().determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-12) {
    throw ValidationError("affine: upper-left 3x3 block is singular");
  }
}

Affine4x4 Affine4x4::scaling(const Vec3& scale, const Vec3& translation) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  for (int a = 0; a < 3; ++a) {
    m(a, a) = scale[a];
    m(a, 3) = translation[a];
  }
  return Affine4x4(m);
}

Vec3 Affine4x4::apply(const Vec3& p) const {
  Vec3 out;
  for (int r = 0; r < 3; ++r) {
    out[r] = m_(r, 0) * p[0] + m_(r, 1) * p[1] + m_(r, 2) * p[2] + m_(r, 3);
  }
  return out;
}

Affine4x4 Affine4x4::inverse() const {
  Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
  const Eigen::Matrix3d rot_inv = m_.topLeftCorner<3, 3>().inverse();
  inv.topLeftCorner<3, 3>() = rot_inv;
  inv.topRightCorner<3, 1>() = -rot_inv * m_.topRightCorner<3, 1>();
  return Affine4x4(inv);
}

Affine4x4 Affine4x4::operator*(const Affine4x4& rhs) const {
  Eigen::Matrix4d prod = m_ * rhs.m_;
  prod.row(3) << 0.0, 0.0, 0.0, 1.0;
  return Affine4x4(prod);
}

Vec3 Affine4x4::column_norms() const {
  return {m_.col(0).head<3>().norm(), m_.col(1).head<3>().norm(), m_.col(2).head<3>().norm()};
}

namespace {

std::size_t checked_size(const Index3& shape, const Vec3& spacing) {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 1) {
      throw ValidationError("volume: shape component " + std::to_string(a) + " must be >= 1");
    }
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw ValidationError("volume: spacing component " + std::to_string(a) + " must be > 0");
    }
  }
  return static_cast<std::size_t>(shape[0]) * static_cast<std::size_t>(shape[1]) *
         static_cast<std::size_t>(shape[2]);
}

}  // namespace

Volume3D::Volume3D() : Volume3D({1, 1, 1}, {1.0, 1.0, 1.0}, Affine4x4::identity()) {}

Volume3D::Volume3D(const Index3& shape, const Vec3& spacing, const Affine4x4& affine, float fill)
    : shape_(shape),
      spacing_(spacing),
      affine_(affine),
      inverse_(affine.inverse()),
      voxels_(checked_size(shape, spacing), fill) {}

Volume3D::Volume3D(const Index3& shape, const Vec3& spacing, const Affine4x4& affine,
                   std::vector<float> voxels)
    : shape_(shape), spacing_(spacing), affine_(affine), inverse_(affine.inverse()), voxels_(std::move(voxels)) {
  if (voxels_.size() != checked_size(shape, spacing)) {
    throw ValidationError("volume: voxel count " + std::to_string(voxels_.size()) +
                          " does not match shape");
  }
}

Volume3D Volume3D::like(const Volume3D& tmpl, float fill) {
  return Volume3D(tmpl.shape_, tmpl.spacing_, tmpl.affine_, fill);
}

Index3 Volume3D::index_of_linear(std::size_t linear) const {
  const auto nx = static_cast<std::size_t>(shape_[0]);
  const auto ny = static_cast<std::size_t>(shape_[1]);
  return {static_cast<int>(linear % nx), static_cast<int>((linear / nx) % ny),
          static_cast<int>(linear / (nx * ny))};
}

Vec3 Volume3D::continuous_index(const Vec3& world_mm) const { return inverse_.apply(world_mm); }

bool Volume3D::same_geometry(const Volume3D& other) const {
  return shape_ == other.shape_ && affine_ == other.affine_;
}

Grid3::Grid3(const Index3& s, float fill) : shape(s) {
  for (int a = 0; a < 3; ++a) {
    if (s[a] < 0) throw ValidationError("grid: negative extent");
  }
  values.assign(static_cast<std::size_t>(s[0]) * static_cast<std::size_t>(s[1]) * static_cast<std::size_t>(s[2]),
                fill);
}

}  // namespace anevrix
