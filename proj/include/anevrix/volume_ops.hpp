#pragma once

#include <optional>
#include <span>
#include <vector>

#include "anevrix/volume.hpp"

namespace anevrix {

enum class Interpolation { trilinear, nearest };

// How output voxel centers are placed relative to the input grid.
//   center: the world-space bounding-box centers of input and output coincide.
//   origin: output voxel (0,0,0) sits on input voxel (0,0,0).
enum class GridAlignment { center, origin };

enum class Connectivity { six = 6, eighteen = 18, twenty_six = 26 };

struct Component {
  // Voxel coordinates in ascending linear-index order.
  std::vector<Index3> voxels;
  Connectivity connectivity = Connectivity::twenty_six;
};

// Per-axis median of the volumes' spacings (even counts average the two middle values).
Vec3 median_spacing(std::span<const Vec3> spacings);
Vec3 median_spacing(std::span<const Volume3D> volumes);

// Resamples onto a grid with `target_spacing`. Output extent per axis is
// round(shape * spacing / target), at least 1; samples falling outside the
// input read as zero. The returned affine keeps content at the same world position.
Volume3D resample(const Volume3D& volume, const Vec3& target_spacing, Interpolation mode,
                  GridAlignment alignment = GridAlignment::center);

inline constexpr double kZscoreEpsilon = 1e-6;

// (v - mean) / max(std, 1e-6) with the population standard deviation.
std::vector<float> zscore(std::span<const float> values);
Grid3 zscore(const Grid3& patch);

Vec3 apply_affine(const Affine4x4& affine, const Vec3& point);

// Foreground = value > 0.5. Components are ordered by their smallest linear index.
std::vector<Component> connected_components(const Volume3D& mask, Connectivity connectivity = Connectivity::twenty_six);

// Mean world position of the component's voxel centers. With `weights` (a grid
// shaped like `volume`), voxel i contributes weights[i]. Throws on zero total weight.
Vec3 center_of_mass(const Component& component, const Volume3D& volume,
                    std::optional<std::span<const float>> weights = std::nullopt);

// Tolerance on the inclusive radius test, absorbing float round-off in world
// coordinates.
inline constexpr double kSphereTolerance = 1e-9;

// Binary mask on the template grid: 1 where the voxel center lies within
// `radius` mm of `center` (inclusive).
Volume3D rasterize_sphere(const Vec3& center, double radius, const Volume3D& tmpl);
// Sets matching voxels of `mask` to 1 without clearing others.
void paint_sphere(Volume3D& mask, const Vec3& center, double radius, float value = 1.0f);

// Half-extent of a world-space sphere of `radius` along each index axis.
Vec3 index_half_extent(const Volume3D& volume, double radius);

inline bool is_foreground(float v) { return v > 0.5f; }

// Linear interpolation percentile (numpy's default) of the strictly positive values.
// Returns 0 when there are none.
double nonzero_percentile(std::span<const float> values, double percentile);
double percentile(std::vector<float> values, double percentile);

}  // namespace anevrix
