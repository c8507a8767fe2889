#include "anevrix/volume_ops.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "anevrix/errors.hpp"

namespace anevrix {

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Samples at a continuous index. Positions outside the grid's physical
// extent [-0.5, n-0.5] read as zero; inside it, coordinates are clamped to
// the outermost voxel centers.
float sample_trilinear(const Volume3D& v, const Vec3& p) {
  const auto& s = v.shape();
  int i0[3];
  int i1[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= -0.5 && p[a] <= s[a] - 0.5)) return 0.0f;
    const double c = std::clamp(p[a], 0.0, static_cast<double>(s[a] - 1));
    const double fl = std::floor(c);
    i0[a] = static_cast<int>(fl);
    i1[a] = std::min(i0[a] + 1, s[a] - 1);
    f[a] = c - fl;
  }
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? f[2] : 1.0 - f[2];
    if (wz == 0.0) continue;
    const int z = dz ? i1[2] : i0[2];
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? f[1] : 1.0 - f[1];
      if (wy == 0.0) continue;
      const int y = dy ? i1[1] : i0[1];
      for (int dx = 0; dx < 2; ++dx) {
        const double wx = dx ? f[0] : 1.0 - f[0];
        if (wx == 0.0) continue;
        const int x = dx ? i1[0] : i0[0];
        acc += wz * wy * wx * static_cast<double>(v(x, y, z));
      }
    }
  }
  return static_cast<float>(acc);
}

float sample_nearest(const Volume3D& v, const Vec3& p) {
  const auto& s = v.shape();
  int idx[3];
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= -0.5 && p[a] <= s[a] - 0.5)) return 0.0f;
    idx[a] = std::clamp(static_cast<int>(std::floor(p[a] + 0.5)), 0, s[a] - 1);
  }
  return v(idx[0], idx[1], idx[2]);
}

}  // namespace

Vec3 median_spacing(std::span<const Vec3> spacings) {
  if (spacings.empty()) throw ValidationError("median_spacing: empty list");
  Vec3 out;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> axis;
    axis.reserve(spacings.size());
    for (const auto& s : spacings) axis.push_back(s[a]);
    out[a] = median_of(std::move(axis));
  }
  return out;
}

Vec3 median_spacing(std::span<const Volume3D> volumes) {
  std::vector<Vec3> spacings;
  spacings.reserve(volumes.size());
  for (const auto& v : volumes) spacings.push_back(v.spacing());
  return median_spacing(spacings);
}

Volume3D resample(const Volume3D& volume, const Vec3& target_spacing, Interpolation mode, GridAlignment alignment) {
  Index3 out_shape;
  Vec3 step;
  Vec3 offset;
  for (int a = 0; a < 3; ++a) {
    if (!(target_spacing[a] > 0.0) || !std::isfinite(target_spacing[a])) {
      throw ValidationError("resample: target spacing must be > 0 on every axis");
    }
    const double n_in = volume.shape()[a];
    out_shape[a] = std::max(1, static_cast<int>(std::lround(n_in * volume.spacing()[a] / target_spacing[a])));
    // Input index advanced per output voxel.
    step[a] = target_spacing[a] / volume.spacing()[a];
    if (alignment == GridAlignment::center) {
      offset[a] = 0.5 * (n_in - 1.0) - 0.5 * (out_shape[a] - 1.0) * step[a];
    } else {
      offset[a] = 0.0;
    }
  }

  // output index -> input index, then input affine.
  const Affine4x4 out_to_in = Affine4x4::scaling(step, offset);
  const Affine4x4 out_affine = volume.affine() * out_to_in;
  Volume3D out(out_shape, target_spacing, out_affine);

  for (int k = 0; k < out_shape[2]; ++k) {
    for (int j = 0; j < out_shape[1]; ++j) {
      for (int i = 0; i < out_shape[0]; ++i) {
        const Vec3 p{offset[0] + i * step[0], offset[1] + j * step[1], offset[2] + k * step[2]};
        out(i, j, k) = mode == Interpolation::trilinear ? sample_trilinear(volume, p) : sample_nearest(volume, p);
      }
    }
  }
  return out;
}

std::vector<float> zscore(std::span<const float> values) {
  if (values.empty()) return {};
  double sum = 0.0;
  for (float v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (float v : values) {
    const double d = v - mean;
    sq += d * d;
  }
  const double sd = std::sqrt(sq / static_cast<double>(values.size()));
  const double denom = std::max(sd, kZscoreEpsilon);
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = static_cast<float>((values[i] - mean) / denom);
  }
  return out;
}

Grid3 zscore(const Grid3& patch) {
  Grid3 out;
  out.shape = patch.shape;
  out.values = zscore(std::span<const float>(patch.values));
  return out;
}

Vec3 apply_affine(const Affine4x4& affine, const Vec3& point) { return affine.apply(point); }

std::vector<Component> connected_components(const Volume3D& mask, Connectivity connectivity) {
  std::vector<Index3> offsets;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0) continue;
        if (connectivity == Connectivity::six && manhattan > 1) continue;
        if (connectivity == Connectivity::eighteen && manhattan > 2) continue;
        offsets.push_back({dx, dy, dz});
      }
    }
  }

  const auto voxels = mask.voxels();
  std::vector<std::uint8_t> visited(voxels.size(), 0);
  std::vector<Component> components;
  std::deque<std::size_t> queue;

  for (std::size_t seed = 0; seed < voxels.size(); ++seed) {
    if (visited[seed] || !is_foreground(voxels[seed])) continue;
    Component comp;
    comp.connectivity = connectivity;
    std::vector<std::size_t> members;
    visited[seed] = 1;
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t cur = queue.front();
      queue.pop_front();
      members.push_back(cur);
      const Index3 c = mask.index_of_linear(cur);
      for (const auto& o : offsets) {
        const int x = c[0] + o[0];
        const int y = c[1] + o[1];
        const int z = c[2] + o[2];
        if (!mask.contains(x, y, z)) continue;
        const std::size_t n = mask.linear_index(x, y, z);
        if (visited[n] || !is_foreground(voxels[n])) continue;
        visited[n] = 1;
        queue.push_back(n);
      }
    }
    std::sort(members.begin(), members.end());
    comp.voxels.reserve(members.size());
    for (std::size_t m : members) comp.voxels.push_back(mask.index_of_linear(m));
    components.push_back(std::move(comp));
  }
  return components;
}

Vec3 center_of_mass(const Component& component, const Volume3D& volume, std::optional<std::span<const float>> weights) {
  if (component.voxels.empty()) throw ValidationError("center_of_mass: empty component");
  if (weights && weights->size() != volume.size()) {
    throw ValidationError("center_of_mass: weight grid does not match volume");
  }
  double total = 0.0;
  Vec3 acc{0.0, 0.0, 0.0};
  for (const auto& v : component.voxels) {
    double w = 1.0;
    if (weights) {
      w = (*weights)[volume.linear_index(v[0], v[1], v[2])];
      if (w < 0.0) throw ValidationError("center_of_mass: negative weight");
    }
    total += w;
    for (int a = 0; a < 3; ++a) acc[a] += w * v[a];
  }
  if (!(total > 0.0)) throw ValidationError("center_of_mass: zero total weight");
  for (auto& x : acc) x /= total;
  return volume.world(acc);
}

Vec3 index_half_extent(const Volume3D& volume, double radius) {
  const Eigen::Matrix4d inv = volume.affine().inverse().matrix();
  Vec3 e;
  for (int a = 0; a < 3; ++a) e[a] = radius * inv.block<1, 3>(a, 0).norm();
  return e;
}

void paint_sphere(Volume3D& mask, const Vec3& center, double radius, float value) {
  if (radius < 0.0) throw ValidationError("rasterize_sphere: negative radius");
  const Vec3 c = mask.continuous_index(center);
  const Vec3 e = index_half_extent(mask, radius);
  int lo[3];
  int hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(0, static_cast<int>(std::floor(c[a] - e[a] - 1e-6)));
    hi[a] = std::min(mask.shape()[a] - 1, static_cast<int>(std::ceil(c[a] + e[a] + 1e-6)));
    if (lo[a] > hi[a]) return;
  }
  const double limit = radius + kSphereTolerance;
  for (int k = lo[2]; k <= hi[2]; ++k) {
    for (int j = lo[1]; j <= hi[1]; ++j) {
      for (int i = lo[0]; i <= hi[0]; ++i) {
        if (distance(mask.world(i, j, k), center) <= limit) mask(i, j, k) = value;
      }
    }
  }
}

Volume3D rasterize_sphere(const Vec3& center, double radius, const Volume3D& tmpl) {
  Volume3D mask = Volume3D::like(tmpl, 0.0f);
  paint_sphere(mask, center, radius);
  return mask;
}

double percentile(std::vector<float> values, double q) {
  if (values.empty()) throw ValidationError("percentile: empty input");
  if (!(q >= 0.0 && q <= 100.0)) throw ValidationError("percentile: q outside [0,100]");
  const double pos = (static_cast<double>(values.size()) - 1.0) * q / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double vlo = values[lo];
  double vhi = vlo;
  if (hi != lo) {
    vhi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  }
  return vlo + (pos - static_cast<double>(lo)) * (vhi - vlo);
}

double nonzero_percentile(std::span<const float> values, double q) {
  std::vector<float> nz;
  for (float v : values) {
    if (v > 0.0f) nz.push_back(v);
  }
  if (nz.empty()) return 0.0;
  return percentile(std::move(nz), q);
}

}  // namespace anevrix
