#include "anevrix/patch_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "anevrix/errors.hpp"
#include "anevrix/table.hpp"
#include "anevrix/volume_ops.hpp"

namespace anevrix {

void validate(const PatchSpec& spec, const Volume3D& volume) {
  if (spec.side < 8) throw ValidationError("patch side must be >= 8");
  for (int a = 0; a < 3; ++a) {
    if (spec.origin[a] <= -spec.side || spec.origin[a] >= volume.shape()[a]) {
      throw ValidationError("patch does not overlap the volume");
    }
  }
}

Grid3 extract_patch(const Volume3D& volume, const PatchSpec& spec) {
  validate(spec, volume);
  Grid3 out = Grid3::cube(spec.side, 0.0f);
  const auto& s = volume.shape();
  const int x0 = std::max(0, spec.origin[0]);
  const int x1 = std::min(s[0], spec.origin[0] + spec.side);
  if (x0 >= x1) return out;
  for (int z = 0; z < spec.side; ++z) {
    const int vz = spec.origin[2] + z;
    if (vz < 0 || vz >= s[2]) continue;
    for (int y = 0; y < spec.side; ++y) {
      const int vy = spec.origin[1] + y;
      if (vy < 0 || vy >= s[1]) continue;
      const float* src = volume.voxels().data() + volume.linear_index(x0, vy, vz);
      float* dst = out.values.data() + out.linear_index(x0 - spec.origin[0], y, z);
      std::copy(src, src + (x1 - x0), dst);
    }
  }
  return out;
}

void VesselCriterion::validate() const {
  if (!(intensity_percentile > 0.0 && intensity_percentile < 100.0)) {
    throw ValidationError("vessel criterion: percentile must be in (0,100)");
  }
  if (min_bright_voxels < 0) throw ValidationError("vessel criterion: min_bright_voxels must be >= 0");
}

BrightVoxelCounter::BrightVoxelCounter(const Volume3D& volume, const VesselCriterion& criterion)
    : shape_(volume.shape()),
      dims_{volume.shape()[0] + 1, volume.shape()[1] + 1, volume.shape()[2] + 1},
      criterion_(criterion) {
  criterion.validate();
  threshold_ = nonzero_percentile(volume.voxels(), criterion.intensity_percentile);
  table_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], 0);
  for (int z = 0; z < shape_[2]; ++z) {
    for (int y = 0; y < shape_[1]; ++y) {
      for (int x = 0; x < shape_[0]; ++x) {
        const std::uint32_t bright = volume(x, y, z) > threshold_ ? 1u : 0u;
        table_[at(x + 1, y + 1, z + 1)] = bright + table_[at(x, y + 1, z + 1)] + table_[at(x + 1, y, z + 1)] +
                                          table_[at(x + 1, y + 1, z)] - table_[at(x, y, z + 1)] -
                                          table_[at(x, y + 1, z)] - table_[at(x + 1, y, z)] + table_[at(x, y, z)];
      }
    }
  }
}

long BrightVoxelCounter::count(const PatchSpec& spec) const {
  int lo[3];
  int hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::clamp(spec.origin[a], 0, shape_[a]);
    hi[a] = std::clamp(spec.origin[a] + spec.side, 0, shape_[a]);
    if (lo[a] >= hi[a]) return 0;
  }
  const auto t = [&](int x, int y, int z) { return static_cast<long>(table_[at(x, y, z)]); };
  return t(hi[0], hi[1], hi[2]) - t(lo[0], hi[1], hi[2]) - t(hi[0], lo[1], hi[2]) - t(hi[0], hi[1], lo[2]) +
         t(lo[0], lo[1], hi[2]) + t(lo[0], hi[1], lo[2]) + t(hi[0], lo[1], lo[2]) - t(lo[0], lo[1], lo[2]);
}

void SamplingConfig::validate() const {
  if (n_pos_per_aneurysm < 0 || n_neg_landmark < 0 || n_neg_vessel < 0 || n_neg_random < 0) {
    throw ValidationError("sampling: counts must be >= 0");
  }
  if (side < 8) throw ValidationError("sampling: patch side must be >= 8");
  if (max_trials < 1) throw ValidationError("sampling: max_trials must be >= 1");
  vessel.validate();
}

namespace {

struct VoxelRange {
  int lo;
  int hi;
};

// Voxel-center index range per axis that can fall inside the sphere.
std::array<VoxelRange, 3> sphere_voxel_range(const Volume3D& volume, const Vec3& center, double radius) {
  const Vec3 c = volume.continuous_index(center);
  const Vec3 e = index_half_extent(volume, radius + kSphereTolerance);
  std::array<VoxelRange, 3> r;
  for (int a = 0; a < 3; ++a) {
    r[a].lo = static_cast<int>(std::ceil(c[a] - e[a] - 1e-9));
    r[a].hi = static_cast<int>(std::floor(c[a] + e[a] + 1e-9));
  }
  return r;
}

}  // namespace

bool intersects_sphere(const Volume3D& volume, const PatchSpec& spec, const AneurysmAnnotation& annotation) {
  const auto r = sphere_voxel_range(volume, annotation.center, annotation.radius);
  int lo[3];
  int hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(r[a].lo, spec.origin[a]);
    hi[a] = std::min(r[a].hi, spec.origin[a] + spec.side - 1);
    if (lo[a] > hi[a]) return false;
  }
  const double limit = annotation.radius + kSphereTolerance;
  for (int z = lo[2]; z <= hi[2]; ++z) {
    for (int y = lo[1]; y <= hi[1]; ++y) {
      for (int x = lo[0]; x <= hi[0]; ++x) {
        if (distance(volume.world(x, y, z), annotation.center) <= limit) return true;
      }
    }
  }
  return false;
}

std::vector<PatchSpec> sample_positive(const Volume3D& volume, const AneurysmAnnotation& annotation, int n, Rng& rng,
                                       int side) {
  validate(annotation);
  if (n < 0) throw ValidationError("sample_positive: n must be >= 0");
  if (side < 8) throw ValidationError("sample_positive: patch side must be >= 8");
  const Vec3 c = volume.continuous_index(annotation.center);
  for (int a = 0; a < 3; ++a) {
    if (!(c[a] >= -0.5 && c[a] <= volume.shape()[a] - 0.5)) {
      throw ValidationError("sample_positive: lesion " + annotation.lesion_id + " lies outside the volume");
    }
  }
  auto range = sphere_voxel_range(volume, annotation.center, annotation.radius);
  // Valid origins per axis: the patch [o, o+side-1] must cover [lo, hi].
  std::array<VoxelRange, 3> origins;
  for (int a = 0; a < 3; ++a) {
    const int nearest = static_cast<int>(std::lround(c[a]));
    range[a].lo = std::min(range[a].lo, nearest);
    range[a].hi = std::max(range[a].hi, nearest);
    if (range[a].hi - range[a].lo + 1 > side) {
      const int centered = static_cast<int>(std::lround(c[a] - 0.5 * (side - 1)));
      origins[a] = {centered, centered};
    } else {
      origins[a] = {range[a].hi - side + 1, range[a].lo};
    }
  }
  std::vector<PatchSpec> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    PatchSpec s;
    s.side = side;
    s.subject = annotation.subject;
    s.session = annotation.session;
    for (int a = 0; a < 3; ++a) s.origin[a] = static_cast<int>(rng.uniform_int(origins[a].lo, origins[a].hi));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PatchSpec> NegativeSamples::all() const {
  std::vector<PatchSpec> out;
  out.reserve(landmark.size() + vessel.size() + random.size());
  out.insert(out.end(), landmark.begin(), landmark.end());
  out.insert(out.end(), vessel.begin(), vessel.end());
  out.insert(out.end(), random.begin(), random.end());
  return out;
}

NegativeSamples sample_negative(const Volume3D& volume, std::span<const Vec3> landmarks,
                                std::span<const AneurysmAnnotation> annotations, const SamplingConfig& config,
                                Rng& rng) {
  config.validate();
  const int side = config.side;
  const auto lesion_free = [&](const PatchSpec& s) {
    return std::none_of(annotations.begin(), annotations.end(),
                        [&](const AneurysmAnnotation& a) { return intersects_sphere(volume, s, a); });
  };
  const auto random_spec = [&]() {
    PatchSpec s;
    s.side = side;
    for (int a = 0; a < 3; ++a) {
      const int n = volume.shape()[a];
      s.origin[a] = n >= side ? static_cast<int>(rng.uniform_int(0, n - side))
                              : static_cast<int>(rng.uniform_int(n - side, 0));
    }
    return s;
  };

  NegativeSamples out;

  std::vector<PatchSpec> usable;
  for (const auto& lm : landmarks) {
    const Vec3 c = volume.continuous_index(lm);
    bool inside = true;
    PatchSpec s;
    s.side = side;
    for (int a = 0; a < 3; ++a) {
      inside = inside && c[a] >= -0.5 && c[a] <= volume.shape()[a] - 0.5;
      s.origin[a] = static_cast<int>(std::lround(c[a])) - side / 2;
    }
    if (inside && lesion_free(s)) usable.push_back(s);
  }
  for (int i = 0; i < config.n_neg_landmark; ++i) {
    if (usable.empty()) {
      out.landmark_shortfall = config.n_neg_landmark;
      break;
    }
    out.landmark.push_back(usable[static_cast<std::size_t>(i) % usable.size()]);
  }

  const BrightVoxelCounter counter(volume, config.vessel);
  for (int i = 0; i < config.n_neg_vessel; ++i) {
    bool placed = false;
    for (int t = 0; t < config.max_trials && !placed; ++t) {
      PatchSpec s = random_spec();
      if (counter.passes(s) && lesion_free(s)) {
        out.vessel.push_back(std::move(s));
        placed = true;
      }
    }
    if (!placed) ++out.vessel_shortfall;
  }

  for (int i = 0; i < config.n_neg_random; ++i) {
    bool placed = false;
    for (int t = 0; t < config.max_trials && !placed; ++t) {
      PatchSpec s = random_spec();
      if (lesion_free(s)) {
        out.random.push_back(std::move(s));
        placed = true;
      }
    }
    if (!placed) ++out.random_shortfall;
  }
  return out;
}

std::string_view to_string(AugmentationKind k) {
  switch (k) {
    case AugmentationKind::rot90: return "rot90";
    case AugmentationKind::rot180: return "rot180";
    case AugmentationKind::rot270: return "rot270";
    case AugmentationKind::flip_h: return "flip_h";
    case AugmentationKind::flip_v: return "flip_v";
    case AugmentationKind::contrast: return "contrast";
    case AugmentationKind::gamma: return "gamma";
    case AugmentationKind::gauss_noise: return "gauss_noise";
  }
  return "?";
}

bool is_geometric(AugmentationKind k) {
  return k == AugmentationKind::rot90 || k == AugmentationKind::rot180 || k == AugmentationKind::rot270 ||
         k == AugmentationKind::flip_h || k == AugmentationKind::flip_v;
}

GeometricTransform inverse(GeometricTransform t) {
  switch (t) {
    case GeometricTransform::rot90: return GeometricTransform::rot270;
    case GeometricTransform::rot270: return GeometricTransform::rot90;
    default: return t;
  }
}

namespace {

// One quarter turn in the plane spanned by axes (u, v): out(u, v) = in(v, s-1-u).
Grid3 quarter_turn(const Grid3& in, int axis) {
  const int s = in.shape[0];
  Grid3 out(in.shape);
  const int u = axis == 2 ? 0 : (axis == 0 ? 1 : 2);
  const int v = axis == 2 ? 1 : (axis == 0 ? 2 : 0);
  std::array<int, 3> src{};
  for (int z = 0; z < s; ++z) {
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const std::array<int, 3> dst{x, y, z};
        src = dst;
        src[u] = dst[v];
        src[v] = s - 1 - dst[u];
        out(x, y, z) = in(src[0], src[1], src[2]);
      }
    }
  }
  return out;
}

Grid3 mirror(const Grid3& in, int axis) {
  const int s = in.shape[axis];
  Grid3 out(in.shape);
  for (int z = 0; z < in.shape[2]; ++z) {
    for (int y = 0; y < in.shape[1]; ++y) {
      for (int x = 0; x < in.shape[0]; ++x) {
        std::array<int, 3> src{x, y, z};
        src[axis] = s - 1 - src[axis];
        out(x, y, z) = in(src[0], src[1], src[2]);
      }
    }
  }
  return out;
}

void require_cubic(const Grid3& patch) {
  if (!patch.is_cubic()) throw ValidationError("augment: patch must be cubic");
}

std::pair<double, double> mean_std(std::span<const float> values) {
  double sum = 0.0;
  for (float v : values) sum += v;
  const double mean = values.empty() ? 0.0 : sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (float v : values) sq += (v - mean) * (v - mean);
  return {mean, values.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(values.size()))};
}

}  // namespace

Grid3 apply_transform(const Grid3& patch, GeometricTransform t, int axis) {
  require_cubic(patch);
  if (axis < 0 || axis > 2) throw ValidationError("augment: rotation axis must be 0, 1 or 2");
  switch (t) {
    case GeometricTransform::identity: return patch;
    case GeometricTransform::rot90: return quarter_turn(patch, axis);
    case GeometricTransform::rot180: return quarter_turn(quarter_turn(patch, axis), axis);
    case GeometricTransform::rot270: return quarter_turn(quarter_turn(quarter_turn(patch, axis), axis), axis);
    case GeometricTransform::flip_h: return mirror(patch, 0);
    case GeometricTransform::flip_v: return mirror(patch, 1);
  }
  return patch;
}

Grid3 augment(const Grid3& patch, const AugmentationOp& op, Rng& rng) {
  require_cubic(patch);
  switch (op.kind) {
    case AugmentationKind::rot90: return apply_transform(patch, GeometricTransform::rot90, op.axis);
    case AugmentationKind::rot180: return apply_transform(patch, GeometricTransform::rot180, op.axis);
    case AugmentationKind::rot270: return apply_transform(patch, GeometricTransform::rot270, op.axis);
    case AugmentationKind::flip_h: return apply_transform(patch, GeometricTransform::flip_h);
    case AugmentationKind::flip_v: return apply_transform(patch, GeometricTransform::flip_v);
    case AugmentationKind::contrast: {
      const double factor = op.param ? *op.param : rng.uniform(kContrastMin, kContrastMax);
      if (factor < kContrastMin || factor > kContrastMax) throw ValidationError("augment: contrast factor outside [0.8,1.2]");
      Grid3 out = patch;
      for (auto& v : out.values) v = static_cast<float>(v * factor);
      return out;
    }
    case AugmentationKind::gamma: {
      const double g = op.param ? *op.param : rng.uniform(kGammaMin, kGammaMax);
      if (g < kGammaMin || g > kGammaMax) throw ValidationError("augment: gamma outside [0.7,1.5]");
      const auto [lo_it, hi_it] = std::minmax_element(patch.values.begin(), patch.values.end());
      if (lo_it == patch.values.end() || *lo_it == *hi_it) return patch;
      const double lo = *lo_it;
      const double range = static_cast<double>(*hi_it) - lo;
      Grid3 out = patch;
      for (auto& v : out.values) v = static_cast<float>(lo + range * std::pow((v - lo) / range, g));
      return out;
    }
    case AugmentationKind::gauss_noise: {
      const double sigma = kNoiseFraction * mean_std(patch.values).second;
      Grid3 out = patch;
      for (auto& v : out.values) v = static_cast<float>(v + sigma * rng.normal());
      return out;
    }
  }
  return patch;
}

std::string format_patch_specs(std::span<const LabeledPatch> patches) {
  Table t({"kind", "subject", "session", "origin_x", "origin_y", "origin_z", "side"});
  for (const auto& p : patches) {
    t.add_row({p.kind, p.spec.subject, p.spec.session, std::to_string(p.spec.origin[0]),
               std::to_string(p.spec.origin[1]), std::to_string(p.spec.origin[2]), std::to_string(p.spec.side)});
  }
  return t.str();
}

}  // namespace anevrix
