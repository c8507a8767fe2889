#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anevrix/random.hpp"
#include "anevrix/volume.hpp"
#include "anevrix/weak_labels.hpp"

namespace anevrix {

inline constexpr int kDefaultPatchSide = 64;

// Cubic subvolume reference. The origin is a voxel corner and may lie outside
// the grid: patches read from an implicitly zero-padded volume, but always
// overlap the grid by at least one voxel.
struct PatchSpec {
  Index3 origin{0, 0, 0};
  int side = kDefaultPatchSide;
  std::string subject;
  std::string session;

  // Continuous voxel index of the patch center.
  Vec3 center_index() const {
    const double h = 0.5 * (side - 1);
    return {origin[0] + h, origin[1] + h, origin[2] + h};
  }
  bool operator==(const PatchSpec&) const = default;
};

void validate(const PatchSpec& spec, const Volume3D& volume);

// side^3 grid; voxels outside the volume read as zero.
Grid3 extract_patch(const Volume3D& volume, const PatchSpec& spec);

// "Contains a vessel": at least `min_bright_voxels` voxels strictly above the
// given percentile of the volume's nonzero intensities.
struct VesselCriterion {
  double intensity_percentile = 90.0;
  int min_bright_voxels = 50;

  void validate() const;
};

// Bright-voxel counts over arbitrary patch boxes in O(1) via a summed-volume table.
class BrightVoxelCounter {
 public:
  BrightVoxelCounter(const Volume3D& volume, const VesselCriterion& criterion);

  double threshold() const { return threshold_; }
  long count(const PatchSpec& spec) const;
  bool passes(const PatchSpec& spec) const { return count(spec) >= criterion_.min_bright_voxels; }

 private:
  std::size_t at(int x, int y, int z) const {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(dims_[0]) *
                                             (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims_[1]) * z);
  }
  Index3 shape_;
  Index3 dims_;  // shape + 1
  VesselCriterion criterion_;
  double threshold_ = 0.0;
  std::vector<std::uint32_t> table_;
};

struct SamplingConfig {
  int n_pos_per_aneurysm = 8;
  int n_neg_landmark = 20;
  int n_neg_vessel = 20;
  int n_neg_random = 10;
  VesselCriterion vessel;
  int side = kDefaultPatchSide;
  // Rejection-sampling cap per requested patch.
  int max_trials = 1000;

  void validate() const;
};

// True when some voxel center of the patch lies inside the annotation sphere.
bool intersects_sphere(const Volume3D& volume, const PatchSpec& spec, const AneurysmAnnotation& annotation);

// `n` patches that each contain the whole annotation sphere, with the lesion
// center at a uniformly random offset from the patch center. Spheres wider
// than the patch are centered exactly.
std::vector<PatchSpec> sample_positive(const Volume3D& volume, const AneurysmAnnotation& annotation, int n, Rng& rng,
                                       int side = kDefaultPatchSide);

struct NegativeSamples {
  std::vector<PatchSpec> landmark;
  std::vector<PatchSpec> vessel;
  std::vector<PatchSpec> random;
  // Requested patches that could not be placed within the trial cap.
  int landmark_shortfall = 0;
  int vessel_shortfall = 0;
  int random_shortfall = 0;

  std::vector<PatchSpec> all() const;
  int shortfall() const { return landmark_shortfall + vessel_shortfall + random_shortfall; }
};

// Lesion-free patches: centered on landmarks (cycling; landmarks outside the
// grid or whose patch touches a lesion are skipped), vessel-containing patches
// by rejection sampling, and uniform random patches.
NegativeSamples sample_negative(const Volume3D& volume, std::span<const Vec3> landmarks,
                                std::span<const AneurysmAnnotation> annotations, const SamplingConfig& config,
                                Rng& rng);

enum class AugmentationKind { rot90, rot180, rot270, flip_h, flip_v, contrast, gamma, gauss_noise };

std::string_view to_string(AugmentationKind k);
bool is_geometric(AugmentationKind k);

struct AugmentationOp {
  AugmentationKind kind = AugmentationKind::rot90;
  // contrast factor or gamma exponent; drawn from the allowed range when unset.
  std::optional<double> param;
  // Rotation axis (0=x, 1=y, 2=z); z is the axial axis.
  int axis = 2;
};

inline constexpr double kContrastMin = 0.8;
inline constexpr double kContrastMax = 1.2;
inline constexpr double kGammaMin = 0.7;
inline constexpr double kGammaMax = 1.5;
inline constexpr double kNoiseFraction = 0.05;

// Throws ValidationError on non-cubic patches or out-of-range parameters.
Grid3 augment(const Grid3& patch, const AugmentationOp& op, Rng& rng);

// The invertible lattice maps used for augmentation and test-time averaging.
enum class GeometricTransform { identity, rot90, rot180, rot270, flip_h, flip_v };

inline constexpr GeometricTransform kAllGeometricTransforms[] = {
    GeometricTransform::identity, GeometricTransform::rot90,  GeometricTransform::rot180,
    GeometricTransform::rot270,   GeometricTransform::flip_h, GeometricTransform::flip_v};

GeometricTransform inverse(GeometricTransform t);
Grid3 apply_transform(const Grid3& patch, GeometricTransform t, int axis = 2);

// Patch spec listing used by the CLI: kind,subject,session,origin_x,origin_y,origin_z,side
struct LabeledPatch {
  std::string kind;
  PatchSpec spec;
};
std::string format_patch_specs(std::span<const LabeledPatch> patches);

}  // namespace anevrix
