#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "anevrix/bids_layout.hpp"
#include "anevrix/landmarks.hpp"
#include "anevrix/random.hpp"
#include "anevrix/volume.hpp"
#include "anevrix/weak_labels.hpp"

namespace anevrix {

// Synthetic angiography: a noisy ellipsoidal "brain", one bright tube running
// along x through the middle of the grid, landmarks on the tube axis, and
// spherical lesions hanging off the tube next to some landmarks.
struct SynthConfig {
  Index3 shape{128, 128, 128};
  double spacing = 1.0;  // isotropic, mm
  int min_lesions = 1;
  int max_lesions = 3;
  double min_diameter = 3.0;  // mm
  double max_diameter = 8.0;
  double tube_radius = 2.5;
  double landmark_start = 20.0;    // mm from the x=0 edge
  double landmark_spacing = 15.0;  // mm
  // Lesions only go next to landmarks whose x lies in this fraction of the grid.
  double lesion_x_min = 0.0;
  double lesion_x_max = 1.0;
  float background_mean = 100.0f;
  float background_sd = 15.0f;
  float tube_intensity = 400.0f;
  float lesion_intensity = 450.0f;

  void validate() const;
};

struct SynthSubject {
  std::string subject;
  int age_years = 0;
  Sex sex = Sex::F;
  Volume3D image;
  Volume3D mask;  // voxel-wise lesion mask
  std::vector<AneurysmAnnotation> annotations;
  std::vector<Landmark> landmarks;
};

// Deterministic in (config, subject, rng state). `lesions` < 0 draws the count.
SynthSubject make_synthetic_subject(const SynthConfig& config, const std::string& subject, Rng& rng, int lesions = -1);

// `patients` subjects with lesions then `controls` without, ids sub-001, ...
// Each subject draws from its own stream of `seed`.
std::vector<SynthSubject> make_synthetic_cohort(const SynthConfig& config, int patients, int controls,
                                                std::uint64_t seed);

// BIDS-style layout:
//   participants.tsv
//   sub-XXX/anat/sub-XXX_angio.nii.gz
//   derivatives/manual_masks/sub-XXX/anat/sub-XXX_desc-aneurysm_mask.nii.gz
//   derivatives/landmarks/sub-XXX_landmarks.csv
//   derivatives/weak_labels/annotations.csv
void write_synthetic_dataset(const std::filesystem::path& root, std::span<const SynthSubject> subjects);

std::filesystem::path landmarks_path(const std::filesystem::path& root, const std::string& subject);
std::filesystem::path annotations_path(const std::filesystem::path& root);

}  // namespace anevrix
