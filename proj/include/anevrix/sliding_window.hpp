#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anevrix/patch_sampler.hpp"
#include "anevrix/predictor.hpp"
#include "anevrix/volume.hpp"

namespace anevrix {

struct RetentionConfig {
  double max_landmark_distance = 15.0;  // mm
  int stride = 32;
  VesselCriterion vessel;
  bool tta_enabled = true;
  double threshold = 0.5;
  int max_candidates = 5;
  // When false every enumerated patch is predicted (plain sliding window).
  bool anatomical = true;

  void validate(int side) const;
};

struct CandidateDetection {
  Vec3 center{0, 0, 0};  // world mm
  double score = 0.0;
  int voxel_count = 0;
  int component_id = 0;
};

// Origins at multiples of `stride` on each axis, the last one clamped to
// n - side so the final patch ends on the volume edge. Axes shorter than the
// patch get the single origin 0.
std::vector<PatchSpec> enumerate_patches(const Volume3D& volume, int side, int stride);

// Keeps specs whose center is within max_landmark_distance of a landmark and
// that pass the vessel criterion. Order is preserved.
std::vector<PatchSpec> retain_anatomical(std::span<const PatchSpec> specs, std::span<const Vec3> landmarks,
                                         const Volume3D& volume, const RetentionConfig& config);

// Mean over the six lattice transforms of T^-1(predict(T(patch))).
Grid3 tta_predict(const Grid3& patch, const PatchPredictor& predictor, PatchContext context = {});

// Per-voxel mean of the (z-scored, optionally TTA'd) patch predictions;
// uncovered voxels are 0. `jobs` workers predict concurrently; accumulation
// runs in ascending spec order so the result does not depend on `jobs`.
Volume3D predict_volume(const Volume3D& volume, const PatchPredictor& predictor, std::span<const PatchSpec> specs,
                        const RetentionConfig& config, int jobs = 1);

// 26-connected components of prob >= threshold, scored by their maximum and
// located at the probability-weighted center of mass. Ordered by component id.
std::vector<CandidateDetection> extract_candidates(const Volume3D& probability, double threshold);

// Highest score first; ties go to the larger component, then the lower id.
std::vector<CandidateDetection> top_k(std::vector<CandidateDetection> candidates, int k);

struct DetectionResult {
  std::vector<PatchSpec> enumerated;
  std::vector<PatchSpec> retained;
  Volume3D probability;
  std::vector<CandidateDetection> candidates;  // top-k
};

DetectionResult detect(const Volume3D& volume, std::span<const Vec3> landmarks, const PatchPredictor& predictor,
                       const RetentionConfig& config, int side = kDefaultPatchSide, int jobs = 1);

// Candidate CSV: subject,session,candidate_id,x_mm,y_mm,z_mm,score,voxel_count
struct SubjectCandidate {
  std::string subject;
  std::string session;
  int candidate_id = 0;
  CandidateDetection detection;
};

std::vector<SubjectCandidate> label_candidates(std::string_view subject, std::string_view session,
                                               std::span<const CandidateDetection> candidates);
std::string format_candidates(std::span<const SubjectCandidate> rows);
std::vector<SubjectCandidate> parse_candidates(std::string_view text, std::string_view source = "<memory>");
std::vector<SubjectCandidate> read_candidates(const std::filesystem::path& path);

}  // namespace anevrix
