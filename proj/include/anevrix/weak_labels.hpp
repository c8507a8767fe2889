#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anevrix/volume.hpp"
#include "anevrix/volume_ops.hpp"

namespace anevrix {

enum class LesionShape { saccular, fusiform };

// The three PHASES site categories.
enum class LesionLocation { ICA, MCA, ACA_Pcom_Posterior };

std::string_view to_string(LesionShape s);
std::string_view to_string(LesionLocation l);
LesionShape parse_shape(std::string_view text);
// Accepts "ACA_Pcom_Posterior" and "ACA/Pcom/Posterior".
LesionLocation parse_location(std::string_view text);

struct AneurysmAnnotation {
  std::string lesion_id;
  std::string subject;
  std::string session;
  Vec3 center{0.0, 0.0, 0.0};  // world mm (RAS)
  double radius = 0.0;          // weak-label sphere radius, mm
  LesionShape shape = LesionShape::saccular;
  std::optional<LesionLocation> location;
  double max_diameter = 0.0;  // mm
  bool extracranial_carotid = false;

  bool operator==(const AneurysmAnnotation&) const = default;
};

// Throws ValidationError when radius <= 0 or max_diameter < 0.
void validate(const AneurysmAnnotation& a);

Volume3D sphere_label(const AneurysmAnnotation& annotation, const Volume3D& tmpl);
// Union of every annotation's sphere.
Volume3D sphere_labels(std::span<const AneurysmAnnotation> annotations, const Volume3D& tmpl);

// Smallest enclosing sphere around the mask's center of mass: radius is the
// farthest foreground voxel center plus `margin_mm` (default: one voxel
// diagonal of the grid spacing). max_diameter is filled from the mask.
AneurysmAnnotation weaken(const Volume3D& mask, std::optional<double> margin_mm = std::nullopt);
// One weakened annotation per 26-connected lesion.
std::vector<AneurysmAnnotation> weaken_components(const Volume3D& mask, std::optional<double> margin_mm = std::nullopt);

double voxel_diagonal(const Volume3D& volume);

// Largest world distance between two foreground voxel centers, searched over
// boundary voxels only.
double max_diameter(const Volume3D& mask);
double max_diameter(const Component& component, const Volume3D& volume);

// Annotation CSV:
// lesion_id,subject,session,center_x_mm,center_y_mm,center_z_mm,radius_mm,shape,location,max_diameter_mm
// An optional extracranial_carotid column (0/1) is read when present and
// written when any annotation sets it. An empty location means unknown.
std::vector<AneurysmAnnotation> read_annotations(const std::filesystem::path& path);
std::vector<AneurysmAnnotation> parse_annotations(std::string_view text, std::string_view source = "<memory>");
std::string format_annotations(std::span<const AneurysmAnnotation> annotations);
void write_annotations(const std::filesystem::path& path, std::span<const AneurysmAnnotation> annotations);

}  // namespace anevrix
