#include "anevrix/weak_labels.hpp"

#include <algorithm>
#include <cmath>

#include "anevrix/errors.hpp"
#include "anevrix/table.hpp"

namespace anevrix {

std::string_view to_string(LesionShape s) { return s == LesionShape::saccular ? "saccular" : "fusiform"; }

std::string_view to_string(LesionLocation l) {
  switch (l) {
    case LesionLocation::ICA: return "ICA";
    case LesionLocation::MCA: return "MCA";
    case LesionLocation::ACA_Pcom_Posterior: return "ACA_Pcom_Posterior";
  }
  return "?";
}

LesionShape parse_shape(std::string_view text) {
  if (text == "saccular") return LesionShape::saccular;
  if (text == "fusiform") return LesionShape::fusiform;
  throw ValidationError("unknown lesion shape '" + std::string(text) + "'");
}

LesionLocation parse_location(std::string_view text) {
  if (text == "ICA") return LesionLocation::ICA;
  if (text == "MCA") return LesionLocation::MCA;
  if (text == "ACA_Pcom_Posterior" || text == "ACA/Pcom/Posterior") return LesionLocation::ACA_Pcom_Posterior;
  throw ValidationError("unknown lesion location '" + std::string(text) + "'");
}

void validate(const AneurysmAnnotation& a) {
  if (!(a.radius > 0.0)) throw ValidationError("annotation " + a.lesion_id + ": radius must be > 0");
  if (!(a.max_diameter >= 0.0)) throw ValidationError("annotation " + a.lesion_id + ": max_diameter must be >= 0");
}

// Rasterization accepts radius 0 (the center voxel only): weaken() with margin 0
// on a single voxel produces it.
Volume3D sphere_label(const AneurysmAnnotation& annotation, const Volume3D& tmpl) {
  return rasterize_sphere(annotation.center, annotation.radius, tmpl);
}

Volume3D sphere_labels(std::span<const AneurysmAnnotation> annotations, const Volume3D& tmpl) {
  Volume3D mask = Volume3D::like(tmpl, 0.0f);
  for (const auto& a : annotations) {
    if (!(a.radius >= 0.0)) throw ValidationError("sphere_labels: radius must be >= 0");
    paint_sphere(mask, a.center, a.radius);
  }
  return mask;
}

double voxel_diagonal(const Volume3D& volume) {
  const auto& s = volume.spacing();
  return std::sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2]);
}

namespace {

AneurysmAnnotation weaken_component(const Component& comp, const Volume3D& mask, double margin) {
  AneurysmAnnotation a;
  a.center = center_of_mass(comp, mask);
  double farthest = 0.0;
  for (const auto& v : comp.voxels) farthest = std::max(farthest, distance(mask.world(v[0], v[1], v[2]), a.center));
  a.radius = farthest + margin;
  a.max_diameter = max_diameter(comp, mask);
  return a;
}

}  // namespace

AneurysmAnnotation weaken(const Volume3D& mask, std::optional<double> margin_mm) {
  const double margin = margin_mm.value_or(voxel_diagonal(mask));
  if (margin < 0.0) throw ValidationError("weaken: margin must be >= 0");
  Component all;
  const auto voxels = mask.voxels();
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    if (is_foreground(voxels[i])) all.voxels.push_back(mask.index_of_linear(i));
  }
  if (all.voxels.empty()) throw ValidationError("weaken: empty mask");
  return weaken_component(all, mask, margin);
}

std::vector<AneurysmAnnotation> weaken_components(const Volume3D& mask, std::optional<double> margin_mm) {
  const double margin = margin_mm.value_or(voxel_diagonal(mask));
  if (margin < 0.0) throw ValidationError("weaken: margin must be >= 0");
  std::vector<AneurysmAnnotation> out;
  for (const auto& comp : connected_components(mask, Connectivity::twenty_six)) {
    out.push_back(weaken_component(comp, mask, margin));
  }
  return out;
}

double max_diameter(const Component& component, const Volume3D& volume) {
  if (component.voxels.empty()) throw ValidationError("max_diameter: empty mask");
  // Membership lookup restricted to the component's bounding box.
  Index3 lo = component.voxels.front();
  Index3 hi = lo;
  for (const auto& v : component.voxels) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], v[a]);
      hi[a] = std::max(hi[a], v[a]);
    }
  }
  const Index3 ext{hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
  std::vector<std::uint8_t> inside(static_cast<std::size_t>(ext[0]) * ext[1] * ext[2], 0);
  auto local = [&](int x, int y, int z) {
    return static_cast<std::size_t>(x - lo[0]) +
           static_cast<std::size_t>(ext[0]) * (static_cast<std::size_t>(y - lo[1]) + static_cast<std::size_t>(ext[1]) * (z - lo[2]));
  };
  for (const auto& v : component.voxels) inside[local(v[0], v[1], v[2])] = 1;

  static constexpr int kFace[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<Vec3> boundary;
  for (const auto& v : component.voxels) {
    bool edge = false;
    for (const auto& f : kFace) {
      const int x = v[0] + f[0];
      const int y = v[1] + f[1];
      const int z = v[2] + f[2];
      if (!volume.contains(x, y, z) || x < lo[0] || y < lo[1] || z < lo[2] || x > hi[0] || y > hi[1] || z > hi[2] ||
          !inside[local(x, y, z)]) {
        edge = true;
        break;
      }
    }
    if (edge) boundary.push_back(volume.world(v[0], v[1], v[2]));
  }

  double best = 0.0;
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    for (std::size_t j = i + 1; j < boundary.size(); ++j) best = std::max(best, distance(boundary[i], boundary[j]));
  }
  return best;
}

double max_diameter(const Volume3D& mask) {
  Component all;
  const auto voxels = mask.voxels();
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    if (is_foreground(voxels[i])) all.voxels.push_back(mask.index_of_linear(i));
  }
  return max_diameter(all, mask);
}

std::vector<AneurysmAnnotation> parse_annotations(std::string_view text, std::string_view source) {
  const Table t = Table::parse(text, ',', source);
  const std::size_t c_id = t.require_column("lesion_id");
  const std::size_t c_subject = t.require_column("subject");
  const std::size_t c_session = t.require_column("session");
  const std::size_t c_x = t.require_column("center_x_mm");
  const std::size_t c_y = t.require_column("center_y_mm");
  const std::size_t c_z = t.require_column("center_z_mm");
  const std::size_t c_r = t.require_column("radius_mm");
  const std::size_t c_shape = t.require_column("shape");
  const std::size_t c_loc = t.require_column("location");
  const std::size_t c_diam = t.require_column("max_diameter_mm");
  const auto c_extra = t.column("extracranial_carotid");

  std::vector<AneurysmAnnotation> out;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const auto& row = t.rows()[r];
    const std::string where = t.source() + ":" + std::to_string(t.line_of(r));
    if (row.size() != t.header().size()) throw ValidationError(where + ": expected " + std::to_string(t.header().size()) + " fields");
    try {
      AneurysmAnnotation a;
      a.lesion_id = row[c_id];
      a.subject = row[c_subject];
      a.session = row[c_session];
      a.center = {parse_double(row[c_x], "center_x_mm"), parse_double(row[c_y], "center_y_mm"),
                  parse_double(row[c_z], "center_z_mm")};
      a.radius = parse_double(row[c_r], "radius_mm");
      a.shape = parse_shape(row[c_shape]);
      if (!row[c_loc].empty()) a.location = parse_location(row[c_loc]);
      a.max_diameter = parse_double(row[c_diam], "max_diameter_mm");
      if (c_extra) a.extracranial_carotid = parse_int(row[*c_extra], "extracranial_carotid") != 0;
      validate(a);
      out.push_back(std::move(a));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return out;
}

std::vector<AneurysmAnnotation> read_annotations(const std::filesystem::path& path) {
  return parse_annotations(read_text_file(path), path.string());
}

std::string format_annotations(std::span<const AneurysmAnnotation> annotations) {
  std::vector<std::string> header{"lesion_id",   "subject",   "session", "center_x_mm", "center_y_mm",
                                  "center_z_mm", "radius_mm", "shape",   "location",    "max_diameter_mm"};
  const bool extra = std::any_of(annotations.begin(), annotations.end(),
                                 [](const AneurysmAnnotation& a) { return a.extracranial_carotid; });
  if (extra) header.emplace_back("extracranial_carotid");
  Table t(header);
  for (const auto& a : annotations) {
    std::vector<std::string> row{a.lesion_id,
                                 a.subject,
                                 a.session,
                                 format_double(a.center[0]),
                                 format_double(a.center[1]),
                                 format_double(a.center[2]),
                                 format_double(a.radius),
                                 std::string(to_string(a.shape)),
                                 a.location ? std::string(to_string(*a.location)) : std::string(),
                                 format_double(a.max_diameter)};
    if (extra) row.emplace_back(a.extracranial_carotid ? "1" : "0");
    t.add_row(std::move(row));
  }
  return t.str();
}

void write_annotations(const std::filesystem::path& path, std::span<const AneurysmAnnotation> annotations) {
  write_text_file(path, format_annotations(annotations));
}

}  // namespace anevrix
