#include "anevrix/landmarks.hpp"

#include "anevrix/errors.hpp"
#include "anevrix/table.hpp"

namespace anevrix {

std::vector<Landmark> parse_landmarks(std::string_view text, std::string_view source) {
  const Table t = Table::parse(text, ',', source);
  const auto c_id = t.require_column("landmark_id");
  const auto c_label = t.require_column("label");
  const auto c_x = t.require_column("x_mm");
  const auto c_y = t.require_column("y_mm");
  const auto c_z = t.require_column("z_mm");
  std::vector<Landmark> out;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const auto& row = t.rows()[r];
    const std::string where = t.source() + ":" + std::to_string(t.line_of(r));
    if (row.size() != t.header().size()) throw ValidationError(where + ": wrong field count");
    try {
      out.push_back({row[c_id], row[c_label],
                     {parse_double(row[c_x], "x_mm"), parse_double(row[c_y], "y_mm"), parse_double(row[c_z], "z_mm")}});
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return out;
}

std::vector<Landmark> read_landmarks(const std::filesystem::path& path) {
  return parse_landmarks(read_text_file(path), path.string());
}

std::string format_landmarks(std::span<const Landmark> landmarks) {
  Table t({"landmark_id", "label", "x_mm", "y_mm", "z_mm"});
  for (const auto& l : landmarks) {
    t.add_row({l.id, l.label, format_double(l.position[0]), format_double(l.position[1]), format_double(l.position[2])});
  }
  return t.str();
}

std::vector<Vec3> positions(std::span<const Landmark> landmarks) {
  std::vector<Vec3> out;
  out.reserve(landmarks.size());
  for (const auto& l : landmarks) out.push_back(l.position);
  return out;
}

}  // namespace anevrix
