#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anevrix/volume.hpp"

namespace anevrix {

// A frequent aneurysm site, already co-registered to the subject (world mm).
struct Landmark {
  std::string id;
  std::string label;
  Vec3 position{0.0, 0.0, 0.0};

  bool operator==(const Landmark&) const = default;
};

// Landmarks CSV: landmark_id,label,x_mm,y_mm,z_mm
std::vector<Landmark> parse_landmarks(std::string_view text, std::string_view source = "<memory>");
std::vector<Landmark> read_landmarks(const std::filesystem::path& path);
std::string format_landmarks(std::span<const Landmark> landmarks);

std::vector<Vec3> positions(std::span<const Landmark> landmarks);

}  // namespace anevrix
