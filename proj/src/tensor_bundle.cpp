#include "anevrix/tensor_bundle.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>
#include <sstream>

#include "anevrix/errors.hpp"
#include "anevrix/nifti_io.hpp"
#include "anevrix/table.hpp"

namespace anevrix {

namespace {

constexpr std::string_view kMagic = "anevrix-tensors 1";

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

}  // namespace

std::size_t TensorEntry::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, int d) { return acc * static_cast<std::size_t>(d); });
}

void TensorBundle::add(std::string name, std::vector<int> shape, std::vector<float> values) {
  if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos) {
    throw ValidationError("tensor bundle: invalid tensor name '" + name + "'");
  }
  if (contains(name)) throw ValidationError("tensor bundle: duplicate tensor '" + name + "'");
  TensorEntry e{std::move(name), std::move(shape), data_.size() * sizeof(float)};
  for (int d : e.shape) {
    if (d < 0) throw ValidationError("tensor bundle: negative dimension in '" + e.name + "'");
  }
  if (e.element_count() != values.size()) {
    throw ValidationError("tensor bundle: '" + e.name + "' has " + std::to_string(values.size()) +
                          " values for shape of " + std::to_string(e.element_count()));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  entries_.push_back(std::move(e));
}

bool TensorBundle::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const TensorEntry& e) { return e.name == name; });
}

const TensorEntry& TensorBundle::entry(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw ValidationError("tensor bundle: missing tensor '" + std::string(name) + "'");
}

std::span<const float> TensorBundle::tensor(std::string_view name) const {
  const auto& e = entry(name);
  return std::span<const float>(data_).subspan(e.offset / sizeof(float), e.element_count());
}

std::span<float> TensorBundle::mutable_tensor(std::string_view name) {
  const auto& e = entry(name);
  return std::span<float>(data_).subspan(e.offset / sizeof(float), e.element_count());
}

std::string TensorBundle::manifest_text() const {
  std::ostringstream os;
  os << kMagic << '\n';
  for (const auto& e : entries_) {
    os << e.name << ' ' << e.shape.size();
    for (int d : e.shape) os << ' ' << d;
    os << ' ' << e.offset << '\n';
  }
  return os.str();
}

std::vector<std::uint8_t> TensorBundle::blob() const {
  std::vector<std::uint8_t> out(data_.size() * sizeof(float));
  for (std::size_t i = 0; i < data_.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(data_[i]);
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

TensorBundle TensorBundle::parse(std::string_view manifest, std::span<const std::uint8_t> blob,
                                 std::string_view source) {
  const std::string where(source);
  std::istringstream in{std::string(manifest)};
  std::string line;
  if (!std::getline(in, line) || trim(line) != kMagic) {
    throw ValidationError(where + ": missing '" + std::string(kMagic) + "' header");
  }
  std::vector<TensorEntry> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream fields(line);
    TensorEntry e;
    int ndim = -1;
    if (!(fields >> e.name >> ndim) || ndim < 0 || ndim > 16) {
      throw ValidationError(where + ":" + std::to_string(line_no) + ": malformed tensor record");
    }
    e.shape.resize(static_cast<std::size_t>(ndim));
    for (auto& d : e.shape) {
      if (!(fields >> d) || d < 0) throw ValidationError(where + ":" + std::to_string(line_no) + ": bad dimension");
    }
    if (!(fields >> e.offset) || e.offset % 4 != 0) {
      throw ValidationError(where + ":" + std::to_string(line_no) + ": bad byte offset");
    }
    std::string extra;
    if (fields >> extra) throw ValidationError(where + ":" + std::to_string(line_no) + ": trailing fields");
    entries.push_back(std::move(e));
  }

  std::vector<const TensorEntry*> by_offset;
  std::size_t total = 0;
  for (const auto& e : entries) {
    by_offset.push_back(&e);
    total += e.element_count();
  }
  if (blob.size() != total * sizeof(float)) {
    throw ValidationError(where + ": blob holds " + std::to_string(blob.size()) + " bytes, manifest describes " +
                          std::to_string(total * sizeof(float)));
  }
  std::sort(by_offset.begin(), by_offset.end(),
            [](const TensorEntry* a, const TensorEntry* b) { return a->offset < b->offset; });
  std::size_t end = 0;
  for (const auto* e : by_offset) {
    if (e->offset < end) throw ValidationError(where + ": tensor '" + e->name + "' overlaps its predecessor");
    end = e->offset + e->element_count() * sizeof(float);
  }
  if (end > blob.size()) throw ValidationError(where + ": tensor extends past end of blob");

  TensorBundle out;
  for (const auto& e : entries) {
    std::vector<float> values(e.element_count());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::size_t at = e.offset + i * 4;
      const std::uint32_t bits = static_cast<std::uint32_t>(blob[at]) | (static_cast<std::uint32_t>(blob[at + 1]) << 8) |
                                 (static_cast<std::uint32_t>(blob[at + 2]) << 16) |
                                 (static_cast<std::uint32_t>(blob[at + 3]) << 24);
      values[i] = std::bit_cast<float>(bits);
    }
    out.add(e.name, e.shape, std::move(values));
  }
  return out;
}

TensorBundle TensorBundle::load(const std::filesystem::path& prefix) {
  const auto manifest_path = with_suffix(prefix, ".manifest");
  const auto blob_path = with_suffix(prefix, ".bin");
  const std::string manifest = read_text_file(manifest_path);
  const auto blob = read_binary_file(blob_path);
  return parse(manifest, blob, manifest_path.string());
}

void TensorBundle::save(const std::filesystem::path& prefix) const {
  write_text_file(with_suffix(prefix, ".manifest"), manifest_text());
  write_binary_file(with_suffix(prefix, ".bin"), blob());
}

}  // namespace anevrix
