#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "anevrix/volume.hpp"

namespace anevrix {

enum class NiftiDatatype : std::int16_t {
  uint8 = 2,
  int16 = 4,
  int32 = 8,
  float32 = 16,
  float64 = 64,
};

// Bytes per voxel; throws ValidationError for codes outside the supported set.
int datatype_size(std::int16_t code);

// One ecode block. `data` excludes the 8-byte (esize, ecode) prefix and keeps
// any padding, so blocks round-trip opaquely.
struct NiftiExtension {
  std::int32_t code = 0;
  std::vector<std::uint8_t> data;

  bool operator==(const NiftiExtension&) const = default;
};

// All fields of the 348-byte NIfTI-1 header, in file order. Reals are kept
// as float so that a write reproduces them bit for bit.
struct NiftiHeader {
  std::int32_t sizeof_hdr = 348;
  std::array<char, 10> data_type{};
  std::array<char, 18> db_name{};
  std::int32_t extents = 0;
  std::int16_t session_error = 0;
  char regular = 'r';
  std::uint8_t dim_info = 0;
  std::array<std::int16_t, 8> dim{};
  float intent_p1 = 0.0f;
  float intent_p2 = 0.0f;
  float intent_p3 = 0.0f;
  std::int16_t intent_code = 0;
  std::int16_t datatype = static_cast<std::int16_t>(NiftiDatatype::float32);
  std::int16_t bitpix = 32;
  std::int16_t slice_start = 0;
  std::array<float, 8> pixdim{};
  float vox_offset = 352.0f;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::int16_t slice_end = 0;
  std::uint8_t slice_code = 0;
  std::uint8_t xyzt_units = 0;
  float cal_max = 0.0f;
  float cal_min = 0.0f;
  float slice_duration = 0.0f;
  float toffset = 0.0f;
  std::int32_t glmax = 0;
  std::int32_t glmin = 0;
  std::array<char, 80> descrip{};
  std::array<char, 24> aux_file{};
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  float quatern_b = 0.0f;
  float quatern_c = 0.0f;
  float quatern_d = 0.0f;
  float qoffset_x = 0.0f;
  float qoffset_y = 0.0f;
  float qoffset_z = 0.0f;
  std::array<float, 4> srow_x{};
  std::array<float, 4> srow_y{};
  std::array<float, 4> srow_z{};
  std::array<char, 16> intent_name{};
  std::array<char, 4> magic{'n', '+', '1', '\0'};

  // Bytes 348..351 of a single-file image; byte 0 nonzero means extensions follow.
  std::array<std::uint8_t, 4> extension{};
  std::vector<NiftiExtension> extensions;

  bool operator==(const NiftiHeader&) const = default;

  bool single_file() const { return magic[1] == '+'; }
  // pixdim[0] sign; 0 is treated as +1.
  double qfac() const { return pixdim[0] < 0.0f ? -1.0 : 1.0; }
};

struct NiftiImage {
  NiftiHeader header;
  Volume3D volume;
  // True when the input was big-endian; writes are always little-endian.
  bool byte_swapped = false;
};

// Parses a NIfTI-1 byte stream, gunzipping first when it starts with 0x1F 0x8B.
// For two-file ("ni1") images pass the .img contents as `image_data`.
// Voxels are decoded to float with scl_slope/scl_inter applied when slope != 0.
NiftiImage parse_nifti(std::span<const std::uint8_t> bytes,
                       std::optional<std::span<const std::uint8_t>> image_data = std::nullopt);

// Serializes a single-file ("n+1") little-endian image. The header's dim,
// datatype and scaling fields must describe `volume`; vox_offset is raised
// when needed to fit the extensions.
std::vector<std::uint8_t> write_nifti(const NiftiHeader& header, const Volume3D& volume);

// Voxel-to-world transform: sform when sform_code > 0, else qform when
// qform_code > 0, else a diagonal pixdim scaling.
Affine4x4 resolve_affine(const NiftiHeader& header);

// Float32 header describing `volume`, with the affine stored as an sform.
NiftiHeader make_header(const Volume3D& volume, NiftiDatatype datatype = NiftiDatatype::float32);

// File helpers. `.nii.gz` is gzip-compressed; `.hdr` reads the matching `.img`.
NiftiImage read_nifti(const std::filesystem::path& path);
void save_nifti(const std::filesystem::path& path, const NiftiHeader& header, const Volume3D& volume);
void save_nifti(const std::filesystem::path& path, const Volume3D& volume,
                NiftiDatatype datatype = NiftiDatatype::float32);

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace anevrix
