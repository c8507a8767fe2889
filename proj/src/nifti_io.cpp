#include "anevrix/nifti_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "anevrix/errors.hpp"
#include "anevrix/gzip.hpp"

namespace anevrix {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kSingleFileMinOffset = 352;

template <typename T>
T byteswap_value(T v) {
  std::array<std::uint8_t, sizeof(T)> raw;
  std::memcpy(raw.data(), &v, sizeof(T));
  std::reverse(raw.begin(), raw.end());
  std::memcpy(&v, raw.data(), sizeof(T));
  return v;
}

// Reads fixed-offset fields, swapping when the file's byte order differs
// from little-endian.
class FieldReader {
 public:
  FieldReader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T v;
    std::memcpy(&v, bytes_.data() + offset, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      if (!swap_) v = byteswap_value(v);
    } else {
      if (swap_) v = byteswap_value(v);
    }
    return v;
  }

  template <typename T, std::size_t N>
  void get_array(std::size_t offset, std::array<T, N>& out) const {
    for (std::size_t i = 0; i < N; ++i) out[i] = get<T>(offset + i * sizeof(T));
  }

  template <std::size_t N>
  void get_chars(std::size_t offset, std::array<char, N>& out) const {
    std::memcpy(out.data(), bytes_.data() + offset, N);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

class FieldWriter {
 public:
  explicit FieldWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(std::size_t offset, T v) {
    if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
    std::memcpy(out_.data() + offset, &v, sizeof(T));
  }

  template <typename T, std::size_t N>
  void put_array(std::size_t offset, const std::array<T, N>& values) {
    for (std::size_t i = 0; i < N; ++i) put<T>(offset + i * sizeof(T), values[i]);
  }

  template <std::size_t N>
  void put_chars(std::size_t offset, const std::array<char, N>& values) {
    std::memcpy(out_.data() + offset, values.data(), N);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

NiftiHeader decode_header(const FieldReader& r) {
  NiftiHeader h;
  h.sizeof_hdr = r.get<std::int32_t>(0);
  r.get_chars(4, h.data_type);
  r.get_chars(14, h.db_name);
  h.extents = r.get<std::int32_t>(32);
  h.session_error = r.get<std::int16_t>(36);
  h.regular = static_cast<char>(r.get<std::uint8_t>(38));
  h.dim_info = r.get<std::uint8_t>(39);
  r.get_array(40, h.dim);
  h.intent_p1 = r.get<float>(56);
  h.intent_p2 = r.get<float>(60);
  h.intent_p3 = r.get<float>(64);
  h.intent_code = r.get<std::int16_t>(68);
  h.datatype = r.get<std::int16_t>(70);
  h.bitpix = r.get<std::int16_t>(72);
  h.slice_start = r.get<std::int16_t>(74);
  r.get_array(76, h.pixdim);
  h.vox_offset = r.get<float>(108);
  h.scl_slope = r.get<float>(112);
  h.scl_inter = r.get<float>(116);
  h.slice_end = r.get<std::int16_t>(120);
  h.slice_code = r.get<std::uint8_t>(122);
  h.xyzt_units = r.get<std::uint8_t>(123);
  h.cal_max = r.get<float>(124);
  h.cal_min = r.get<float>(128);
  h.slice_duration = r.get<float>(132);
  h.toffset = r.get<float>(136);
  h.glmax = r.get<std::int32_t>(140);
  h.glmin = r.get<std::int32_t>(144);
  r.get_chars(148, h.descrip);
  r.get_chars(228, h.aux_file);
  h.qform_code = r.get<std::int16_t>(252);
  h.sform_code = r.get<std::int16_t>(254);
  h.quatern_b = r.get<float>(256);
  h.quatern_c = r.get<float>(260);
  h.quatern_d = r.get<float>(264);
  h.qoffset_x = r.get<float>(268);
  h.qoffset_y = r.get<float>(272);
  h.qoffset_z = r.get<float>(276);
  r.get_array(280, h.srow_x);
  r.get_array(296, h.srow_y);
  r.get_array(312, h.srow_z);
  r.get_chars(328, h.intent_name);
  r.get_chars(344, h.magic);
  return h;
}

void encode_header(const NiftiHeader& h, std::vector<std::uint8_t>& out) {
  FieldWriter w(out);
  w.put<std::int32_t>(0, 348);
  w.put_chars(4, h.data_type);
  w.put_chars(14, h.db_name);
  w.put<std::int32_t>(32, h.extents);
  w.put<std::int16_t>(36, h.session_error);
  w.put<std::uint8_t>(38, static_cast<std::uint8_t>(h.regular));
  w.put<std::uint8_t>(39, h.dim_info);
  w.put_array(40, h.dim);
  w.put<float>(56, h.intent_p1);
  w.put<float>(60, h.intent_p2);
  w.put<float>(64, h.intent_p3);
  w.put<std::int16_t>(68, h.intent_code);
  w.put<std::int16_t>(70, h.datatype);
  w.put<std::int16_t>(72, h.bitpix);
  w.put<std::int16_t>(74, h.slice_start);
  w.put_array(76, h.pixdim);
  w.put<float>(108, h.vox_offset);
  w.put<float>(112, h.scl_slope);
  w.put<float>(116, h.scl_inter);
  w.put<std::int16_t>(120, h.slice_end);
  w.put<std::uint8_t>(122, h.slice_code);
  w.put<std::uint8_t>(123, h.xyzt_units);
  w.put<float>(124, h.cal_max);
  w.put<float>(128, h.cal_min);
  w.put<float>(132, h.slice_duration);
  w.put<float>(136, h.toffset);
  w.put<std::int32_t>(140, h.glmax);
  w.put<std::int32_t>(144, h.glmin);
  w.put_chars(148, h.descrip);
  w.put_chars(228, h.aux_file);
  w.put<std::int16_t>(252, h.qform_code);
  w.put<std::int16_t>(254, h.sform_code);
  w.put<float>(256, h.quatern_b);
  w.put<float>(260, h.quatern_c);
  w.put<float>(264, h.quatern_d);
  w.put<float>(268, h.qoffset_x);
  w.put<float>(272, h.qoffset_y);
  w.put<float>(276, h.qoffset_z);
  w.put_array(280, h.srow_x);
  w.put_array(296, h.srow_y);
  w.put_array(312, h.srow_z);
  w.put_chars(328, h.intent_name);
  w.put_chars(344, h.magic);
}

Index3 volume_shape(const NiftiHeader& h) {
  if (h.dim[0] < 1 || h.dim[0] > 7) {
    throw ValidationError("nifti: dim[0] = " + std::to_string(h.dim[0]) + " outside [1,7]");
  }
  Index3 shape{1, 1, 1};
  for (int a = 1; a <= h.dim[0]; ++a) {
    if (h.dim[a] < 1) {
      throw ValidationError("nifti: dim[" + std::to_string(a) + "] = " + std::to_string(h.dim[a]) + " must be >= 1");
    }
    if (a <= 3) {
      shape[a - 1] = h.dim[a];
    } else if (h.dim[a] != 1) {
      throw ValidationError("nifti: only 3D volumes are supported (dim[" + std::to_string(a) +
                            "] = " + std::to_string(h.dim[a]) + ")");
    }
  }
  return shape;
}

bool has_scaling(const NiftiHeader& h) {
  return h.scl_slope != 0.0f && std::isfinite(h.scl_slope) && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
}

Vec3 header_spacing(const NiftiHeader& h, const Affine4x4& affine) {
  const Vec3 norms = affine.column_norms();
  Vec3 spacing;
  for (int a = 0; a < 3; ++a) {
    const double p = std::abs(static_cast<double>(h.pixdim[a + 1]));
    spacing[a] = (p > 0.0 && std::isfinite(p)) ? p : norms[a];
  }
  return spacing;
}

template <typename T>
void decode_voxels(std::span<const std::uint8_t> data, bool swap, const NiftiHeader& h, std::vector<float>& out) {
  const bool scale = has_scaling(h);
  const double slope = h.scl_slope;
  const double inter = h.scl_inter;
  for (std::size_t i = 0; i < out.size(); ++i) {
    T raw;
    std::memcpy(&raw, data.data() + i * sizeof(T), sizeof(T));
    bool need_swap = swap;
    if constexpr (std::endian::native == std::endian::big) need_swap = !swap;
    if (need_swap) raw = byteswap_value(raw);
    if (scale) {
      out[i] = static_cast<float>(slope * static_cast<double>(raw) + inter);
    } else {
      out[i] = static_cast<float>(raw);
    }
  }
}

template <typename T>
void encode_voxels(std::span<const float> values, const NiftiHeader& h, std::uint8_t* dest) {
  const bool scale = has_scaling(h);
  const double slope = h.scl_slope;
  const double inter = h.scl_inter;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = values[i];
    if (scale) v = (v - inter) / slope;
    T raw;
    if constexpr (std::is_integral_v<T>) {
      v = std::round(v);
      v = std::clamp(v, static_cast<double>(std::numeric_limits<T>::lowest()),
                     static_cast<double>(std::numeric_limits<T>::max()));
      raw = static_cast<T>(v);
    } else if (scale) {
      raw = static_cast<T>(v);
    } else {
      // Unscaled float payloads are copied verbatim.
      raw = static_cast<T>(values[i]);
    }
    if constexpr (std::endian::native == std::endian::big) raw = byteswap_value(raw);
    std::memcpy(dest + i * sizeof(T), &raw, sizeof(T));
  }
}

std::vector<NiftiExtension> decode_extensions(std::span<const std::uint8_t> bytes, bool swap,
                                              std::size_t data_offset) {
  std::vector<NiftiExtension> exts;
  FieldReader r(bytes, swap);
  std::size_t pos = kSingleFileMinOffset;
  while (pos + 8 <= data_offset && pos + 8 <= bytes.size()) {
    const auto esize = r.get<std::int32_t>(pos);
    const auto ecode = r.get<std::int32_t>(pos + 4);
    if (esize < 16 || esize % 16 != 0 || pos + static_cast<std::size_t>(esize) > data_offset) {
      throw ValidationError("nifti: malformed extension block at byte " + std::to_string(pos));
    }
    NiftiExtension ext;
    ext.code = ecode;
    ext.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos + 8),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + static_cast<std::size_t>(esize)));
    exts.push_back(std::move(ext));
    pos += static_cast<std::size_t>(esize);
  }
  return exts;
}

}  // namespace

int datatype_size(std::int16_t code) {
  switch (static_cast<NiftiDatatype>(code)) {
    case NiftiDatatype::uint8: return 1;
    case NiftiDatatype::int16: return 2;
    case NiftiDatatype::int32: return 4;
    case NiftiDatatype::float32: return 4;
    case NiftiDatatype::float64: return 8;
  }
  throw ValidationError("nifti: unsupported datatype code " + std::to_string(code));
}

NiftiImage parse_nifti(std::span<const std::uint8_t> bytes, std::optional<std::span<const std::uint8_t>> image_data) {
  std::vector<std::uint8_t> inflated;
  if (gzip::is_gzip(bytes)) {
    inflated = gzip::decompress(bytes);
    bytes = inflated;
  }
  if (bytes.size() < kHeaderSize) {
    throw IoError("nifti: truncated header (" + std::to_string(bytes.size()) + " bytes)");
  }

  std::int32_t probe;
  std::memcpy(&probe, bytes.data(), 4);
  if constexpr (std::endian::native == std::endian::big) probe = byteswap_value(probe);
  bool swap = false;
  if (probe != 348) {
    if (byteswap_value(probe) != 348) {
      throw ValidationError("nifti: sizeof_hdr is neither 348 nor byte-swapped 348");
    }
    swap = true;
  }

  const FieldReader reader(bytes, swap);
  NiftiHeader h = decode_header(reader);

  const bool single = h.magic[0] == 'n' && h.magic[1] == '+' && h.magic[2] == '1' && h.magic[3] == '\0';
  const bool pair = h.magic[0] == 'n' && h.magic[1] == 'i' && h.magic[2] == '1' && h.magic[3] == '\0';
  if (!single && !pair) throw ValidationError("nifti: bad magic");

  const Index3 shape = volume_shape(h);
  const int elem = datatype_size(h.datatype);
  if (h.bitpix != elem * 8) {
    throw ValidationError("nifti: bitpix " + std::to_string(h.bitpix) + " inconsistent with datatype " +
                          std::to_string(h.datatype));
  }

  std::span<const std::uint8_t> data;
  std::size_t data_offset = 0;
  if (single) {
    if (!(h.vox_offset >= static_cast<float>(kSingleFileMinOffset))) {
      throw ValidationError("nifti: vox_offset must be >= 352 for single-file images");
    }
    data_offset = static_cast<std::size_t>(h.vox_offset);
    if (bytes.size() >= kSingleFileMinOffset) {
      std::memcpy(h.extension.data(), bytes.data() + kHeaderSize, 4);
      if (h.extension[0] != 0) h.extensions = decode_extensions(bytes, swap, data_offset);
    }
    data = bytes.subspan(std::min(data_offset, bytes.size()));
  } else {
    if (!image_data) throw ValidationError("nifti: 'ni1' header requires separate image data");
    data_offset = static_cast<std::size_t>(std::max(0.0f, h.vox_offset));
    data = image_data->subspan(std::min(data_offset, image_data->size()));
  }

  const std::size_t count = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
  const std::size_t need = count * static_cast<std::size_t>(elem);
  if (data.size() < need) {
    throw IoError("nifti: truncated data section (" + std::to_string(data.size()) + " of " + std::to_string(need) +
                  " bytes)");
  }

  std::vector<float> voxels(count);
  switch (static_cast<NiftiDatatype>(h.datatype)) {
    case NiftiDatatype::uint8: decode_voxels<std::uint8_t>(data, swap, h, voxels); break;
    case NiftiDatatype::int16: decode_voxels<std::int16_t>(data, swap, h, voxels); break;
    case NiftiDatatype::int32: decode_voxels<std::int32_t>(data, swap, h, voxels); break;
    case NiftiDatatype::float32: decode_voxels<float>(data, swap, h, voxels); break;
    case NiftiDatatype::float64: decode_voxels<double>(data, swap, h, voxels); break;
  }

  const Affine4x4 affine = resolve_affine(h);
  Volume3D volume(shape, header_spacing(h, affine), affine, std::move(voxels));
  return NiftiImage{std::move(h), std::move(volume), swap};
}

std::vector<std::uint8_t> write_nifti(const NiftiHeader& header, const Volume3D& volume) {
  NiftiHeader h = header;
  if (volume_shape(h) != volume.shape()) {
    throw ValidationError("nifti: header dims do not match volume shape");
  }
  const int elem = datatype_size(h.datatype);
  h.bitpix = static_cast<std::int16_t>(elem * 8);
  h.magic = {'n', '+', '1', '\0'};

  std::size_t ext_bytes = 0;
  for (const auto& e : h.extensions) {
    const std::size_t esize = e.data.size() + 8;
    if (esize % 16 != 0) throw ValidationError("nifti: extension size must be a multiple of 16");
    ext_bytes += esize;
  }
  h.extension = {static_cast<std::uint8_t>(h.extensions.empty() ? 0 : 1), 0, 0, 0};
  const std::size_t min_offset = kSingleFileMinOffset + ext_bytes;
  if (!(h.vox_offset >= static_cast<float>(min_offset))) h.vox_offset = static_cast<float>(min_offset);
  const auto data_offset = static_cast<std::size_t>(h.vox_offset);

  std::vector<std::uint8_t> out(data_offset + volume.size() * static_cast<std::size_t>(elem), 0);
  encode_header(h, out);
  std::memcpy(out.data() + kHeaderSize, h.extension.data(), 4);
  FieldWriter w(out);
  std::size_t pos = kSingleFileMinOffset;
  for (const auto& e : h.extensions) {
    w.put<std::int32_t>(pos, static_cast<std::int32_t>(e.data.size() + 8));
    w.put<std::int32_t>(pos + 4, e.code);
    std::copy(e.data.begin(), e.data.end(), out.begin() + static_cast<std::ptrdiff_t>(pos + 8));
    pos += e.data.size() + 8;
  }

  std::uint8_t* dest = out.data() + data_offset;
  const auto values = volume.voxels();
  switch (static_cast<NiftiDatatype>(h.datatype)) {
    case NiftiDatatype::uint8: encode_voxels<std::uint8_t>(values, h, dest); break;
    case NiftiDatatype::int16: encode_voxels<std::int16_t>(values, h, dest); break;
    case NiftiDatatype::int32: encode_voxels<std::int32_t>(values, h, dest); break;
    case NiftiDatatype::float32: encode_voxels<float>(values, h, dest); break;
    case NiftiDatatype::float64: encode_voxels<double>(values, h, dest); break;
  }
  return out;
}

Affine4x4 resolve_affine(const NiftiHeader& h) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  if (h.sform_code > 0) {
    for (int c = 0; c < 4; ++c) {
      m(0, c) = h.srow_x[c];
      m(1, c) = h.srow_y[c];
      m(2, c) = h.srow_z[c];
    }
  } else if (h.qform_code > 0) {
    double b = h.quatern_b;
    double c = h.quatern_c;
    double d = h.quatern_d;
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    Eigen::Matrix3d r;
    r << a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c),
        2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b),
        2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b;
    const Vec3 scale{h.pixdim[1] > 0.0f ? h.pixdim[1] : 1.0, h.pixdim[2] > 0.0f ? h.pixdim[2] : 1.0,
                     (h.pixdim[3] > 0.0f ? h.pixdim[3] : 1.0) * h.qfac()};
    for (int col = 0; col < 3; ++col) m.block<3, 1>(0, col) = r.col(col) * scale[col];
    m(0, 3) = h.qoffset_x;
    m(1, 3) = h.qoffset_y;
    m(2, 3) = h.qoffset_z;
  } else {
    for (int a = 0; a < 3; ++a) {
      const double p = std::abs(static_cast<double>(h.pixdim[a + 1]));
      m(a, a) = p > 0.0 ? p : 1.0;
    }
  }
  return Affine4x4(m);
}

NiftiHeader make_header(const Volume3D& volume, NiftiDatatype datatype) {
  NiftiHeader h;
  h.dim = {3, static_cast<std::int16_t>(volume.shape()[0]), static_cast<std::int16_t>(volume.shape()[1]),
           static_cast<std::int16_t>(volume.shape()[2]), 1, 1, 1, 1};
  for (int a = 0; a < 3; ++a) {
    if (volume.shape()[a] > std::numeric_limits<std::int16_t>::max()) {
      throw ValidationError("nifti: volume extent exceeds NIfTI-1 limit");
    }
  }
  h.datatype = static_cast<std::int16_t>(datatype);
  h.bitpix = static_cast<std::int16_t>(datatype_size(h.datatype) * 8);
  h.pixdim = {1.0f,
              static_cast<float>(volume.spacing()[0]),
              static_cast<float>(volume.spacing()[1]),
              static_cast<float>(volume.spacing()[2]),
              1.0f,
              1.0f,
              1.0f,
              1.0f};
  h.xyzt_units = 2;  // millimetres
  h.sform_code = 1;
  const auto& m = volume.affine().matrix();
  for (int c = 0; c < 4; ++c) {
    h.srow_x[c] = static_cast<float>(m(0, c));
    h.srow_y[c] = static_cast<float>(m(1, c));
    h.srow_z[c] = static_cast<float>(m(2, c));
  }
  return h;
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("error reading " + path.string());
  return bytes;
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing " + path.string());
}

NiftiImage read_nifti(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  try {
    if (path.extension() == ".hdr") {
      auto img_path = path;
      img_path.replace_extension(".img");
      const auto img = read_binary_file(img_path);
      return parse_nifti(bytes, std::span<const std::uint8_t>(img));
    }
    return parse_nifti(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void save_nifti(const std::filesystem::path& path, const NiftiHeader& header, const Volume3D& volume) {
  const auto bytes = write_nifti(header, volume);
  const std::string name = path.filename().string();
  if (name.size() > 3 && name.ends_with(".gz")) {
    write_binary_file(path, gzip::compress(bytes));
  } else {
    write_binary_file(path, bytes);
  }
}

void save_nifti(const std::filesystem::path& path, const Volume3D& volume, NiftiDatatype datatype) {
  save_nifti(path, make_header(volume, datatype), volume);
}

}  // namespace anevrix
