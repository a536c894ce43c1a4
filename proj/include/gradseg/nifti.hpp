#pragma once

// NIfTI-1 single-file reader/writer (.nii / .nii.gz), the toolkit's sole
// external image format. Supports uint8, int16, int32, float32 and float64
// payloads, both byte orders on read, and gzip containers detected by the
// 0x1F 0x8B prefix regardless of file suffix. Written files are native-endian,
// vox_offset 352, scl_slope 1 / scl_inter 0.
//
// NIfTI-2 and detached .hdr/.img pairs are rejected explicitly. Header
// extensions are not preserved; reads skip them.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "gradseg/core.hpp"

namespace gradseg::nifti {

inline constexpr std::int16_t DT_UINT8 = 2;
inline constexpr std::int16_t DT_INT16 = 4;
inline constexpr std::int16_t DT_INT32 = 8;
inline constexpr std::int16_t DT_FLOAT32 = 16;
inline constexpr std::int16_t DT_FLOAT64 = 64;

inline constexpr std::size_t kHeaderSize = 348;

struct NiftiHeader {
  std::int32_t sizeof_hdr = 348;
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype_code = 0;
  std::int16_t bitpix = 0;
  std::array<float, 8> pixdim{};
  float vox_offset = 352.0f;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  float quatern_b = 0, quatern_c = 0, quatern_d = 0;
  float qoffset_x = 0, qoffset_y = 0, qoffset_z = 0;
  std::array<float, 4> srow_x{}, srow_y{}, srow_z{};
  std::array<char, 4> magic{'n', '+', '1', '\0'};
  bool byte_swapped = false;       // source file was opposite-endian
  bool extensions_skipped = false; // file carried header extensions; they are dropped
};

namespace detail {

// On-disk layout, 348 bytes, no padding on any sane ABI.
#pragma pack(push, 1)
struct RawHeader {
  std::int32_t sizeof_hdr;     // 0
  char data_type[10];          // 4
  char db_name[18];            // 14
  std::int32_t extents;        // 32
  std::int16_t session_error;  // 36
  char regular;                // 38
  char dim_info;               // 39
  std::int16_t dim[8];         // 40
  float intent_p1;             // 56
  float intent_p2;             // 60
  float intent_p3;             // 64
  std::int16_t intent_code;    // 68
  std::int16_t datatype;       // 70
  std::int16_t bitpix;         // 72
  std::int16_t slice_start;    // 74
  float pixdim[8];             // 76
  float vox_offset;            // 108
  float scl_slope;             // 112
  float scl_inter;             // 116
  std::int16_t slice_end;      // 120
  char slice_code;             // 122
  char xyzt_units;             // 123
  float cal_max;               // 124
  float cal_min;               // 128
  float slice_duration;        // 132
  float toffset;               // 136
  std::int32_t glmax;          // 140
  std::int32_t glmin;          // 144
  char descrip[80];            // 148
  char aux_file[24];           // 228
  std::int16_t qform_code;     // 252
  std::int16_t sform_code;     // 254
  float quatern_b;             // 256
  float quatern_c;             // 260
  float quatern_d;             // 264
  float qoffset_x;             // 268
  float qoffset_y;             // 272
  float qoffset_z;             // 276
  float srow_x[4];             // 280
  float srow_y[4];             // 296
  float srow_z[4];             // 312
  char intent_name[16];        // 328
  char magic[4];               // 344
};
#pragma pack(pop)
static_assert(sizeof(RawHeader) == kHeaderSize, "NIfTI-1 header must be 348 bytes");

template <class T>
inline T byteswap(T v) {
  auto* p = reinterpret_cast<unsigned char*>(&v);
  for (std::size_t i = 0, j = sizeof(T) - 1; i < j; ++i, --j) std::swap(p[i], p[j]);
  return v;
}

inline void swap_header_fields(RawHeader& h) {
  h.sizeof_hdr = byteswap(h.sizeof_hdr);
  h.extents = byteswap(h.extents);
  h.session_error = byteswap(h.session_error);
  for (auto& d : h.dim) d = byteswap(d);
  h.intent_p1 = byteswap(h.intent_p1);
  h.intent_p2 = byteswap(h.intent_p2);
  h.intent_p3 = byteswap(h.intent_p3);
  h.intent_code = byteswap(h.intent_code);
  h.datatype = byteswap(h.datatype);
  h.bitpix = byteswap(h.bitpix);
  h.slice_start = byteswap(h.slice_start);
  for (auto& p : h.pixdim) p = byteswap(p);
  h.vox_offset = byteswap(h.vox_offset);
  h.scl_slope = byteswap(h.scl_slope);
  h.scl_inter = byteswap(h.scl_inter);
  h.slice_end = byteswap(h.slice_end);
  h.cal_max = byteswap(h.cal_max);
  h.cal_min = byteswap(h.cal_min);
  h.slice_duration = byteswap(h.slice_duration);
  h.toffset = byteswap(h.toffset);
  h.glmax = byteswap(h.glmax);
  h.glmin = byteswap(h.glmin);
  h.qform_code = byteswap(h.qform_code);
  h.sform_code = byteswap(h.sform_code);
  h.quatern_b = byteswap(h.quatern_b);
  h.quatern_c = byteswap(h.quatern_c);
  h.quatern_d = byteswap(h.quatern_d);
  h.qoffset_x = byteswap(h.qoffset_x);
  h.qoffset_y = byteswap(h.qoffset_y);
  h.qoffset_z = byteswap(h.qoffset_z);
  for (auto& f : h.srow_x) f = byteswap(f);
  for (auto& f : h.srow_y) f = byteswap(f);
  for (auto& f : h.srow_z) f = byteswap(f);
}

inline bool is_gzip(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B;
}

inline std::vector<std::uint8_t> gzip_decompress(std::span<const std::uint8_t> in) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) fail(errc::io, "inflateInit2 failed");
  std::vector<std::uint8_t> out;
  out.resize(std::max<std::size_t>(in.size() * 4, 1 << 16));
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::size_t written = 0;
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    if (written == out.size()) out.resize(out.size() * 2);
    zs.next_out = out.data() + written;
    zs.avail_out = static_cast<uInt>(out.size() - written);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      fail(errc::io, "gzip stream corrupt (inflate rc " + std::to_string(rc) + ")");
    }
    written = out.size() - zs.avail_out;
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      fail(errc::data_truncated, "gzip stream ended prematurely");
    }
  }
  inflateEnd(&zs);
  out.resize(written);
  return out;
}

inline std::vector<std::uint8_t> gzip_compress(std::span<const std::uint8_t> in) {
  z_stream zs{};
  // windowBits 15+16 emits a gzip wrapper with zero mtime: output depends only
  // on the input bytes, which keeps artifacts byte-reproducible.
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    fail(errc::io, "deflateInit2 failed");
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())));
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  if (rc != Z_STREAM_END) {
    deflateEnd(&zs);
    fail(errc::io, "deflate failed (rc " + std::to_string(rc) + ")");
  }
  out.resize(zs.total_out);
  deflateEnd(&zs);
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(errc::io, "cannot open " + path.string());
  f.seekg(0, std::ios::end);
  const auto n = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  std::vector<std::uint8_t> bytes(n);
  if (n > 0) f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (!f) fail(errc::io, "cannot read " + path.string());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(errc::io, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(errc::io, "cannot write " + path.string());
}

inline std::size_t datatype_size(std::int16_t code) {
  switch (code) {
    case DT_UINT8: return 1;
    case DT_INT16: return 2;
    case DT_INT32: return 4;
    case DT_FLOAT32: return 4;
    case DT_FLOAT64: return 8;
    default:
      fail(errc::unsupported_datatype, "datatype code " + std::to_string(code));
  }
}

}  // namespace detail

/// Parse a 348-byte header buffer. Endianness is detected from sizeof_hdr and
/// recorded in the returned header's byte_swapped flag.
inline NiftiHeader parse_header(std::span<const std::uint8_t> buffer) {
  if (buffer.size() != kHeaderSize)
    fail(errc::corrupt_header, "sizeof_hdr: buffer is " + std::to_string(buffer.size()) +
                                   " bytes, expected 348");
  detail::RawHeader raw;
  std::memcpy(&raw, buffer.data(), kHeaderSize);

  bool swapped = false;
  if (raw.sizeof_hdr != 348) {
    if (detail::byteswap(raw.sizeof_hdr) != 348)
      fail(errc::corrupt_header, "sizeof_hdr: " + std::to_string(raw.sizeof_hdr));
    detail::swap_header_fields(raw);
    swapped = true;
  }

  if (std::memcmp(raw.magic, "ni1\0", 4) == 0)
    fail(errc::wrong_magic, "magic: detached .hdr/.img pairs (\"ni1\") are not supported");
  if (std::memcmp(raw.magic, "n+1\0", 4) != 0)
    fail(errc::wrong_magic, "magic: expected \"n+1\"");

  detail::datatype_size(raw.datatype);  // throws UnsupportedDatatype

  const std::int16_t expected_bitpix = static_cast<std::int16_t>(detail::datatype_size(raw.datatype) * 8);
  if (raw.bitpix != expected_bitpix)
    fail(errc::corrupt_header, "bitpix: " + std::to_string(raw.bitpix) + " does not match datatype " +
                                   std::to_string(raw.datatype));

  if (raw.dim[0] < 1 || raw.dim[0] > 7)
    fail(errc::corrupt_header, "dim[0]: " + std::to_string(raw.dim[0]));
  for (int a = 1; a <= raw.dim[0]; ++a)
    if (raw.dim[a] < 1)
      fail(errc::corrupt_header, "dim[" + std::to_string(a) + "]: " + std::to_string(raw.dim[a]));

  NiftiHeader h;
  h.sizeof_hdr = raw.sizeof_hdr;
  for (int a = 0; a < 8; ++a) h.dim[a] = raw.dim[a];
  h.datatype_code = raw.datatype;
  h.bitpix = raw.bitpix;
  for (int a = 0; a < 8; ++a) h.pixdim[a] = raw.pixdim[a];
  h.vox_offset = raw.vox_offset;
  h.scl_slope = raw.scl_slope;
  h.scl_inter = raw.scl_inter;
  h.qform_code = raw.qform_code;
  h.sform_code = raw.sform_code;
  h.quatern_b = raw.quatern_b;
  h.quatern_c = raw.quatern_c;
  h.quatern_d = raw.quatern_d;
  h.qoffset_x = raw.qoffset_x;
  h.qoffset_y = raw.qoffset_y;
  h.qoffset_z = raw.qoffset_z;
  for (int a = 0; a < 4; ++a) {
    h.srow_x[a] = raw.srow_x[a];
    h.srow_y[a] = raw.srow_y[a];
    h.srow_z[a] = raw.srow_z[a];
  }
  std::memcpy(h.magic.data(), raw.magic, 4);
  h.byte_swapped = swapped;
  return h;
}

namespace detail {

inline Shape3 header_shape(const NiftiHeader& h) {
  Shape3 shape{1, 1, 1};
  for (int a = 1; a <= std::min<int>(h.dim[0], 3); ++a) shape[a - 1] = static_cast<std::size_t>(h.dim[a]);
  for (int a = 4; a <= h.dim[0]; ++a)
    if (h.dim[a] != 1)
      fail(errc::corrupt_header,
           "dim[" + std::to_string(a) + "]: only 3D volumes are supported (extent " +
               std::to_string(h.dim[a]) + ")");
  return shape;
}

inline Spacing3 header_spacing(const NiftiHeader& h) {
  Spacing3 s;
  for (int a = 0; a < 3; ++a) {
    const float p = h.pixdim[a + 1];
    if (!(p > 0.0f) || !std::isfinite(p))
      fail(errc::corrupt_header, "pixdim[" + std::to_string(a + 1) + "]: " + std::to_string(p));
    s[a] = static_cast<double>(p);
  }
  return s;
}

inline Affine34 header_affine(const NiftiHeader& h, const Spacing3& spacing) {
  Affine34 m{};
  if (h.sform_code > 0) {
    for (int a = 0; a < 4; ++a) {
      m[0][a] = h.srow_x[a];
      m[1][a] = h.srow_y[a];
      m[2][a] = h.srow_z[a];
    }
    return m;
  }
  if (h.qform_code > 0) {
    const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
    double a2 = 1.0 - (b * b + c * c + d * d);
    const double a = a2 > 0.0 ? std::sqrt(a2) : 0.0;
    const double qfac = (h.pixdim[0] < 0.0f) ? -1.0 : 1.0;
    const double R[3][3] = {
        {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
        {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
        {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c}};
    const double off[3] = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
    for (int r = 0; r < 3; ++r) {
      for (int cidx = 0; cidx < 3; ++cidx)
        m[r][cidx] = R[r][cidx] * spacing[cidx] * (cidx == 2 ? qfac : 1.0);
      m[r][3] = off[r];
    }
    return m;
  }
  return diagonal_affine(spacing);
}

template <class T>
inline double decode_at(const std::uint8_t* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap) v = byteswap(v);
  return static_cast<double>(v);
}

inline std::vector<double> decode_data(const NiftiHeader& h, std::span<const std::uint8_t> bytes,
                                       std::size_t count) {
  const std::size_t esize = datatype_size(h.datatype_code);
  if (h.vox_offset < 0 || static_cast<double>(h.vox_offset) < kHeaderSize)
    fail(errc::corrupt_header, "vox_offset: " + std::to_string(h.vox_offset));
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (bytes.size() < offset || bytes.size() - offset < count * esize)
    fail(errc::data_truncated, "expected " + std::to_string(count * esize) + " data bytes after offset " +
                                   std::to_string(offset) + ", file has " +
                                   std::to_string(bytes.size() > offset ? bytes.size() - offset : 0));
  // Format convention: a slope of 0 means no scaling (slope 1).
  const double slope = (h.scl_slope == 0.0f) ? 1.0 : static_cast<double>(h.scl_slope);
  const double inter = static_cast<double>(h.scl_inter);
  std::vector<double> out(count);
  const std::uint8_t* p = bytes.data() + offset;
  const bool swap = h.byte_swapped;
  for (std::size_t n = 0; n < count; ++n, p += esize) {
    double raw;
    switch (h.datatype_code) {
      case DT_UINT8: raw = static_cast<double>(*p); break;
      case DT_INT16: raw = decode_at<std::int16_t>(p, swap); break;
      case DT_INT32: raw = decode_at<std::int32_t>(p, swap); break;
      case DT_FLOAT32: raw = decode_at<float>(p, swap); break;
      default: raw = decode_at<double>(p, swap); break;
    }
    out[n] = raw * slope + inter;
  }
  return out;
}

inline std::vector<std::uint8_t> load_decompressed(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  if (is_gzip(bytes)) return gzip_decompress(bytes);
  return bytes;
}

}  // namespace detail

struct VolumeReadResult {
  Volume3 volume;
  NiftiHeader header;
};

struct MaskReadResult {
  LabelMask3 mask;
  NiftiHeader header;
};

inline VolumeReadResult read_volume(const std::filesystem::path& path) {
  const auto bytes = detail::load_decompressed(path);
  if (bytes.size() < kHeaderSize) fail(errc::data_truncated, path.string() + ": shorter than a header");
  auto header = parse_header(std::span(bytes.data(), kHeaderSize));
  if (bytes.size() >= 352 && bytes[348] != 0) {
    header.extensions_skipped = true;
    std::fprintf(stderr, "warning: %s carries NIfTI extensions; they are not preserved\n",
                 path.string().c_str());
  }
  VolumeReadResult r;
  r.header = header;
  r.volume.shape = detail::header_shape(header);
  r.volume.spacing = detail::header_spacing(header);
  r.volume.affine = detail::header_affine(header, r.volume.spacing);
  r.volume.data = detail::decode_data(header, bytes, r.volume.size());
  return r;
}

/// Read a label mask: values must be integers in [0, 255] after scaling.
inline MaskReadResult read_mask(const std::filesystem::path& path) {
  auto vr = read_volume(path);
  MaskReadResult r;
  r.header = vr.header;
  r.mask.shape = vr.volume.shape;
  r.mask.spacing = vr.volume.spacing;
  r.mask.affine = vr.volume.affine;
  r.mask.data.resize(vr.volume.data.size());
  for (std::size_t n = 0; n < vr.volume.data.size(); ++n) {
    const double v = vr.volume.data[n];
    const double rounded = std::nearbyint(v);
    if (!std::isfinite(v) || std::abs(v - rounded) > 1e-6 || rounded < 0.0 || rounded > 255.0)
      fail(errc::value_overflow,
           path.string() + ": voxel " + std::to_string(n) + " = " + std::to_string(v) +
               " is not a small non-negative integer label");
    r.mask.data[n] = static_cast<std::uint8_t>(rounded);
  }
  return r;
}

namespace detail {

template <class Grid, class Fetch>
inline void write_grid(const Grid& g, const std::filesystem::path& path, std::int16_t datatype_code,
                       Fetch fetch) {
  const std::string name = path.filename().string();
  const bool gz = name.size() > 3 && name.compare(name.size() - 3, 3, ".gz") == 0;
  const std::string stem = gz ? name.substr(0, name.size() - 3) : name;
  if (stem.size() < 4 || stem.compare(stem.size() - 4, 4, ".nii") != 0)
    fail(errc::invalid_argument, "output path must end in .nii or .nii.gz: " + path.string());

  const std::size_t esize = datatype_size(datatype_code);
  const std::size_t count = g.size();

  RawHeader raw{};
  raw.sizeof_hdr = 348;
  raw.regular = 'r';
  raw.dim[0] = 3;
  for (int a = 0; a < 3; ++a) raw.dim[a + 1] = static_cast<std::int16_t>(g.shape[a]);
  for (int a = 4; a < 8; ++a) raw.dim[a] = 1;
  raw.datatype = datatype_code;
  raw.bitpix = static_cast<std::int16_t>(esize * 8);
  raw.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) raw.pixdim[a + 1] = static_cast<float>(g.spacing[a]);
  raw.vox_offset = 352.0f;
  raw.scl_slope = 1.0f;
  raw.scl_inter = 0.0f;
  raw.qform_code = 0;
  raw.sform_code = 1;
  for (int a = 0; a < 4; ++a) {
    raw.srow_x[a] = static_cast<float>(g.affine[0][a]);
    raw.srow_y[a] = static_cast<float>(g.affine[1][a]);
    raw.srow_z[a] = static_cast<float>(g.affine[2][a]);
  }
  std::memcpy(raw.magic, "n+1\0", 4);

  std::vector<std::uint8_t> out(352 + count * esize);
  std::memcpy(out.data(), &raw, kHeaderSize);
  // 4-byte extender, all zero: no extensions.
  out[348] = out[349] = out[350] = out[351] = 0;

  std::uint8_t* p = out.data() + 352;
  for (std::size_t n = 0; n < count; ++n, p += esize) fetch(n, datatype_code, p);

  if (gz) {
    const auto packed = gzip_compress(out);
    write_file_bytes(path, packed);
  } else {
    write_file_bytes(path, out);
  }
}

template <class T>
inline void store(std::uint8_t* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}

inline void encode_value(double v, std::int16_t code, std::uint8_t* p, std::size_t n) {
  if (!std::isfinite(v))
    fail(errc::value_overflow, "voxel " + std::to_string(n) + " is not finite");
  switch (code) {
    case DT_FLOAT64: store(p, v); return;
    case DT_FLOAT32: store(p, static_cast<float>(v)); return;
    default: break;
  }
  const double rounded = std::nearbyint(v);
  if (v != rounded)
    fail(errc::value_overflow, "voxel " + std::to_string(n) + " = " + std::to_string(v) +
                                   " is not integral for an integer datatype");
  switch (code) {
    case DT_UINT8:
      if (rounded < 0.0 || rounded > 255.0)
        fail(errc::value_overflow, "voxel value " + std::to_string(v) + " exceeds uint8 range");
      store(p, static_cast<std::uint8_t>(rounded));
      return;
    case DT_INT16:
      if (rounded < -32768.0 || rounded > 32767.0)
        fail(errc::value_overflow, "voxel value " + std::to_string(v) + " exceeds int16 range");
      store(p, static_cast<std::int16_t>(rounded));
      return;
    case DT_INT32:
      if (rounded < -2147483648.0 || rounded > 2147483647.0)
        fail(errc::value_overflow, "voxel value " + std::to_string(v) + " exceeds int32 range");
      store(p, static_cast<std::int32_t>(rounded));
      return;
    default:
      fail(errc::unsupported_datatype, "datatype code " + std::to_string(code));
  }
}

}  // namespace detail

inline void write_volume(const Volume3& v, const std::filesystem::path& path,
                         std::int16_t datatype_code = DT_FLOAT32) {
  detail::write_grid(v, path, datatype_code, [&](std::size_t n, std::int16_t code, std::uint8_t* p) {
    detail::encode_value(v.data[n], code, p, n);
  });
}

inline void write_mask(const LabelMask3& m, const std::filesystem::path& path,
                       std::int16_t datatype_code = DT_UINT8) {
  detail::write_grid(m, path, datatype_code, [&](std::size_t n, std::int16_t code, std::uint8_t* p) {
    detail::encode_value(static_cast<double>(m.data[n]), code, p, n);
  });
}

}  // namespace gradseg::nifti
