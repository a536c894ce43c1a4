#pragma once

// Shared test scaffolding: random grid fixtures, scratch directories, and an
// independent byte-swapper for NIfTI fixtures (driven by the published field
// offsets, not by the reader's own swap code).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gradseg/core.hpp"

namespace testsup {

inline gradseg::Volume3 random_volume(gradseg::Shape3 shape, gradseg::Rng& rng,
                                      double lo = -100.0, double hi = 100.0,
                                      gradseg::Spacing3 spacing = {1.0, 1.0, 1.0}) {
  auto v = gradseg::make_volume(shape, spacing);
  for (auto& x : v.data) x = rng.uniform(lo, hi);
  return v;
}

inline gradseg::LabelMask3 random_mask(gradseg::Shape3 shape, gradseg::Rng& rng,
                                       double fg_probability = 0.2, int max_label = 2,
                                       gradseg::Spacing3 spacing = {1.0, 1.0, 1.0}) {
  auto m = gradseg::make_mask(shape, spacing);
  for (auto& x : m.data)
    if (rng.uniform() < fg_probability)
      x = static_cast<std::uint8_t>(rng.uniform_int(1, max_label));
  return m;
}

/// Fresh scratch directory under the system temp root; any previous content
/// with the same tag is removed so reruns start clean.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("gradseg_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
}

inline void spit(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void reverse_bytes(std::uint8_t* p, std::size_t n) {
  for (std::size_t i = 0, j = n - 1; i < j; ++i, --j) std::swap(p[i], p[j]);
}

/// Byte-swap an uncompressed single-file NIfTI-1 buffer in place, using the
/// published header layout. `element_size` is the payload element width.
inline void byteswap_nifti_buffer(std::vector<std::uint8_t>& bytes, std::size_t element_size) {
  struct Field {
    std::size_t offset, size, count;
  };
  static const Field fields[] = {
      {0, 4, 1},    // sizeof_hdr
      {32, 4, 1},   // extents
      {36, 2, 1},   // session_error
      {40, 2, 8},   // dim
      {56, 4, 3},   // intent_p1..p3
      {68, 2, 1},   // intent_code
      {70, 2, 1},   // datatype
      {72, 2, 1},   // bitpix
      {74, 2, 1},   // slice_start
      {76, 4, 8},   // pixdim
      {108, 4, 1},  // vox_offset
      {112, 4, 1},  // scl_slope
      {116, 4, 1},  // scl_inter
      {120, 2, 1},  // slice_end
      {124, 4, 1},  // cal_max
      {128, 4, 1},  // cal_min
      {132, 4, 1},  // slice_duration
      {136, 4, 1},  // toffset
      {140, 4, 1},  // glmax
      {144, 4, 1},  // glmin
      {252, 2, 1},  // qform_code
      {254, 2, 1},  // sform_code
      {256, 4, 6},  // quatern_b..qoffset_z
      {280, 4, 12}, // srow_x/y/z
  };
  float vox_offset_f;
  std::memcpy(&vox_offset_f, bytes.data() + 108, 4);
  const auto vox_offset = static_cast<std::size_t>(vox_offset_f);
  for (const auto& f : fields)
    for (std::size_t c = 0; c < f.count; ++c)
      reverse_bytes(bytes.data() + f.offset + c * f.size, f.size);
  if (element_size > 1)
    for (std::size_t p = vox_offset; p + element_size <= bytes.size(); p += element_size)
      reverse_bytes(bytes.data() + p, element_size);
}

}  // namespace testsup
