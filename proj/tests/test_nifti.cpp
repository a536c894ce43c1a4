#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>

#include "gradseg/nifti.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gradseg;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> header_bytes_of(const Volume3& v, const fs::path& dir) {
  const auto p = dir / "hdr_probe.nii";
  nifti::write_volume(v, p, nifti::DT_FLOAT32);
  auto bytes = testsup::slurp(p);
  bytes.resize(nifti::kHeaderSize);
  return bytes;
}

}  // namespace

TEST_CASE("parse_header accepts a float32 header with format-defined constants") {
  const auto dir = testsup::scratch_dir("nifti_hdr");
  Rng rng(1);
  const auto v = testsup::random_volume({4, 5, 6}, rng, 0, 1, {1.5, 0.75, 2.0});
  const auto bytes = header_bytes_of(v, dir);

  const auto h = nifti::parse_header(bytes);
  CHECK(h.sizeof_hdr == 348);
  CHECK(h.datatype_code == 16);
  CHECK(h.bitpix == 32);
  CHECK(h.dim[0] == 3);
  CHECK(h.dim[1] == 4);
  CHECK(h.dim[2] == 5);
  CHECK(h.dim[3] == 6);
  CHECK(h.vox_offset == 352.0f);
  CHECK_FALSE(h.byte_swapped);
}

TEST_CASE("parse_header detects and undoes byte swap") {
  const auto dir = testsup::scratch_dir("nifti_swap_hdr");
  Rng rng(2);
  const auto v = testsup::random_volume({3, 4, 5}, rng, 0, 1, {0.5, 1.25, 2.5});
  auto bytes = header_bytes_of(v, dir);
  auto swapped = bytes;
  testsup::byteswap_nifti_buffer(swapped, 1);  // header only present here

  // sanity: the swapped buffer reads 348 reversed
  std::int32_t raw;
  std::memcpy(&raw, swapped.data(), 4);
  CHECK(raw == 1543569408);

  const auto h0 = nifti::parse_header(bytes);
  const auto h1 = nifti::parse_header(swapped);
  CHECK(h1.byte_swapped);
  CHECK(h1.dim == h0.dim);
  CHECK(h1.datatype_code == h0.datatype_code);
  CHECK(h1.bitpix == h0.bitpix);
  for (int a = 0; a < 8; ++a) CHECK(h1.pixdim[a] == h0.pixdim[a]);
  CHECK(h1.vox_offset == h0.vox_offset);
  CHECK(h1.srow_x == h0.srow_x);
  CHECK(h1.srow_y == h0.srow_y);
  CHECK(h1.srow_z == h0.srow_z);
}

TEST_CASE("parse_header rejections name the offending field") {
  const auto dir = testsup::scratch_dir("nifti_bad_hdr");
  Rng rng(3);
  const auto v = testsup::random_volume({3, 3, 3}, rng);
  const auto good = header_bytes_of(v, dir);

  SECTION("bad magic") {
    auto bad = good;
    std::memcpy(bad.data() + 344, "xyz\0", 4);
    CHECK_THROWS_MATCHES(nifti::parse_header(bad), error,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("magic")));
  }
  SECTION("detached-header magic is rejected explicitly") {
    auto bad = good;
    std::memcpy(bad.data() + 344, "ni1\0", 4);
    try {
      nifti::parse_header(bad);
      FAIL("expected WrongMagic");
    } catch (const error& e) {
      CHECK(e.code() == errc::wrong_magic);
      CHECK(std::string(e.what()).find("detached") != std::string::npos);
    }
  }
  SECTION("unsupported datatype") {
    auto bad = good;
    const std::int16_t dt = 128;  // RGB, not supported
    std::memcpy(bad.data() + 70, &dt, 2);
    try {
      nifti::parse_header(bad);
      FAIL("expected UnsupportedDatatype");
    } catch (const error& e) {
      CHECK(e.code() == errc::unsupported_datatype);
    }
  }
  SECTION("bitpix inconsistent with datatype") {
    auto bad = good;
    const std::int16_t bp = 16;
    std::memcpy(bad.data() + 72, &bp, 2);
    try {
      nifti::parse_header(bad);
      FAIL("expected CorruptHeader");
    } catch (const error& e) {
      CHECK(e.code() == errc::corrupt_header);
      CHECK(std::string(e.what()).find("bitpix") != std::string::npos);
    }
  }
  SECTION("dim out of range") {
    auto bad = good;
    const std::int16_t d0 = 9;
    std::memcpy(bad.data() + 40, &d0, 2);
    try {
      nifti::parse_header(bad);
      FAIL("expected CorruptHeader");
    } catch (const error& e) {
      CHECK(e.code() == errc::corrupt_header);
      CHECK(std::string(e.what()).find("dim") != std::string::npos);
    }
  }
  SECTION("wrong buffer size") {
    std::vector<std::uint8_t> tiny(100, 0);
    CHECK_THROWS_AS(nifti::parse_header(tiny), error);
  }
}

TEST_CASE("float32 volume round-trips bitwise") {
  const auto dir = testsup::scratch_dir("nifti_rt_f32");
  Rng rng(4);
  auto v = testsup::random_volume({7, 5, 9}, rng, -50, 50, {1.2, 0.5, 0.5});
  // values representable in float32, so the round trip must be exact
  for (auto& x : v.data) x = static_cast<double>(static_cast<float>(x));

  const auto p = dir / "a.nii";
  nifti::write_volume(v, p, nifti::DT_FLOAT32);
  const auto r = nifti::read_volume(p);
  REQUIRE(r.volume.shape == v.shape);
  CHECK(r.volume.spacing[0] == Catch::Approx(1.2).margin(1e-6));
  CHECK(r.volume.spacing[1] == Catch::Approx(0.5).margin(1e-6));
  for (std::size_t n = 0; n < v.size(); ++n) REQUIRE(r.volume.data[n] == v.data[n]);
}

TEST_CASE("scl_slope and scl_inter apply on read, slope 0 means 1") {
  const auto dir = testsup::scratch_dir("nifti_slope");
  // hand-built int16 file: raw voxel 5 with slope 2 and inter 1 reads as 11
  Volume3 v = make_volume({1, 1, 1});
  v.data[0] = 5.0;
  const auto p = dir / "s.nii";
  nifti::write_volume(v, p, nifti::DT_INT16);
  auto bytes = testsup::slurp(p);
  const float slope = 2.0f, inter = 1.0f;
  std::memcpy(bytes.data() + 112, &slope, 4);
  std::memcpy(bytes.data() + 116, &inter, 4);
  testsup::spit(p, bytes);
  CHECK(nifti::read_volume(p).volume.data[0] == 11.0);

  const float zero = 0.0f;
  std::memcpy(bytes.data() + 112, &zero, 4);
  std::memcpy(bytes.data() + 116, &zero, 4);
  testsup::spit(p, bytes);
  CHECK(nifti::read_volume(p).volume.data[0] == 5.0);
}

TEST_CASE("gzip detection is by content, not suffix") {
  const auto dir = testsup::scratch_dir("nifti_gz");
  Rng rng(5);
  auto v = testsup::random_volume({6, 6, 6}, rng);
  for (auto& x : v.data) x = static_cast<double>(static_cast<float>(x));

  const auto plain = dir / "t.nii";
  const auto gz = dir / "t2.nii.gz";
  nifti::write_volume(v, plain, nifti::DT_FLOAT32);
  nifti::write_volume(v, gz, nifti::DT_FLOAT32);

  // gzipped bytes behind a bare .nii suffix decode identically
  const auto masquerade = dir / "masquerade.nii";
  testsup::spit(masquerade, testsup::slurp(gz));
  const auto a = nifti::read_volume(plain);
  const auto b = nifti::read_volume(masquerade);
  REQUIRE(a.volume.data == b.volume.data);
}

TEST_CASE("masks round-trip exactly as uint8") {
  const auto dir = testsup::scratch_dir("nifti_mask");
  Rng rng(6);
  const auto m = testsup::random_mask({9, 7, 5}, rng, 0.3);
  const auto p = dir / "m.nii.gz";
  nifti::write_mask(m, p);
  const auto r = nifti::read_mask(p);
  CHECK(r.mask.data == m.data);
  CHECK(r.mask.shape == m.shape);
}

TEST_CASE("write rejects values the datatype cannot represent") {
  const auto dir = testsup::scratch_dir("nifti_overflow");
  SECTION("NaN in a float volume") {
    Volume3 v = make_volume({2, 2, 2});
    v.data[3] = std::numeric_limits<double>::quiet_NaN();
    try {
      nifti::write_volume(v, dir / "nan.nii", nifti::DT_FLOAT32);
      FAIL("expected ValueOverflow");
    } catch (const error& e) {
      CHECK(e.code() == errc::value_overflow);
    }
  }
  SECTION("mask label beyond uint8 is impossible, but int16 overflow is not") {
    Volume3 v = make_volume({1, 1, 1});
    v.data[0] = 70000.0;
    try {
      nifti::write_volume(v, dir / "of.nii", nifti::DT_INT16);
      FAIL("expected ValueOverflow");
    } catch (const error& e) {
      CHECK(e.code() == errc::value_overflow);
    }
  }
  SECTION("non-integral value for an integer datatype") {
    Volume3 v = make_volume({1, 1, 1});
    v.data[0] = 1.5;
    CHECK_THROWS_AS(nifti::write_volume(v, dir / "frac.nii", nifti::DT_INT32), error);
  }
}

TEST_CASE("uncompressed file size is 352 + 4*nx*ny*nz for float32") {
  const auto dir = testsup::scratch_dir("nifti_size");
  // the cohort's median grid
  const Shape3 shape{123, 512, 511};
  Volume3 v = make_volume(shape, {1.2, 0.5, 0.5});
  const auto p = dir / "big.nii";
  nifti::write_volume(v, p, nifti::DT_FLOAT32);
  const std::uintmax_t expected = 352 + 4ull * 123 * 512 * 511;
  CHECK(fs::file_size(p) == expected);
  fs::remove(p);
}

TEST_CASE("truncated payload is DataTruncated") {
  const auto dir = testsup::scratch_dir("nifti_trunc");
  Rng rng(7);
  const auto v = testsup::random_volume({8, 8, 8}, rng);
  const auto p = dir / "t.nii";
  nifti::write_volume(v, p, nifti::DT_FLOAT64);
  auto bytes = testsup::slurp(p);
  bytes.resize(bytes.size() - 100);
  testsup::spit(p, bytes);
  try {
    nifti::read_volume(p);
    FAIL("expected DataTruncated");
  } catch (const error& e) {
    CHECK(e.code() == errc::data_truncated);
  }
}

TEST_CASE("round trip across all supported datatypes, including swapped and gzipped variants") {
  const auto dir = testsup::scratch_dir("nifti_all_dt");
  Rng rng(8);
  const std::int16_t codes[] = {nifti::DT_UINT8, nifti::DT_INT16, nifti::DT_INT32,
                                nifti::DT_FLOAT32, nifti::DT_FLOAT64};
  for (const auto code : codes) {
    Volume3 v = make_volume({6, 5, 4}, {1.0, 2.0, 0.5});
    for (auto& x : v.data) {
      if (code == nifti::DT_UINT8)
        x = static_cast<double>(rng.uniform_int(0, 255));
      else if (code == nifti::DT_INT16)
        x = static_cast<double>(rng.uniform_int(-32768, 32767));
      else if (code == nifti::DT_INT32)
        x = static_cast<double>(rng.uniform_int(-1000000, 1000000));
      else if (code == nifti::DT_FLOAT32)
        x = static_cast<double>(static_cast<float>(rng.uniform(-1e4, 1e4)));
      else
        x = rng.uniform(-1e8, 1e8);
    }
    const auto plain = dir / ("dt" + std::to_string(code) + ".nii");
    nifti::write_volume(v, plain, code);
    CHECK(nifti::read_volume(plain).volume.data == v.data);

    const auto gz = dir / ("dt" + std::to_string(code) + ".nii.gz");
    nifti::write_volume(v, gz, code);
    CHECK(nifti::read_volume(gz).volume.data == v.data);

    auto swapped_bytes = testsup::slurp(plain);
    testsup::byteswap_nifti_buffer(swapped_bytes, nifti::detail::datatype_size(code));
    const auto swp = dir / ("dt" + std::to_string(code) + "_swapped.nii");
    testsup::spit(swp, swapped_bytes);
    const auto r = nifti::read_volume(swp);
    CHECK(r.header.byte_swapped);
    CHECK(r.volume.data == v.data);
  }
}

TEST_CASE("affine priority: sform, then qform, then pixdim diagonal") {
  const auto dir = testsup::scratch_dir("nifti_affine");
  Rng rng(10);
  auto v = testsup::random_volume({4, 4, 4}, rng, 0, 1, {1.5, 2.0, 2.5});
  for (auto& x : v.data) x = static_cast<double>(static_cast<float>(x));
  const auto p = dir / "a.nii";
  nifti::write_volume(v, p, nifti::DT_FLOAT32);

  SECTION("writer emits sform, reader honors it") {
    const auto r = nifti::read_volume(p);
    CHECK(r.header.sform_code == 1);
    CHECK(r.volume.affine[0][0] == Catch::Approx(1.5));
    CHECK(r.volume.affine[1][1] == Catch::Approx(2.0));
    CHECK(r.volume.affine[2][2] == Catch::Approx(2.5));
  }
  SECTION("identity quaternion qform scales by spacing and offsets") {
    auto bytes = testsup::slurp(p);
    const std::int16_t sform0 = 0, qform1 = 1;
    std::memcpy(bytes.data() + 254, &sform0, 2);
    std::memcpy(bytes.data() + 252, &qform1, 2);
    const float qoff[3] = {10.0f, -5.0f, 2.0f};
    std::memcpy(bytes.data() + 268, &qoff[0], 4);
    std::memcpy(bytes.data() + 272, &qoff[1], 4);
    std::memcpy(bytes.data() + 276, &qoff[2], 4);
    testsup::spit(p, bytes);
    const auto r = nifti::read_volume(p);
    CHECK(r.volume.affine[0][0] == Catch::Approx(1.5));
    CHECK(r.volume.affine[1][1] == Catch::Approx(2.0));
    CHECK(r.volume.affine[2][2] == Catch::Approx(2.5));
    CHECK(r.volume.affine[0][3] == Catch::Approx(10.0));
    CHECK(r.volume.affine[1][3] == Catch::Approx(-5.0));
    CHECK(r.volume.affine[0][1] == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("neither code set falls back to the pixdim diagonal") {
    auto bytes = testsup::slurp(p);
    const std::int16_t zero = 0;
    std::memcpy(bytes.data() + 252, &zero, 2);
    std::memcpy(bytes.data() + 254, &zero, 2);
    testsup::spit(p, bytes);
    const auto r = nifti::read_volume(p);
    CHECK(r.volume.affine[0][0] == Catch::Approx(1.5));
    CHECK(r.volume.affine[2][3] == 0.0);
  }
}

TEST_CASE("header extensions are skipped with the flag set") {
  const auto dir = testsup::scratch_dir("nifti_ext");
  Rng rng(9);
  auto v = testsup::random_volume({5, 5, 5}, rng);
  for (auto& x : v.data) x = static_cast<double>(static_cast<float>(x));
  const auto p = dir / "e.nii";
  nifti::write_volume(v, p, nifti::DT_FLOAT32);
  auto bytes = testsup::slurp(p);

  // splice a 16-byte extension between the extender and the payload
  std::vector<std::uint8_t> ext(16, 0);
  const std::int32_t esize = 16, ecode = 4;
  std::memcpy(ext.data(), &esize, 4);
  std::memcpy(ext.data() + 4, &ecode, 4);
  std::vector<std::uint8_t> spliced(bytes.begin(), bytes.begin() + 352);
  spliced[348] = 1;
  spliced.insert(spliced.end(), ext.begin(), ext.end());
  spliced.insert(spliced.end(), bytes.begin() + 352, bytes.end());
  const float vox_offset = 368.0f;
  std::memcpy(spliced.data() + 108, &vox_offset, 4);
  testsup::spit(p, spliced);

  const auto r = nifti::read_volume(p);
  CHECK(r.header.extensions_skipped);
  CHECK(r.volume.data == v.data);
}

TEST_CASE("writer requires a .nii or .nii.gz suffix") {
  const auto dir = testsup::scratch_dir("nifti_suffix");
  Volume3 v = make_volume({2, 2, 2});
  CHECK_THROWS_AS(nifti::write_volume(v, dir / "x.img"), error);
}
