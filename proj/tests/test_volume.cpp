#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "mrnr/errors.hpp"
#include "mrnr/volume.hpp"

using namespace mrnr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mrnr_test_volume";
  fs::create_directories(dir);
  return dir / name;
}

Volume3D random_volume(std::mt19937_64& rng, DType dtype) {
  std::uniform_int_distribution<std::uint32_t> extent(1, 16);
  const Dims d{extent(rng), extent(rng), extent(rng)};
  Eigen::VectorXd v(d.size());
  std::normal_distribution<double> n(0.0, 100.0);
  for (Index i = 0; i < v.size(); ++i) v[i] = dtype == DType::Int32 ? std::round(n(rng)) : n(rng);
  return Volume3D(d, v, Eigen::Vector3d(1.0, 1.5, 2.0), dtype);
}

}  // namespace

TEST_CASE("write then read reproduces a small volume") {
  Eigen::VectorXd v(8);
  v << 1, 2, 3, 4, 5, 6, 7, 8;
  const Volume3D vol({2, 2, 2}, v);
  const auto p = scratch("small.vol");
  write_volume(vol, p);
  const auto back = read_volume(p);
  CHECK(back.dims() == vol.dims());
  CHECK(back.data() == vol.data());
}

TEST_CASE("standard-brain sized header with a full payload is accepted") {
  const Dims d{182, 218, 182};
  const Volume3D vol = Volume3D::zeros(d);
  const auto bytes = encode_volume(vol);
  CHECK(bytes.size() == 44 + std::size_t(d.size()) * 8);
  const auto back = decode_volume(bytes);
  CHECK(back.dims() == d);
}

TEST_CASE("constant-zero volume stores 64 zero values") {
  const auto bytes = encode_volume(Volume3D::zeros({4, 4, 4}));
  REQUIRE(bytes.size() == 44 + 64 * 8);
  CHECK(std::all_of(bytes.begin() + 44, bytes.end(), [](char c) { return c == 0; }));
}

TEST_CASE("header fields are laid out little-endian at fixed offsets") {
  const Volume3D vol({3, 2, 1}, Eigen::VectorXd::LinSpaced(6, 0, 5), Eigen::Vector3d(0.5, 1.0, 2.0));
  const auto b = encode_volume(vol);
  CHECK(std::string(b.begin(), b.begin() + 4) == "MRNR");
  CHECK(std::uint8_t(b[4]) == 1);
  CHECK(std::uint8_t(b[5]) == 0);
  CHECK(std::uint8_t(b[6]) == 1);  // float64
  CHECK(std::uint8_t(b[7]) == 0);
  CHECK(std::uint8_t(b[8]) == 3);
  CHECK(std::uint8_t(b[12]) == 2);
  CHECK(std::uint8_t(b[16]) == 1);
  double sx = 0;
  std::memcpy(&sx, b.data() + 20, 8);
  CHECK(sx == 0.5);
}

TEST_CASE("truncated payload names the data field") {
  auto bytes = encode_volume(Volume3D::zeros({2, 2, 2}));
  bytes.resize(bytes.size() - 8);
  try {
    decode_volume(bytes);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("data") != std::string::npos);
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
}

TEST_CASE("malformed headers name the offending field") {
  const auto good = encode_volume(Volume3D::zeros({2, 2, 2}));
  auto expect_field = [&](std::size_t offset, char value, const std::string& field) {
    auto b = good;
    b[offset] = value;
    try {
      decode_volume(b);
      FAIL("expected a format error for " << field);
    } catch (const FormatError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(field) != std::string::npos, e.what());
    }
  };
  expect_field(0, 'X', "magic");
  expect_field(4, 9, "version");
  expect_field(6, 7, "dtype");
  expect_field(7, 1, "reserved");
  expect_field(8, 0, "nx");
  CHECK_THROWS_AS(decode_volume(std::vector<char>(good.begin(), good.begin() + 10)), FormatError);

  // extents whose product overflows the addressable size
  auto huge = good;
  for (std::size_t i = 8; i < 20; ++i) huge[i] = char(0xFF);
  CHECK_THROWS_AS(decode_volume(huge), FormatError);
}

TEST_CASE("volumes with NaN are rejected before writing") {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(8);
  v[3] = std::numeric_limits<double>::quiet_NaN();
  const Volume3D vol({2, 2, 2}, v);
  CHECK_FALSE(vol.all_finite());
  const auto p = scratch("nan.vol");
  fs::remove(p);
  CHECK_THROWS_AS(write_volume(vol, p), ArgumentError);
  CHECK_FALSE(fs::exists(p));
}

TEST_CASE("read-write round trip is exact and idempotent on random volumes") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const auto vol = random_volume(rng, trial % 2 ? DType::Int32 : DType::Float64);
    const auto p = scratch("rt.vol");
    write_volume(vol, p);
    const auto back = read_volume(p);
    REQUIRE(back == vol);
    const auto p2 = scratch("rt2.vol");
    write_volume(back, p2);
    CHECK(read_file(p) == read_file(p2));
  }
}

TEST_CASE("linearization is a bijection with x fastest") {
  const Dims d{3, 4, 5};
  std::set<Index> seen;
  Index expected = 0;
  for (Index z = 0; z < 5; ++z)
    for (Index y = 0; y < 4; ++y)
      for (Index x = 0; x < 3; ++x) {
        const Index i = d.index(x, y, z);
        CHECK(i == expected++);
        const auto c = d.coords(i);
        CHECK(c[0] == x);
        CHECK(c[1] == y);
        CHECK(c[2] == z);
        seen.insert(i);
      }
  CHECK(Index(seen.size()) == d.size());
}

TEST_CASE("atlas from a label volume") {
  SUBCASE("all zero labels give no regions") {
    const auto a = atlas_from_labels(Volume3D::zeros({2, 2, 2}));
    CHECK(a.region_count() == 0);
  }
  SUBCASE("labels 1 1 2 0") {
    Eigen::VectorXd v(4);
    v << 1, 1, 2, 0;
    const auto a = atlas_from_labels(Volume3D({4, 1, 1}, v));
    REQUIRE(a.region_count() == 2);
    CHECK(a.region(1) == std::vector<Index>{0, 1});
    CHECK(a.region(2) == std::vector<Index>{2});
    CHECK_THROWS_AS(a.region(3), LookupError);
  }
  SUBCASE("non-integer label is a format error") {
    Eigen::VectorXd v(2);
    v << 1, 1.5;
    CHECK_THROWS_AS(atlas_from_labels(Volume3D({2, 1, 1}, v)), FormatError);
  }
  SUBCASE("negative label is a format error") {
    Eigen::VectorXd v(2);
    v << 1, -1;
    CHECK_THROWS_AS(atlas_from_labels(Volume3D({2, 1, 1}, v)), FormatError);
  }
}

TEST_CASE("random atlas matches an exhaustive scan and partitions the labelled voxels") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> label(0, 9);
  for (int trial = 0; trial < 10; ++trial) {
    const Dims d{8, 8, 8};
    Eigen::VectorXd v(d.size());
    for (Index i = 0; i < v.size(); ++i) v[i] = label(rng);
    const auto a = atlas_from_labels(Volume3D(d, v));
    CHECK(a.region_count() == int(v.maxCoeff()));
    std::vector<int> owner(std::size_t(d.size()), 0);
    for (int l = 1; l <= a.region_count(); ++l) {
      std::vector<Index> scan;
      for (Index i = 0; i < d.size(); ++i)
        if (v[i] == l) scan.push_back(i);
      CHECK(a.region(l) == scan);
      for (Index i : a.region(l)) {
        CHECK(owner[std::size_t(i)] == 0);
        owner[std::size_t(i)] = l;
      }
    }
    for (Index i = 0; i < d.size(); ++i) CHECK((owner[std::size_t(i)] != 0) == (v[i] != 0));
  }
}

TEST_CASE("onset table round trip and validation") {
  OnsetSchedule s;
  s.categories.push_back({"faces", {2, 20}, {3, 3}});
  s.categories.push_back({"houses", {10}, {3}});
  const auto p = scratch("onsets.csv");
  write_onsets(s, p);
  const auto text = read_file(p);
  CHECK(text.rfind("category_name,onset_sample,duration_samples\n", 0) == 0);
  const auto back = read_onsets(p).reordered({"faces", "houses"});
  REQUIRE(back.categories.size() == 2);
  CHECK(back.categories[0].onsets == s.categories[0].onsets);
  CHECK(back.categories[1].onsets == s.categories[1].onsets);
  CHECK(back.categories[1].durations == s.categories[1].durations);

  CHECK_NOTHROW(s.validate(30));
  CHECK_THROWS_AS(s.validate(22), ArgumentError);
  OnsetSchedule bad = s;
  bad.categories[0].onsets = {20, 2};
  CHECK_THROWS_AS(bad.validate(30), ArgumentError);
}

TEST_CASE("onset table without the header is rejected") {
  const auto p = scratch("noheader.csv");
  write_file_atomic(p, "faces,1,2\n");
  CHECK_THROWS_AS(read_onsets(p), FormatError);
}
