#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "toah/io.hpp"

using namespace toah;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::path(TOAH_WORK_DIR) / "io" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const GridSpec kGrid{6, 5, 4, 125e-6, 125e-6, 100e-6, 2e6};

// Signed volume of a closed triangle mesh by the divergence theorem.
double stl_volume(const std::string& b) {
  std::uint32_t n;
  std::memcpy(&n, b.data() + 80, 4);
  double v = 0;
  for (std::uint32_t t = 0; t < n; ++t) {
    float p[9];
    std::memcpy(p, b.data() + 84 + t * 50 + 12, 36);
    v += (p[0] * (p[4] * p[8] - p[5] * p[7]) - p[1] * (p[3] * p[8] - p[5] * p[6]) +
          p[2] * (p[3] * p[7] - p[4] * p[6])) / 6.0;
  }
  return v;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("medium round trip") {
  const auto d = scratch("medium");
  auto m = make_homogeneous(kGrid, MaterialProperties::water());
  m.c = testing::random_volume(6, 5, 4, 1, 1400, 2800);
  m.att = testing::random_volume(6, 5, 4, 2, 0, 10);
  write_medium(d / "m64.raw", m, "abc", Precision::f64);
  const auto back = read_medium(d / "m64.raw");
  CHECK(back.grid == m.grid);
  CHECK(back.c == m.c);
  CHECK(back.att == m.att);
  CHECK(read_header(d / "m64.json").config_hash == "abc");
  CHECK(fs::file_size(d / "m64.raw") == 3 * 120 * 8);

  write_medium(d / "m32.raw", m, "abc", Precision::f32);
  const auto b32 = read_medium(d / "m32.raw");
  CHECK(fs::file_size(d / "m32.raw") == 3 * 120 * 4);
  for (std::size_t n = 0; n < m.c.size(); ++n)
    CHECK(b32.c[n] == doctest::Approx(m.c[n]).epsilon(1e-7));
}

TEST_CASE("field round trip") {
  const auto d = scratch("field");
  ComplexField f{kGrid, testing::random_complex(6, 5, 4, 3)};
  write_field(d / "f.raw", f, "h", Precision::f64);
  const auto back = read_field(d / "f.json");
  CHECK(back.values == f.values);
  const auto h = read_header(d / "f.raw");
  CHECK(h.dtype == "complex128");
  CHECK(h.kind == "field");
  CHECK(h.schema_version == kSchemaVersion);
  write_field(d / "g.raw", f, "h", Precision::f32);
  CHECK(read_header(d / "g.raw").dtype == "complex64");
}

TEST_CASE("malformed inputs are rejected") {
  const auto d = scratch("bad");
  ComplexField f{kGrid, testing::random_complex(6, 5, 4, 4)};
  write_field(d / "f.raw", f, "h", Precision::f64);
  fs::resize_file(d / "f.raw", 100);
  CHECK_THROWS(read_field(d / "f.raw"));
  write_field(d / "f.raw", f, "h", Precision::f64);
  auto text = read_text(d / "f.json");
  text.replace(text.find("\"schema_version\": 1"), 19, "\"schema_version\": 9");
  write_text(d / "f.json", text);
  CHECK_THROWS(read_field(d / "f.raw"));
  write_text(d / "f.json", "{ not json");
  CHECK_THROWS(read_field(d / "f.raw"));
  CHECK_THROWS(read_field(d / "missing.raw"));
  write_field(d / "f.raw", f, "h", Precision::f64);
  CHECK_THROWS(read_medium(d / "f.raw"));
}

TEST_CASE("maps, lenses and HU volumes") {
  const auto d = scratch("maps");
  const auto theta = testing::random_map(6, 5, 5);
  write_map(d / "theta.raw", theta, kGrid, "theta", "", Precision::f64);
  CHECK(read_map(d / "theta.raw") == theta);

  const auto lens = lens_from_thickness(testing::random_map(6, 5, 6, 0, 4), 4);
  write_lens(d / "lens.raw", lens, kGrid, "", Precision::f32);
  const auto back = read_lens(d / "lens.raw");
  CHECK(back.occupancy == lens.occupancy);
  for (std::size_t n = 0; n < lens.thickness.size(); ++n)
    CHECK(back.thickness[n] == solid_count(lens.thickness[n], 4));
  CHECK_THROWS(read_lens(d / "theta.raw"));

  Array3<std::int16_t> hu(6, 5, 4);
  for (std::size_t n = 0; n < hu.size(); ++n) hu[n] = static_cast<std::int16_t>(n * 37 - 1000);
  write_hu_volume(d / "ct.raw", kGrid, hu, "");
  CHECK(read_hu_volume(d / "ct.raw") == hu);
}

TEST_CASE("matrix CSV") {
  const auto d = scratch("csv");
  const auto m = testing::random_map(4, 3, 7);
  write_matrix_csv(d / "m.csv", m);
  CHECK(read_matrix_csv(d / "m.csv") == m);
  const auto text = read_text(d / "m.csv");
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  write_text(d / "ragged.csv", "1,2\n3\n");
  CHECK_THROWS(read_matrix_csv(d / "ragged.csv"));
  write_text(d / "nan.csv", "1,x\n");
  CHECK_THROWS(read_matrix_csv(d / "nan.csv"));
}

TEST_CASE("16-bit PGM") {
  const auto d = scratch("pgm");
  Array2<double> m(3, 2);
  m(0, 0) = 0.0;
  m(1, 0) = 1.0;
  m(2, 0) = 0.5;
  m(0, 1) = 2.0;  // clamped
  write_pgm16(d / "m.pgm", m, 0.0, 1.0);
  const auto b = bytes(d / "m.pgm");
  const std::string head = "P5\n3 2\n65535\n";
  REQUIRE(b.size() == head.size() + 12);
  CHECK(b.substr(0, head.size()) == head);
  auto px = [&](std::size_t n) {
    return (static_cast<unsigned char>(b[head.size() + 2 * n]) << 8) |
           static_cast<unsigned char>(b[head.size() + 2 * n + 1]);
  };
  CHECK(px(0) == 0);
  CHECK(px(1) == 65535);
  CHECK(px(2) == 32768);
  CHECK(px(3) == 65535);
}

TEST_CASE("heightmap STL") {
  const auto d = scratch("stl");
  Array2<double> one(1, 1, 1e-3);
  CHECK(write_heightmap_stl(d / "one.stl", one, 125e-6, 125e-6) == 12);
  const auto b = bytes(d / "one.stl");
  CHECK(b.size() == 84 + 12 * 50);
  CHECK(stl_volume(b) == doctest::Approx(0.125 * 0.125 * 1.0).epsilon(1e-5));

  const auto h = testing::random_map(7, 6, 8, 0.25e-3, 1.9e-3);
  auto hh = h;
  hh(3, 3) = 0.0;  // hole
  const auto tris = write_heightmap_stl(d / "lens.stl", hh, 125e-6, 125e-6);
  const auto lb = bytes(d / "lens.stl");
  CHECK(lb.size() == 84 + tris * 50);
  double expect = 0;
  for (double v : hh.flat()) expect += v * 1e3 * 0.125 * 0.125;
  CHECK(stl_volume(lb) == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("loss and report exports") {
  const auto d = scratch("reports");
  LossReport r;
  r.record({0.5, -1, 0.2});
  r.record({0.25, -2, 0.1});
  write_loss_csv(d / "loss.csv", r);
  const auto text = read_text(d / "loss.csv");
  CHECK(text.rfind("iteration,total,acc,energy,balance\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);

  FocalReport rep;
  rep.foci.resize(3);
  rep.n_components = 3;
  rep.uniformity = 0.5;
  write_report_csv(d / "report.csv", rep);
  const auto csv = read_text(d / "report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  const auto j = report_json(rep);
  CHECK(j.find("\"n_components\": 3") != std::string::npos);
}

TEST_CASE("FNV-1a reference vectors") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

}  // TEST_SUITE
