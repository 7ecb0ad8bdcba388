#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "toah/io.hpp"
#include <json.hpp>

using namespace toah;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::path(TOAH_WORK_DIR) / "cli";

const char* kToah = R"({
  "grid": { "nx": 24, "ny": 24, "nz": 32, "spacing_um": 125, "frequency_mhz": 2 },
  "source": { "aperture_diameter_mm": 2 },
  "target": { "foci_mm": [[0, 0, 2.5]], "radius_mm": 0 },
  "method": "toah",
  "dhla": { "depth": 8, "v_min": 1, "v_max": 7 },
  "optim": { "iterations": 6, "checkpoint_every": 3 },
  "solver": { "reflection_order": 2 },
  "fabrication": { "cutoff_um": 250, "t_min_um": 250, "t_max_um": 875 },
  "thermal": { "heat_ms": 10, "cool_ms": 20, "n_cycles": 1 },
  "seed": 5
})";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  s.replace(pos, from.size(), to);
  return s;
}

fs::path config(const std::string& name, const std::string& text) {
  fs::create_directories(kWork);
  const auto p = kWork / name;
  write_text(p, text);
  return p;
}

struct Run {
  int code;
  std::string err;
};

Run run_toah(const std::string& args) {
  fs::create_directories(kWork);
  const auto err = kWork / "stderr.txt";
  const std::string cmd =
      std::string(TOAH_CLI) + " " + args + " > " + (kWork / "stdout.txt").string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text(err)};
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<fs::path> files_under(const fs::path& d) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(d))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), d));
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t lines(const fs::path& p) {
  const auto t = read_text(p);
  return static_cast<std::size_t>(std::count(t.begin(), t.end(), '\n'));
}

// One shared design run for the commands that consume its outputs.
const fs::path& design_dir() {
  static const fs::path d = [] {
    const auto out = kWork / "design";
    fs::remove_all(out);
    const auto r = run_toah("design --config " + config("toah.cfg", kToah).string() + " --out " + out.string());
    REQUIRE(r.code == 0);
    return out;
  }();
  return d;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("design writes the documented outputs") {
  const auto& d = design_dir();
  for (const char* f : {"config.resolved.json", "theta.raw", "theta.json", "loss_history.csv",
                        "lens_soft.raw", "lens.raw", "lens.json", "lens_thickness.csv",
                        "lens_thickness.pgm", "lens.stl", "field_opt.raw", "field_fab.raw",
                        "medium_fab.raw", "report.csv", "report.json", "thermal.raw",
                        "thermal.json", "checkpoints/theta_iter00003.raw",
                        "checkpoints/theta_iter00006.raw"})
    CHECK_MESSAGE(fs::exists(d / f), f);
  CHECK(lines(d / "loss_history.csv") == 7);
  const auto rep = nlohmann::json::parse(read_text(d / "report.json"));
  CHECK(rep["method"] == "toah");
  CHECK(rep["iterations"] == 6);
  CHECK(rep.contains("n_components"));
  CHECK(rep["thermal"]["peak_rise_c"].get<double>() > 0);
  CHECK(read_header(d / "field_fab.raw").dtype == "complex64");
  CHECK(read_header(d / "field_fab.raw").config_hash == rep["config_hash"]);
}

TEST_CASE("identical config and seed give bitwise-identical exports") {
  const auto cfg = config("toah.cfg", kToah);
  const auto a = kWork / "rep_a", b = kWork / "rep_b", c = kWork / "rep_c";
  for (const auto& d : {a, b, c}) fs::remove_all(d);
  REQUIRE(run_toah("design --config " + cfg.string() + " --out " + a.string()).code == 0);
  REQUIRE(run_toah("design --config " + cfg.string() + " --out " + b.string()).code == 0);
  REQUIRE(run_toah("design --config " + cfg.string() + " --out " + c.string() + " --seed 6").code == 0);
  const auto fa = files_under(a);
  CHECK(fa == files_under(b));
  for (const auto& f : fa)
    if (f != "config.resolved.json") CHECK_MESSAGE(bytes(a / f) == bytes(b / f), f.string());
  // The snapshots differ only in where they were written.
  auto ja = nlohmann::json::parse(read_text(a / "config.resolved.json"));
  auto jb = nlohmann::json::parse(read_text(b / "config.resolved.json"));
  CHECK(ja["output"] != jb["output"]);
  ja.erase("output");
  jb.erase("output");
  CHECK(ja == jb);
  CHECK(bytes(a / "theta.raw") != bytes(c / "theta.raw"));
}

TEST_CASE("phase baselines") {
  for (const char* method : {"poah", "tr"}) {
    const auto cfg = config(std::string(method) + ".cfg",
                            replace(replace(kToah, "\"toah\"", std::string("\"") + method + "\""),
                                    "\"depth\": 8", "\"depth\": 8, \"z_offset\": 0"));
    const auto out = kWork / method;
    fs::remove_all(out);
    const auto r = run_toah("design --config " + cfg.string() + " --out " + out.string() +
                        " --precision f64");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(out / "phase.csv"));
    CHECK(fs::exists(out / "phase.pgm"));
    CHECK(read_header(out / "field_opt.raw").dtype == "complex128");
    const auto phi = read_matrix_csv(out / "phase.csv");
    for (double v : phi.flat()) {
      CHECK(v >= 0.0);
      CHECK(v < kTwoPi);
    }
  }
}

TEST_CASE("evaluate") {
  const auto& d = design_dir();
  const auto out = kWork / "eval_same";
  auto r = run_toah("evaluate --field " + (d / "field_fab.raw").string() + " --reference " +
                (d / "field_fab.raw").string() + " --out " + out.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(nlohmann::json::parse(read_text(out / "report.json"))["psnr_cross_domain_db"] == 300.0);

  const auto tri = config("tri.cfg", replace(kToah, "[[0, 0, 2.5]]", "[[0, 0, 2.5], [0.5, 0, 2], [-0.5, 0, 2]]"));
  const auto out3 = kWork / "eval_tri";
  r = run_toah("evaluate --config " + tri.string() + " --field " + (d / "field_fab.raw").string() +
           " --out " + out3.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(lines(out3 / "report.csv") == 4);
  CHECK(fs::exists(out3 / "thermal.json"));

  const auto outl = kWork / "eval_lens";
  r = run_toah("evaluate --config " + config("toah.cfg", kToah).string() + " --lens " +
           (d / "lens.raw").string() + " --out " + outl.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(bytes(outl / "field_eval.raw") == bytes(d / "field_fab.raw"));

  const auto wide = config("wide.cfg", replace(kToah, "\"nx\": 24", "\"nx\": 28"));
  r = run_toah("evaluate --config " + wide.string() + " --field " + (d / "field_fab.raw").string() +
           " --out " + (kWork / "eval_bad").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("mismatch") != std::string::npos);
}

TEST_CASE("sweep") {
  const auto& d = design_dir();
  const auto cfg = config("toah.cfg", kToah).string();
  const auto lens = (d / "lens.raw").string();
  const auto zero = kWork / "sweep_zero";
  auto r = run_toah("sweep --config " + cfg + " --lens " + lens + " --axis perturbation --sigma-um 0 --n 3 --out " + zero.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto t = read_text(zero / "sweep.csv");
  std::vector<std::string> rows;
  std::istringstream in(t);
  for (std::string line; std::getline(in, line);) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  auto tail = [](const std::string& s) { return s.substr(s.find(',', s.find(',') + 1)); };
  CHECK(tail(rows[1]) == tail(rows[2]));
  CHECK(tail(rows[1]) == tail(rows[3]));
  CHECK(fs::exists(zero / "cases/case_003.json"));

  const auto none = kWork / "sweep_none";
  r = run_toah("sweep --config " + cfg + " --lens " + lens + " --axis perturbation --n 0 --out " + none.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(lines(none / "sweep.csv") == 1);

  const auto mat = kWork / "sweep_mat";
  r = run_toah("sweep --config " + cfg + " --lens " + lens + " --axis material --jobs 2 --out " + mat.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(lines(mat / "sweep.csv") == 5);

  r = run_toah("sweep --config " + cfg + " --lens " + lens + " --axis colour --out " + mat.string());
  CHECK(r.code == 2);
}

TEST_CASE("backproject") {
  const auto& d = design_dir();
  const auto out = kWork / "bp";
  auto r = run_toah("backproject --field " + (d / "field_opt.raw").string() +
                " --slice 24 --distances-mm 0:1:0.125 --out " + out.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto f = read_field(out / "backprojection.raw");
  CHECK(f.values.nz() == 9);
  // Distance 0 returns the plane less its evanescent part.
  const auto opt = read_field(d / "field_opt.raw");
  double peak = 0, err = 0;
  for (std::size_t n = 0; n < f.values.slice_size(); ++n) {
    peak = std::max(peak, std::abs(opt.values.slice(24)[n]));
    err = std::max(err, std::abs(f.values.slice(0)[n] - opt.values.slice(24)[n]));
  }
  CHECK(err < 1e-2 * peak);

  r = run_toah("backproject --field " + (d / "field_opt.raw").string() + " --slice 24 --distances-mm \"\" --out " + out.string());
  CHECK(r.code == 2);
  write_text(kWork / "junk.raw", "junk");
  write_text(kWork / "junk.json", "{ }");
  r = run_toah("backproject --plane " + (kWork / "junk.raw").string() + " --distances-mm 1 --out " + out.string());
  CHECK(r.code == 2);
  CHECK(r.err.find("malformed") != std::string::npos);
}

TEST_CASE("gradcheck") {
  const auto cfg = config("toah.cfg", kToah).string();
  const auto out = kWork / "gc";
  auto r = run_toah("gradcheck --config " + cfg + " --coords 8 --tolerance 1e-5 --out " + out.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto j = nlohmann::json::parse(read_text(out / "gradcheck.json"));
  CHECK(j["max_relative_error"].get<double>() < 1e-5);
  CHECK(j["coords"].size() == 8);
  r = run_toah("gradcheck --config " + cfg + " --coords 8 --tolerance 1e-300 --out " + out.string());
  CHECK(r.code == 3);
}

TEST_CASE("configuration errors exit with code 2") {
  auto r = run_toah("design --config " + config("notarget.cfg", R"({ "grid": { "nx": 24 } })").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("target: required") != std::string::npos);
  r = run_toah("design --config " + config("unknown.cfg", replace(kToah, "\"seed\": 5", "\"seed\": 5, \"sed\": 1")).string());
  CHECK(r.code == 2);
  CHECK(r.err.find("sed: unknown key") != std::string::npos);
  CHECK(run_toah("design --config " + (kWork / "missing.cfg").string()).code == 2);
  CHECK(run_toah("design --precision f16 --config x").code == 2);
  CHECK(run_toah("").code == 2);
}

}  // TEST_SUITE
