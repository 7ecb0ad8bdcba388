// Command-line front end: design, evaluate, sweep, backproject, gradcheck.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "toah/analysis.hpp"
#include "toah/baselines.hpp"
#include "toah/config.hpp"
#include "toah/errors.hpp"
#include "toah/io.hpp"
#include "toah/optim.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace toah;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string precision = "f32";

  Precision dtype() const { return precision == "f64" ? Precision::f64 : Precision::f32; }
};

RunConfig load(const Common& c) {
  if (c.config.empty()) throw ConfigError("--config is required");
  auto cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

fs::path out_dir(const Common& c, const std::optional<RunConfig>& cfg) {
  if (!c.out.empty()) return c.out;
  if (cfg) return cfg->output_dir;
  return "out";
}

void check_grid(const GridSpec& a, const GridSpec& b, const std::string& what) {
  auto close = [](double x, double y) { return std::abs(x - y) <= 1e-9 * std::max(std::abs(x), std::abs(y)); };
  if (a.nx != b.nx || a.ny != b.ny || a.nz != b.nz || !close(a.dx, b.dx) || !close(a.dy, b.dy) ||
      !close(a.dz, b.dz) || !close(a.frequency, b.frequency))
    throw ConfigError("header mismatch: " + what);
}

json parse(const std::string& s) { return json::parse(s); }

Array2<double> lens_height(const LensVolume& lens, double dz) {
  Array2<double> h(lens.occupancy.nx(), lens.occupancy.ny());
  for (std::size_t k = 0; k < lens.depth(); ++k)
    for (std::size_t j = 0; j < h.ny(); ++j)
      for (std::size_t i = 0; i < h.nx(); ++i) h(i, j) += lens.occupancy(i, j, k) >= 0.5 ? dz : 0.0;
  return h;
}

void write_lens_exports(const fs::path& dir, const LensVolume& lens, const GridSpec& grid,
                        const std::string& hash, Precision p) {
  write_lens(dir / "lens.raw", lens, grid, hash, p);
  const auto h = lens_height(lens, grid.dz);
  write_matrix_csv(dir / "lens_thickness.csv", h);
  write_pgm16(dir / "lens_thickness.pgm", h, 0.0, static_cast<double>(lens.depth()) * grid.dz);
  write_heightmap_stl(dir / "lens.stl", h, grid.dx, grid.dy);
}

void write_phase_exports(const fs::path& dir, const PhaseMap& phi, const GridSpec& grid,
                         const std::string& hash, Precision p) {
  write_matrix_csv(dir / "phase.csv", phi.phi);
  write_pgm16(dir / "phase.pgm", phi.phi, 0.0, kTwoPi);
  write_map(dir / "phase.raw", phi.phi, grid, "phase", hash, p);
}

json run_thermal(const fs::path& dir, const RunConfig& cfg, const ComplexField& field,
                 const AcousticMedium& medium, const std::string& hash, Precision p) {
  const auto& tc = *cfg.thermal;
  const auto target = cfg.build_target();
  const auto norm = normalize_peak(field, target.omega, tc.reference_pressure);
  const auto th = bioheat_simulate(norm, medium, tc);
  VolumeHeader h;
  h.nx = medium.grid.nx;
  h.ny = medium.grid.ny;
  h.nz = medium.grid.nz;
  h.dx = medium.grid.dx;
  h.dy = medium.grid.dy;
  h.dz = medium.grid.dz;
  h.frequency = medium.grid.frequency;
  h.kind = "thermal";
  h.config_hash = hash;
  h.fields = {"peak_rise_c", "final_rise_c"};
  write_real_volume(dir / "thermal.raw", h, {&th.peak_rise, &th.final_rise}, p);
  double peak = 0, bone_peak = 0;
  for (double v : th.peak_rise.flat()) peak = std::max(peak, v);
  for (auto v : bone_voxels(medium, tc)) bone_peak = std::max(bone_peak, th.peak_rise[v]);
  json s = {{"peak_rise_c", peak},
            {"bone_peak_rise_c", bone_peak},
            {"dt_heat_s", th.dt_heat},
            {"dt_cool_s", th.dt_cool},
            {"steps", th.steps},
            {"reference_pressure_pa", tc.reference_pressure},
            {"schema_version", kSchemaVersion},
            {"config_hash", hash}};
  write_text(dir / "thermal.json", s.dump(2) + "\n");
  return s;
}

int cmd_design(const Common& c) {
  const auto cfg = load(c);
  const fs::path dir = out_dir(c, cfg);
  fs::create_directories(dir);
  write_text(dir / "config.resolved.json", cfg.resolved_json());
  const auto hash = cfg.hash();
  const auto p = c.dtype();
  const auto src = cfg.build_source();
  const auto base = cfg.build_medium();
  const auto target = cfg.build_target();
  for (const auto& w : cfg.grid.validate()) std::cerr << "warning: " << w << "\n";

  ComplexField field_opt;
  Fabrication fab;
  json summary = {{"method", method_name(cfg.method)}, {"config_hash", hash}, {"seed", cfg.seed}};

  if (cfg.method == Method::toah) {
    const auto problem = cfg.build_problem();
    const auto theta0 = random_theta(cfg.grid.nx, cfg.grid.ny, cfg.seed);
    CheckpointFn cp = [&](std::size_t it, const Array2<double>& theta) {
      char name[64];
      std::snprintf(name, sizeof name, "theta_iter%05zu.raw", it);
      write_map(dir / "checkpoints" / name, theta, cfg.grid, "theta", hash, p);
    };
    auto res = optimize_toah(problem, theta0, cfg.optim, cfg.fabrication.cutoff, cp);
    write_map(dir / "theta.raw", res.design.theta, cfg.grid, "theta", hash, p);
    write_loss_csv(dir / "loss_history.csv", res.report);
    write_lens(dir / "lens_soft.raw", res.soft_lens, cfg.grid, hash, p);
    field_opt = std::move(res.field);
    fab = fabricate_lens(res.soft_lens, src, base, cfg.fabrication);
    summary["iterations"] = res.report.size();
    summary["loss_initial"] = res.report.size() ? res.report.total.front() : res.final_total;
    summary["loss_final"] = res.final_total;
  } else {
    PhaseMap phase;
    if (cfg.method == Method::poah) {
      OptimConfig oc = cfg.optim;
      oc.learning_rate = cfg.poah_learning_rate;
      auto res = optimize_poah(src, base, target, oc, cfg.solver, cfg.optim.lambda_energy,
                               cfg.optim.lambda_balance, Array2<double>(cfg.grid.nx, cfg.grid.ny));
      write_loss_csv(dir / "loss_history.csv", res.report);
      phase = std::move(res.phase);
      field_opt = std::move(res.field);
      summary["iterations"] = res.report.size();
      if (res.report.size()) {
        summary["loss_initial"] = res.report.total.front();
        summary["loss_final"] = res.report.total.back();
      }
    } else {
      phase = time_reversal(src, base, cfg.focus_voxels(), cfg.solver);
      field_opt = propagate(apply_phase_delays(src, phase.phi), base, cfg.solver).field;
    }
    write_phase_exports(dir, phase, cfg.grid, hash, p);
    fab = fabricate_phase(phase, src, base, cfg.fabrication);
  }

  write_lens_exports(dir, fab.lens, cfg.grid, hash, p);
  write_field(dir / "field_opt.raw", field_opt, hash, p);
  write_field(dir / "field_fab.raw", fab.field, hash, p);
  write_medium(dir / "medium_fab.raw", fab.medium, hash, p);

  auto report = focal_report(fab.field, cfg.focus_voxels());
  report.psnr_cross_domain = cross_domain_psnr(field_opt, fab.field);
  write_report_csv(dir / "report.csv", report);
  auto rj = parse(report_json(report));
  for (auto it = summary.begin(); it != summary.end(); ++it) rj[it.key()] = it.value();
  if (cfg.thermal) rj["thermal"] = run_thermal(dir, cfg, fab.field, fab.medium, hash, p);
  write_text(dir / "report.json", rj.dump(2) + "\n");

  std::printf("design %s: %zu component(s), psnr %.2f dB, uniformity %.3f -> %s\n",
              method_name(cfg.method), report.n_components, report.psnr_cross_domain,
              report.uniformity, dir.string().c_str());
  return 0;
}

struct EvaluateArgs {
  std::string field, reference, lens;
};

int cmd_evaluate(const Common& c, const EvaluateArgs& a) {
  std::optional<RunConfig> cfg;
  if (!c.config.empty()) cfg = load(c);
  const fs::path dir = out_dir(c, cfg);
  const std::string hash = cfg ? cfg->hash() : "";
  const auto p = c.dtype();

  ComplexField field;
  std::optional<AcousticMedium> medium;
  if (!a.lens.empty()) {
    if (!cfg) throw ConfigError("--lens needs --config for the medium and source");
    const auto lens = read_lens(a.lens);
    if (lens.occupancy.nx() != cfg->grid.nx || lens.occupancy.ny() != cfg->grid.ny)
      throw ConfigError("header mismatch: lens and config grid differ");
    medium = embed_lens(cfg->build_medium(), lens, cfg->lens_material, cfg->z_offset);
    field = propagate(source_plane(cfg->build_source()), *medium, cfg->solver).field;
    write_field(dir / "field_eval.raw", field, hash, p);
  } else if (!a.field.empty()) {
    field = read_field(a.field);
    if (cfg) {
      check_grid(field.grid, cfg->grid, a.field + " vs config grid");
      medium = cfg->build_medium();
    }
  } else {
    throw ConfigError("evaluate needs --field or --lens");
  }

  std::vector<std::array<std::size_t, 3>> seeds;
  if (cfg) {
    seeds = cfg->focus_voxels();
  } else {
    const auto amp = amplitude(field.values);
    std::size_t best = 0;
    for (std::size_t n = 0; n < amp.size(); ++n)
      if (amp[n] > amp[best]) best = n;
    seeds.push_back({best % field.grid.nx, (best / field.grid.nx) % field.grid.ny,
                     best / (field.grid.nx * field.grid.ny)});
  }
  auto report = focal_report(field, seeds);
  if (!a.reference.empty()) {
    const auto ref = read_field(a.reference);
    check_grid(ref.grid, field.grid, a.reference + " vs evaluated field");
    report.psnr_cross_domain = cross_domain_psnr(ref, field);
  }
  write_report_csv(dir / "report.csv", report);
  auto rj = parse(report_json(report));
  rj["config_hash"] = hash;
  if (cfg && cfg->thermal && medium) rj["thermal"] = run_thermal(dir, *cfg, field, *medium, hash, p);
  write_text(dir / "report.json", rj.dump(2) + "\n");
  std::printf("evaluate: %zu component(s), psnr %.2f dB -> %s\n", report.n_components,
              report.psnr_cross_domain, dir.string().c_str());
  return 0;
}

struct SweepArgs {
  std::string lens, axis = "material";
  double sigma_um = 50.0;
  std::size_t n = 50;
};

int cmd_sweep(const Common& c, const SweepArgs& a) {
  const auto cfg = load(c);
  const fs::path dir = out_dir(c, cfg);
  if (a.lens.empty()) throw ConfigError("sweep needs --lens (the base design)");
  const auto lens = read_lens(a.lens);
  if (lens.occupancy.nx() != cfg.grid.nx || lens.occupancy.ny() != cfg.grid.ny)
    throw ConfigError("header mismatch: lens and config grid differ");
  const auto src = cfg.build_source();
  const auto base = cfg.build_medium();
  const auto seeds = cfg.focus_voxels();
  const auto hash = cfg.hash();

  std::vector<json> rows;
  if (a.axis == "material") {
    const auto cases = sweep_material(lens, src, base, resin_property_cases(), cfg.z_offset,
                                      cfg.solver, seeds, c.jobs);
    for (std::size_t i = 0; i < cases.size(); ++i)
      rows.push_back({{"case", i + 1},
                      {"c_m_s", cases[i].material.sound_speed},
                      {"rho_kg_m3", cases[i].material.density},
                      {"report", parse(report_json(cases[i].report))}});
  } else if (a.axis == "perturbation") {
    if (!(a.sigma_um >= 0)) throw ConfigError("--sigma-um must be non-negative");
    const auto plane = source_plane(src);
    std::vector<json> out(a.n);
    parallel_for(a.n, c.jobs, [&](std::size_t i) {
      const auto seed = cfg.seed + i;
      const auto pert = perturb_lens(lens, a.sigma_um * 1e-6, cfg.grid.dz, cfg.design.v_min,
                                     cfg.design.v_max, seed);
      const auto medium = embed_lens(base, pert, cfg.lens_material, cfg.z_offset);
      const auto field = propagate(plane, medium, cfg.solver).field;
      out[i] = {{"case", i + 1}, {"seed", seed}, {"sigma_m", a.sigma_um * 1e-6},
                {"report", parse(report_json(focal_report(field, seeds)))}};
    });
    rows = std::move(out);
  } else {
    throw ConfigError("--axis must be material or perturbation");
  }

  std::ostringstream csv;
  csv.precision(10);
  csv << "case,param,peak_amplitude_max,mean_fwhm_x_m,leakage_ratio,uniformity,n_components\n";
  json manifest = {{"axis", a.axis}, {"config_hash", hash}, {"lens", fs::absolute(a.lens).string()},
                   {"schema_version", kSchemaVersion}, {"cases", json::array()}};
  for (const auto& r : rows) {
    const auto& rep = r["report"];
    double peak = 0, fw = 0;
    for (const auto& f : rep["foci"]) {
      peak = std::max(peak, f["peak_amplitude"].get<double>());
      fw += f["fwhm_x_m"].is_number() ? f["fwhm_x_m"].get<double>() : std::nan("");
    }
    if (!rep["foci"].empty()) fw /= static_cast<double>(rep["foci"].size());
    const double param = r.contains("c_m_s") ? r["c_m_s"].get<double>() : r["seed"].get<double>();
    auto num = [](const json& v) { return v.is_number() ? v.get<double>() : std::nan(""); };
    csv << r["case"].get<std::size_t>() << ',' << param << ',' << peak << ',' << fw << ','
        << num(rep["leakage_ratio"]) << ',' << num(rep["uniformity"]) << ','
        << rep["n_components"].get<std::size_t>() << '\n';
    char name[32];
    std::snprintf(name, sizeof name, "case_%03zu.json", r["case"].get<std::size_t>());
    write_text(dir / "cases" / name, r.dump(2) + "\n");
    manifest["cases"].push_back(std::string("cases/") + name);
  }
  write_text(dir / "sweep.csv", csv.str());
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  std::printf("sweep %s: %zu case(s) -> %s\n", a.axis.c_str(), rows.size(), dir.string().c_str());
  return 0;
}

struct BackprojectArgs {
  std::string plane, field;
  long slice = -1;
  std::string distances_mm;
};

std::vector<double> parse_distances(const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  // "a,b,c" or "start:stop:step" (stop inclusive), millimetres.
  if (text.find(':') != std::string::npos) {
    double a, b, s;
    char c1, c2;
    std::istringstream in(text);
    if (!(in >> a >> c1 >> b >> c2 >> s) || c1 != ':' || c2 != ':' || !(s != 0))
      throw ConfigError("--distances-mm: expected start:stop:step");
    const long n = std::lround(std::floor((b - a) / s + 1e-9)) + 1;
    for (long i = 0; i < n; ++i) out.push_back((a + static_cast<double>(i) * s) * 1e-3);
    return out;
  }
  std::istringstream in(text);
  for (std::string tok; std::getline(in, tok, ',');) {
    try {
      out.push_back(std::stod(tok) * 1e-3);
    } catch (const std::exception&) {
      throw ConfigError("--distances-mm: bad number '" + tok + "'");
    }
  }
  return out;
}

int cmd_backproject(const Common& c, const BackprojectArgs& a) {
  const fs::path dir = c.out.empty() ? fs::path("out") : fs::path(c.out);
  ComplexField plane;
  std::string hash;
  try {
    if (!a.plane.empty()) {
      VolumeHeader h;
      auto v = read_complex_volume(a.plane, &h);
      if (h.nz != 1) throw ConfigError(a.plane + ": plane files hold a single slice");
      plane = {h.grid(), std::move(v)};
      hash = h.config_hash;
    } else if (!a.field.empty()) {
      VolumeHeader h;
      auto v = read_complex_volume(a.field, &h);
      if (a.slice < 0 || static_cast<std::size_t>(a.slice) >= h.nz)
        throw ConfigError("--slice must index a slice of " + a.field);
      GridSpec g = h.grid();
      g.nz = 1;
      plane = {g, Array3<Complex>(h.nx, h.ny, 1)};
      const auto s = v.slice(static_cast<std::size_t>(a.slice));
      std::copy(s.begin(), s.end(), plane.values.flat().begin());
      hash = h.config_hash;
    } else {
      throw ConfigError("backproject needs --plane or --field with --slice");
    }
  } catch (const std::runtime_error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) throw;
    throw ConfigError(std::string("malformed plane file: ") + e.what());
  }
  const auto distances = parse_distances(a.distances_mm);
  if (distances.empty()) throw ConfigError("--distances-mm: at least one distance required");
  GridSpec g = plane.grid;
  double extent = 0;
  for (double d : distances) extent = std::max(extent, std::abs(d));
  g.nz = static_cast<std::size_t>(std::ceil(extent / g.dz - 1e-9)) + 1;
  Array2<Complex> p2(g.nx, g.ny);
  std::copy(plane.values.flat().begin(), plane.values.flat().end(), p2.flat().begin());
  auto vol = backproject(p2, g, distances);
  write_field(dir / "backprojection.raw", vol, hash, c.dtype());
  json d = {{"distances_m", distances}, {"schema_version", kSchemaVersion}};
  write_text(dir / "backprojection_distances.json", d.dump(2) + "\n");
  std::printf("backproject: %zu slice(s) -> %s\n", distances.size(), dir.string().c_str());
  return 0;
}

struct GradcheckArgs {
  std::size_t coords = 32;
  double step = 1e-4;
  double beta = 4.0;
  double tolerance = 0;
};

int cmd_gradcheck(const Common& c, const GradcheckArgs& a) {
  const auto cfg = load(c);
  const fs::path dir = out_dir(c, cfg);
  const auto problem = cfg.build_problem();
  const auto theta = random_theta(cfg.grid.nx, cfg.grid.ny, cfg.seed);
  const auto ev = problem.evaluate(theta, a.beta, true);
  auto fn = [&](std::span<const double> x) {
    Array2<double> t(cfg.grid.nx, cfg.grid.ny);
    std::copy(x.begin(), x.end(), t.flat().begin());
    return problem.evaluate(t, a.beta, false).total;
  };
  const auto r = gradcheck(fn, ev.gradient.flat(), theta.flat(), a.step, a.coords, cfg.seed);
  json j = {{"max_relative_error", r.max_relative_error}, {"coords", r.coords},
            {"finite_difference", r.finite_difference}, {"adjoint", r.adjoint},
            {"step", a.step}, {"beta", a.beta}, {"loss", ev.total},
            {"config_hash", cfg.hash()}, {"schema_version", kSchemaVersion}};
  write_text(dir / "gradcheck.json", j.dump(2) + "\n");
  std::printf("gradcheck: max relative error %.3e over %zu coordinates\n", r.max_relative_error,
              r.coords.size());
  if (a.tolerance > 0 && !(r.max_relative_error <= a.tolerance))
    throw NumericError("gradcheck: error exceeds tolerance");
  return 0;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Run configuration (JSON, comments allowed)");
  app->add_option("--out", c.out, "Output directory (overrides the config)");
  app->add_option("--seed", c.seed, "Random seed (overrides the config)");
  app->add_option("--jobs", c.jobs, "Worker threads for sweeps")->check(CLI::PositiveNumber);
  app->add_option("--precision", c.precision, "Exported array precision")
      ->check(CLI::IsMember({"f32", "f64"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thickness-only acoustic hologram design"};
  app.require_subcommand(1);
  Common common;
  EvaluateArgs ea;
  SweepArgs sa;
  BackprojectArgs ba;
  GradcheckArgs ga;

  auto* design = app.add_subcommand("design", "Optimize a hologram and simulate its fabricated lens");
  add_common(design, common);
  auto* evaluate = app.add_subcommand("evaluate", "Focal metrics, cross-domain PSNR, thermal dose");
  add_common(evaluate, common);
  evaluate->add_option("--field", ea.field, "Complex field file");
  evaluate->add_option("--reference", ea.reference, "Reference field for PSNR");
  evaluate->add_option("--lens", ea.lens, "Lens file to embed and simulate");
  auto* sweep = app.add_subcommand("sweep", "Robustness sweeps over material or perturbation");
  add_common(sweep, common);
  sweep->add_option("--lens", sa.lens, "Base lens file");
  sweep->add_option("--axis", sa.axis, "material or perturbation");
  sweep->add_option("--sigma-um", sa.sigma_um, "Thickness noise standard deviation");
  sweep->add_option("--n", sa.n, "Number of perturbation realizations");
  auto* back = app.add_subcommand("backproject", "Angular-spectrum backprojection of a plane");
  add_common(back, common);
  back->add_option("--plane", ba.plane, "Complex plane file");
  back->add_option("--field", ba.field, "Complex volume to take a plane from");
  back->add_option("--slice", ba.slice, "Slice of --field to use");
  back->add_option("--distances-mm", ba.distances_mm, "a,b,c or start:stop:step");
  auto* grad = app.add_subcommand("gradcheck", "Adjoint gradient vs finite differences");
  add_common(grad, common);
  grad->add_option("--coords", ga.coords, "Number of random coordinates");
  grad->add_option("--step", ga.step, "Central-difference step");
  grad->add_option("--beta", ga.beta, "Voxelization sharpness");
  grad->add_option("--tolerance", ga.tolerance, "Fail (exit 3) above this error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*design) return cmd_design(common);
    if (*evaluate) return cmd_evaluate(common, ea);
    if (*sweep) return cmd_sweep(common, sa);
    if (*back) return cmd_backproject(common, ba);
    if (*grad) return cmd_gradcheck(common, ga);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
