#include "toah/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "toah/errors.hpp"
#include "toah/io.hpp"

namespace toah {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* method_name(Method m) {
  switch (m) {
    case Method::toah: return "toah";
    case Method::poah: return "poah";
    case Method::tr: return "tr";
  }
  return "?";
}

namespace {

struct Unit {
  const char* suffix;
  double scale;
};

constexpr Unit kLength[] = {{"_m", 1.0}, {"_mm", 1e-3}, {"_um", 1e-6}};
constexpr Unit kFrequency[] = {{"_hz", 1.0}, {"_khz", 1e3}, {"_mhz", 1e6}};
constexpr Unit kDuration[] = {{"_s", 1.0}, {"_ms", 1e-3}, {"_us", 1e-6}};

class Diagnostics {
 public:
  Diagnostics(const std::string& text, std::string origin) : text_(text), origin_(std::move(origin)) {}

  [[noreturn]] void fail(const std::string& path, const std::string& message) const {
    std::string where = origin_;
    const auto key = path.substr(path.find_last_of('.') + 1);
    const auto pos = text_.find("\"" + key.substr(0, key.find('[')) + "\"");
    if (pos != std::string::npos)
      where += ":" + std::to_string(std::count(text_.begin(), text_.begin() + pos, '\n') + 1);
    throw ConfigError(where + ": " + path + ": " + message);
  }

 private:
  const std::string& text_;
  std::string origin_;
};

class Section {
 public:
  Section(const json& j, std::string path, const Diagnostics& diag)
      : j_(j), path_(std::move(path)), diag_(diag) {
    if (!j_.is_object()) diag_.fail(path_, "expected an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) diag_.fail(key_path(it.key()), "unknown key");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    diag_.fail(key_path(key), msg);
  }
  const Diagnostics& diag() const { return diag_; }

  const json* get(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }

  double number(const std::string& key, double fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number()) fail(key, "expected a number");
    return v->get<double>();
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number_integer() || v->get<long long>() < 0)
      fail(key, "expected a non-negative integer");
    return v->get<std::size_t>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(key, "expected a string");
    return v->get<std::string>();
  }

  /// Looks up key + one unit suffix; returns the value in SI.
  template <std::size_t N>
  std::optional<json> with_unit(const std::string& key, const Unit (&units)[N], double& scale) {
    std::optional<json> found;
    for (const auto& u : units) {
      const std::string k = key + u.suffix;
      if (const json* v = get(k)) {
        if (found) fail(k, "given with more than one unit");
        found = *v;
        scale = u.scale;
        last_key_ = k;
      }
    }
    return found;
  }

  template <std::size_t N>
  double quantity(const std::string& key, const Unit (&units)[N], double fallback,
                  bool required = false) {
    double scale = 1;
    auto v = with_unit(key, units, scale);
    if (!v) {
      if (required) fail(key, "required (with a unit suffix, e.g. " + key + units[0].suffix + ")");
      return fallback;
    }
    if (!v->is_number()) fail(last_key_, "expected a number");
    return v->template get<double>() * scale;
  }

  template <std::size_t N>
  std::vector<double> quantities(const std::string& key, const Unit (&units)[N],
                                 std::size_t n = 0) {
    double scale = 1;
    auto v = with_unit(key, units, scale);
    if (!v) fail(key, "required (with a unit suffix, e.g. " + key + units[0].suffix + ")");
    if (!v->is_array()) fail(last_key_, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : *v) {
      if (!e.is_number()) fail(last_key_, "expected an array of numbers");
      out.push_back(e.template get<double>() * scale);
    }
    if (n && out.size() != n) fail(last_key_, "expected " + std::to_string(n) + " numbers");
    return out;
  }

  const std::string& last_key() const { return last_key_; }

 private:
  const json& j_;
  std::string path_;
  const Diagnostics& diag_;
  std::set<std::string> used_;
  std::string last_key_;
};

MaterialProperties named_material(const std::string& name) {
  if (name == "water") return MaterialProperties::water();
  if (name == "form_clear") return MaterialProperties::form_clear();
  if (name == "vero_clear") return MaterialProperties::vero_clear();
  if (name == "agilus30") return MaterialProperties::agilus30();
  if (name == "cortical_bone") return MaterialProperties::cortical_bone();
  throw std::invalid_argument("unknown material '" + name + "'");
}

MaterialProperties parse_material(Section& parent, const std::string& key,
                                  const MaterialProperties& fallback) {
  const json* v = parent.get(key);
  if (!v) return fallback;
  if (v->is_string()) {
    try {
      return named_material(v->get<std::string>());
    } catch (const std::invalid_argument& e) {
      parent.fail(key, e.what());
    }
  }
  Section s(*v, parent.key_path(key), parent.diag());
  MaterialProperties m;
  m.sound_speed = s.number("c_m_s", fallback.sound_speed);
  m.density = s.number("rho_kg_m3", fallback.density);
  m.attenuation_coeff = s.number("alpha_db_mhz_cm", fallback.attenuation_coeff);
  m.attenuation_power = s.number("alpha_power", fallback.attenuation_power);
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    parent.fail(key, e.what());
  }
  return m;
}

json material_json(const MaterialProperties& m) {
  return {{"c_m_s", m.sound_speed},
          {"rho_kg_m3", m.density},
          {"alpha_db_mhz_cm", m.attenuation_coeff},
          {"alpha_power", m.attenuation_power}};
}

template <typename F>
void checked(Section& s, const std::string& key, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    s.fail(key, e.what());
  }
}

}  // namespace

RunConfig parse_config(const std::string& text, const fs::path& origin) {
  const Diagnostics diag(text, origin.string());
  json root;
  try {
    root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    const std::size_t pos = std::min<std::size_t>(e.byte, text.size());
    const auto line = std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n') + 1;
    throw ConfigError(origin.string() + ":" + std::to_string(line) + ": malformed JSON: " + e.what());
  }

  RunConfig c;
  Section top(root, "", diag);
  if (!top.has("target")) diag.fail("target", "required");

  if (const json* g = top.get("grid")) {
    Section s(*g, "grid", diag);
    c.grid.nx = s.count("nx", c.grid.nx);
    c.grid.ny = s.count("ny", c.grid.ny);
    c.grid.nz = s.count("nz", c.grid.nz);
    const double spacing = s.quantity("spacing", kLength, 0.0);
    if (spacing > 0) c.grid.dx = c.grid.dy = c.grid.dz = spacing;
    c.grid.dx = s.quantity("dx", kLength, c.grid.dx);
    c.grid.dy = s.quantity("dy", kLength, c.grid.dy);
    c.grid.dz = s.quantity("dz", kLength, c.grid.dz);
    c.grid.frequency = s.quantity("frequency", kFrequency, c.grid.frequency);
    c.grid.c_ref = s.number("c_ref_m_s", c.grid.c_ref);
    checked(s, "nx", [&] { c.grid.validate(); });
  } else {
    c.grid.validate();
  }

  if (const json* v = top.get("source")) {
    Section s(*v, "source", diag);
    c.aperture_diameter = s.quantity("aperture_diameter", kLength, c.aperture_diameter);
    c.source_amplitude = s.number("amplitude_pa", c.source_amplitude);
    if (!(c.aperture_diameter > 0)) s.fail("aperture_diameter", "must be positive");
    if (!(c.source_amplitude > 0)) s.fail("amplitude_pa", "must be positive");
  }

  if (const json* v = top.get("medium")) {
    Section s(*v, "medium", diag);
    const auto type = s.text("type", "homogeneous");
    c.background = parse_material(s, "material", c.background);
    if (type == "homogeneous") {
      c.medium_kind = MediumKind::homogeneous;
    } else if (type == "phantom") {
      c.medium_kind = MediumKind::phantom;
      if (s.has("center_m") || s.has("center_mm") || s.has("center_um")) {
        const auto p = s.quantities("center", kLength, 3);
        c.phantom_center = {p[0], p[1], p[2]};
      }
      c.phantom_inner_radius = s.quantity("inner_radius", kLength, c.phantom_inner_radius);
      c.phantom_thickness = s.quantity("thickness", kLength, c.phantom_thickness);
      c.bone = parse_material(s, "bone", c.bone);
    } else if (type == "hu") {
      c.medium_kind = MediumKind::hu;
      const auto file = s.text("file", "");
      if (file.empty()) s.fail("file", "required for type hu");
      c.hu_file = fs::path(file).is_absolute() ? fs::path(file) : origin.parent_path() / file;
      if (!fs::exists(header_path(c.hu_file))) s.fail("file", "no such file " + header_path(c.hu_file).string());
      if (const json* cal = s.get("calibration")) {
        if (!cal->is_array()) s.fail("calibration", "expected an array of knots");
        HuCalibration hc;
        for (std::size_t n = 0; n < cal->size(); ++n) {
          Section k((*cal)[n], "medium.calibration[" + std::to_string(n) + "]", diag);
          HuKnot knot;
          knot.hu = k.number("hu", 0.0);
          knot.material = parse_material(k, "material", MaterialProperties::water());
          hc.knots.push_back(knot);
        }
        checked(s, "calibration", [&] { hc.validate(); });
        c.hu_calibration = hc;
      }
    } else {
      s.fail("type", "expected homogeneous, phantom or hu");
    }
    if (const json* cone = s.get("cone")) {
      Section k(*cone, "medium.cone", diag);
      ConeSpec cs;
      cs.z_start = k.quantity("z_start", kLength, 0.0, true);
      cs.z_end = k.quantity("z_end", kLength, 0.0, true);
      cs.r_start = k.quantity("r_start", kLength, 0.0, true);
      cs.r_end = k.quantity("r_end", kLength, 0.0, true);
      cs.wall = k.quantity("wall", kLength, 0.0, true);
      c.cone = cs;
    }
  }

  {
    Section s(*top.get("target"), "target", diag);
    double scale = 1;
    auto foci = s.with_unit("foci", kLength, scale);
    if (!foci) s.fail("foci", "required (e.g. foci_mm: [[0, 0, 6]])");
    if (!foci->is_array() || foci->empty()) s.fail(s.last_key(), "expected a non-empty list of [x, y, z]");
    for (const auto& f : *foci) {
      if (!f.is_array() || f.size() != 3 || !f[0].is_number() || !f[1].is_number() || !f[2].is_number())
        s.fail(s.last_key(), "each focus needs three numbers [x, y, z]");
      c.foci.push_back({f[0].get<double>() * scale, f[1].get<double>() * scale, f[2].get<double>() * scale});
    }
    if (s.has("radii_m") || s.has("radii_mm") || s.has("radii_um")) {
      c.radii = s.quantities("radii", kLength, c.foci.size());
    } else {
      c.radii.assign(c.foci.size(), s.quantity("radius", kLength, 0.0));
    }
    for (double r : c.radii)
      if (!(r >= 0)) s.fail("radius", "must be non-negative");
    checked(s, s.last_key(), [&] { for (const auto& f : c.foci) nearest_voxel(c.grid, f); });
  }

  const auto method = top.text("method", "toah");
  if (method == "toah") c.method = Method::toah;
  else if (method == "poah") c.method = Method::poah;
  else if (method == "tr") c.method = Method::tr;
  else top.fail("method", "expected toah, poah or tr");

  if (const json* v = top.get("dhla")) {
    Section s(*v, "dhla", diag);
    c.design.alpha = s.number("alpha", c.design.alpha);
    c.design.v_min = s.number("v_min", c.design.v_min);
    c.design.v_max = s.number("v_max", c.design.v_max);
    c.design.depth = s.count("depth", c.design.depth);
    c.smoothing.kernel_size = static_cast<int>(s.count("kernel_size", c.smoothing.kernel_size));
    c.smoothing.sigma = s.number("sigma", c.smoothing.sigma);
    c.z_offset = s.count("z_offset", c.z_offset);
    c.lens_material = parse_material(s, "material", c.lens_material);
    checked(s, "v_min", [&] {
      DesignField d = c.design;
      d.theta = Array2<double>(1, 1);
      d.validate();
      gaussian_kernel(c.smoothing.kernel_size, c.smoothing.sigma);
    });
    if (c.z_offset + c.design.depth > c.grid.nz) s.fail("z_offset", "lens does not fit in the grid");
  }

  if (const json* v = top.get("optim")) {
    Section s(*v, "optim", diag);
    c.optim.learning_rate = s.number("learning_rate", c.optim.learning_rate);
    c.optim.iterations = s.count("iterations", c.optim.iterations);
    c.optim.lambda_energy = s.number("lambda_energy", c.optim.lambda_energy);
    c.optim.lambda_balance = s.number("lambda_balance", c.optim.lambda_balance);
    c.optim.adam_beta1 = s.number("adam_beta1", c.optim.adam_beta1);
    c.optim.adam_beta2 = s.number("adam_beta2", c.optim.adam_beta2);
    c.optim.adam_epsilon = s.number("adam_epsilon", c.optim.adam_epsilon);
    c.optim.beta_schedule.beta_start = s.number("beta_start", c.optim.beta_schedule.beta_start);
    c.optim.beta_schedule.beta_end = s.number("beta_end", c.optim.beta_schedule.beta_end);
    c.optim.checkpoint_every = s.count("checkpoint_every", c.optim.checkpoint_every);
    c.poah_learning_rate = s.number("poah_learning_rate", c.poah_learning_rate);
    checked(s, "learning_rate", [&] { c.optim.validate(); });
    if (!(c.poah_learning_rate > 0)) s.fail("poah_learning_rate", "must be positive");
  }

  if (const json* v = top.get("solver")) {
    Section s(*v, "solver", diag);
    c.solver.reflection_order = static_cast<int>(s.count("reflection_order", c.solver.reflection_order));
    const auto ev = s.text("evanescent", "decay");
    if (ev == "decay") c.solver.evanescent = EvanescentMode::decay;
    else if (ev == "truncate") c.solver.evanescent = EvanescentMode::truncate;
    else s.fail("evanescent", "expected decay or truncate");
    c.solver.angular_cutoff = s.number("angular_cutoff", c.solver.angular_cutoff);
    checked(s, "reflection_order", [&] { c.solver.validate(); });
  }

  if (const json* v = top.get("fabrication")) {
    Section s(*v, "fabrication", diag);
    c.fabrication.cutoff = s.quantity("cutoff", kLength, c.fabrication.cutoff);
    c.fabrication.t_min = s.quantity("t_min", kLength, c.fabrication.t_min);
    c.fabrication.t_max = s.quantity("t_max", kLength, c.fabrication.t_max);
    if (c.fabrication.cutoff > 0 && c.fabrication.cutoff < c.grid.dx)
      s.fail("cutoff", "must be at least one grid step (or 0 to disable)");
    if (!(c.fabrication.t_min >= 0) || !(c.fabrication.t_max >= c.fabrication.t_min))
      s.fail("t_min", "need 0 <= t_min <= t_max");
  }

  if (const json* v = top.get("thermal")) {
    Section s(*v, "thermal", diag);
    ThermalConfig t;
    t.bone.conductivity = s.number("bone_k_w_m_c", t.bone.conductivity);
    t.bone.specific_heat = s.number("bone_c_j_kg_c", t.bone.specific_heat);
    t.soft.conductivity = s.number("soft_k_w_m_c", t.soft.conductivity);
    t.soft.specific_heat = s.number("soft_c_j_kg_c", t.soft.specific_heat);
    t.bone_density_threshold = s.number("bone_density_threshold_kg_m3", t.bone_density_threshold);
    t.heat_duration = s.quantity("heat", kDuration, t.heat_duration);
    t.cool_duration = s.quantity("cool", kDuration, t.cool_duration);
    t.n_cycles = s.count("n_cycles", t.n_cycles);
    t.dt = s.quantity("dt", kDuration, t.dt);
    t.perfusion_rate = s.number("perfusion_per_s", t.perfusion_rate);
    t.reference_pressure = s.number("reference_pressure_pa", t.reference_pressure);
    checked(s, "n_cycles", [&] { t.validate(); });
    c.thermal = t;
  }

  if (const json* v = top.get("output")) {
    Section s(*v, "output", diag);
    c.output_dir = s.text("dir", c.output_dir.string());
  }
  if (const json* v = top.get("seed")) {
    if (!v->is_number_unsigned()) top.fail("seed", "expected a non-negative integer");
    c.seed = v->get<std::uint64_t>();
  }

  c.fabrication.lens_material = c.lens_material;
  c.fabrication.c0 = c.background.sound_speed;
  c.fabrication.depth = c.design.depth;
  c.fabrication.z_offset = c.z_offset;
  c.fabrication.solver = c.solver;
  if (c.z_offset + c.design.depth > c.grid.nz) top.fail("dhla", "lens does not fit in the grid");
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path);
}

std::string RunConfig::resolved_json() const {
  json j;
  j["grid"] = {{"nx", grid.nx}, {"ny", grid.ny}, {"nz", grid.nz},
               {"dx_m", grid.dx}, {"dy_m", grid.dy}, {"dz_m", grid.dz},
               {"frequency_hz", grid.frequency}, {"c_ref_m_s", grid.c_ref}};
  j["source"] = {{"aperture_diameter_m", aperture_diameter}, {"amplitude_pa", source_amplitude}};
  json m;
  m["material"] = material_json(background);
  switch (medium_kind) {
    case MediumKind::homogeneous: m["type"] = "homogeneous"; break;
    case MediumKind::phantom:
      m["type"] = "phantom";
      m["center_m"] = phantom_center;
      m["inner_radius_m"] = phantom_inner_radius;
      m["thickness_m"] = phantom_thickness;
      m["bone"] = material_json(bone);
      break;
    case MediumKind::hu: {
      m["type"] = "hu";
      m["file"] = fs::absolute(hu_file).string();
      json cal = json::array();
      for (const auto& k : hu_calibration.knots)
        cal.push_back({{"hu", k.hu}, {"material", material_json(k.material)}});
      m["calibration"] = cal;
      break;
    }
  }
  if (cone)
    m["cone"] = {{"z_start_m", cone->z_start}, {"z_end_m", cone->z_end}, {"r_start_m", cone->r_start},
                 {"r_end_m", cone->r_end}, {"wall_m", cone->wall}};
  j["medium"] = m;
  j["target"] = {{"foci_m", foci}, {"radii_m", radii}};
  j["method"] = method_name(method);
  j["dhla"] = {{"alpha", design.alpha}, {"v_min", design.v_min}, {"v_max", design.v_max},
               {"depth", design.depth}, {"kernel_size", smoothing.kernel_size},
               {"sigma", smoothing.sigma}, {"z_offset", z_offset},
               {"material", material_json(lens_material)}};
  j["optim"] = {{"learning_rate", optim.learning_rate}, {"iterations", optim.iterations},
                {"lambda_energy", optim.lambda_energy}, {"lambda_balance", optim.lambda_balance},
                {"adam_beta1", optim.adam_beta1}, {"adam_beta2", optim.adam_beta2},
                {"adam_epsilon", optim.adam_epsilon},
                {"beta_start", optim.beta_schedule.beta_start},
                {"beta_end", optim.beta_schedule.beta_end},
                {"checkpoint_every", optim.checkpoint_every},
                {"poah_learning_rate", poah_learning_rate}};
  j["solver"] = {{"reflection_order", solver.reflection_order},
                 {"evanescent", solver.evanescent == EvanescentMode::decay ? "decay" : "truncate"},
                 {"angular_cutoff", solver.angular_cutoff}};
  j["fabrication"] = {{"cutoff_m", fabrication.cutoff}, {"t_min_m", fabrication.t_min},
                      {"t_max_m", fabrication.t_max}};
  if (thermal)
    j["thermal"] = {{"bone_k_w_m_c", thermal->bone.conductivity},
                    {"bone_c_j_kg_c", thermal->bone.specific_heat},
                    {"soft_k_w_m_c", thermal->soft.conductivity},
                    {"soft_c_j_kg_c", thermal->soft.specific_heat},
                    {"bone_density_threshold_kg_m3", thermal->bone_density_threshold},
                    {"heat_s", thermal->heat_duration}, {"cool_s", thermal->cool_duration},
                    {"n_cycles", thermal->n_cycles}, {"dt_s", thermal->dt},
                    {"perfusion_per_s", thermal->perfusion_rate},
                    {"reference_pressure_pa", thermal->reference_pressure}};
  j["output"] = {{"dir", output_dir.string()}};
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

std::string RunConfig::hash() const {
  // The output directory does not change the numbers, so it stays out of the hash.
  auto j = json::parse(resolved_json());
  j.erase("output");
  return fnv1a_hex(j.dump());
}

AcousticMedium RunConfig::build_medium() const {
  AcousticMedium m;
  switch (medium_kind) {
    case MediumKind::homogeneous: m = make_homogeneous(grid, background); break;
    case MediumKind::phantom: {
      // The shell is laid over the configured background; water marks non-bone voxels.
      const auto shell = make_skull_phantom(grid, phantom_center, phantom_inner_radius,
                                            phantom_thickness, bone);
      m = make_homogeneous(grid, background);
      const double water_rho = MaterialProperties::water().density;
      for (std::size_t n = 0; n < m.c.size(); ++n)
        if (shell.rho[n] != water_rho) {
          m.c[n] = shell.c[n];
          m.rho[n] = shell.rho[n];
          m.att[n] = shell.att[n];
        }
      break;
    }
    case MediumKind::hu: {
      VolumeHeader h;
      const auto hu = read_hu_volume(hu_file, &h);
      if (h.nx != grid.nx || h.ny != grid.ny || h.nz != grid.nz)
        throw ConfigError(hu_file.string() + ": HU volume dims do not match the grid");
      m = ingest_hu_volume(grid, hu, hu_calibration);
      break;
    }
  }
  if (cone) m = add_coupling_cone(m, cone->z_start, cone->z_end, cone->r_start, cone->r_end, cone->wall, lens_material);
  return m;
}

SourceSpec RunConfig::build_source() const {
  return make_disk_source(grid, aperture_diameter, source_amplitude);
}

TargetSpec RunConfig::build_target() const { return make_spherical_target(grid, foci, radii); }

std::vector<std::array<std::size_t, 3>> RunConfig::focus_voxels() const {
  std::vector<std::array<std::size_t, 3>> out;
  for (const auto& f : foci) out.push_back(nearest_voxel(grid, f));
  return out;
}

ToahProblem RunConfig::build_problem() const {
  ToahProblem p;
  p.source = build_source();
  p.base = build_medium();
  p.target = build_target();
  p.design = design;
  p.smoothing = smoothing;
  p.lens_material = lens_material;
  p.z_offset = z_offset;
  p.solver = solver;
  p.lambda_energy = optim.lambda_energy;
  p.lambda_balance = optim.lambda_balance;
  return p;
}

}  // namespace toah
