#pragma once

// Run configuration: JSON with comments, physical quantities in unit-suffixed
// keys (spacing_um, focal_mm, frequency_hz, ...). Everything is resolved to SI
// on load; resolved_json() is the canonical snapshot whose hash tags outputs.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "toah/analysis.hpp"
#include "toah/baselines.hpp"
#include "toah/dhla.hpp"
#include "toah/medium.hpp"
#include "toah/optim.hpp"
#include "toah/solver.hpp"

namespace toah {

enum class Method { toah, poah, tr };
enum class MediumKind { homogeneous, phantom, hu };

struct ConeSpec {
  double z_start = 0, z_end = 0, r_start = 0, r_end = 0, wall = 0;
};

struct RunConfig {
  GridSpec grid{128, 128, 96, 125e-6, 125e-6, 125e-6, 2e6, 1500.0};
  double aperture_diameter = 13e-3;
  double source_amplitude = 1.0;

  MediumKind medium_kind = MediumKind::homogeneous;
  MaterialProperties background = MaterialProperties::water();
  std::array<double, 3> phantom_center{0, 0, 11.375e-3};
  double phantom_inner_radius = 6e-3;
  double phantom_thickness = 0.375e-3;
  MaterialProperties bone = MaterialProperties::cortical_bone();
  std::filesystem::path hu_file;
  HuCalibration hu_calibration = HuCalibration::default_water_bone();
  std::optional<ConeSpec> cone;

  std::vector<std::array<double, 3>> foci;  // m, grid coordinates
  std::vector<double> radii;                 // m

  Method method = Method::toah;
  DesignField design;
  SmoothingParams smoothing;
  MaterialProperties lens_material = MaterialProperties::form_clear();
  std::size_t z_offset = 0;
  OptimConfig optim;
  double poah_learning_rate = 0.1;
  SolverConfig solver;
  FabricationParams fabrication;
  std::optional<ThermalConfig> thermal;

  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;

  /// Canonical SI snapshot; parse_config(resolved_json()) reproduces the run.
  std::string resolved_json() const;
  std::string hash() const;

  AcousticMedium build_medium() const;
  SourceSpec build_source() const;
  TargetSpec build_target() const;
  ToahProblem build_problem() const;
  std::vector<std::array<std::size_t, 3>> focus_voxels() const;
};

/// Parses configuration text. `origin` names the file in diagnostics and its
/// directory anchors relative paths. Throws ConfigError.
RunConfig parse_config(const std::string& text, const std::filesystem::path& origin);
RunConfig load_config(const std::filesystem::path& path);

const char* method_name(Method m);

}  // namespace toah
