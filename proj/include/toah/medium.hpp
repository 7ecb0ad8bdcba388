#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "toah/array.hpp"
#include "toah/dhla.hpp"

namespace toah {

/// Simulation grid. Lateral coordinates are centred on the grid axis; the
/// source plane sits at z = 0 (slice 0).
struct GridSpec {
  std::size_t nx = 0, ny = 0, nz = 0;
  double dx = 0, dy = 0, dz = 0;  // m
  double frequency = 0;           // Hz
  double c_ref = 1500.0;          // m/s

  /// Throws on invalid grids; returns warnings (e.g. coarse sampling).
  std::vector<std::string> validate() const;

  double ppw() const { return c_ref / (frequency * dz); }
  double wavelength() const { return c_ref / frequency; }
  double k0() const;
  double x(std::size_t i) const { return (static_cast<double>(i) - 0.5 * (nx - 1.0)) * dx; }
  double y(std::size_t j) const { return (static_cast<double>(j) - 0.5 * (ny - 1.0)) * dy; }
  double z(std::size_t k) const { return static_cast<double>(k) * dz; }
  double voxel_volume() const { return dx * dy * dz; }

  bool operator==(const GridSpec&) const = default;
};

struct MaterialProperties {
  double sound_speed = 1500.0;      // m/s
  double density = 1000.0;          // kg/m^3
  double attenuation_coeff = 0.0;   // dB / (MHz^y cm)
  double attenuation_power = 1.0;   // y

  void validate() const;
  /// Attenuation at a given frequency, dB/cm.
  double attenuation_db_cm(double frequency_hz) const;
  double impedance() const { return sound_speed * density; }

  static MaterialProperties water();
  static MaterialProperties form_clear();
  static MaterialProperties vero_clear();
  static MaterialProperties agilus30();
  /// Default bone end-point of the HU calibration.
  static MaterialProperties cortical_bone();
};

/// Per-voxel acoustic properties. `att` is stored in dB/cm evaluated at the
/// grid frequency, so the power law is folded in once at construction.
struct AcousticMedium {
  GridSpec grid;
  Array3<double> c, rho, att;

  void validate() const;
};

struct SourceSpec {
  double frequency = 0;
  double aperture_diameter = 0;
  Array2<double> aperture_mask;  // 0/1 over (nx, ny)
  double amplitude = 1.0;
};

/// Hard-edged disk aperture centred on the grid axis.
SourceSpec make_disk_source(const GridSpec& grid, double aperture_diameter, double amplitude = 1.0);
/// Aperture covering the whole lateral plane (unit plane wave).
SourceSpec make_plane_source(const GridSpec& grid, double amplitude = 1.0);
void validate_source(const SourceSpec& src, const GridSpec& grid);

/// Neper-per-metre conversion factor for dB/cm: ln(10) / 20 * 100.
constexpr double kNeperPerMeterPerDbPerCm = 11.512925464970229;

AcousticMedium make_homogeneous(const GridSpec& grid, const MaterialProperties& mat);

struct HuKnot {
  double hu;
  MaterialProperties material;
};

/// Piecewise-linear HU -> (c, rho, att) map. Values are clamped to the end
/// knots, so anything at or below the first knot is water.
struct HuCalibration {
  std::vector<HuKnot> knots;

  static HuCalibration default_water_bone();
  void validate() const;  // knots strictly increasing in HU, properties non-decreasing
  MaterialProperties evaluate(double hu, double frequency_hz) const;
  /// Inverse of the sound-speed map on its strictly increasing part.
  double hu_from_sound_speed(double c) const;
};

AcousticMedium ingest_hu_volume(const GridSpec& grid, const Array3<std::int16_t>& hu,
                                const HuCalibration& calib);

/// Spherical bone shell (distance from centre in [r, r + thickness]) in water.
/// Centre is given in grid coordinates (metres; see GridSpec::x/y/z).
AcousticMedium make_skull_phantom(const GridSpec& grid, const std::array<double, 3>& center,
                                  double inner_radius, double thickness,
                                  const MaterialProperties& bone);

/// Replaces voxels whose occupancy exceeds `threshold` with the lens material.
/// Slice k of the lens maps to medium slice z_offset + k.
AcousticMedium embed_lens(const AcousticMedium& base, const LensVolume& lens,
                          const MaterialProperties& mat, std::size_t z_offset,
                          double threshold = 0.9);

/// Differentiable embedding: property = background + V' * (lens - background)
/// over the lens region.
AcousticMedium embed_lens_soft(const AcousticMedium& base, const LensVolume& lens,
                               const MaterialProperties& mat, std::size_t z_offset);

/// Coupling-cone wall (frustum shell of lens material) between z_start and z_end;
/// the interior stays as is (gel ~ water).
AcousticMedium add_coupling_cone(const AcousticMedium& base, double z_start, double z_end,
                                 double inner_radius_start, double inner_radius_end,
                                 double wall_thickness, const MaterialProperties& mat);

}  // namespace toah
