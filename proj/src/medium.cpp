#include "toah/medium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace toah {

std::vector<std::string> GridSpec::validate() const {
  if (nx < 4 || ny < 4 || nz < 4)
    throw std::invalid_argument("grid: all counts must be >= 4");
  if (!(dx > 0) || !(dy > 0) || !(dz > 0))
    throw std::invalid_argument("grid: spacings must be positive");
  if (std::abs(dx - dy) > 1e-9 * dx)
    throw std::invalid_argument("grid: lateral spacing must be isotropic (dx == dy)");
  if (!(frequency > 0)) throw std::invalid_argument("grid: frequency must be positive");
  if (!(c_ref > 0)) throw std::invalid_argument("grid: reference sound speed must be positive");
  std::vector<std::string> warnings;
  const double p = ppw();
  if (p < 4.0 * (1 - 1e-9))
    throw std::invalid_argument("grid: " + std::to_string(p) +
                                " points per wavelength along z, need >= 4");
  if (p < 6.0 * (1 - 1e-9))
    warnings.push_back("grid: only " + std::to_string(p) + " points per wavelength along z");
  return warnings;
}

double GridSpec::k0() const { return 2.0 * std::numbers::pi * frequency / c_ref; }

void MaterialProperties::validate() const {
  if (!(sound_speed > 0)) throw std::invalid_argument("material: sound speed must be positive");
  if (!(density > 0)) throw std::invalid_argument("material: density must be positive");
  if (!(attenuation_coeff >= 0))
    throw std::invalid_argument("material: attenuation must be non-negative");
  if (!(attenuation_power >= 0.5 && attenuation_power <= 2.0))
    throw std::invalid_argument("material: attenuation power must be in [0.5, 2]");
}

double MaterialProperties::attenuation_db_cm(double frequency_hz) const {
  return attenuation_coeff * std::pow(frequency_hz * 1e-6, attenuation_power);
}

MaterialProperties MaterialProperties::water() { return {1500.0, 1000.0, 0.0, 1.0}; }
MaterialProperties MaterialProperties::form_clear() { return {2591.0, 1178.0, 2.922, 1.044}; }
MaterialProperties MaterialProperties::vero_clear() { return {2473.0, 1181.0, 3.696, 0.9958}; }
MaterialProperties MaterialProperties::agilus30() { return {2035.0, 1128.0, 9.109, 1.017}; }
MaterialProperties MaterialProperties::cortical_bone() { return {2800.0, 1850.0, 8.0, 1.0}; }

void AcousticMedium::validate() const {
  grid.validate();
  const Array3<double> probe(grid.nx, grid.ny, grid.nz);
  require_same_shape(c, probe, "medium c");
  require_same_shape(rho, probe, "medium rho");
  require_same_shape(att, probe, "medium att");
  for (std::size_t n = 0; n < c.size(); ++n) {
    if (!(c[n] > 0) || !std::isfinite(c[n]))
      throw std::invalid_argument("medium: non-positive or non-finite sound speed");
    if (!(rho[n] > 0) || !std::isfinite(rho[n]))
      throw std::invalid_argument("medium: non-positive or non-finite density");
    if (!(att[n] >= 0) || !std::isfinite(att[n]))
      throw std::invalid_argument("medium: negative or non-finite attenuation");
  }
}

SourceSpec make_disk_source(const GridSpec& grid, double aperture_diameter, double amplitude) {
  if (!(aperture_diameter > 0)) throw std::invalid_argument("source: aperture must be positive");
  SourceSpec src{grid.frequency, aperture_diameter, Array2<double>(grid.nx, grid.ny, 0.0),
                 amplitude};
  const double r = 0.5 * aperture_diameter;
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i)
      if (std::hypot(grid.x(i), grid.y(j)) <= r) src.aperture_mask(i, j) = 1.0;
  return src;
}

SourceSpec make_plane_source(const GridSpec& grid, double amplitude) {
  return {grid.frequency, std::numeric_limits<double>::infinity(),
          Array2<double>(grid.nx, grid.ny, 1.0), amplitude};
}

void validate_source(const SourceSpec& src, const GridSpec& grid) {
  if (src.aperture_mask.nx() != grid.nx || src.aperture_mask.ny() != grid.ny)
    throw std::invalid_argument("source: aperture mask shape does not match grid");
  if (std::abs(src.frequency - grid.frequency) > 1e-9 * grid.frequency)
    throw std::invalid_argument("source: frequency differs from grid frequency");
  const double r = 0.5 * src.aperture_diameter + 0.5 * grid.dx;
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i)
      if (src.aperture_mask(i, j) != 0 && std::hypot(grid.x(i), grid.y(j)) > r)
        throw std::invalid_argument("source: aperture mask extends beyond aperture diameter");
}

AcousticMedium make_homogeneous(const GridSpec& grid, const MaterialProperties& mat) {
  grid.validate();
  mat.validate();
  return {grid, Array3<double>(grid.nx, grid.ny, grid.nz, mat.sound_speed),
          Array3<double>(grid.nx, grid.ny, grid.nz, mat.density),
          Array3<double>(grid.nx, grid.ny, grid.nz, mat.attenuation_db_cm(grid.frequency))};
}

HuCalibration HuCalibration::default_water_bone() {
  return {{{0.0, MaterialProperties::water()}, {1000.0, MaterialProperties::cortical_bone()}}};
}

void HuCalibration::validate() const {
  if (knots.size() < 2) throw std::invalid_argument("hu calibration: need at least two knots");
  for (std::size_t n = 0; n < knots.size(); ++n) {
    knots[n].material.validate();
    if (n == 0) continue;
    const auto& a = knots[n - 1];
    const auto& b = knots[n];
    if (!(b.hu > a.hu))
      throw std::invalid_argument("hu calibration: knots must be strictly increasing in HU");
    if (b.material.sound_speed < a.material.sound_speed ||
        b.material.density < a.material.density ||
        b.material.attenuation_coeff < a.material.attenuation_coeff)
      throw std::invalid_argument("hu calibration: property map is not monotone");
  }
}

MaterialProperties HuCalibration::evaluate(double hu, double frequency_hz) const {
  auto effective = [&](const MaterialProperties& m) {
    return MaterialProperties{m.sound_speed, m.density, m.attenuation_db_cm(frequency_hz), 1.0};
  };
  if (hu <= knots.front().hu) return effective(knots.front().material);
  if (hu >= knots.back().hu) return effective(knots.back().material);
  std::size_t n = 1;
  while (knots[n].hu < hu) ++n;
  const auto a = effective(knots[n - 1].material);
  const auto b = effective(knots[n].material);
  const double f = (hu - knots[n - 1].hu) / (knots[n].hu - knots[n - 1].hu);
  return {a.sound_speed + f * (b.sound_speed - a.sound_speed),
          a.density + f * (b.density - a.density),
          a.attenuation_coeff + f * (b.attenuation_coeff - a.attenuation_coeff), 1.0};
}

double HuCalibration::hu_from_sound_speed(double c) const {
  for (std::size_t n = 1; n < knots.size(); ++n) {
    const double c0 = knots[n - 1].material.sound_speed, c1 = knots[n].material.sound_speed;
    if (c1 > c0 && c >= c0 && c <= c1)
      return knots[n - 1].hu + (c - c0) / (c1 - c0) * (knots[n].hu - knots[n - 1].hu);
  }
  throw std::invalid_argument("hu calibration: sound speed outside invertible range");
}

AcousticMedium ingest_hu_volume(const GridSpec& grid, const Array3<std::int16_t>& hu,
                                const HuCalibration& calib) {
  grid.validate();
  calib.validate();
  if (hu.nx() != grid.nx || hu.ny() != grid.ny || hu.nz() != grid.nz)
    throw std::invalid_argument("hu volume: shape does not match grid");
  AcousticMedium m{grid, Array3<double>(grid.nx, grid.ny, grid.nz),
                   Array3<double>(grid.nx, grid.ny, grid.nz),
                   Array3<double>(grid.nx, grid.ny, grid.nz)};
  for (std::size_t n = 0; n < hu.size(); ++n) {
    const auto p = calib.evaluate(hu[n], grid.frequency);
    m.c[n] = p.sound_speed;
    m.rho[n] = p.density;
    m.att[n] = p.attenuation_coeff;
  }
  return m;
}

AcousticMedium make_skull_phantom(const GridSpec& grid, const std::array<double, 3>& center,
                                  double inner_radius, double thickness,
                                  const MaterialProperties& bone) {
  auto medium = make_homogeneous(grid, MaterialProperties::water());
  bone.validate();
  if (!(inner_radius >= 0) || !(thickness >= 0))
    throw std::invalid_argument("skull phantom: radius and thickness must be non-negative");

  // Nearest and farthest distances from the centre to the grid's bounding box.
  const std::array<double, 3> lo{grid.x(0), grid.y(0), grid.z(0)};
  const std::array<double, 3> hi{grid.x(grid.nx - 1), grid.y(grid.ny - 1), grid.z(grid.nz - 1)};
  double dmin2 = 0, dmax2 = 0;
  for (int a = 0; a < 3; ++a) {
    const double below = std::max(0.0, lo[a] - center[a]);
    const double above = std::max(0.0, center[a] - hi[a]);
    dmin2 += std::pow(std::max(below, above), 2);
    dmax2 += std::pow(std::max(std::abs(center[a] - lo[a]), std::abs(center[a] - hi[a])), 2);
  }
  if (inner_radius > std::sqrt(dmax2))
    throw std::invalid_argument("skull phantom: inner radius exceeds the domain");
  if (thickness == 0) return medium;
  if (inner_radius + thickness < std::sqrt(dmin2))
    throw std::invalid_argument("skull phantom: shell lies outside the grid");

  const double att = bone.attenuation_db_cm(grid.frequency);
  const double r_out = inner_radius + thickness;
  for (std::size_t k = 0; k < grid.nz; ++k)
    for (std::size_t j = 0; j < grid.ny; ++j)
      for (std::size_t i = 0; i < grid.nx; ++i) {
        const double d = std::sqrt(std::pow(grid.x(i) - center[0], 2) +
                                   std::pow(grid.y(j) - center[1], 2) +
                                   std::pow(grid.z(k) - center[2], 2));
        if (d >= inner_radius && d <= r_out) {
          medium.c(i, j, k) = bone.sound_speed;
          medium.rho(i, j, k) = bone.density;
          medium.att(i, j, k) = att;
        }
      }
  return medium;
}

namespace {

void check_lens_fits(const AcousticMedium& base, const LensVolume& lens, std::size_t z_offset) {
  if (lens.occupancy.nx() != base.grid.nx || lens.occupancy.ny() != base.grid.ny)
    throw std::invalid_argument("embed_lens: lens lateral shape does not match the medium");
  if (z_offset + lens.depth() > base.grid.nz)
    throw std::invalid_argument("embed_lens: lens extends beyond the axial extent");
}

}  // namespace

AcousticMedium embed_lens(const AcousticMedium& base, const LensVolume& lens,
                          const MaterialProperties& mat, std::size_t z_offset, double threshold) {
  check_lens_fits(base, lens, z_offset);
  mat.validate();
  AcousticMedium out = base;
  const double att = mat.attenuation_db_cm(base.grid.frequency);
  for (std::size_t k = 0; k < lens.depth(); ++k)
    for (std::size_t j = 0; j < base.grid.ny; ++j)
      for (std::size_t i = 0; i < base.grid.nx; ++i)
        if (lens.occupancy(i, j, k) > threshold) {
          out.c(i, j, z_offset + k) = mat.sound_speed;
          out.rho(i, j, z_offset + k) = mat.density;
          out.att(i, j, z_offset + k) = att;
        }
  return out;
}

AcousticMedium embed_lens_soft(const AcousticMedium& base, const LensVolume& lens,
                               const MaterialProperties& mat, std::size_t z_offset) {
  check_lens_fits(base, lens, z_offset);
  mat.validate();
  AcousticMedium out = base;
  const double att = mat.attenuation_db_cm(base.grid.frequency);
  for (std::size_t k = 0; k < lens.depth(); ++k)
    for (std::size_t j = 0; j < base.grid.ny; ++j)
      for (std::size_t i = 0; i < base.grid.nx; ++i) {
        const double v = lens.occupancy(i, j, k);
        const std::size_t kk = z_offset + k;
        out.c(i, j, kk) += v * (mat.sound_speed - base.c(i, j, kk));
        out.rho(i, j, kk) += v * (mat.density - base.rho(i, j, kk));
        out.att(i, j, kk) += v * (att - base.att(i, j, kk));
      }
  return out;
}

AcousticMedium add_coupling_cone(const AcousticMedium& base, double z_start, double z_end,
                                 double inner_radius_start, double inner_radius_end,
                                 double wall_thickness, const MaterialProperties& mat) {
  if (!(z_end > z_start) || !(wall_thickness > 0))
    throw std::invalid_argument("coupling cone: need z_end > z_start and a positive wall");
  mat.validate();
  AcousticMedium out = base;
  const auto& g = base.grid;
  const double att = mat.attenuation_db_cm(g.frequency);
  for (std::size_t k = 0; k < g.nz; ++k) {
    const double z = g.z(k);
    if (z < z_start || z > z_end) continue;
    const double f = (z - z_start) / (z_end - z_start);
    const double r_in = inner_radius_start + f * (inner_radius_end - inner_radius_start);
    for (std::size_t j = 0; j < g.ny; ++j)
      for (std::size_t i = 0; i < g.nx; ++i) {
        const double r = std::hypot(g.x(i), g.y(j));
        if (r >= r_in && r <= r_in + wall_thickness) {
          out.c(i, j, k) = mat.sound_speed;
          out.rho(i, j, k) = mat.density;
          out.att(i, j, k) = att;
        }
      }
  }
  return out;
}

}  // namespace toah
