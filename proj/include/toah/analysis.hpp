#pragma once

// Field-quality metrics, focal segmentation, thermal post-processing and
// robustness sweeps.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "toah/dhla.hpp"
#include "toah/medium.hpp"
#include "toah/solver.hpp"

namespace toah {

/// Reported in place of +inf when two fields match exactly.
constexpr double kPsnrSentinel = 300.0;

/// PSNR of peak-normalized amplitudes, the reference's maximum as peak.
double cross_domain_psnr(const Array3<Complex>& reference, const Array3<Complex>& test);
double cross_domain_psnr(const ComplexField& reference, const ComplexField& test);

struct Segmentation {
  std::vector<std::vector<std::size_t>> segments;  // sorted flat indices, one per seed
  std::vector<int> component;  // per seed; seeds grown into the same region share an id, -1 = empty
  double threshold = 0;        // absolute amplitude threshold used

  std::size_t n_components() const;
};

/// Region growing (6-connected) from each seed over voxels whose amplitude is
/// at least 10^(threshold_db / 20) times the global peak.
Segmentation segment_foci(const Array3<double>& amplitude,
                          const std::vector<std::array<std::size_t, 3>>& seeds,
                          double threshold_db = -6.0);
Segmentation segment_foci(const ComplexField& p,
                          const std::vector<std::array<std::size_t, 3>>& seeds,
                          double threshold_db = -6.0);

Array3<double> amplitude(const Array3<Complex>& p);

struct FocusMetrics {
  std::array<std::size_t, 3> peak_voxel{};
  double peak_pressure = 0;  // relative to the global peak amplitude
  double peak_amplitude = 0; // raw |P|
  double fwhm_x = 0, fwhm_y = 0, fwhm_z = 0;  // m; NaN when a side never drops to half
  double volume_m3 = 0;
};

struct FocalReport {
  std::vector<FocusMetrics> foci;
  double psnr_cross_domain = std::numeric_limits<double>::quiet_NaN();
  double leakage_ratio = 0;
  double uniformity = 0;
  std::size_t n_components = 0;
};

/// Full width at half maximum of a sampled 1D profile around index `peak`,
/// with linear interpolation of the crossings. Units of the sample spacing.
double fwhm_1d(const std::vector<double>& profile, std::size_t peak, double spacing);

/// Metrics over a segmentation. `exterior` optionally restricts the leakage
/// "outside" region (same shape as the field, nonzero = included).
FocalReport focal_metrics(const ComplexField& p, const Segmentation& seg,
                          const Array3<double>* exterior = nullptr);

/// Segment and measure. When no seed reaches the threshold the report has
/// empty foci and a NaN leakage ratio instead of throwing.
FocalReport focal_report(const ComplexField& p,
                         const std::vector<std::array<std::size_t, 3>>& seeds);

struct ThermalTissue {
  double conductivity;   // W / (m degC)
  double specific_heat;  // J / (kg degC)
};

struct ThermalConfig {
  ThermalTissue bone{0.32, 1313.0};
  ThermalTissue soft{0.51, 3630.0};
  double bone_density_threshold = 1500.0;  // kg/m^3; denser voxels are bone
  double heat_duration = 0.010;   // s
  double cool_duration = 0.190;   // s
  std::size_t n_cycles = 5;
  double dt = 0;                  // s; 0 picks the largest stable step
  double perfusion_rate = 0;      // 1/s, linear sink on the temperature rise
  double reference_pressure = 1e6;  // Pa

  void validate() const;
};

struct ThermalResult {
  Array3<double> final_rise;  // degC after the last cycle
  Array3<double> peak_rise;   // maximum over time
  double dt_heat = 0, dt_cool = 0;
  std::size_t steps = 0;
};

/// Largest explicit step for which every voxel update stays a convex
/// combination: dt <= rho C / sum_faces(k_face / d^2).
double thermal_stability_limit(const AcousticMedium& medium, const ThermalConfig& cfg);

/// Explicit finite-difference Pennes diffusion with absorption heating
/// Q = alpha |P|^2 / (rho c) during the heat phases and insulated boundaries.
/// `p` is the pressure amplitude in Pa.
ThermalResult bioheat_simulate(const ComplexField& p, const AcousticMedium& medium,
                               const ThermalConfig& cfg);

/// Scales the field so that the peak amplitude over `region` equals `pressure`.
ComplexField normalize_peak(const ComplexField& p, const std::vector<std::size_t>& region,
                            double pressure);

/// Voxels classified as bone by the thermal configuration.
std::vector<std::size_t> bone_voxels(const AcousticMedium& medium, const ThermalConfig& cfg);

/// Thickness map (voxels) plus i.i.d. Gaussian noise, before clamping.
Array2<double> perturb_thickness(const Array2<double>& thickness, double sigma_voxels,
                                 std::uint64_t seed);
/// Noisy thickness clamped to [v_min, v_max] and re-binarized. sigma is in
/// metres and converted with dz. sigma = 0 returns the lens unchanged.
LensVolume perturb_lens(const LensVolume& lens, double sigma, double dz, double v_min,
                        double v_max, std::uint64_t seed);

/// The four literature sound-speed/density cases of the lens resin. Attenuation
/// is that of Form Clear in every case.
std::vector<MaterialProperties> resin_property_cases();

struct SweepCase {
  MaterialProperties material;
  FocalReport report;
};

/// Re-embeds a fixed lens with each material and evaluates focal metrics.
/// Cases run on up to `jobs` threads and share no mutable state.
std::vector<SweepCase> sweep_material(const LensVolume& lens, const SourceSpec& src,
                                      const AcousticMedium& base,
                                      const std::vector<MaterialProperties>& materials,
                                      std::size_t z_offset, const SolverConfig& solver,
                                      const std::vector<std::array<std::size_t, 3>>& seeds,
                                      std::size_t jobs = 1);

/// Runs body(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body);

}  // namespace toah
