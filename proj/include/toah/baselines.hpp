#pragma once

// Phase-only baselines: gradient phase retrieval at the source plane, the
// phase-to-thickness conversion used to fabricate such designs, and
// time-reversal focusing.

#include <array>
#include <cstddef>
#include <limits>
#include <vector>

#include "toah/dhla.hpp"
#include "toah/medium.hpp"
#include "toah/optim.hpp"
#include "toah/solver.hpp"

namespace toah {

constexpr double kTwoPi = 6.283185307179586;

double wrap_phase(double phi);

struct PhaseMap {
  Array2<double> phi;  // radians in [0, 2 pi)

  static PhaseMap wrapped(const Array2<double>& raw);
  void validate() const;
};

struct PoahResult {
  PhaseMap phase;
  LossReport report;
  ComplexField field;  // optimization-domain field of the final phase
};

/// Adam on the aperture phase. The beta schedule of cfg is unused.
PoahResult optimize_poah(const SourceSpec& src, const AcousticMedium& medium,
                         const TargetSpec& target, const OptimConfig& cfg,
                         const SolverConfig& solver, double lambda_energy, double lambda_balance,
                         const Array2<double>& phi0);

/// Thickness of a full 2 pi delay, |1 / (f (1/c0 - 1/cL))|.
double thickness_2pi(double frequency, double c0, double c_lens);

/// Phase delay to lens thickness (m). With a fast lens material (cL > c0) a
/// larger delay maps to a thinner column: T = t_min + ((2 pi - phi) mod 2 pi) T_2pi / 2 pi.
/// With a slow material T = t_min + phi T_2pi / 2 pi. Results are clamped to
/// [t_min, t_max]; a NaN t_max means t_min + T_2pi.
Array2<double> phase_to_thickness(const PhaseMap& phi, double frequency, double c0,
                                  double c_lens, double t_min,
                                  double t_max = std::numeric_limits<double>::quiet_NaN());

/// Transmission phase of a lens column relative to a column of t_min,
/// 2 pi f (1/cL - 1/c0) (T - t_min).
Array2<double> lens_transmission_phase(const Array2<double>& thickness, double frequency,
                                       double c0, double c_lens, double t_min);

/// Ideal converging phase for a focus at distance F on the grid axis.
Array2<double> focusing_phase(const GridSpec& grid, double focal_distance, double c0);

/// Height above the lens base at which a stepped lens effectively imprints its
/// phase: the centroid of the layer over which neighbouring columns build up
/// their relative delay, t_min + (t_top - t_min) / 3 for thicknesses spread
/// evenly up to t_top = min(t_max, t_min + T_2pi).
double lens_phase_plane(double frequency, double c0, double c_lens, double t_min, double t_max);

/// Fresnel focusing lens (thickness in m) for a focus at distance F from the
/// lens base: the converging phase is referenced to lens_phase_plane and
/// converted with phase_to_thickness.
Array2<double> fresnel_lens_thickness(const GridSpec& grid, double focal_distance, double c0,
                                      double c_lens, double t_min, double t_max);

/// Aperture phase that refocuses point sources at the given voxels. Each focus
/// is marched back to the source plane through the medium; the returned phase
/// is the negated phase of the complex sum.
PhaseMap time_reversal(const SourceSpec& src, const AcousticMedium& medium,
                       const std::vector<std::array<std::size_t, 3>>& foci,
                       const SolverConfig& cfg);
/// Complex aperture field that time_reversal takes the phase of.
Array2<Complex> time_reversal_field(const AcousticMedium& medium,
                                    const std::vector<std::array<std::size_t, 3>>& foci,
                                    const SolverConfig& cfg);

struct FabricationParams {
  MaterialProperties lens_material = MaterialProperties::form_clear();
  double c0 = 1500.0;          // medium the phase map assumed, m/s
  double t_min = 250e-6;       // m
  double t_max = 1.9e-3;       // m
  std::size_t depth = 15;      // lens slab depth, voxels
  std::size_t z_offset = 0;
  double cutoff = 250e-6;      // printer resolution, m; <= 0 skips the filter
  SolverConfig solver;
};

struct Fabrication {
  LensVolume lens;      // hard, filtered lens that was embedded
  AcousticMedium medium;
  ComplexField field;   // fabrication-domain field
};

/// Phase map -> thickness -> hard voxels -> fabrication filter -> embed -> propagate.
Fabrication fabricate_phase(const PhaseMap& phi, const SourceSpec& src,
                            const AcousticMedium& base, const FabricationParams& params);
/// TOAH lens -> binarize -> fabrication filter -> embed -> propagate.
Fabrication fabricate_lens(const LensVolume& lens, const SourceSpec& src,
                           const AcousticMedium& base, const FabricationParams& params);

}  // namespace toah
