#pragma once

// Steady-state single-frequency propagation by split-step angular-spectrum
// marching. Each axial step applies, in order: interface transmission
// 2 Z_b / (Z_a + Z_b) for the step a -> b, spectral diffraction over dz, and
// the phase/absorption screen of slice b. The reflected share
// (Z_b - Z_a) / (Z_a + Z_b) of the field at slice a seeds the next reflection
// order, which marches in the opposite direction. The total field is the
// coherent sum of all orders.

#include <cstddef>
#include <vector>

#include "toah/array.hpp"
#include "toah/medium.hpp"

namespace toah {

struct ComplexField {
  GridSpec grid;
  Array3<Complex> values;
};

enum class EvanescentMode { decay, truncate };

struct SolverConfig {
  int reflection_order = 4;
  EvanescentMode evanescent = EvanescentMode::decay;
  double angular_cutoff = 1.0;  // propagating components beyond cutoff * k0 are dropped

  void validate() const;
};

/// Everything the adjoint and tangent sweeps need from a forward call.
struct SliceCache {
  GridSpec grid;
  SolverConfig config;
  Array2<Complex> kernel;          // diffraction transfer function, 1/N folded in
  Array3<Complex> screen;          // per-voxel phase/absorption screen
  Array3<double> c;                // sound speed (screen derivative)
  Array3<double> impedance;        // rho * c
  Array2<Complex> source;          // source plane before the slice-0 screen
  std::vector<Array3<Complex>> orders;  // field of each reflection order

  bool valid() const { return !orders.empty() && !kernel.empty(); }
};

struct Propagation {
  ComplexField field;
  SliceCache cache;
};

/// Gradient of a real loss with respect to the medium and source. Complex
/// gradients use the convention g = dL/dRe + i dL/dIm.
struct MediumGradient {
  Array3<double> c, rho, att;
  Array2<Complex> source;
};

/// Direction of a medium or source perturbation for the tangent sweep.
struct MediumPerturbation {
  Array3<double> c, rho, att;  // empty arrays mean zero
  Array2<Complex> source;
};

Array2<Complex> apply_phase_delays(const SourceSpec& src, const Array2<double>& phase);
/// Source plane amplitude * mask, zero phase.
Array2<Complex> source_plane(const SourceSpec& src);

/// Diffraction transfer function for one step of length dz (without 1/N).
Array2<Complex> transfer_function(const GridSpec& grid, double distance, EvanescentMode mode,
                                  double angular_cutoff);

Propagation propagate(const Array2<Complex>& source, const AcousticMedium& medium,
                      const SolverConfig& cfg);
Propagation propagate(const SourceSpec& src, const AcousticMedium& medium,
                      const SolverConfig& cfg);

/// Reverse sweep. `upstream` is dL/dP over the whole grid.
MediumGradient propagate_adjoint(const SliceCache& cache, const Array3<Complex>& upstream);

/// Forward-mode directional derivative dP[delta] around the cached state.
Array3<Complex> propagate_tangent(const SliceCache& cache, const MediumPerturbation& delta);

/// Chains a medium gradient through the linear embedding of a lens at
/// z_offset: d(c, rho, att)/dV' = lens - background.
Array3<double> occupancy_gradient(const MediumGradient& grad, const AcousticMedium& base,
                                  const MaterialProperties& lens_material, std::size_t z_offset,
                                  std::size_t depth);

/// Angular-spectrum backprojection of a measured plane through water. Slice n
/// of the result is the field at distance distances[n] back toward the source
/// (negative distances propagate away from it). Evanescent content is dropped.
ComplexField backproject(const Array2<Complex>& plane, const GridSpec& grid,
                         const std::vector<double>& distances);

/// Medium whose slice 0 is slice `from` of the input and whose slices run back
/// toward the source plane. Used to march from an interior plane to z = 0.
AcousticMedium reversed_subdomain(const AcousticMedium& medium, std::size_t from);

}  // namespace toah
