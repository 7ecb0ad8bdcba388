#pragma once

// Differentiable hologram lens approximation: a 2D design map is mapped to a
// bounded thickness, smoothed with a Gaussian, and lifted into a quasi-binary
// occupancy volume. Every stage has an exact reverse-mode counterpart.

#include <cstddef>
#include <cstdint>

#include "toah/array.hpp"

namespace toah {

struct DesignField {
  Array2<double> theta;
  double alpha = 0.1;    // steepness of the thickness sigmoid
  double v_min = 2.0;    // thickness bounds, in voxels
  double v_max = 15.0;
  std::size_t depth = 15;  // lens depth n_v in voxels

  void validate() const;
};

struct SmoothingParams {
  int kernel_size = 9;
  double sigma = 1.5;  // grid units
};

/// Occupancy is solid (1) below the thickness and void (0) above it; index 0
/// is the slice against the transducer face.
struct LensVolume {
  Array3<double> occupancy;   // (nx, ny, n_v), values in [0, 1]
  Array2<double> thickness;   // smoothed thickness, voxels

  std::size_t depth() const { return occupancy.nz(); }
};

/// Geometric sharpness ramp from beta_start to beta_end.
struct BetaSchedule {
  double beta_start = 1.0;
  double beta_end = 20.0;

  double at(std::size_t iteration, std::size_t n_iterations) const;
  void validate() const;
};

double sigmoid(double x);

Array2<double> map_thickness(const DesignField& design);

/// Normalized (unit sum) square Gaussian kernel; size must be odd.
Array2<double> gaussian_kernel(int kernel_size, double sigma);

/// Convolution with symmetric (half-sample) reflection at the borders.
Array2<double> smooth_thickness(const Array2<double>& t, int kernel_size, double sigma);
/// Transpose of smooth_thickness.
Array2<double> smooth_thickness_adjoint(const Array2<double>& g, int kernel_size, double sigma);

/// occupancy(i, j, k) = sigmoid(beta * (t(i, j) - (k + 0.5))), k = 0..n_v-1.
LensVolume voxelize(const Array2<double>& t_smooth, double beta, std::size_t n_v);

LensVolume dhla_forward(const DesignField& design, double beta, const SmoothingParams& smoothing);

/// Exact gradient of a scalar loss with respect to theta, given dL/dV'.
/// Recomputes the forward intermediates; no cached state is needed.
Array2<double> dhla_backward(const DesignField& design, double beta,
                             const SmoothingParams& smoothing, const Array3<double>& upstream);

/// Number of solid voxels for a thickness (round half up), clamped to [0, n_v].
std::size_t solid_count(double thickness, std::size_t n_v);

/// Hard 0/1 occupancy with the column transition at round(thickness).
LensVolume binarize(const LensVolume& lens);

/// Builds a binary lens directly from a thickness map in voxels.
LensVolume lens_from_thickness(const Array2<double>& thickness, std::size_t n_v);

/// Printer-resolution emulation: Gaussian low-pass of the thickness map with
/// sigma = cutoff / 2, then re-binarization. Requires cutoff >= dx.
LensVolume fabrication_filter(const LensVolume& lens, double cutoff_m, double dx_m);

}  // namespace toah
