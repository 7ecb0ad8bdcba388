#include "toah/dhla.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace toah {

void DesignField::validate() const {
  if (theta.empty()) throw std::invalid_argument("design: empty theta");
  if (!(alpha > 0)) throw std::invalid_argument("design: alpha must be positive");
  if (!(v_min >= 1.0)) throw std::invalid_argument("design: v_min must be >= 1 voxel");
  if (!(v_min < v_max)) throw std::invalid_argument("design: v_min must be < v_max");
  if (v_max > static_cast<double>(depth))
    throw std::invalid_argument("design: v_max exceeds lens depth");
}

double BetaSchedule::at(std::size_t iteration, std::size_t n_iterations) const {
  if (n_iterations <= 1) return beta_start;
  const double f = static_cast<double>(iteration) / static_cast<double>(n_iterations - 1);
  return beta_start * std::pow(beta_end / beta_start, f);
}

void BetaSchedule::validate() const {
  if (!(beta_start > 0) || !(beta_end > 0))
    throw std::invalid_argument("beta schedule: values must be positive");
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Array2<double> map_thickness(const DesignField& design) {
  Array2<double> t(design.theta.nx(), design.theta.ny());
  const double span = design.v_max - design.v_min;
  for (std::size_t n = 0; n < t.size(); ++n)
    t[n] = sigmoid(design.alpha * design.theta[n]) * span + design.v_min;
  return t;
}

Array2<double> gaussian_kernel(int kernel_size, double sigma) {
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw std::invalid_argument("gaussian kernel: size must be odd, got " +
                                std::to_string(kernel_size));
  if (!(sigma > 0)) throw std::invalid_argument("gaussian kernel: sigma must be positive");
  const int r = kernel_size / 2;
  Array2<double> g(kernel_size, kernel_size);
  double sum = 0;
  for (int b = -r; b <= r; ++b)
    for (int a = -r; a <= r; ++a) {
      const double w = std::exp(-(a * a + b * b) / (2 * sigma * sigma));
      g(a + r, b + r) = w;
      sum += w;
    }
  for (std::size_t n = 0; n < g.size(); ++n) g[n] /= sum;
  return g;
}

namespace {

std::size_t reflect(long i, long n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return static_cast<std::size_t>(i);
}

// Shared index walk for the convolution and its transpose.
template <bool Transpose>
Array2<double> convolve(const Array2<double>& in, const Array2<double>& kernel) {
  const long nx = static_cast<long>(in.nx()), ny = static_cast<long>(in.ny());
  const long r = static_cast<long>(kernel.nx()) / 2;
  Array2<double> out(in.nx(), in.ny(), 0.0);
  for (long j = 0; j < ny; ++j)
    for (long i = 0; i < nx; ++i)
      for (long b = -r; b <= r; ++b) {
        const std::size_t jj = reflect(j + b, ny);
        for (long a = -r; a <= r; ++a) {
          const std::size_t ii = reflect(i + a, nx);
          const double w = kernel(a + r, b + r);
          if constexpr (Transpose)
            out(ii, jj) += w * in(i, j);
          else
            out(i, j) += w * in(ii, jj);
        }
      }
  return out;
}

}  // namespace

Array2<double> smooth_thickness(const Array2<double>& t, int kernel_size, double sigma) {
  return convolve<false>(t, gaussian_kernel(kernel_size, sigma));
}

Array2<double> smooth_thickness_adjoint(const Array2<double>& g, int kernel_size, double sigma) {
  return convolve<true>(g, gaussian_kernel(kernel_size, sigma));
}

LensVolume voxelize(const Array2<double>& t_smooth, double beta, std::size_t n_v) {
  if (!(beta > 0)) throw std::invalid_argument("voxelize: beta must be positive");
  LensVolume lens{Array3<double>(t_smooth.nx(), t_smooth.ny(), n_v), t_smooth};
  for (std::size_t k = 0; k < n_v; ++k) {
    const double z = static_cast<double>(k) + 0.5;
    auto s = lens.occupancy.slice(k);
    for (std::size_t n = 0; n < s.size(); ++n) s[n] = sigmoid(beta * (t_smooth[n] - z));
  }
  return lens;
}

LensVolume dhla_forward(const DesignField& design, double beta, const SmoothingParams& smoothing) {
  design.validate();
  const auto t = map_thickness(design);
  return voxelize(smooth_thickness(t, smoothing.kernel_size, smoothing.sigma), beta, design.depth);
}

Array2<double> dhla_backward(const DesignField& design, double beta,
                             const SmoothingParams& smoothing, const Array3<double>& upstream) {
  design.validate();
  if (upstream.nx() != design.theta.nx() || upstream.ny() != design.theta.ny() ||
      upstream.nz() != design.depth)
    throw std::invalid_argument("dhla_backward: upstream gradient shape does not match design");

  const auto t_smooth =
      smooth_thickness(map_thickness(design), smoothing.kernel_size, smoothing.sigma);

  Array2<double> g_smooth(t_smooth.nx(), t_smooth.ny(), 0.0);
  for (std::size_t k = 0; k < design.depth; ++k) {
    const double z = static_cast<double>(k) + 0.5;
    auto u = upstream.slice(k);
    for (std::size_t n = 0; n < u.size(); ++n) {
      const double s = sigmoid(beta * (t_smooth[n] - z));
      g_smooth[n] += u[n] * beta * s * (1.0 - s);
    }
  }

  auto g = smooth_thickness_adjoint(g_smooth, smoothing.kernel_size, smoothing.sigma);
  const double span = design.v_max - design.v_min;
  for (std::size_t n = 0; n < g.size(); ++n) {
    const double s = sigmoid(design.alpha * design.theta[n]);
    g[n] *= span * design.alpha * s * (1.0 - s);
  }
  return g;
}

std::size_t solid_count(double thickness, std::size_t n_v) {
  const double r = std::floor(thickness + 0.5);
  if (r <= 0) return 0;
  return std::min(static_cast<std::size_t>(r), n_v);
}

LensVolume lens_from_thickness(const Array2<double>& thickness, std::size_t n_v) {
  LensVolume out{Array3<double>(thickness.nx(), thickness.ny(), n_v, 0.0), thickness};
  for (std::size_t j = 0; j < thickness.ny(); ++j)
    for (std::size_t i = 0; i < thickness.nx(); ++i) {
      const std::size_t count = solid_count(thickness(i, j), n_v);
      for (std::size_t k = 0; k < count; ++k) out.occupancy(i, j, k) = 1.0;
    }
  return out;
}

LensVolume binarize(const LensVolume& lens) {
  return lens_from_thickness(lens.thickness, lens.depth());
}

LensVolume fabrication_filter(const LensVolume& lens, double cutoff_m, double dx_m) {
  if (!(dx_m > 0)) throw std::invalid_argument("fabrication_filter: dx must be positive");
  if (cutoff_m < dx_m * (1 - 1e-12))
    throw std::invalid_argument("fabrication_filter: cutoff below grid spacing");
  const double sigma_px = cutoff_m / (2.0 * dx_m);
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_px));
  const auto kernel = gaussian_kernel(2 * radius + 1, sigma_px);
  return lens_from_thickness(convolve<false>(lens.thickness, kernel), lens.depth());
}

}  // namespace toah
