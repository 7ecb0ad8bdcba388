#include "toah/solver.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "toah/errors.hpp"
#include "toah/fft.hpp"

namespace toah {

void SolverConfig::validate() const {
  if (reflection_order < 0 || reflection_order > 8)
    throw std::invalid_argument("solver: reflection order must be in [0, 8]");
  if (!(angular_cutoff > 0)) throw std::invalid_argument("solver: angular cutoff must be positive");
}

Array2<Complex> apply_phase_delays(const SourceSpec& src, const Array2<double>& phase) {
  require_same_shape(src.aperture_mask, phase, "apply_phase_delays");
  Array2<Complex> out(phase.nx(), phase.ny());
  for (std::size_t n = 0; n < out.size(); ++n)
    if (src.aperture_mask[n] != 0)
      out[n] = src.amplitude * src.aperture_mask[n] * std::polar(1.0, phase[n]);
  return out;
}

Array2<Complex> source_plane(const SourceSpec& src) {
  Array2<Complex> out(src.aperture_mask.nx(), src.aperture_mask.ny());
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = src.amplitude * src.aperture_mask[n];
  return out;
}

Array2<Complex> transfer_function(const GridSpec& grid, double distance, EvanescentMode mode,
                                  double angular_cutoff) {
  const double k0 = grid.k0();
  const double kmax = angular_cutoff * k0 * (1 + 1e-12);
  Array2<Complex> h(grid.nx, grid.ny);
  for (std::size_t j = 0; j < grid.ny; ++j) {
    const double ky = fft_wavenumber(j, grid.ny, grid.dy);
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const double kx = fft_wavenumber(i, grid.nx, grid.dx);
      const double kp2 = kx * kx + ky * ky;
      const double kz2 = k0 * k0 - kp2;
      if (kz2 >= 0) {
        if (std::sqrt(kp2) <= kmax) h(i, j) = std::polar(1.0, std::sqrt(kz2) * distance);
      } else if (mode == EvanescentMode::decay) {
        h(i, j) = std::exp(-std::sqrt(-kz2) * std::abs(distance));
      }
    }
  }
  return h;
}

namespace {

struct Sweep {
  int dir;
  std::size_t start, last;
};

Sweep sweep_for(int order, std::size_t nz) {
  return order % 2 == 0 ? Sweep{+1, 0, nz - 1} : Sweep{-1, nz - 1, 0};
}

std::size_t step(std::size_t k, int dir) { return dir > 0 ? k + 1 : k - 1; }
std::size_t unstep(std::size_t k, int dir) { return dir > 0 ? k - 1 : k + 1; }

double transmission(double za, double zb) { return 2 * zb / (za + zb); }
double reflection(double za, double zb) { return (zb - za) / (za + zb); }
// Transmission and reflection share these partial derivatives (r = t - 1).
double d_coef_dza(double za, double zb) { return -2 * zb / ((za + zb) * (za + zb)); }
double d_coef_dzb(double za, double zb) { return 2 * za / ((za + zb) * (za + zb)); }

void diffract(Fft2& fft, std::span<Complex> s, const Array2<Complex>& kernel, bool adjoint) {
  fft.forward(s);
  if (adjoint)
    for (std::size_t n = 0; n < s.size(); ++n) s[n] *= std::conj(kernel[n]);
  else
    for (std::size_t n = 0; n < s.size(); ++n) s[n] *= kernel[n];
  fft.backward(s);
}

void check_medium(const AcousticMedium& medium) {
  for (std::size_t n = 0; n < medium.c.size(); ++n)
    if (!std::isfinite(medium.c[n]) || !std::isfinite(medium.rho[n]) ||
        !std::isfinite(medium.att[n]))
      throw NumericError("propagate: non-finite value in medium");
  medium.validate();
  if (medium.grid.dz > 0.25 * medium.grid.wavelength() * (1 + 1e-9))
    throw std::invalid_argument("propagate: dz exceeds a quarter wavelength");
}

// Reflected seed of order `order` at slice b, produced by order - 1 marching
// from b toward b - dir.
Complex injected(const SliceCache& cache, int order, std::size_t b, std::size_t a,
                 std::size_t n) {
  if (order == 0) return {};
  const std::size_t sz = cache.grid.nx * cache.grid.ny;
  const double zb = cache.impedance[b * sz + n], za = cache.impedance[a * sz + n];
  return reflection(zb, za) * cache.orders[order - 1][b * sz + n];
}

}  // namespace

Propagation propagate(const Array2<Complex>& source, const AcousticMedium& medium,
                      const SolverConfig& cfg) {
  cfg.validate();
  check_medium(medium);
  const GridSpec& g = medium.grid;
  if (source.nx() != g.nx || source.ny() != g.ny)
    throw std::invalid_argument("propagate: source plane shape does not match grid");

  const std::size_t sz = g.nx * g.ny;
  const double k0 = g.k0();
  SliceCache cache;
  cache.grid = g;
  cache.config = cfg;
  cache.kernel = transfer_function(g, g.dz, cfg.evanescent, cfg.angular_cutoff);
  for (std::size_t n = 0; n < sz; ++n) cache.kernel[n] /= static_cast<double>(sz);
  cache.screen = Array3<Complex>(g.nx, g.ny, g.nz);
  cache.impedance = Array3<double>(g.nx, g.ny, g.nz);
  cache.c = medium.c;
  for (std::size_t n = 0; n < medium.c.size(); ++n) {
    cache.screen[n] = std::exp(Complex(-kNeperPerMeterPerDbPerCm * medium.att[n] * g.dz,
                                       k0 * (g.c_ref / medium.c[n] - 1.0) * g.dz));
    cache.impedance[n] = medium.rho[n] * medium.c[n];
  }
  cache.source = source;

  const int R = cfg.reflection_order;
  cache.orders.assign(R + 1, Array3<Complex>(g.nx, g.ny, g.nz));
  {
    auto w0 = cache.orders[0].slice(0);
    auto s0 = cache.screen.slice(0);
    for (std::size_t n = 0; n < sz; ++n) w0[n] = s0[n] * source[n];
  }

  Fft2 fft(g.nx, g.ny);
  std::vector<Complex> tmp(sz);
  for (int o = 0; o <= R; ++o) {
    const auto sw = sweep_for(o, g.nz);
    auto& w = cache.orders[o];
    for (std::size_t a = sw.start; a != sw.last; a = step(a, sw.dir)) {
      const std::size_t b = step(a, sw.dir);
      auto wa = w.slice(a);
      auto za = cache.impedance.slice(a), zb = cache.impedance.slice(b);
      for (std::size_t n = 0; n < sz; ++n) tmp[n] = transmission(za[n], zb[n]) * wa[n];
      if (o < R) {
        auto next = cache.orders[o + 1].slice(a);
        for (std::size_t n = 0; n < sz; ++n) next[n] += reflection(za[n], zb[n]) * wa[n];
      }
      diffract(fft, tmp, cache.kernel, false);
      auto wb = w.slice(b);
      auto sb = cache.screen.slice(b);
      for (std::size_t n = 0; n < sz; ++n) wb[n] += sb[n] * tmp[n];
    }
  }

  ComplexField field{g, cache.orders[0]};
  for (int o = 1; o <= R; ++o)
    for (std::size_t n = 0; n < field.values.size(); ++n) field.values[n] += cache.orders[o][n];
  for (std::size_t n = 0; n < field.values.size(); ++n)
    if (!std::isfinite(field.values[n].real()) || !std::isfinite(field.values[n].imag()))
      throw NumericError("propagate: non-finite field");
  return {std::move(field), std::move(cache)};
}

Propagation propagate(const SourceSpec& src, const AcousticMedium& medium,
                      const SolverConfig& cfg) {
  validate_source(src, medium.grid);
  return propagate(source_plane(src), medium, cfg);
}

MediumGradient propagate_adjoint(const SliceCache& cache, const Array3<Complex>& upstream) {
  if (!cache.valid()) throw std::invalid_argument("propagate_adjoint: stale or empty cache");
  const GridSpec& g = cache.grid;
  if (upstream.nx() != g.nx || upstream.ny() != g.ny || upstream.nz() != g.nz)
    throw std::invalid_argument("propagate_adjoint: upstream shape does not match cache");

  const std::size_t sz = g.nx * g.ny;
  const double k0 = g.k0();
  const double screen_c = k0 * g.c_ref * g.dz;
  const double screen_att = -kNeperPerMeterPerDbPerCm * g.dz;
  const int R = static_cast<int>(cache.orders.size()) - 1;

  MediumGradient grad{Array3<double>(g.nx, g.ny, g.nz), Array3<double>(g.nx, g.ny, g.nz),
                      Array3<double>(g.nx, g.ny, g.nz), Array2<Complex>(g.nx, g.ny)};
  Array3<double> g_z(g.nx, g.ny, g.nz);

  auto add_coef_grad = [&](std::size_t a, std::size_t b, std::size_t n, double v) {
    const double za = cache.impedance[a * sz + n], zb = cache.impedance[b * sz + n];
    g_z[a * sz + n] += v * d_coef_dza(za, zb);
    g_z[b * sz + n] += v * d_coef_dzb(za, zb);
  };
  auto add_screen_grad = [&](std::size_t b, std::size_t n, Complex adj, Complex screened) {
    const Complex z = std::conj(adj) * screened;
    const double c = cache.c[b * sz + n];
    grad.c[b * sz + n] += screen_c / (c * c) * z.imag();
    grad.att[b * sz + n] += screen_att * z.real();
  };

  Fft2 fft(g.nx, g.ny);
  std::vector<Complex> tmp(sz);
  Array3<Complex> next_adj;
  for (int o = R; o >= 0; --o) {
    const auto sw = sweep_for(o, g.nz);
    const auto& w = cache.orders[o];
    Array3<Complex> adj = upstream;

    // Reflected seeds handed to order o + 1.
    if (o < R) {
      for (std::size_t a = sw.start; a != sw.last; a = step(a, sw.dir)) {
        const std::size_t b = step(a, sw.dir);
        for (std::size_t n = 0; n < sz; ++n) {
          const Complex up = next_adj[a * sz + n];
          add_coef_grad(a, b, n, std::real(std::conj(up) * w[a * sz + n]));
          adj[a * sz + n] +=
              reflection(cache.impedance[a * sz + n], cache.impedance[b * sz + n]) * up;
        }
      }
    }

    for (std::size_t b = sw.last; b != sw.start; b = unstep(b, sw.dir)) {
      const std::size_t a = unstep(b, sw.dir);
      auto adj_b = adj.slice(b);
      auto sb = cache.screen.slice(b);
      for (std::size_t n = 0; n < sz; ++n) {
        const Complex screened = w[b * sz + n] - injected(cache, o, b, a, n);
        add_screen_grad(b, n, adj_b[n], screened);
        tmp[n] = std::conj(sb[n]) * adj_b[n];
      }
      diffract(fft, tmp, cache.kernel, true);
      auto adj_a = adj.slice(a);
      for (std::size_t n = 0; n < sz; ++n) {
        const double za = cache.impedance[a * sz + n], zb = cache.impedance[b * sz + n];
        add_coef_grad(a, b, n, std::real(std::conj(tmp[n]) * w[a * sz + n]));
        adj_a[n] += transmission(za, zb) * tmp[n];
      }
    }

    if (o == 0) {
      auto adj0 = adj.slice(0);
      for (std::size_t n = 0; n < sz; ++n) {
        add_screen_grad(0, n, adj0[n], w[n]);
        grad.source[n] = std::conj(cache.screen[n]) * adj0[n];
      }
    }
    next_adj = std::move(adj);
  }

  for (std::size_t n = 0; n < g_z.size(); ++n) {
    const double c = cache.c[n];
    const double rho = cache.impedance[n] / c;
    grad.c[n] += g_z[n] * rho;
    grad.rho[n] += g_z[n] * c;
  }
  return grad;
}

Array3<Complex> propagate_tangent(const SliceCache& cache, const MediumPerturbation& delta) {
  if (!cache.valid()) throw std::invalid_argument("propagate_tangent: stale or empty cache");
  const GridSpec& g = cache.grid;
  const std::size_t sz = g.nx * g.ny, total = sz * g.nz;
  auto value = [](const Array3<double>& a, std::size_t n) { return a.empty() ? 0.0 : a[n]; };
  for (const auto* a : {&delta.c, &delta.rho, &delta.att})
    if (!a->empty() && a->size() != total)
      throw std::invalid_argument("propagate_tangent: perturbation shape mismatch");

  const double k0 = g.k0();
  Array3<Complex> dlog_screen(g.nx, g.ny, g.nz);
  Array3<double> d_z(g.nx, g.ny, g.nz);
  for (std::size_t n = 0; n < total; ++n) {
    const double c = cache.c[n];
    dlog_screen[n] = Complex(-kNeperPerMeterPerDbPerCm * g.dz * value(delta.att, n),
                             -k0 * g.c_ref * g.dz / (c * c) * value(delta.c, n));
    d_z[n] = cache.impedance[n] / c * value(delta.c, n) + c * value(delta.rho, n);
  }

  const int R = static_cast<int>(cache.orders.size()) - 1;
  std::vector<Array3<Complex>> dw(R + 1, Array3<Complex>(g.nx, g.ny, g.nz));
  for (std::size_t n = 0; n < sz; ++n) {
    dw[0][n] = dlog_screen[n] * cache.orders[0][n];
    if (!delta.source.empty()) dw[0][n] += cache.screen[n] * delta.source[n];
  }

  Fft2 fft(g.nx, g.ny);
  std::vector<Complex> tmp(sz);
  for (int o = 0; o <= R; ++o) {
    const auto sw = sweep_for(o, g.nz);
    const auto& w = cache.orders[o];
    for (std::size_t a = sw.start; a != sw.last; a = step(a, sw.dir)) {
      const std::size_t b = step(a, sw.dir);
      for (std::size_t n = 0; n < sz; ++n) {
        const std::size_t ia = a * sz + n, ib = b * sz + n;
        const double za = cache.impedance[ia], zb = cache.impedance[ib];
        const double dcoef = d_coef_dza(za, zb) * d_z[ia] + d_coef_dzb(za, zb) * d_z[ib];
        tmp[n] = dcoef * w[ia] + transmission(za, zb) * dw[o][ia];
        if (o < R) dw[o + 1][ia] += dcoef * w[ia] + reflection(za, zb) * dw[o][ia];
      }
      diffract(fft, tmp, cache.kernel, false);
      for (std::size_t n = 0; n < sz; ++n) {
        const std::size_t ib = b * sz + n;
        const Complex screened = w[ib] - injected(cache, o, b, a, n);
        dw[o][ib] += dlog_screen[ib] * screened + cache.screen[ib] * tmp[n];
      }
    }
  }
  for (int o = 1; o <= R; ++o)
    for (std::size_t n = 0; n < total; ++n) dw[0][n] += dw[o][n];
  return std::move(dw[0]);
}

Array3<double> occupancy_gradient(const MediumGradient& grad, const AcousticMedium& base,
                                  const MaterialProperties& lens_material, std::size_t z_offset,
                                  std::size_t depth) {
  const GridSpec& g = base.grid;
  if (z_offset + depth > g.nz)
    throw std::invalid_argument("occupancy_gradient: lens extends beyond the grid");
  require_same_shape(grad.c, base.c, "occupancy_gradient");
  const double att = lens_material.attenuation_db_cm(g.frequency);
  Array3<double> out(g.nx, g.ny, depth);
  for (std::size_t k = 0; k < depth; ++k)
    for (std::size_t j = 0; j < g.ny; ++j)
      for (std::size_t i = 0; i < g.nx; ++i) {
        const std::size_t kk = z_offset + k;
        out(i, j, k) = grad.c(i, j, kk) * (lens_material.sound_speed - base.c(i, j, kk)) +
                       grad.rho(i, j, kk) * (lens_material.density - base.rho(i, j, kk)) +
                       grad.att(i, j, kk) * (att - base.att(i, j, kk));
      }
  return out;
}

ComplexField backproject(const Array2<Complex>& plane, const GridSpec& grid,
                         const std::vector<double>& distances) {
  if (plane.nx() != grid.nx || plane.ny() != grid.ny)
    throw std::invalid_argument("backproject: plane shape does not match grid");
  if (distances.empty()) throw std::invalid_argument("backproject: no distances requested");
  const double extent = static_cast<double>(grid.nz) * grid.dz;
  for (double d : distances)
    if (!std::isfinite(d) || std::abs(d) > extent * (1 + 1e-12))
      throw std::invalid_argument("backproject: distance " + std::to_string(d) +
                                  " m lies beyond the domain");

  const std::size_t sz = grid.nx * grid.ny;
  GridSpec out_grid = grid;
  out_grid.nz = distances.size();
  ComplexField out{out_grid, Array3<Complex>(grid.nx, grid.ny, distances.size())};

  Fft2 fft(grid.nx, grid.ny);
  std::vector<Complex> spectrum(plane.flat().begin(), plane.flat().end());
  fft.forward(spectrum);
  for (std::size_t m = 0; m < distances.size(); ++m) {
    // Conjugate kernel marches back toward the source; propagating waves only.
    const auto h = transfer_function(grid, -distances[m], EvanescentMode::truncate, 1.0);
    auto s = out.values.slice(m);
    for (std::size_t n = 0; n < sz; ++n) s[n] = spectrum[n] * h[n] / static_cast<double>(sz);
    fft.backward(s);
  }
  return out;
}

AcousticMedium reversed_subdomain(const AcousticMedium& medium, std::size_t from) {
  if (from >= medium.grid.nz)
    throw std::invalid_argument("reversed_subdomain: start slice outside grid");
  GridSpec g = medium.grid;
  g.nz = from + 1;
  AcousticMedium out{g, Array3<double>(g.nx, g.ny, g.nz), Array3<double>(g.nx, g.ny, g.nz),
                     Array3<double>(g.nx, g.ny, g.nz)};
  const std::size_t sz = g.nx * g.ny;
  for (std::size_t k = 0; k < g.nz; ++k)
    for (std::size_t n = 0; n < sz; ++n) {
      const std::size_t src = (from - k) * sz + n, dst = k * sz + n;
      out.c[dst] = medium.c[src];
      out.rho[dst] = medium.rho[src];
      out.att[dst] = medium.att[src];
    }
  return out;
}

}  // namespace toah
