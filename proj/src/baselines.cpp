#include "toah/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "toah/errors.hpp"

namespace toah {

double wrap_phase(double phi) {
  double w = std::fmod(phi, kTwoPi);
  if (w < 0) w += kTwoPi;
  if (w >= kTwoPi) w = 0;  // fmod of tiny negatives rounds up to 2 pi
  return w;
}

PhaseMap PhaseMap::wrapped(const Array2<double>& raw) {
  PhaseMap p{Array2<double>(raw.nx(), raw.ny())};
  for (std::size_t n = 0; n < raw.size(); ++n) p.phi[n] = wrap_phase(raw[n]);
  return p;
}

void PhaseMap::validate() const {
  if (phi.empty()) throw std::invalid_argument("phase map: empty");
  for (std::size_t n = 0; n < phi.size(); ++n)
    if (!(phi[n] >= 0 && phi[n] < kTwoPi))
      throw std::invalid_argument("phase map: values must lie in [0, 2 pi)");
}

PoahResult optimize_poah(const SourceSpec& src, const AcousticMedium& medium,
                         const TargetSpec& target, const OptimConfig& cfg,
                         const SolverConfig& solver, double lambda_energy, double lambda_balance,
                         const Array2<double>& phi0) {
  cfg.validate();
  target.validate();
  require_same_shape(src.aperture_mask, phi0, "optimize_poah");
  PoahResult result;
  result.report.lambda_energy = lambda_energy;
  result.report.lambda_balance = lambda_balance;
  Array2<double> phi = phi0;
  Adam adam(phi.size(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  Array2<double> grad(phi.nx(), phi.ny());

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto s = apply_phase_delays(src, phi);
    auto prop = propagate(s, medium, solver);
    const auto loss =
        evaluate_loss(prop.field.values, target, lambda_energy, lambda_balance, true);
    if (!std::isfinite(loss.total))
      throw NumericError("optimize_poah: loss is not finite at iteration " + std::to_string(it));
    result.report.record(loss.terms);
    const auto mg = propagate_adjoint(prop.cache, loss.gradient);
    // s = a exp(i phi): dL/dphi = Re(conj(g) i s) = -Im(conj(g) s).
    for (std::size_t n = 0; n < grad.size(); ++n)
      grad[n] = -std::imag(std::conj(mg.source[n]) * s[n]);
    adam.step(phi.flat(), grad.flat());
  }

  result.phase = PhaseMap::wrapped(phi);
  result.field = propagate(apply_phase_delays(src, result.phase.phi), medium, solver).field;
  return result;
}

double thickness_2pi(double frequency, double c0, double c_lens) {
  if (!(frequency > 0)) throw std::invalid_argument("phase_to_thickness: frequency must be positive");
  if (!(c0 > 0) || !(c_lens > 0))
    throw std::invalid_argument("phase_to_thickness: sound speeds must be positive");
  if (c0 == c_lens)
    throw std::invalid_argument("phase_to_thickness: lens and medium sound speeds are equal");
  return std::abs(1.0 / (frequency * (1.0 / c0 - 1.0 / c_lens)));
}

Array2<double> phase_to_thickness(const PhaseMap& phi, double frequency, double c0,
                                  double c_lens, double t_min, double t_max) {
  const double t2pi = thickness_2pi(frequency, c0, c_lens);
  if (!(t_min >= 0)) throw std::invalid_argument("phase_to_thickness: t_min must be >= 0");
  if (std::isnan(t_max)) t_max = t_min + t2pi;
  if (!(t_max >= t_min)) throw std::invalid_argument("phase_to_thickness: t_max < t_min");
  const bool fast = c_lens > c0;
  Array2<double> t(phi.phi.nx(), phi.phi.ny());
  for (std::size_t n = 0; n < t.size(); ++n) {
    const double p = wrap_phase(phi.phi[n]);
    const double delay = fast ? wrap_phase(kTwoPi - p) : p;
    t[n] = std::clamp(t_min + delay / kTwoPi * t2pi, t_min, t_max);
  }
  return t;
}

Array2<double> lens_transmission_phase(const Array2<double>& thickness, double frequency,
                                       double c0, double c_lens, double t_min) {
  Array2<double> out(thickness.nx(), thickness.ny());
  const double k = kTwoPi * frequency * (1.0 / c_lens - 1.0 / c0);
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = k * (thickness[n] - t_min);
  return out;
}

Array2<double> focusing_phase(const GridSpec& grid, double focal_distance, double c0) {
  if (!(focal_distance > 0)) throw std::invalid_argument("focusing_phase: focal distance must be positive");
  const double k = kTwoPi * grid.frequency / c0;
  Array2<double> out(grid.nx, grid.ny);
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const double r2 = grid.x(i) * grid.x(i) + grid.y(j) * grid.y(j);
      out(i, j) = wrap_phase(-k * (std::sqrt(r2 + focal_distance * focal_distance) -
                                   focal_distance));
    }
  return out;
}

double lens_phase_plane(double frequency, double c0, double c_lens, double t_min, double t_max) {
  const double top = std::min(t_max, t_min + thickness_2pi(frequency, c0, c_lens));
  return t_min + (top - t_min) / 3.0;
}

Array2<double> fresnel_lens_thickness(const GridSpec& grid, double focal_distance, double c0,
                                      double c_lens, double t_min, double t_max) {
  const double plane = lens_phase_plane(grid.frequency, c0, c_lens, t_min, t_max);
  if (!(focal_distance > plane))
    throw std::invalid_argument("fresnel_lens_thickness: focus lies inside the lens");
  const PhaseMap phi{focusing_phase(grid, focal_distance - plane, c0)};
  return phase_to_thickness(phi, grid.frequency, c0, c_lens, t_min, t_max);
}

Array2<Complex> time_reversal_field(const AcousticMedium& medium,
                                    const std::vector<std::array<std::size_t, 3>>& foci,
                                    const SolverConfig& cfg) {
  const auto& g = medium.grid;
  if (foci.empty()) throw std::invalid_argument("time_reversal: no foci given");
  Array2<Complex> sum(g.nx, g.ny);
  for (const auto& f : foci) {
    if (f[0] >= g.nx || f[1] >= g.ny || f[2] >= g.nz)
      throw std::invalid_argument("time_reversal: focus outside grid");
    if (f[2] < 3)
      throw std::invalid_argument("time_reversal: focus too close to the source plane");
    const auto sub = reversed_subdomain(medium, f[2]);
    Array2<Complex> point(g.nx, g.ny);
    point(f[0], f[1]) = 1.0;
    const auto prop = propagate(point, sub, cfg);
    const auto last = prop.field.values.slice(sub.grid.nz - 1);
    for (std::size_t n = 0; n < sum.size(); ++n) sum[n] += last[n];
  }
  return sum;
}

PhaseMap time_reversal(const SourceSpec& src, const AcousticMedium& medium,
                       const std::vector<std::array<std::size_t, 3>>& foci,
                       const SolverConfig& cfg) {
  validate_source(src, medium.grid);
  const auto sum = time_reversal_field(medium, foci, cfg);
  Array2<double> raw(sum.nx(), sum.ny());
  for (std::size_t n = 0; n < raw.size(); ++n) raw[n] = -std::arg(sum[n]);
  return PhaseMap::wrapped(raw);
}

namespace {

Fabrication embed_and_run(LensVolume lens, const SourceSpec& src, const AcousticMedium& base,
                          const FabricationParams& params) {
  if (params.cutoff > 0) lens = fabrication_filter(lens, params.cutoff, base.grid.dx);
  Fabrication fab;
  fab.medium = embed_lens(base, lens, params.lens_material, params.z_offset);
  fab.lens = std::move(lens);
  fab.field = propagate(source_plane(src), fab.medium, params.solver).field;
  return fab;
}

}  // namespace

Fabrication fabricate_phase(const PhaseMap& phi, const SourceSpec& src,
                            const AcousticMedium& base, const FabricationParams& params) {
  phi.validate();
  const auto t = phase_to_thickness(phi, base.grid.frequency, params.c0,
                                    params.lens_material.sound_speed, params.t_min, params.t_max);
  Array2<double> voxels(t.nx(), t.ny());
  for (std::size_t n = 0; n < t.size(); ++n) voxels[n] = t[n] / base.grid.dz;
  return embed_and_run(lens_from_thickness(voxels, params.depth), src, base, params);
}

Fabrication fabricate_lens(const LensVolume& lens, const SourceSpec& src,
                           const AcousticMedium& base, const FabricationParams& params) {
  return embed_and_run(binarize(lens), src, base, params);
}

}  // namespace toah
