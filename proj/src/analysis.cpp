#include "toah/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

#include "toah/errors.hpp"

namespace toah {

double cross_domain_psnr(const Array3<Complex>& reference, const Array3<Complex>& test) {
  if (!reference.same_shape(test)) throw std::invalid_argument("psnr: field shapes differ");
  double ref_max = 0, test_max = 0;
  for (std::size_t n = 0; n < reference.size(); ++n) {
    ref_max = std::max(ref_max, std::abs(reference[n]));
    test_max = std::max(test_max, std::abs(test[n]));
  }
  if (!(ref_max > 0)) throw std::invalid_argument("psnr: reference field is zero");
  double mse = 0;
  for (std::size_t n = 0; n < reference.size(); ++n) {
    const double a = std::abs(reference[n]) / ref_max;
    const double b = test_max > 0 ? std::abs(test[n]) / test_max : 0.0;
    mse += (a - b) * (a - b);
  }
  mse /= static_cast<double>(reference.size());
  if (mse == 0) return kPsnrSentinel;
  return std::min(kPsnrSentinel, 10.0 * std::log10(1.0 / mse));
}

double cross_domain_psnr(const ComplexField& reference, const ComplexField& test) {
  if (!(reference.grid == test.grid)) throw std::invalid_argument("psnr: grids differ");
  return cross_domain_psnr(reference.values, test.values);
}

Array3<double> amplitude(const Array3<Complex>& p) {
  Array3<double> a(p.nx(), p.ny(), p.nz());
  for (std::size_t n = 0; n < p.size(); ++n) a[n] = std::abs(p[n]);
  return a;
}

std::size_t Segmentation::n_components() const {
  std::vector<int> ids;
  for (int c : component)
    if (c >= 0 && std::find(ids.begin(), ids.end(), c) == ids.end()) ids.push_back(c);
  return ids.size();
}

Segmentation segment_foci(const Array3<double>& amp,
                          const std::vector<std::array<std::size_t, 3>>& seeds,
                          double threshold_db) {
  const std::size_t nx = amp.nx(), ny = amp.ny(), nz = amp.nz();
  for (const auto& s : seeds)
    if (s[0] >= nx || s[1] >= ny || s[2] >= nz)
      throw std::invalid_argument("segment_foci: seed outside grid");
  double peak = 0;
  for (double v : amp.flat()) peak = std::max(peak, v);

  Segmentation seg;
  seg.threshold = std::pow(10.0, threshold_db / 20.0) * peak;
  seg.segments.resize(seeds.size());
  seg.component.assign(seeds.size(), -1);
  if (!(peak > 0)) return seg;

  std::vector<int> label(amp.size(), -1);
  int next = 0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const std::size_t start = amp.index(seeds[s][0], seeds[s][1], seeds[s][2]);
    if (amp[start] < seg.threshold) continue;
    if (label[start] >= 0) {
      seg.component[s] = label[start];
      for (std::size_t t = 0; t < s; ++t)
        if (seg.component[t] == label[start]) {
          seg.segments[s] = seg.segments[t];
          break;
        }
      continue;
    }
    const int id = next++;
    std::vector<std::size_t> region;
    std::deque<std::size_t> queue{start};
    label[start] = id;
    while (!queue.empty()) {
      const std::size_t n = queue.front();
      queue.pop_front();
      region.push_back(n);
      const std::size_t i = n % nx, j = (n / nx) % ny, k = n / (nx * ny);
      auto visit = [&](std::size_t m) {
        if (label[m] < 0 && amp[m] >= seg.threshold) {
          label[m] = id;
          queue.push_back(m);
        }
      };
      if (i > 0) visit(n - 1);
      if (i + 1 < nx) visit(n + 1);
      if (j > 0) visit(n - nx);
      if (j + 1 < ny) visit(n + nx);
      if (k > 0) visit(n - nx * ny);
      if (k + 1 < nz) visit(n + nx * ny);
    }
    std::sort(region.begin(), region.end());
    seg.component[s] = id;
    seg.segments[s] = std::move(region);
  }
  return seg;
}

Segmentation segment_foci(const ComplexField& p,
                          const std::vector<std::array<std::size_t, 3>>& seeds,
                          double threshold_db) {
  return segment_foci(amplitude(p.values), seeds, threshold_db);
}

double fwhm_1d(const std::vector<double>& profile, std::size_t peak, double spacing) {
  if (peak >= profile.size()) throw std::invalid_argument("fwhm: peak index out of range");
  const double half = 0.5 * profile[peak];
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (!(half > 0)) return nan;
  double right = nan, left = nan;
  for (std::size_t i = peak + 1; i < profile.size(); ++i)
    if (profile[i] < half) {
      right = static_cast<double>(i - 1) + (profile[i - 1] - half) / (profile[i - 1] - profile[i]);
      break;
    }
  for (std::size_t i = peak; i-- > 0;)
    if (profile[i] < half) {
      left = static_cast<double>(i + 1) - (profile[i + 1] - half) / (profile[i + 1] - profile[i]);
      break;
    }
  return (right - left) * spacing;
}

FocalReport focal_metrics(const ComplexField& p, const Segmentation& seg,
                          const Array3<double>* exterior) {
  const auto amp = amplitude(p.values);
  if (exterior && !exterior->same_shape(amp))
    throw std::invalid_argument("focal_metrics: exterior mask shape differs from field");
  bool any = false;
  for (const auto& s : seg.segments) any = any || !s.empty();
  if (!any) throw std::invalid_argument("focal_metrics: empty segments");

  double global = 0;
  for (double v : amp.flat()) global = std::max(global, v);
  const auto& g = p.grid;
  FocalReport report;
  std::vector<char> inside(amp.size(), 0);
  for (const auto& s : seg.segments) {
    FocusMetrics m;
    if (!s.empty()) {
      std::size_t best = s.front();
      for (auto n : s)
        if (amp[n] > amp[best]) best = n;
      for (auto n : s) inside[n] = 1;
      const std::size_t i = best % g.nx, j = (best / g.nx) % g.ny, k = best / (g.nx * g.ny);
      m.peak_voxel = {i, j, k};
      m.peak_amplitude = amp[best];
      m.peak_pressure = amp[best] / global;
      std::vector<double> px(g.nx), py(g.ny), pz(g.nz);
      for (std::size_t a = 0; a < g.nx; ++a) px[a] = amp(a, j, k);
      for (std::size_t a = 0; a < g.ny; ++a) py[a] = amp(i, a, k);
      for (std::size_t a = 0; a < g.nz; ++a) pz[a] = amp(i, j, a);
      m.fwhm_x = fwhm_1d(px, i, g.dx);
      m.fwhm_y = fwhm_1d(py, j, g.dy);
      m.fwhm_z = fwhm_1d(pz, k, g.dz);
      m.volume_m3 = static_cast<double>(s.size()) * g.voxel_volume();
    }
    report.foci.push_back(m);
  }

  double sum_in = 0, sum_out = 0;
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t n = 0; n < amp.size(); ++n) {
    if (inside[n]) {
      sum_in += amp[n];
      ++n_in;
    } else if (!exterior || (*exterior)[n] != 0) {
      sum_out += amp[n];
      ++n_out;
    }
  }
  const double mean_in = sum_in / static_cast<double>(n_in);
  report.leakage_ratio = n_out > 0 && mean_in > 0 ? (sum_out / n_out) / mean_in : 0.0;

  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (const auto& m : report.foci) {
    const double i2 = m.peak_amplitude * m.peak_amplitude;
    lo = std::min(lo, i2);
    hi = std::max(hi, i2);
  }
  report.uniformity = hi > 0 ? lo / hi : 0.0;
  report.n_components = seg.n_components();
  return report;
}

void ThermalConfig::validate() const {
  for (const auto& t : {bone, soft})
    if (!(t.conductivity > 0) || !(t.specific_heat > 0))
      throw std::invalid_argument("thermal: conductivity and specific heat must be positive");
  if (!(heat_duration >= 0) || !(cool_duration >= 0))
    throw std::invalid_argument("thermal: phase durations must be non-negative");
  if (!(dt >= 0)) throw std::invalid_argument("thermal: dt must be non-negative");
  if (!(perfusion_rate >= 0)) throw std::invalid_argument("thermal: perfusion rate must be >= 0");
  if (!(reference_pressure > 0))
    throw std::invalid_argument("thermal: reference pressure must be positive");
}

namespace {

struct ThermalGrid {
  std::vector<double> heat_capacity;  // rho C per voxel, J / (m^3 degC)
  std::vector<double> gx, gy, gz;     // face conductance k_face / d^2 to the +1 neighbour
};

ThermalGrid thermal_grid(const AcousticMedium& medium, const ThermalConfig& cfg) {
  const auto& g = medium.grid;
  const std::size_t n = medium.c.size();
  ThermalGrid t;
  t.heat_capacity.resize(n);
  std::vector<double> k(n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto& tissue = medium.rho[v] >= cfg.bone_density_threshold ? cfg.bone : cfg.soft;
    k[v] = tissue.conductivity;
    t.heat_capacity[v] = medium.rho[v] * tissue.specific_heat;
  }
  auto face = [&](std::size_t a, std::size_t b, double d) {
    return 2.0 * k[a] * k[b] / (k[a] + k[b]) / (d * d);
  };
  t.gx.assign(n, 0.0);
  t.gy.assign(n, 0.0);
  t.gz.assign(n, 0.0);
  const std::size_t sxy = g.nx * g.ny;
  for (std::size_t z = 0; z < g.nz; ++z)
    for (std::size_t y = 0; y < g.ny; ++y)
      for (std::size_t x = 0; x < g.nx; ++x) {
        const std::size_t v = z * sxy + y * g.nx + x;
        if (x + 1 < g.nx) t.gx[v] = face(v, v + 1, g.dx);
        if (y + 1 < g.ny) t.gy[v] = face(v, v + g.nx, g.dy);
        if (z + 1 < g.nz) t.gz[v] = face(v, v + sxy, g.dz);
      }
  return t;
}

double stability_limit(const ThermalGrid& t, const AcousticMedium& medium, double perfusion) {
  const auto& g = medium.grid;
  const std::size_t sxy = g.nx * g.ny;
  std::vector<double> total(t.heat_capacity.size(), 0.0);
  for (std::size_t v = 0; v < total.size(); ++v) {
    total[v] += t.gx[v] + t.gy[v] + t.gz[v];
    if (t.gx[v] > 0) total[v + 1] += t.gx[v];
    if (t.gy[v] > 0) total[v + g.nx] += t.gy[v];
    if (t.gz[v] > 0) total[v + sxy] += t.gz[v];
  }
  double limit = std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < total.size(); ++v) {
    const double rate = total[v] / t.heat_capacity[v] + perfusion;
    if (rate > 0) limit = std::min(limit, 1.0 / rate);
  }
  return limit;
}

}  // namespace

double thermal_stability_limit(const AcousticMedium& medium, const ThermalConfig& cfg) {
  cfg.validate();
  medium.validate();
  return stability_limit(thermal_grid(medium, cfg), medium, cfg.perfusion_rate);
}

ThermalResult bioheat_simulate(const ComplexField& p, const AcousticMedium& medium,
                               const ThermalConfig& cfg) {
  cfg.validate();
  medium.validate();
  if (!(p.grid == medium.grid)) throw std::invalid_argument("bioheat: field and medium grids differ");
  const auto& g = medium.grid;
  const std::size_t n = medium.c.size(), sxy = g.nx * g.ny;
  const auto tg = thermal_grid(medium, cfg);
  const double limit = stability_limit(tg, medium, cfg.perfusion_rate);
  if (cfg.dt > 0 && cfg.dt > limit)
    throw std::invalid_argument("bioheat: dt " + std::to_string(cfg.dt) +
                                " s exceeds the stability limit " + std::to_string(limit) + " s");

  std::vector<double> q(n);
  for (std::size_t v = 0; v < n; ++v) {
    const double alpha = medium.att[v] * kNeperPerMeterPerDbPerCm;
    q[v] = alpha * std::norm(p.values[v]) / (medium.rho[v] * medium.c[v]);
  }

  ThermalResult r;
  r.final_rise = Array3<double>(g.nx, g.ny, g.nz, 0.0);
  r.peak_rise = Array3<double>(g.nx, g.ny, g.nz, 0.0);
  auto& temp = r.final_rise;
  std::vector<double> rate(n);

  auto plan = [&](double duration, std::size_t& steps) {
    const double dt = cfg.dt > 0 ? cfg.dt : limit;
    steps = duration > 0 ? static_cast<std::size_t>(std::ceil(duration / dt - 1e-9)) : 0;
    return steps > 0 ? duration / static_cast<double>(steps) : 0.0;
  };
  std::size_t heat_steps, cool_steps;
  r.dt_heat = plan(cfg.heat_duration, heat_steps);
  r.dt_cool = plan(cfg.cool_duration, cool_steps);

  auto step = [&](double dt, bool heating) {
    for (std::size_t v = 0; v < n; ++v)
      rate[v] = (heating ? q[v] : 0.0) - cfg.perfusion_rate * tg.heat_capacity[v] * temp[v];
    for (std::size_t v = 0; v < n; ++v) {
      if (tg.gx[v] > 0) {
        const double f = tg.gx[v] * (temp[v + 1] - temp[v]);
        rate[v] += f;
        rate[v + 1] -= f;
      }
      if (tg.gy[v] > 0) {
        const double f = tg.gy[v] * (temp[v + g.nx] - temp[v]);
        rate[v] += f;
        rate[v + g.nx] -= f;
      }
      if (tg.gz[v] > 0) {
        const double f = tg.gz[v] * (temp[v + sxy] - temp[v]);
        rate[v] += f;
        rate[v + sxy] -= f;
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      temp[v] += dt * rate[v] / tg.heat_capacity[v];
      r.peak_rise[v] = std::max(r.peak_rise[v], temp[v]);
    }
    ++r.steps;
  };

  for (std::size_t c = 0; c < cfg.n_cycles; ++c) {
    for (std::size_t s = 0; s < heat_steps; ++s) step(r.dt_heat, true);
    for (std::size_t s = 0; s < cool_steps; ++s) step(r.dt_cool, false);
  }
  for (double v : temp.flat())
    if (!std::isfinite(v)) throw NumericError("bioheat: temperature is not finite");
  return r;
}

ComplexField normalize_peak(const ComplexField& p, const std::vector<std::size_t>& region,
                            double pressure) {
  if (region.empty()) throw std::invalid_argument("normalize_peak: empty region");
  double peak = 0;
  for (auto n : region) {
    if (n >= p.values.size()) throw std::invalid_argument("normalize_peak: index out of range");
    peak = std::max(peak, std::abs(p.values[n]));
  }
  if (!(peak > 0)) throw NumericError("normalize_peak: field is zero over the region");
  ComplexField out = p;
  const double s = pressure / peak;
  for (auto& v : out.values.flat()) v *= s;
  return out;
}

std::vector<std::size_t> bone_voxels(const AcousticMedium& medium, const ThermalConfig& cfg) {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < medium.rho.size(); ++v)
    if (medium.rho[v] >= cfg.bone_density_threshold) out.push_back(v);
  return out;
}

Array2<double> perturb_thickness(const Array2<double>& thickness, double sigma_voxels,
                                 std::uint64_t seed) {
  if (!(sigma_voxels >= 0)) throw std::invalid_argument("perturb: sigma must be >= 0");
  Array2<double> out = thickness;
  if (sigma_voxels == 0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma_voxels);
  for (auto& v : out.flat()) v += noise(rng);
  return out;
}

LensVolume perturb_lens(const LensVolume& lens, double sigma, double dz, double v_min,
                        double v_max, std::uint64_t seed) {
  if (!(sigma >= 0)) throw std::invalid_argument("perturb: sigma must be >= 0");
  if (!(dz > 0)) throw std::invalid_argument("perturb: dz must be positive");
  if (!(v_max >= v_min)) throw std::invalid_argument("perturb: v_max < v_min");
  if (sigma == 0) return lens;
  auto t = perturb_thickness(lens.thickness, sigma / dz, seed);
  for (auto& v : t.flat()) v = std::clamp(v, v_min, v_max);
  return lens_from_thickness(t, lens.depth());
}

std::vector<MaterialProperties> resin_property_cases() {
  const auto base = MaterialProperties::form_clear();
  std::vector<MaterialProperties> out;
  for (auto [c, rho] : {std::pair{2424.0, 1100.0}, {2440.0, 1162.0}, {2591.0, 1178.0},
                        {2700.0, 1180.0}}) {
    MaterialProperties m = base;
    m.sound_speed = c;
    m.density = rho;
    out.push_back(m);
  }
  return out;
}

void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

FocalReport focal_report(const ComplexField& p,
                         const std::vector<std::array<std::size_t, 3>>& seeds) {
  const auto seg = segment_foci(p, seeds);
  if (seg.n_components() == 0) {
    FocalReport r;
    r.foci.resize(seeds.size());
    r.leakage_ratio = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  return focal_metrics(p, seg);
}

std::vector<SweepCase> sweep_material(const LensVolume& lens, const SourceSpec& src,
                                      const AcousticMedium& base,
                                      const std::vector<MaterialProperties>& materials,
                                      std::size_t z_offset, const SolverConfig& solver,
                                      const std::vector<std::array<std::size_t, 3>>& seeds,
                                      std::size_t jobs) {
  std::vector<SweepCase> out(materials.size());
  const auto hard = binarize(lens);
  const auto plane = source_plane(src);
  parallel_for(materials.size(), jobs, [&](std::size_t i) {
    materials[i].validate();
    const auto medium = embed_lens(base, hard, materials[i], z_offset);
    const auto field = propagate(plane, medium, solver).field;
    out[i].material = materials[i];
    out[i].report = focal_report(field, seeds);
  });
  return out;
}

}  // namespace toah
