#include "toah/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "toah/errors.hpp"

namespace toah {

void TargetSpec::validate() const {
  if (focus_centers.empty()) throw std::invalid_argument("target: at least one focus required");
  if (omega.size() != focus_labels.size())
    throw std::invalid_argument("target: focus labels do not partition omega");
  for (std::size_t n = 0; n < a_target.size(); ++n)
    if (!(a_target[n] >= 0 && a_target[n] <= 1))
      throw std::invalid_argument("target: amplitude must lie in [0, 1]");
  std::size_t count = 0;
  for (std::size_t n = 0; n < a_target.size(); ++n) count += a_target[n] == 1.0;
  if (count != omega.size()) throw std::invalid_argument("target: omega != {a_target == 1}");
  for (std::size_t n = 0; n < omega.size(); ++n) {
    if (a_target[omega[n]] != 1.0) throw std::invalid_argument("target: omega != {a_target == 1}");
    if (focus_labels[n] < 0 || static_cast<std::size_t>(focus_labels[n]) >= n_foci())
      throw std::invalid_argument("target: focus label out of range");
  }
}

std::array<std::size_t, 3> nearest_voxel(const GridSpec& grid, const std::array<double, 3>& p) {
  auto idx = [](double v, double origin, double d, std::size_t n) {
    const double f = std::round((v - origin) / d);
    if (f < 0 || f > static_cast<double>(n - 1))
      throw std::invalid_argument("target: focus lies outside the grid");
    return static_cast<std::size_t>(f);
  };
  return {idx(p[0], grid.x(0), grid.dx, grid.nx), idx(p[1], grid.y(0), grid.dy, grid.ny),
          idx(p[2], grid.z(0), grid.dz, grid.nz)};
}

TargetSpec make_target(const GridSpec& grid, Array3<double> a_target,
                       const std::vector<std::array<double, 3>>& centers) {
  if (a_target.nx() != grid.nx || a_target.ny() != grid.ny || a_target.nz() != grid.nz)
    throw std::invalid_argument("target: amplitude map shape does not match grid");
  if (centers.empty()) throw std::invalid_argument("target: at least one focus required");
  TargetSpec t;
  t.a_target = std::move(a_target);
  t.focus_centers = centers;
  for (const auto& c : centers) t.focus_voxels.push_back(nearest_voxel(grid, c));
  for (std::size_t k = 0; k < grid.nz; ++k)
    for (std::size_t j = 0; j < grid.ny; ++j)
      for (std::size_t i = 0; i < grid.nx; ++i) {
        const std::size_t n = t.a_target.index(i, j, k);
        if (t.a_target[n] != 1.0) continue;
        int best = 0;
        double best_d = 1e300;
        for (std::size_t f = 0; f < centers.size(); ++f) {
          const double d = std::pow(grid.x(i) - centers[f][0], 2) +
                           std::pow(grid.y(j) - centers[f][1], 2) +
                           std::pow(grid.z(k) - centers[f][2], 2);
          if (d < best_d) best_d = d, best = static_cast<int>(f);
        }
        t.omega.push_back(n);
        t.focus_labels.push_back(best);
      }
  t.validate();
  return t;
}

TargetSpec make_spherical_target(const GridSpec& grid,
                                 const std::vector<std::array<double, 3>>& centers,
                                 const std::vector<double>& radii) {
  if (radii.size() != centers.size())
    throw std::invalid_argument("target: one radius per focus required");
  Array3<double> a(grid.nx, grid.ny, grid.nz, 0.0);
  for (std::size_t f = 0; f < centers.size(); ++f) {
    const auto v = nearest_voxel(grid, centers[f]);
    a(v[0], v[1], v[2]) = 1.0;
    for (std::size_t k = 0; k < grid.nz; ++k)
      for (std::size_t j = 0; j < grid.ny; ++j)
        for (std::size_t i = 0; i < grid.nx; ++i) {
          const double d = std::sqrt(std::pow(grid.x(i) - centers[f][0], 2) +
                                     std::pow(grid.y(j) - centers[f][1], 2) +
                                     std::pow(grid.z(k) - centers[f][2], 2));
          if (d <= radii[f]) a(i, j, k) = 1.0;
        }
  }
  return make_target(grid, std::move(a), centers);
}

namespace {

void check_field(const Array3<Complex>& p, const TargetSpec& target) {
  if (!p.same_shape(target.a_target))
    throw std::invalid_argument("loss: field and target shapes differ");
}

struct AccParts {
  double value, cross, a4, i4;
};

AccParts acc_parts(const Array3<Complex>& p, const TargetSpec& target) {
  double cross = 0, a4 = 0, i4 = 0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    const double a2 = target.a_target[n] * target.a_target[n];
    const double in = std::norm(p[n]);
    cross += a2 * in;
    a4 += a2 * a2;
    i4 += in * in;
  }
  const double denom = std::sqrt(a4 * i4);
  return {denom > 0 ? 1.0 - cross / denom : 1.0, cross, a4, i4};
}

double energy_value(const Array3<Complex>& p, const TargetSpec& target, double& a_sum) {
  double num = 0;
  a_sum = 0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    num += target.a_target[n] * std::abs(p[n]);
    a_sum += target.a_target[n];
  }
  if (!(a_sum > 0)) throw std::invalid_argument("loss_energy: empty target");
  return -num / a_sum;
}

double balance_value(const Array3<Complex>& p, const TargetSpec& target, double& mean) {
  const std::size_t m = target.omega.size();
  if (m == 0) throw std::invalid_argument("loss_balance: empty omega");
  mean = 0;
  for (auto n : target.omega) mean += target.a_target[n] * std::norm(p[n]);
  mean /= static_cast<double>(m);
  double var = 0;
  for (auto n : target.omega) {
    const double d = target.a_target[n] * std::norm(p[n]) - mean;
    var += d * d;
  }
  return std::sqrt(var / static_cast<double>(m));
}

}  // namespace

double loss_acc(const ComplexField& p, const TargetSpec& target) {
  check_field(p.values, target);
  return acc_parts(p.values, target).value;
}

double loss_energy(const ComplexField& p, const TargetSpec& target) {
  check_field(p.values, target);
  double a_sum;
  return energy_value(p.values, target, a_sum);
}

double loss_balance(const ComplexField& p, const TargetSpec& target) {
  check_field(p.values, target);
  double mean;
  return balance_value(p.values, target, mean);
}

LossEvaluation evaluate_loss(const Array3<Complex>& p, const TargetSpec& target,
                             double lambda_energy, double lambda_balance, bool with_gradient) {
  check_field(p, target);
  LossEvaluation out;
  const auto acc = acc_parts(p, target);
  double a_sum, mean;
  out.terms = {acc.value, energy_value(p, target, a_sum), balance_value(p, target, mean)};
  out.total = out.terms.total(lambda_energy, lambda_balance);
  if (!with_gradient) return out;

  // dL/dI per voxel, then dI/dP = 2P; the energy term goes through |P|.
  out.gradient = Array3<Complex>(p.nx(), p.ny(), p.nz());
  const double denom = std::sqrt(acc.a4 * acc.i4);
  for (std::size_t n = 0; n < p.size(); ++n) {
    double d_intensity = 0;
    if (denom > 0) {
      const double a2 = target.a_target[n] * target.a_target[n];
      d_intensity = -(a2 - acc.cross * std::norm(p[n]) / acc.i4) / denom;
    }
    Complex g = 2.0 * d_intensity * p[n];
    const double mag = std::abs(p[n]);
    if (mag > 0 && target.a_target[n] != 0)
      g += lambda_energy * (-target.a_target[n] / a_sum) * (p[n] / mag);
    out.gradient[n] = g;
  }
  if (out.terms.balance > 0) {
    const double m = static_cast<double>(target.omega.size());
    for (auto n : target.omega) {
      const double a = target.a_target[n];
      const double ds = (a * std::norm(p[n]) - mean) / (m * out.terms.balance);
      out.gradient[n] += lambda_balance * ds * a * 2.0 * p[n];
    }
  }
  return out;
}

void LossReport::record(const LossTerms& terms) {
  acc.push_back(terms.acc);
  energy.push_back(terms.energy);
  balance.push_back(terms.balance);
  total.push_back(terms.total(lambda_energy, lambda_balance));
}

double LossReport::recombination_error() const {
  double worst = 0;
  for (std::size_t n = 0; n < total.size(); ++n)
    worst = std::max(worst, std::abs(total[n] - (acc[n] + lambda_energy * energy[n] +
                                                 lambda_balance * balance[n])));
  return worst;
}

void OptimConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("optim: learning rate must be positive");
  if (!(lambda_energy >= 0) || !(lambda_balance >= 0))
    throw std::invalid_argument("optim: loss weights must be non-negative");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    throw std::invalid_argument("optim: Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0)) throw std::invalid_argument("optim: Adam epsilon must be positive");
  beta_schedule.validate();
}

Adam::Adam(std::size_t n, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t n = 0; n < params.size(); ++n) {
    m_[n] = b1_ * m_[n] + (1 - b1_) * grad[n];
    v_[n] = b2_ * v_[n] + (1 - b2_) * grad[n] * grad[n];
    params[n] -= lr_ * (m_[n] / c1) / (std::sqrt(v_[n] / c2) + eps_);
  }
}

Array2<double> random_theta(std::size_t nx, std::size_t ny, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Array2<double> theta(nx, ny);
  for (std::size_t n = 0; n < theta.size(); ++n) theta[n] = dist(rng);
  return theta;
}

DesignField ToahProblem::design_for(const Array2<double>& theta) const {
  DesignField d = design;
  d.theta = theta;
  return d;
}

ToahProblem::Evaluation ToahProblem::evaluate(const Array2<double>& theta, double beta,
                                              bool with_gradient) const {
  const auto d = design_for(theta);
  Evaluation ev;
  ev.lens = dhla_forward(d, beta, smoothing);
  const auto medium = embed_lens_soft(base, ev.lens, lens_material, z_offset);
  auto prop = propagate(source, medium, solver);
  auto loss = evaluate_loss(prop.field.values, target, lambda_energy, lambda_balance,
                            with_gradient);
  ev.terms = loss.terms;
  ev.total = loss.total;
  if (with_gradient) {
    const auto mg = propagate_adjoint(prop.cache, loss.gradient);
    const auto gv = occupancy_gradient(mg, base, lens_material, z_offset, d.depth);
    ev.gradient = dhla_backward(d, beta, smoothing, gv);
  }
  ev.field = std::move(prop.field);
  return ev;
}

ToahResult optimize_toah(const ToahProblem& problem, const Array2<double>& theta0,
                         const OptimConfig& cfg, double fab_cutoff_m,
                         const CheckpointFn& checkpoint) {
  cfg.validate();
  problem.target.validate();
  ToahResult result;
  result.report.lambda_energy = problem.lambda_energy;
  result.report.lambda_balance = problem.lambda_balance;
  Array2<double> theta = theta0;
  Adam adam(theta.size(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  const std::size_t n_iter = cfg.iterations;

  for (std::size_t it = 0; it < n_iter; ++it) {
    const double beta = cfg.beta_schedule.at(it, n_iter);
    auto ev = problem.evaluate(theta, beta, true);
    if (!std::isfinite(ev.total))
      throw NumericError("optimize_toah: loss is not finite at iteration " + std::to_string(it) +
                         " (acc=" + std::to_string(ev.terms.acc) +
                         ", energy=" + std::to_string(ev.terms.energy) +
                         ", balance=" + std::to_string(ev.terms.balance) + ")");
    result.report.record(ev.terms);
    adam.step(theta.flat(), ev.gradient.flat());
    if (checkpoint && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0)
      checkpoint(it + 1, theta);
  }

  const double beta_final = n_iter > 0 ? cfg.beta_schedule.at(n_iter - 1, n_iter)
                                       : cfg.beta_schedule.beta_start;
  auto final_eval = problem.evaluate(theta, beta_final, false);
  result.final_terms = final_eval.terms;
  result.final_total = final_eval.total;
  result.design = problem.design_for(theta);
  result.soft_lens = std::move(final_eval.lens);
  result.lens = binarize(result.soft_lens);
  if (fab_cutoff_m > 0)
    result.lens = fabrication_filter(result.lens, fab_cutoff_m, problem.base.grid.dx);
  result.field = std::move(final_eval.field);
  return result;
}

GradcheckResult gradcheck(const std::function<double(std::span<const double>)>& fn,
                          std::span<const double> gradient, std::span<const double> point,
                          double step, std::size_t n_coords, std::uint64_t seed) {
  if (!(step > 0)) throw std::invalid_argument("gradcheck: step must be positive");
  if (gradient.size() != point.size())
    throw std::invalid_argument("gradcheck: gradient and point sizes differ");
  std::vector<std::size_t> order(point.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(n_coords, order.size()));
  std::sort(order.begin(), order.end());

  GradcheckResult r;
  r.coords = order;
  std::vector<double> x(point.begin(), point.end());
  double scale = 0;
  for (auto c : order) {
    const double x0 = x[c];
    x[c] = x0 + step;
    const double fp = fn(x);
    x[c] = x0 - step;
    const double fm = fn(x);
    x[c] = x0;
    r.finite_difference.push_back((fp - fm) / (2 * step));
    r.adjoint.push_back(gradient[c]);
    scale = std::max(scale, std::abs(gradient[c]));
  }
  const double floor = 1e-3 * scale;
  for (std::size_t n = 0; n < order.size(); ++n) {
    const double fd = r.finite_difference[n], ad = r.adjoint[n];
    const double denom = std::max({std::abs(fd), std::abs(ad), floor});
    if (denom > 0) r.max_relative_error = std::max(r.max_relative_error, std::abs(fd - ad) / denom);
  }
  return r;
}

}  // namespace toah
