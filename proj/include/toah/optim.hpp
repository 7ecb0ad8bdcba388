#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "toah/dhla.hpp"
#include "toah/medium.hpp"
#include "toah/solver.hpp"

namespace toah {

/// Amplitude-only target. `omega` holds the flat indices where a_target == 1
/// and `focus_labels[n]` names the focus that omega[n] belongs to.
struct TargetSpec {
  Array3<double> a_target;
  std::vector<std::size_t> omega;
  std::vector<int> focus_labels;
  std::vector<std::array<double, 3>> focus_centers;      // m, grid coordinates
  std::vector<std::array<std::size_t, 3>> focus_voxels;  // nearest voxel of each centre

  std::size_t n_foci() const { return focus_centers.size(); }
  void validate() const;
};

std::array<std::size_t, 3> nearest_voxel(const GridSpec& grid, const std::array<double, 3>& p);

/// Binary spheres of the given radii around each centre. Each focus contains
/// at least its nearest voxel. Omega voxels are labelled by the nearest centre.
TargetSpec make_spherical_target(const GridSpec& grid,
                                 const std::vector<std::array<double, 3>>& centers,
                                 const std::vector<double>& radii);

/// Wraps an arbitrary amplitude map; omega = {a == 1}.
TargetSpec make_target(const GridSpec& grid, Array3<double> a_target,
                       const std::vector<std::array<double, 3>>& centers);

struct LossTerms {
  double acc = 0, energy = 0, balance = 0;
  double total(double lambda_energy, double lambda_balance) const {
    return acc + lambda_energy * energy + lambda_balance * balance;
  }
};

double loss_acc(const ComplexField& p, const TargetSpec& target);
double loss_energy(const ComplexField& p, const TargetSpec& target);
double loss_balance(const ComplexField& p, const TargetSpec& target);

struct LossEvaluation {
  LossTerms terms;
  double total = 0;
  Array3<Complex> gradient;  // dL/dRe P + i dL/dIm P, empty unless requested
};

/// Weighted total loss and, optionally, its gradient with respect to P.
LossEvaluation evaluate_loss(const Array3<Complex>& p, const TargetSpec& target,
                             double lambda_energy, double lambda_balance, bool with_gradient);

struct LossReport {
  double lambda_energy = 0.2, lambda_balance = 0.5;
  std::vector<double> total, acc, energy, balance;

  void record(const LossTerms& terms);
  std::size_t size() const { return total.size(); }
  /// max |total - (acc + le * energy + lb * balance)| over the history.
  double recombination_error() const;
};

struct OptimConfig {
  double learning_rate = 1.0;
  std::size_t iterations = 200;
  double lambda_energy = 0.2;
  double lambda_balance = 0.5;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_epsilon = 1e-8;
  BetaSchedule beta_schedule;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 disables checkpoints

  void validate() const;
};

class Adam {
 public:
  Adam(std::size_t n, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);
  std::size_t iterations() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

/// Uniform [-1, 1] initial design map.
Array2<double> random_theta(std::size_t nx, std::size_t ny, std::uint64_t seed);

/// The differentiable TOAH chain: theta -> DHLA -> soft embedding -> field -> loss.
struct ToahProblem {
  SourceSpec source;
  AcousticMedium base;
  TargetSpec target;
  DesignField design;  // theta is ignored; alpha, bounds and depth are used
  SmoothingParams smoothing;
  MaterialProperties lens_material = MaterialProperties::form_clear();
  std::size_t z_offset = 0;
  SolverConfig solver;
  double lambda_energy = 0.2, lambda_balance = 0.5;

  struct Evaluation {
    LossTerms terms;
    double total = 0;
    Array2<double> gradient;  // dL/dtheta, empty unless requested
    ComplexField field;
    LensVolume lens;
  };

  Evaluation evaluate(const Array2<double>& theta, double beta, bool with_gradient) const;
  DesignField design_for(const Array2<double>& theta) const;
};

struct ToahResult {
  DesignField design;
  LensVolume soft_lens;        // quasi-binary, final beta
  LensVolume lens;             // binarized and fabrication-filtered
  LossReport report;            // one entry per iteration, before its update
  LossTerms final_terms;        // loss of the final design at the final beta
  double final_total = 0;
  ComplexField field;          // optimization-domain field of the final design
};

using CheckpointFn = std::function<void(std::size_t iteration, const Array2<double>& theta)>;

/// Adam-driven optimization. fab_cutoff_m <= 0 skips the fabrication filter on
/// the returned lens.
ToahResult optimize_toah(const ToahProblem& problem, const Array2<double>& theta0,
                         const OptimConfig& cfg, double fab_cutoff_m,
                         const CheckpointFn& checkpoint = {});

struct GradcheckResult {
  double max_relative_error = 0;
  std::vector<std::size_t> coords;
  std::vector<double> finite_difference, adjoint;
};

/// Central differences against a supplied gradient on a random subset of
/// coordinates (all of them when fewer than n_coords). The relative error of a
/// coordinate is |fd - adj| / max(|fd|, |adj|, 1e-3 * max|adj|).
GradcheckResult gradcheck(const std::function<double(std::span<const double>)>& fn,
                          std::span<const double> gradient, std::span<const double> point,
                          double step, std::size_t n_coords = 32, std::uint64_t seed = 0);

}  // namespace toah
