#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "toah/errors.hpp"
#include "toah/optim.hpp"

using namespace toah;

namespace {

const GridSpec kTiny{4, 4, 4, 125e-6, 125e-6, 125e-6, 2e6};

ComplexField zero_field(const GridSpec& g) {
  return {g, Array3<Complex>(g.nx, g.ny, g.nz)};
}

TargetSpec target_at(const std::vector<std::size_t>& voxels) {
  Array3<double> a(4, 4, 4, 0.0);
  for (auto v : voxels) a[v] = 1.0;
  return make_target(kTiny, std::move(a), {{0, 0, 0}});
}

ToahProblem small_problem(int order) {
  GridSpec g{16, 16, 24, 125e-6, 125e-6, 125e-6, 2e6};
  ToahProblem pb;
  pb.source = make_disk_source(g, 1.6e-3);
  pb.base = make_homogeneous(g, MaterialProperties::water());
  pb.target = make_spherical_target(g, {{0, 0, 18 * 125e-6}}, {0.3e-3});
  pb.design.depth = 8;
  pb.design.v_min = 1;
  pb.design.v_max = 7;
  pb.z_offset = 2;
  pb.solver.reflection_order = order;
  return pb;
}

}  // namespace

TEST_SUITE("optim") {

TEST_CASE("accuracy loss hand cases") {
  auto t = target_at({0});
  auto p = zero_field(kTiny);
  p.values[0] = 1.0;
  p.values[1] = Complex(0.0, 1.0);
  CHECK(loss_acc(p, t) == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(std::abs(loss_acc(p, t) - 0.2929) < 1e-4);
  p.values[1] = 0.0;
  CHECK(loss_acc(p, t) == doctest::Approx(0.0).scale(1));
  p.values[0] = 0.0;
  p.values[5] = 3.0;
  CHECK(loss_acc(p, t) == doctest::Approx(1.0));
  CHECK(loss_acc(zero_field(kTiny), t) == 1.0);
}

TEST_CASE("accuracy loss is scale invariant and bounded") {
  auto t = target_at({0, 9, 33});
  ComplexField p{kTiny, testing::random_complex(4, 4, 4, 1)};
  const double l = loss_acc(p, t);
  for (auto& v : p.values.flat()) v *= 37.5;
  CHECK(loss_acc(p, t) == doctest::Approx(l).epsilon(1e-12));
  CHECK(l >= 0.0);
  CHECK(l <= 2.0);
}

TEST_CASE("energy loss hand cases") {
  auto t = target_at({2, 7});
  auto p = zero_field(kTiny);
  CHECK(loss_energy(p, t) == 0.0);
  p.values[2] = 2.0;
  p.values[7] = Complex(0.0, -4.0);
  p.values[8] = 100.0;  // off target
  CHECK(loss_energy(p, t) == doctest::Approx(-3.0).epsilon(1e-12));
  p.values[2] = 1.0;
  p.values[7] = 1.0;
  CHECK(loss_energy(p, t) == doctest::Approx(-1.0));
}

TEST_CASE("balance loss hand cases") {
  auto t = target_at({3, 40});
  auto p = zero_field(kTiny);
  p.values[3] = 1.0;
  p.values[40] = std::sqrt(3.0);
  CHECK(loss_balance(p, t) == doctest::Approx(1.0).epsilon(1e-12));
  p.values[40] = Complex(0.0, 1.0);
  CHECK(loss_balance(p, t) == doctest::Approx(0.0).scale(1));
  auto single = target_at({5});
  p.values[5] = 7.0;
  CHECK(loss_balance(p, single) == 0.0);
}

TEST_CASE("loss gradient matches finite differences") {
  Array3<double> a(4, 4, 4, 0.0);
  a[1] = 1.0;
  a[6] = 1.0;
  a[21] = 1.0;
  a[30] = 0.4;  // fractional amplitude, outside omega
  const auto t = make_target(kTiny, a, {{0, 0, 0}});
  const auto p = testing::random_complex(4, 4, 4, 8);
  const double le = 0.2, lb = 0.5;
  const auto ev = evaluate_loss(p, t, le, lb, true);
  CHECK(ev.total == doctest::Approx(ev.terms.total(le, lb)));
  const double h = 1e-6;
  for (std::size_t n : {0u, 1u, 6u, 21u, 30u, 63u}) {
    for (Complex dir : {Complex(1, 0), Complex(0, 1)}) {
      auto pp = p, pm = p;
      pp[n] += h * dir;
      pm[n] -= h * dir;
      const double fd = (evaluate_loss(pp, t, le, lb, false).total -
                         evaluate_loss(pm, t, le, lb, false).total) / (2 * h);
      const double adj = dir.real() != 0 ? ev.gradient[n].real() : ev.gradient[n].imag();
      CHECK(std::abs(fd - adj) < 1e-8 + 1e-6 * std::abs(adj));
    }
  }
}

TEST_CASE("loss report recombines exactly") {
  LossReport r;
  r.lambda_energy = 0.2;
  r.lambda_balance = 0.5;
  r.record({0.4, -2.0, 0.3});
  r.record({0.1, -5.5, 1.25});
  CHECK(r.size() == 2);
  CHECK(r.total[0] == doctest::Approx(0.4 - 0.4 + 0.15));
  CHECK(r.recombination_error() < 1e-15);
}

TEST_CASE("target construction") {
  GridSpec g{16, 16, 24, 125e-6, 125e-6, 125e-6, 2e6};
  const auto t = make_spherical_target(g, {{0, 0, 1e-3}, {0.5e-3, 0, 2e-3}}, {0.0, 0.3e-3});
  CHECK_NOTHROW(t.validate());
  CHECK(t.n_foci() == 2);
  std::size_t first = 0;
  for (int l : t.focus_labels) first += l == 0;
  CHECK(first == 1);
  CHECK(t.omega.size() > 10);
  for (std::size_t n = 0; n < t.omega.size(); ++n) CHECK(t.a_target[t.omega[n]] == 1.0);
  CHECK_THROWS(make_spherical_target(g, {{0, 0, 1.0}}, {0.0}));
  CHECK_THROWS(make_spherical_target(g, {{0, 0, 1e-3}}, {}));
  auto bad = t;
  bad.focus_labels.pop_back();
  CHECK_THROWS(bad.validate());
  bad = t;
  bad.a_target[0] = 1.5;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("Adam") {
  Adam opt(3, 0.1);
  std::vector<double> x{1.0, -2.0, 0.5};
  const std::vector<double> zero(3, 0.0);
  opt.step(x, zero);
  CHECK(x == std::vector<double>{1.0, -2.0, 0.5});
  // First bias-corrected step moves every coordinate by lr against the gradient sign.
  Adam first(3, 0.1);
  first.step(x, std::vector<double>{4.0, -0.01, 250.0});
  CHECK(x[0] == doctest::Approx(0.9));
  CHECK(x[1] == doctest::Approx(-1.9));
  CHECK(x[2] == doctest::Approx(0.4));
  // Minimizes a separable quadratic.
  Adam q(2, 0.05);
  std::vector<double> y{3.0, -4.0};
  for (int i = 0; i < 2000; ++i) q.step(y, std::vector<double>{2 * (y[0] - 1), 2 * (y[1] + 2)});
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(y[1] == doctest::Approx(-2.0).epsilon(1e-3));
  CHECK_THROWS(q.step(y, std::vector<double>{1.0}));
}

TEST_CASE("optim config validation") {
  OptimConfig c;
  CHECK_NOTHROW(c.validate());
  c.lambda_energy = -0.1;
  CHECK_THROWS(c.validate());
  c = {};
  c.adam_beta1 = 1.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.learning_rate = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("random theta is deterministic and bounded") {
  const auto a = random_theta(20, 10, 42), b = random_theta(20, 10, 42), c = random_theta(20, 10, 43);
  CHECK(a == b);
  CHECK(a != c);
  for (double v : a.flat()) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("gradcheck on an analytic function") {
  auto fn = [](std::span<const double> x) {
    double s = 0;
    for (std::size_t n = 0; n < x.size(); ++n) s += (n + 1.0) * x[n] * x[n] + std::sin(x[n]);
    return s;
  };
  std::vector<double> x{0.3, -1.2, 2.0, 0.0, 0.7};
  std::vector<double> g(5);
  for (std::size_t n = 0; n < 5; ++n) g[n] = 2 * (n + 1.0) * x[n] + std::cos(x[n]);
  const auto r = gradcheck(fn, g, x, 1e-5, 32, 3);
  CHECK(r.coords.size() == 5);
  CHECK(r.max_relative_error < 1e-9);
  g[2] += 0.5;
  CHECK(gradcheck(fn, g, x, 1e-5).max_relative_error > 1e-2);
  CHECK_THROWS(gradcheck(fn, g, x, 0.0));
}

TEST_CASE("full chain gradient") {
  for (int order : {0, 2}) {
    const auto pb = small_problem(order);
    const auto theta = random_theta(16, 16, 7);
    const auto ev = pb.evaluate(theta, 4.0, true);
    auto fn = [&](std::span<const double> x) {
      Array2<double> t(16, 16);
      std::copy(x.begin(), x.end(), t.flat().begin());
      return pb.evaluate(t, 4.0, false).total;
    };
    const auto r = gradcheck(fn, ev.gradient.flat(), theta.flat(), 1e-4, 16, 1);
    CHECK(r.max_relative_error < 1e-5);
  }
}

TEST_CASE("optimization loop") {
  const auto pb = small_problem(1);
  const auto theta0 = random_theta(16, 16, 3);
  OptimConfig cfg;
  cfg.iterations = 0;
  auto r0 = optimize_toah(pb, theta0, cfg, 0.0);
  CHECK(r0.design.theta == theta0);
  CHECK(r0.report.size() == 0);

  cfg.iterations = 12;
  cfg.checkpoint_every = 5;
  std::vector<std::size_t> seen;
  auto r = optimize_toah(pb, theta0, cfg, 250e-6,
                         [&](std::size_t it, const Array2<double>&) { seen.push_back(it); });
  CHECK(seen == std::vector<std::size_t>{5, 10});
  CHECK(r.report.size() == 12);
  CHECK(r.report.recombination_error() < 1e-12);
  CHECK(r.final_total < r.report.total.front());
  for (double v : r.lens.occupancy.flat()) CHECK((v == 0.0 || v == 1.0));
  auto again = optimize_toah(pb, theta0, cfg, 250e-6);
  CHECK(again.design.theta == r.design.theta);
}

TEST_CASE("non-finite inputs abort with a numeric error") {
  auto pb = small_problem(0);
  pb.source.amplitude = std::nan("");
  OptimConfig cfg;
  cfg.iterations = 2;
  CHECK_THROWS_AS(optimize_toah(pb, random_theta(16, 16, 0), cfg, 0.0), NumericError);
}

}  // TEST_SUITE
