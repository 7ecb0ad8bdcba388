#include <cmath>
#include <numbers>

#include "doctest.h"
#include "support.hpp"
#include "toah/errors.hpp"
#include "toah/solver.hpp"

using namespace toah;

namespace {

constexpr Complex I{0.0, 1.0};

GridSpec grid(std::size_t nx, std::size_t ny, std::size_t nz) {
  return {nx, ny, nz, 125e-6, 125e-6, 125e-6, 2e6};
}

SolverConfig config(int order, EvanescentMode mode = EvanescentMode::truncate) {
  SolverConfig c;
  c.reflection_order = order;
  c.evanescent = mode;
  return c;
}

// Water / slab / water along z, lossless slab.
AcousticMedium slab(const GridSpec& g, std::size_t a, std::size_t b, const MaterialProperties& m) {
  auto med = make_homogeneous(g, MaterialProperties::water());
  for (std::size_t k = a; k < b; ++k)
    for (std::size_t n = 0; n < g.nx * g.ny; ++n) {
      med.c[k * g.nx * g.ny + n] = m.sound_speed;
      med.rho[k * g.nx * g.ny + n] = m.density;
    }
  return med;
}

// Naive 2D DFT angular-spectrum propagation over distance d through water.
Array2<Complex> naive_angular_spectrum(const Array2<Complex>& s, const GridSpec& g, double d) {
  const std::size_t nx = g.nx, ny = g.ny;
  const double pi = std::numbers::pi;
  Array2<Complex> spec(nx, ny);
  for (std::size_t q = 0; q < ny; ++q)
    for (std::size_t p = 0; p < nx; ++p) {
      Complex acc = 0;
      for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i)
          acc += s(i, j) * std::exp(-2.0 * pi * I * (double(p * i) / nx + double(q * j) / ny));
      const double fx = (p <= nx / 2 ? double(p) : double(p) - nx) / (nx * g.dx);
      const double fy = (q <= ny / 2 ? double(q) : double(q) - ny) / (ny * g.dy);
      const double k0 = g.k0();
      const double kp2 = 4 * pi * pi * (fx * fx + fy * fy);
      const Complex kz = std::sqrt(Complex(k0 * k0 - kp2, 0.0));
      spec(p, q) = acc * std::exp(I * kz * d);
    }
  Array2<Complex> out(nx, ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      Complex acc = 0;
      for (std::size_t q = 0; q < ny; ++q)
        for (std::size_t p = 0; p < nx; ++p)
          acc += spec(p, q) * std::exp(2.0 * pi * I * (double(p * i) / nx + double(q * j) / ny));
      out(i, j) = acc / double(nx * ny);
    }
  return out;
}

Array2<Complex> random_plane(std::size_t nx, std::size_t ny, std::uint64_t seed) {
  const auto v = testing::random_complex(nx, ny, 1, seed);
  Array2<Complex> s(nx, ny);
  for (std::size_t n = 0; n < s.size(); ++n) s[n] = v[n];
  return s;
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("plane wave keeps unit amplitude in a lossless homogeneous medium") {
  const auto g = grid(32, 32, 48);
  const auto m = make_homogeneous(g, MaterialProperties::water());
  const auto p = propagate(make_plane_source(g), m, config(4)).field;
  double worst = 0;
  for (const auto& v : p.values.flat()) worst = std::max(worst, std::abs(std::abs(v) - 1.0));
  CHECK(worst < 1e-9);
}

TEST_CASE("homogeneous propagation matches a naive angular-spectrum oracle") {
  // 11 columns keep every mode off the kz = 0 circle.
  const auto g = grid(11, 10, 16);
  const auto m = make_homogeneous(g, MaterialProperties::water());
  const auto s = random_plane(11, 10, 11);
  const auto p = propagate(s, m, config(0, EvanescentMode::decay)).field;
  for (std::size_t k : {1u, 7u, 15u}) {
    const auto ref = naive_angular_spectrum(s, g, k * g.dz);
    for (std::size_t j = 0; j < 10; ++j)
      for (std::size_t i = 0; i < 11; ++i)
        CHECK(std::abs(p.values(i, j, k) - ref(i, j)) < 1e-10);
  }
}

TEST_CASE("lossless propagation conserves the propagating power") {
  const auto g = grid(24, 24, 20);
  const auto m = make_homogeneous(g, MaterialProperties::water());
  const auto p = propagate(random_plane(24, 24, 3), m, config(0)).field;
  auto power = [&](std::size_t k) {
    double s = 0;
    for (const auto& v : p.values.slice(k)) s += std::norm(v);
    return s;
  };
  for (std::size_t k = 2; k < 20; ++k) CHECK(power(k) == doctest::Approx(power(1)).epsilon(1e-12));
  CHECK(power(1) < power(0));
}

TEST_CASE("phase velocity and absorption of a plane wave") {
  const auto g = grid(8, 8, 30);
  const auto fc = MaterialProperties::form_clear();
  const auto m = make_homogeneous(g, fc);
  const auto p = propagate(make_plane_source(g), m, config(0)).field;
  const double km = 2 * std::numbers::pi * g.frequency / fc.sound_speed;
  const double alpha = kNeperPerMeterPerDbPerCm * fc.attenuation_db_cm(g.frequency);
  for (std::size_t k = 0; k < 30; ++k) {
    const Complex expect =
        std::exp((I * km - alpha) * (k + 1.0) * g.dz) * std::exp(-I * g.k0() * g.dz);
    CHECK(std::abs(p.values(3, 5, k) - expect) < 1e-12);
  }
}

TEST_CASE("normal-incidence reflection from a half space") {
  const auto g = grid(8, 8, 40);
  const auto fc = MaterialProperties::form_clear();
  const std::size_t A = 20;
  const auto m = slab(g, A, 40, fc);
  const double zw = 1.5e6, zs = fc.impedance();
  const double r = (zs - zw) / (zs + zw), t = 2 * zs / (zs + zw);
  const double k0 = g.k0(), ks = 2 * std::numbers::pi * g.frequency / fc.sound_speed;
  const auto p = propagate(make_plane_source(g), m, config(1)).field;
  for (std::size_t k = 0; k < A; ++k) {
    const Complex expect = std::exp(I * k0 * double(k) * g.dz) +
                           r * std::exp(I * k0 * double(2 * (A - 1) - k) * g.dz);
    CHECK(std::abs(p.values(2, 2, k) - expect) < 1e-12);
  }
  for (std::size_t k = A; k < 40; ++k) {
    const Complex expect =
        t * std::exp(I * k0 * double(A - 1) * g.dz) * std::exp(I * ks * double(k - A + 1) * g.dz);
    CHECK(std::abs(p.values(2, 2, k) - expect) < 1e-12);
  }
}

TEST_CASE("multiple slab reflections follow the truncated Airy series") {
  const auto g = grid(8, 8, 48);
  const auto fc = MaterialProperties::form_clear();
  const std::size_t A = 10, B = 22;
  const auto m = slab(g, A, B, fc);
  const double zw = 1.5e6, zs = fc.impedance();
  const double t_ws = 2 * zs / (zs + zw), t_sw = 2 * zw / (zs + zw), r_sw = (zw - zs) / (zs + zw);
  const double k0 = g.k0(), ks = 2 * std::numbers::pi * g.frequency / fc.sound_speed;
  const Complex q = r_sw * r_sw * std::exp(2.0 * I * ks * double(B - 1 - A) * g.dz);
  const std::size_t probe = B + 5;
  const Complex direct = t_ws * t_sw * std::exp(I * k0 * double(A + 5) * g.dz) *
                         std::exp(I * ks * double(B - A) * g.dz);
  for (int R : {0, 2, 4, 6, 8}) {
    Complex series = 0, qm = 1;
    for (int n = 0; n <= R / 2; ++n, qm *= q) series += qm;
    const auto p = propagate(make_plane_source(g), m, config(R)).field;
    CHECK(std::abs(p.values(4, 4, probe) - direct * series) < 1e-12);
  }
}

TEST_CASE("adjoint and tangent sweeps agree (dot-product test)") {
  const auto g = grid(12, 12, 16);
  auto m = make_homogeneous(g, MaterialProperties::water());
  m.c = testing::random_volume(12, 12, 16, 1, 1400, 2600);
  m.rho = testing::random_volume(12, 12, 16, 2, 1000, 1900);
  m.att = testing::random_volume(12, 12, 16, 3, 0, 5);
  const auto s = random_plane(12, 12, 4);
  for (auto mode : {EvanescentMode::decay, EvanescentMode::truncate}) {
    const auto fwd = propagate(s, m, config(3, mode));
    const auto u = testing::random_complex(12, 12, 16, 5);
    const auto grad = propagate_adjoint(fwd.cache, u);

    MediumPerturbation d;
    d.c = testing::random_volume(12, 12, 16, 6);
    d.rho = testing::random_volume(12, 12, 16, 7);
    d.att = testing::random_volume(12, 12, 16, 8);
    d.source = random_plane(12, 12, 9);
    const auto dp = propagate_tangent(fwd.cache, d);

    double lhs = 0;
    for (std::size_t n = 0; n < dp.size(); ++n) lhs += (std::conj(u[n]) * dp[n]).real();
    double rhs = 0;
    for (std::size_t n = 0; n < d.c.size(); ++n)
      rhs += grad.c[n] * d.c[n] + grad.rho[n] * d.rho[n] + grad.att[n] * d.att[n];
    for (std::size_t n = 0; n < d.source.size(); ++n)
      rhs += (std::conj(grad.source[n]) * d.source[n]).real();
    CHECK(testing::rel_diff(lhs, rhs) < 1e-11);
  }
}

TEST_CASE("medium gradient matches finite differences") {
  const auto g = grid(10, 10, 14);
  auto m = make_homogeneous(g, MaterialProperties::water());
  m.c = testing::random_volume(10, 10, 14, 21, 1450, 2600);
  m.rho = testing::random_volume(10, 10, 14, 22, 1000, 1200);
  m.att = testing::random_volume(10, 10, 14, 23, 0, 3);
  const auto s = random_plane(10, 10, 24);
  const auto u = testing::random_complex(10, 10, 14, 25);
  auto loss = [&](const AcousticMedium& mm) {
    const auto p = propagate(s, mm, config(2, EvanescentMode::decay)).field;
    double l = 0;
    for (std::size_t n = 0; n < p.values.size(); ++n)
      l += (std::conj(u[n]) * p.values[n]).real();
    return l;
  };
  const auto grad = propagate_adjoint(propagate(s, m, config(2, EvanescentMode::decay)).cache, u);
  const std::size_t v = m.c.index(4, 5, 7);
  auto fd = [&](Array3<double> AcousticMedium::*field, double h) {
    auto p = m, q = m;
    (p.*field)[v] += h;
    (q.*field)[v] -= h;
    return (loss(p) - loss(q)) / (2 * h);
  };
  CHECK(fd(&AcousticMedium::c, 1e-3) == doctest::Approx(grad.c[v]).epsilon(1e-6));
  CHECK(fd(&AcousticMedium::rho, 1e-3) == doctest::Approx(grad.rho[v]).epsilon(1e-6));
  CHECK(fd(&AcousticMedium::att, 1e-5) == doctest::Approx(grad.att[v]).epsilon(1e-6));
}

TEST_CASE("transfer function") {
  const auto g = grid(32, 32, 8);
  const auto hp = transfer_function(g, g.dz, EvanescentMode::decay, 1.0);
  const auto ht = transfer_function(g, g.dz, EvanescentMode::truncate, 1.0);
  const auto hc = transfer_function(g, g.dz, EvanescentMode::truncate, 0.5);
  std::size_t evanescent = 0;
  for (std::size_t n = 0; n < hp.size(); ++n) {
    if (ht[n] == Complex(0.0)) {
      ++evanescent;
      CHECK(hp[n].imag() == 0.0);
      CHECK(hp[n].real() > 0.0);
      CHECK(hp[n].real() < 1.0);
    } else {
      CHECK(std::abs(ht[n]) == doctest::Approx(1.0));
      CHECK(hp[n] == ht[n]);
    }
    if (hc[n] != Complex(0.0)) CHECK(ht[n] != Complex(0.0));
  }
  CHECK(evanescent > 0);
  CHECK(ht[0] == std::polar(1.0, g.k0() * g.dz));
}

TEST_CASE("backprojection inverts homogeneous propagation") {
  const auto g = grid(24, 24, 32);
  const auto m = make_homogeneous(g, MaterialProperties::water());
  const auto s = random_plane(24, 24, 31);
  const auto p = propagate(s, m, config(0)).field;
  Array2<Complex> plane(24, 24), first(24, 24);
  for (std::size_t n = 0; n < plane.size(); ++n) {
    plane[n] = p.values.slice(20)[n];
    first[n] = p.values.slice(0)[n];
  }
  const auto back = backproject(plane, g, {20 * g.dz, 10 * g.dz});
  const auto ref = backproject(first, g, {0.0, -10 * g.dz});
  CHECK(back.values.nz() == 2);
  double err = 0;
  for (std::size_t n = 0; n < back.values.size(); ++n)
    err = std::max(err, std::abs(back.values[n] - ref.values[n]));
  CHECK(err < 1e-10);
  for (std::size_t n = 0; n < plane.size(); ++n)
    CHECK(std::abs(back.values.slice(1)[n] - p.values.slice(10)[n]) < 1e-10);

  CHECK_THROWS(backproject(plane, g, {}));
  CHECK_THROWS(backproject(plane, g, {1.0}));
  CHECK_THROWS(backproject(Array2<Complex>(3, 3), g, {0.0}));
}

TEST_CASE("reversed subdomain") {
  const auto g = grid(8, 8, 12);
  auto m = make_homogeneous(g, MaterialProperties::water());
  m.c = testing::random_volume(8, 8, 12, 41, 1400, 1600);
  const auto r = reversed_subdomain(m, 7);
  CHECK(r.grid.nz == 8);
  for (std::size_t k = 0; k < 8; ++k) CHECK(r.c(3, 4, k) == m.c(3, 4, 7 - k));
  CHECK_THROWS(reversed_subdomain(m, 12));
}

TEST_CASE("invalid inputs are rejected") {
  const auto g = grid(8, 8, 12);
  auto m = make_homogeneous(g, MaterialProperties::water());
  Array2<Complex> s(8, 8, 1.0);
  CHECK_THROWS_AS(propagate(Array2<Complex>(7, 8), m, config(0)), std::invalid_argument);
  CHECK_THROWS(propagate(s, m, config(9)));
  auto bad = m;
  bad.c[17] = std::nan("");
  CHECK_THROWS_AS(propagate(s, bad, config(0)), NumericError);
  s[3] = Complex(std::nan(""), 0.0);
  CHECK_THROWS_AS(propagate(s, m, config(0)), NumericError);
  CHECK_THROWS(propagate_adjoint(SliceCache{}, Array3<Complex>(8, 8, 12)));
  const auto ok = propagate(Array2<Complex>(8, 8, 1.0), m, config(0));
  CHECK_THROWS(propagate_adjoint(ok.cache, Array3<Complex>(8, 8, 11)));
}

}  // TEST_SUITE
