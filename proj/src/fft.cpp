#include "toah/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace toah {

namespace {
// FFTW's planner is not thread-safe.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

Fft2::Fft2(std::size_t nx, std::size_t ny) : nx_(nx), ny_(ny) {
  if (nx == 0 || ny == 0) throw std::invalid_argument("fft: empty transform");
  std::lock_guard lock(planner_mutex());
  auto* buf = fftw_alloc_complex(nx * ny);
  if (!buf) throw std::bad_alloc();
  buffer_ = buf;
  const int n0 = static_cast<int>(ny), n1 = static_cast<int>(nx);
  forward_plan_ = fftw_plan_dft_2d(n0, n1, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  backward_plan_ = fftw_plan_dft_2d(n0, n1, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
}

Fft2::~Fft2() { release(); }

Fft2::Fft2(Fft2&& other) noexcept
    : nx_(other.nx_), ny_(other.ny_), buffer_(std::exchange(other.buffer_, nullptr)),
      forward_plan_(std::exchange(other.forward_plan_, nullptr)),
      backward_plan_(std::exchange(other.backward_plan_, nullptr)) {}

Fft2& Fft2::operator=(Fft2&& other) noexcept {
  if (this != &other) {
    release();
    nx_ = other.nx_;
    ny_ = other.ny_;
    buffer_ = std::exchange(other.buffer_, nullptr);
    forward_plan_ = std::exchange(other.forward_plan_, nullptr);
    backward_plan_ = std::exchange(other.backward_plan_, nullptr);
  }
  return *this;
}

void Fft2::release() {
  if (!buffer_) return;
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(backward_plan_));
  fftw_free(buffer_);
  buffer_ = forward_plan_ = backward_plan_ = nullptr;
}

void Fft2::execute(void* plan, std::span<Complex> data) {
  if (data.size() != nx_ * ny_) throw std::invalid_argument("fft: slice size mismatch");
  auto* buf = static_cast<Complex*>(buffer_);
  std::copy(data.begin(), data.end(), buf);
  fftw_execute(static_cast<fftw_plan>(plan));
  std::copy(buf, buf + data.size(), data.begin());
}

void Fft2::forward(std::span<Complex> data) { execute(forward_plan_, data); }
void Fft2::backward(std::span<Complex> data) { execute(backward_plan_, data); }

double fft_wavenumber(std::size_t m, std::size_t n, double d) {
  const double idx = m <= (n - 1) / 2 ? static_cast<double>(m)
                                       : static_cast<double>(m) - static_cast<double>(n);
  return 2.0 * std::numbers::pi * idx / (static_cast<double>(n) * d);
}

}  // namespace toah
