#pragma once

#include <cstddef>
#include <span>

#include "toah/array.hpp"

namespace toah {

/// In-place unnormalized 2D complex FFT over an x-fastest (nx, ny) slice,
/// backed by FFTW. Plans are created with FFTW_ESTIMATE so results are
/// deterministic run to run. Not shareable between threads; make one per thread.
class Fft2 {
 public:
  Fft2(std::size_t nx, std::size_t ny);
  ~Fft2();
  Fft2(const Fft2&) = delete;
  Fft2& operator=(const Fft2&) = delete;
  Fft2(Fft2&& other) noexcept;
  Fft2& operator=(Fft2&& other) noexcept;

  void forward(std::span<Complex> data);
  void backward(std::span<Complex> data);

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }

 private:
  void execute(void* plan, std::span<Complex> data);
  void release();

  std::size_t nx_ = 0, ny_ = 0;
  void* buffer_ = nullptr;
  void* forward_plan_ = nullptr;
  void* backward_plan_ = nullptr;
};

/// Angular wavenumber for FFT bin m of an n-point axis with spacing d.
double fft_wavenumber(std::size_t m, std::size_t n, double d);

}  // namespace toah
