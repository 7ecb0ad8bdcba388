#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace toah {

using Complex = std::complex<double>;

/// Dense 2D array stored x-fastest: element (i, j) lives at j * nx + i.
template <typename T>
class Array2 {
 public:
  Array2() = default;
  Array2(std::size_t nx, std::size_t ny, T fill = T{})
      : nx_(nx), ny_(ny), data_(nx * ny, fill) {}

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[j * nx_ + i]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[j * nx_ + i]; }
  T& operator[](std::size_t n) { return data_[n]; }
  const T& operator[](std::size_t n) const { return data_[n]; }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Array2& o) const { return nx_ == o.nx_ && ny_ == o.ny_; }

  bool operator==(const Array2&) const = default;

 private:
  std::size_t nx_ = 0, ny_ = 0;
  std::vector<T> data_;
};

/// Dense 3D array stored x-fastest, then y, then z. Each z-slice is a
/// contiguous nx * ny block so lateral FFTs can run in place on it.
template <typename T>
class Array3 {
 public:
  Array3() = default;
  Array3(std::size_t nx, std::size_t ny, std::size_t nz, T fill = T{})
      : nx_(nx), ny_(ny), nz_(nz), data_(nx * ny * nz, fill) {}

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t nz() const { return nz_; }
  std::size_t size() const { return data_.size(); }
  std::size_t slice_size() const { return nx_ * ny_; }
  bool empty() const { return data_.empty(); }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return (k * ny_ + j) * nx_ + i;
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[index(i, j, k)]; }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[index(i, j, k)];
  }
  T& operator[](std::size_t n) { return data_[n]; }
  const T& operator[](std::size_t n) const { return data_[n]; }

  std::span<T> slice(std::size_t k) { return {data_.data() + k * nx_ * ny_, nx_ * ny_}; }
  std::span<const T> slice(std::size_t k) const {
    return {data_.data() + k * nx_ * ny_, nx_ * ny_};
  }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Array3& o) const {
    return nx_ == o.nx_ && ny_ == o.ny_ && nz_ == o.nz_;
  }
  template <typename U>
  bool same_shape(const Array3<U>& o) const {
    return nx_ == o.nx() && ny_ == o.ny() && nz_ == o.nz();
  }

  bool operator==(const Array3&) const = default;

 private:
  std::size_t nx_ = 0, ny_ = 0, nz_ = 0;
  std::vector<T> data_;
};

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
  bool ok = a.nx() == b.nx() && a.ny() == b.ny();
  if constexpr (requires { a.nz(); b.nz(); }) ok = ok && a.nz() == b.nz();
  if (!ok) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace toah
