#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "xflat/error.hpp"

namespace xflat {

/// n x n complex Hermitian matrix. Only the real diagonal and the strict upper
/// triangle are stored, so M == M^dagger holds exactly.
class HermitianMatrix {
 public:
  using complex = std::complex<double>;

  explicit HermitianMatrix(std::size_t n = 2) : n_(n), diag_(n, 0.0), upper_(n * (n - 1) / 2) {}

  std::size_t size() const noexcept { return n_; }

  complex operator()(std::size_t a, std::size_t b) const {
    if (a == b) return {diag_[a], 0.0};
    if (a < b) return upper_[upper_index(a, b)];
    return std::conj(upper_[upper_index(b, a)]);
  }

  double diag(std::size_t a) const { return diag_[a]; }
  void set_diag(std::size_t a, double value) { diag_[a] = value; }

  /// Sets M(a, b) and, implicitly, M(b, a) = conj(value).
  void set(std::size_t a, std::size_t b, complex value) {
    if (a == b) {
      diag_[a] = value.real();
    } else if (a < b) {
      upper_[upper_index(a, b)] = value;
    } else {
      upper_[upper_index(b, a)] = std::conj(value);
    }
  }

  HermitianMatrix conj() const {
    HermitianMatrix out = *this;
    for (auto& z : out.upper_) z = std::conj(z);
    return out;
  }

  double trace() const {
    double t = 0.0;
    for (double d : diag_) t += d;
    return t;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double d : diag_) s += d * d;
    for (const auto& z : upper_) s += 2.0 * std::norm(z);
    return std::sqrt(s);
  }

  HermitianMatrix& operator+=(const HermitianMatrix& other) {
    check_same_size(other);
    for (std::size_t i = 0; i < diag_.size(); ++i) diag_[i] += other.diag_[i];
    for (std::size_t i = 0; i < upper_.size(); ++i) upper_[i] += other.upper_[i];
    return *this;
  }

  HermitianMatrix& operator-=(const HermitianMatrix& other) {
    check_same_size(other);
    for (std::size_t i = 0; i < diag_.size(); ++i) diag_[i] -= other.diag_[i];
    for (std::size_t i = 0; i < upper_.size(); ++i) upper_[i] -= other.upper_[i];
    return *this;
  }

  HermitianMatrix& operator*=(double s) {
    for (auto& d : diag_) d *= s;
    for (auto& z : upper_) z = {z.real() * s, z.imag() * s};
    return *this;
  }

  friend HermitianMatrix operator+(HermitianMatrix a, const HermitianMatrix& b) { return a += b; }
  friend HermitianMatrix operator-(HermitianMatrix a, const HermitianMatrix& b) { return a -= b; }
  friend HermitianMatrix operator*(HermitianMatrix a, double s) { return a *= s; }
  friend HermitianMatrix operator*(double s, HermitianMatrix a) { return a *= s; }
  friend HermitianMatrix operator-(HermitianMatrix a) { return a *= -1.0; }

  friend bool operator==(const HermitianMatrix&, const HermitianMatrix&) = default;

 private:
  std::size_t upper_index(std::size_t a, std::size_t b) const noexcept {
    // row-major strict upper triangle
    return a * n_ - a * (a + 1) / 2 + (b - a - 1);
  }

  void check_same_size(const HermitianMatrix& other) const {
    if (other.n_ != n_) throw IntegrityError("HermitianMatrix: size mismatch");
  }

  std::size_t n_;
  std::vector<double> diag_;
  std::vector<complex> upper_;
};

}  // namespace xflat
