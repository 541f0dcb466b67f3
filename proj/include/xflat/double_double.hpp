#pragma once

// Unevaluated-sum (hi + lo) arithmetic built from error-free transforms.
// Used for the moment reductions so that the factorized neutrino potential
// is rounded once, after all cancellation has happened.
//
// Requires strict IEEE double evaluation: no FMA contraction, no fast-math.

#include <cmath>

namespace xflat {

struct DoubleDouble {
  double hi = 0.0;
  double lo = 0.0;

  constexpr double value() const noexcept { return hi + lo; }

  friend constexpr bool operator==(const DoubleDouble&, const DoubleDouble&) = default;
};

namespace eft {

/// s + e == a + b exactly.
inline DoubleDouble two_sum(double a, double b) noexcept {
  const double s = a + b;
  const double bb = s - a;
  const double e = (a - (s - bb)) + (b - bb);
  return {s, e};
}

/// Requires |a| >= |b| (or a == 0).
inline DoubleDouble quick_two_sum(double a, double b) noexcept {
  const double s = a + b;
  return {s, b - (s - a)};
}

inline DoubleDouble split(double a) noexcept {
  constexpr double kSplitter = 134217729.0;  // 2^27 + 1
  const double t = kSplitter * a;
  const double hi = t - (t - a);
  return {hi, a - hi};
}

/// p + e == a * b exactly (barring over/underflow).
inline DoubleDouble two_prod(double a, double b) noexcept {
  const double p = a * b;
#if defined(__FMA__) || defined(__FP_FAST_FMA)
  return {p, std::fma(a, b, -p)};
#else
  const DoubleDouble as = split(a);
  const DoubleDouble bs = split(b);
  const double e = ((as.hi * bs.hi - p) + as.hi * bs.lo + as.lo * bs.hi) + as.lo * bs.lo;
  return {p, e};
#endif
}

}  // namespace eft

inline DoubleDouble operator+(const DoubleDouble& x, double b) noexcept {
  DoubleDouble s = eft::two_sum(x.hi, b);
  return eft::quick_two_sum(s.hi, s.lo + x.lo);
}

inline DoubleDouble operator+(const DoubleDouble& x, const DoubleDouble& y) noexcept {
  DoubleDouble s = eft::two_sum(x.hi, y.hi);
  const DoubleDouble t = eft::two_sum(x.lo, y.lo);
  s = eft::quick_two_sum(s.hi, s.lo + t.hi);
  return eft::quick_two_sum(s.hi, s.lo + t.lo);
}

inline DoubleDouble operator-(const DoubleDouble& x) noexcept { return {-x.hi, -x.lo}; }

inline DoubleDouble operator-(const DoubleDouble& x, const DoubleDouble& y) noexcept { return x + (-y); }

inline DoubleDouble operator*(const DoubleDouble& x, double b) noexcept {
  const DoubleDouble p = eft::two_prod(x.hi, b);
  return eft::quick_two_sum(p.hi, p.lo + x.lo * b);
}

inline DoubleDouble operator*(const DoubleDouble& x, const DoubleDouble& y) noexcept {
  DoubleDouble p = eft::two_prod(x.hi, y.hi);
  p.lo += x.hi * y.lo + x.lo * y.hi;
  return eft::quick_two_sum(p.hi, p.lo);
}

/// a / b to double-double accuracy.
inline DoubleDouble divide(double a, double b) noexcept {
  const double q1 = a / b;
  const DoubleDouble p = eft::two_prod(q1, b);
  const double rem = (a - p.hi) - p.lo;
  return eft::quick_two_sum(q1, rem / b);
}

inline DoubleDouble& operator+=(DoubleDouble& x, double b) noexcept { return x = x + b; }
inline DoubleDouble& operator+=(DoubleDouble& x, const DoubleDouble& y) noexcept { return x = x + y; }

}  // namespace xflat
