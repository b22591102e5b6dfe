#pragma once

// Reference arithmetic for tests: arbitrary-precision integers and rationals, written directly
// from the fixed-point formulas without sharing code with the library kernels.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "qnn/qnn.hpp"

namespace oracle {

using big = boost::multiprecision::cpp_int;
using rational = boost::multiprecision::cpp_rational;

inline big pow2(int s) { return big(1) << s; }

/// floor(x / 2^s) for s >= 0.
inline big floor_shift(const big& x, int s) {
  const big d = pow2(s);
  big q = x / d;  // truncates toward zero
  if (x < 0 && q * d != x) q -= 1;
  return q;
}

inline int bits_of(qnn::ElementWidth w) { return qnn::bit_count(w); }

/// C(x) = clamp to [-(2^(w-1) - 1), 2^(w-1) - 1].
inline big clip(const big& x, int w) {
  const big hi = pow2(w - 1) - 1;
  if (x > hi) return hi;
  if (x < -hi) return -hi;
  return x;
}

/// Accumulator range of the arithmetic contract: twice the element width.
inline bool fits_accumulator(const big& x, int w) {
  const big lim = pow2(2 * w - 1);
  return x >= -lim && x < lim;
}

/// Largest q <= 2w - 2 with |round_half_even(alpha 2^q)| <= 2^(w-1) - 1, computed in rationals.
struct Slope {
  big value;
  int q;
};

inline big round_half_even(const rational& r) {
  const big n = boost::multiprecision::numerator(r), d = boost::multiprecision::denominator(r);
  big fl = n / d;
  if (n < 0 && fl * d != n) fl -= 1;
  const rational frac = r - rational(fl);
  if (frac > rational(1, 2)) return fl + 1;
  if (frac < rational(1, 2)) return fl;
  return (fl % 2 == 0) ? fl : fl + 1;
}

inline rational exact(double v) {
  // Doubles are dyadic rationals: scale by 2^1100 is more than enough for |v| < 1 with 53 bits.
  int e = 0;
  const double m = std::frexp(v, &e);
  const auto mant = static_cast<std::int64_t>(std::ldexp(m, 53));
  const int s = e - 53;
  return s >= 0 ? rational(big(mant) << s) : rational(big(mant), pow2(-s));
}

inline Slope leaky_slope(double alpha, int w) {
  const big hi = pow2(w - 1) - 1;
  for (int q = 2 * w - 2; q >= 0; --q) {
    const big v = round_half_even(exact(alpha) * rational(pow2(q)));
    if (abs(v) <= hi) return {v, q};
  }
  return {0, 0};
}

template <class T>
big at(const qnn::Tensor<T>& t, std::size_t i) {
  return big(static_cast<std::int64_t>(t[i]));
}

/// Row-major index of a multi-index with broadcasting of `d` against `out`.
inline std::size_t broadcast_index(const qnn::Dims& d, const qnn::Dims& out, const std::vector<int>& idx) {
  std::size_t i = 0;
  const std::size_t off = out.size() - d.size();
  for (std::size_t k = 0; k < d.size(); ++k) i = i * static_cast<std::size_t>(d[k]) + static_cast<std::size_t>(d[k] == 1 ? 0 : idx[off + k]);
  return i;
}

inline std::vector<std::vector<int>> all_indices(const qnn::Dims& d) {
  std::vector<std::vector<int>> out;
  std::vector<int> idx(d.size(), 0);
  std::size_t n = 1;
  for (int e : d) n *= static_cast<std::size_t>(e);
  for (std::size_t c = 0; c < n; ++c) {
    out.push_back(idx);
    for (int k = static_cast<int>(d.size()) - 1; k >= 0; --k) {
      if (++idx[static_cast<std::size_t>(k)] < d[static_cast<std::size_t>(k)]) break;
      idx[static_cast<std::size_t>(k)] = 0;
    }
  }
  return out;
}

/// Expected result of an integer kernel: values and quantizer, or "throws NumericOverflow".
struct Expected {
  std::vector<big> values;
  int q = 0;
  bool overflow = false;
};

template <class T>
bool matches(const Expected& e, const qnn::Tensor<T>& got) {
  if (e.overflow || got.quantizer() != e.q || got.size() != e.values.size()) return false;
  for (std::size_t i = 0; i < got.size(); ++i)
    if (at(got, i) != e.values[i]) return false;
  return true;
}

}  // namespace oracle
