#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "qnn/error.hpp"

namespace qnn {

/// Storage precision of a tensor. The numeric codes are the on-disk codes.
enum class ElementWidth : std::uint8_t { f32 = 0, i32 = 1, i16 = 2, i8 = 3 };

constexpr int bit_count(ElementWidth width) {
  switch (width) {
    case ElementWidth::f32: return 32;
    case ElementWidth::i32: return 32;
    case ElementWidth::i16: return 16;
    case ElementWidth::i8: return 8;
  }
  return 0;
}

constexpr bool is_integer(ElementWidth width) { return width != ElementWidth::f32; }

constexpr const char* to_string(ElementWidth width) {
  switch (width) {
    case ElementWidth::f32: return "float32";
    case ElementWidth::i32: return "int32";
    case ElementWidth::i16: return "int16";
    case ElementWidth::i8: return "int8";
  }
  return "?";
}

/// Largest representable magnitude of an integer width: 2^(w-1) - 1. The clip range is symmetric.
constexpr std::int64_t max_magnitude(ElementWidth width) { return (std::int64_t{1} << (bit_count(width) - 1)) - 1; }

using int128 = __int128;

// `accumulator` is the double-width type of the arithmetic contract; `exact` is wide enough to hold
// any sum the kernels form so that leaving the accumulator range is detected rather than wrapped.
template <class T>
struct element_traits;

template <>
struct element_traits<float> {
  static constexpr ElementWidth width = ElementWidth::f32;
  static constexpr bool integer = false;
  using accumulator = float;
  using exact = float;
};

template <>
struct element_traits<std::int32_t> {
  static constexpr ElementWidth width = ElementWidth::i32;
  static constexpr bool integer = true;
  using accumulator = std::int64_t;
  using exact = int128;
};

template <>
struct element_traits<std::int16_t> {
  static constexpr ElementWidth width = ElementWidth::i16;
  static constexpr bool integer = true;
  using accumulator = std::int32_t;
  using exact = std::int64_t;
};

template <>
struct element_traits<std::int8_t> {
  static constexpr ElementWidth width = ElementWidth::i8;
  static constexpr bool integer = true;
  using accumulator = std::int16_t;
  using exact = std::int64_t;
};

template <class T>
concept Element = requires { element_traits<T>::width; };

template <class T>
concept IntegerElement = Element<T> && element_traits<T>::integer;

template <class T>
constexpr ElementWidth width_of = element_traits<T>::width;

/// C(x) = max(-2^(w-1)+1, min(2^(w-1)-1, x)).
template <class Wide>
constexpr Wide clip(Wide x, ElementWidth width) {
  const Wide hi = static_cast<Wide>(max_magnitude(width));
  return x > hi ? hi : (x < -hi ? -hi : x);
}

/// Floor division by 2^s (two's-complement arithmetic shift). Negative shifts are rejected.
template <class Wide>
constexpr Wide shift_right(Wide x, int s) {
  if (s < 0) fail(ErrorKind::QuantizerOrder, "negative right shift " + std::to_string(s));
  constexpr int bits = static_cast<int>(sizeof(Wide) * 8);
  if (s >= bits - 1) return x < 0 ? Wide{-1} : Wide{0};
  return x >> s;
}

/// Left shift by s >= 0 saturating to the clip range of `width`.
inline std::int64_t shift_left_clipped(std::int64_t x, int s, ElementWidth width) {
  if (s < 0) fail(ErrorKind::QuantizerOrder, "negative left shift " + std::to_string(s));
  if (x == 0) return 0;
  const std::int64_t hi = max_magnitude(width);
  if (s >= 32) return x > 0 ? hi : -hi;
  return clip<std::int64_t>(x * (std::int64_t{1} << s), width);
}

/// Rounds x / 2^s to nearest, halves toward +infinity. Works for s <= 0 as an exact left shift.
inline std::int64_t round_shift(std::int64_t x, int s) {
  if (s <= 0) return x * (std::int64_t{1} << (-s));
  return shift_right<std::int64_t>(x + (std::int64_t{1} << (s - 1)), s);
}

/// clip(round_half_even(v * 2^q), width).
inline std::int64_t quantize_float(double v, int q, ElementWidth width) {
  check(q >= 0, ErrorKind::InvalidArgument, "quantizer must be non-negative");
  check(is_integer(width), ErrorKind::InvalidArgument, "quantize_float needs an integer width");
  const double hi = static_cast<double>(max_magnitude(width));
  const double scaled = std::nearbyint(std::ldexp(v, q));
  if (std::isnan(scaled)) return 0;
  if (scaled >= hi) return max_magnitude(width);
  if (scaled <= -hi) return -max_magnitude(width);
  return static_cast<std::int64_t>(scaled);
}

using Dims = std::vector<int>;

inline std::size_t element_count(const Dims& dims) {
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string to_string(const Dims& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

/// Dense row-major tensor with a power-of-two quantizer: stored x represents x / 2^q.
/// The quantizer is carried but meaningless for float tensors.
template <Element T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Dims dims, int q = 0) : dims_(std::move(dims)), q_(q), data_(element_count(dims_)) {
    check_dims();
  }

  Tensor(Dims dims, std::vector<T> data, int q = 0) : dims_(std::move(dims)), q_(q), data_(std::move(data)) {
    check_dims();
    check(data_.size() == element_count(dims_), ErrorKind::ShapeMismatch,
          "payload has " + std::to_string(data_.size()) + " elements, dims " + to_string(dims_) + " need " +
              std::to_string(element_count(dims_)));
  }

  const Dims& dims() const noexcept { return dims_; }
  int rank() const noexcept { return static_cast<int>(dims_.size()); }
  int dim(int axis) const { return dims_.at(static_cast<std::size_t>(axis < 0 ? axis + rank() : axis)); }
  std::size_t size() const noexcept { return data_.size(); }

  int quantizer() const noexcept { return q_; }
  void set_quantizer(int q) { q_ = q; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Reshapes in place, reusing the allocation when it is large enough.
  void resize(Dims dims) {
    dims_ = std::move(dims);
    check_dims();
    data_.resize(element_count(dims_));
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool operator==(const Tensor&) const = default;

 private:
  void check_dims() const {
    for (int d : dims_)
      check(d > 0, ErrorKind::ShapeMismatch, "non-positive extent in " + to_string(dims_));
  }

  Dims dims_;
  int q_ = 0;
  std::vector<T> data_;
};

/// f(x, q) = x / 2^q elementwise.
template <IntegerElement T>
Tensor<float> dequantize(const Tensor<T>& t) {
  Tensor<float> out(t.dims());
  const int q = t.quantizer();
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<float>(std::ldexp(static_cast<double>(t[i]), -q));
  return out;
}

template <IntegerElement T>
Tensor<T> quantize(const Tensor<float>& t, int q) {
  Tensor<T> out(t.dims(), q);
  for (std::size_t i = 0; i < t.size(); ++i)
    out[i] = static_cast<T>(quantize_float(t[i], q, width_of<T>));
  return out;
}

}  // namespace qnn
