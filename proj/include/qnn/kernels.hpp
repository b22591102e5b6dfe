#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qnn/simd.hpp"
#include "qnn/tensor.hpp"

// Layer kernels. Integer instantiations follow the shift-only fixed-point rules:
//   BiasAdd   y = C((x0 >> (q0-q1)) + x1),                 q = q1
//   Add       y = C((x0 >> (q0-q)) + (x1 >> (q1-q))),       q = min(q0, q1)
//   Mul/MatMul/Conv2D  y = C(sum x0*x1 >> (q1+qi)),         q = q0 - qi
//   Concat    y = x0 >> (q0-q) | x1 >> (q1-q) | ...,        q = min(qk)
//   LeakyReLU y = x < 0 ? (a*x) >> qa : x,                  q = q0
//   Maximum   y = max(x0, C(x1 << (q0-q1))),               q = q0
// Single-input layers keep the quantizer of their input. Float instantiations ignore quantizers.
// Outputs are written into `out`, which must not alias an input.

namespace qnn {

/// Execution counters; kernels add to them when a pointer is passed.
struct OpStats {
  std::uint64_t macs = 0;
  std::uint64_t other_ops = 0;
};

enum class Padding : std::uint8_t { Valid = 0, Same = 1 };

struct ConvParams {
  int stride = 1;
  int groups = 1;
  Padding padding = Padding::Same;
};

/// Integer representation of a LeakyReLU slope: alpha ~ value / 2^shift.
struct SlopeCode {
  std::int64_t value = 0;
  int shift = 0;
};

/// Largest shift (capped at 2w-2 so products stay inside the accumulator) at which
/// round(alpha * 2^shift) still fits the weight width.
inline SlopeCode leaky_slope(double alpha, ElementWidth width) {
  check(std::abs(alpha) < 1.0, ErrorKind::SlopeOutOfRange, "LeakyReLU slope must satisfy |alpha| < 1");
  const std::int64_t hi = max_magnitude(width);
  for (int q = 2 * bit_count(width) - 2; q >= 0; --q) {
    const double v = std::nearbyint(std::ldexp(alpha, q));
    if (std::abs(v) <= static_cast<double>(hi)) return {static_cast<std::int64_t>(v), q};
  }
  return {0, 0};
}

namespace detail {

template <class T>
using exact_t = typename element_traits<T>::exact;

template <IntegerElement T>
void check_accumulator(exact_t<T> v, const char* op) {
  using A = typename element_traits<T>::accumulator;
  if (v > static_cast<exact_t<T>>(std::numeric_limits<A>::max()) ||
      v < static_cast<exact_t<T>>(std::numeric_limits<A>::min()))
    fail(ErrorKind::NumericOverflow,
         std::string(op) + ": sum leaves the " + std::to_string(sizeof(A) * 8) + "-bit accumulator range");
}

template <IntegerElement T, class Wide>
T saturate(Wide v) {
  return static_cast<T>(clip<Wide>(v, width_of<T>));
}

inline int normalize_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  check(a >= 0 && a < rank, ErrorKind::ShapeMismatch,
        "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return a;
}

/// Numpy-style broadcast of two shapes (right aligned, extents equal or 1).
inline Dims broadcast_dims(const Dims& a, const Dims& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Dims out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const int da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const int db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    check(da == db || da == 1 || db == 1, ErrorKind::ShapeMismatch,
          "cannot broadcast " + to_string(a) + " with " + to_string(b));
    out[i] = std::max(da, db);
  }
  return out;
}

/// Strides of `in` when read through the broadcast shape `out` (0 on broadcast axes).
inline std::vector<std::size_t> broadcast_strides(const Dims& in, const Dims& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t i = in.size() - 1 - k;
    const std::size_t o = out.size() - 1 - k;
    strides[o] = in[i] == 1 ? 0 : s;
    s *= static_cast<std::size_t>(in[i]);
  }
  return strides;
}

/// Calls fn(out_index, a_index, b_index) for every element of the broadcast shape.
template <class Fn>
void for_each_broadcast(const Dims& a, const Dims& b, const Dims& out, Fn&& fn) {
  const std::size_t n = element_count(out);
  const std::size_t na = element_count(a);
  const std::size_t nb = element_count(b);
  if (a == out && b == out) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
    return;
  }
  if (a == out && (nb == 1 || (b.size() <= out.size() && std::equal(b.rbegin(), b.rend(), out.rbegin())))) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i % nb);
    return;
  }
  if (b == out && (na == 1 || (a.size() <= out.size() && std::equal(a.rbegin(), a.rend(), out.rbegin())))) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i % na, i);
    return;
  }
  const auto sa = broadcast_strides(a, out);
  const auto sb = broadcast_strides(b, out);
  std::vector<int> idx(out.size(), 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (std::size_t k = out.size(); k-- > 0;) {
      ++idx[k];
      ia += sa[k];
      ib += sb[k];
      if (idx[k] < out[k]) break;
      ia -= sa[k] * static_cast<std::size_t>(out[k]);
      ib -= sb[k] * static_cast<std::size_t>(out[k]);
      idx[k] = 0;
    }
  }
}

inline void require_rank(const Dims& dims, int rank, const char* op) {
  check(static_cast<int>(dims.size()) == rank, ErrorKind::ShapeMismatch,
        std::string(op) + " expects rank " + std::to_string(rank) + ", got " + to_string(dims));
}

inline void require_quantizer_order(int hi, int lo, const char* op) {
  check(hi >= lo, ErrorKind::QuantizerOrder,
        std::string(op) + " needs q0 >= " + std::to_string(lo) + " but q0 = " + std::to_string(hi));
}

/// Output extent and leading pad of a strided window along one axis.
struct WindowGeometry {
  int out = 0;
  int pad = 0;
};

inline WindowGeometry window_geometry(int in, int kernel, int stride, Padding padding) {
  WindowGeometry g;
  if (padding == Padding::Valid) {
    check(in >= kernel, ErrorKind::ShapeMismatch,
          "window " + std::to_string(kernel) + " larger than input " + std::to_string(in));
    g.out = (in - kernel) / stride + 1;
  } else {
    g.out = (in + stride - 1) / stride;
    g.pad = std::max((g.out - 1) * stride + kernel - in, 0) / 2;
  }
  return g;
}

inline WindowGeometry transposed_geometry(int in, int kernel, int stride, Padding padding) {
  WindowGeometry g;
  if (padding == Padding::Valid) {
    g.out = (in - 1) * stride + kernel;
  } else {
    g.out = in * stride;
    g.pad = std::max((in - 1) * stride + kernel - g.out, 0) / 2;
  }
  return g;
}

inline void check_stride(int stride) {
  check(stride == 1 || stride == 2, ErrorKind::UnsupportedStride, "stride " + std::to_string(stride) + " not in {1,2}");
}

/// Shifts an exact accumulator array down by `shift`, checks the accumulator contract and clips.
template <Element T>
void finish_accumulators(std::span<const exact_t<T>> acc, int shift, std::span<T> out, const char* op) {
  if constexpr (element_traits<T>::integer) {
    for (std::size_t i = 0; i < acc.size(); ++i) {
      check_accumulator<T>(acc[i], op);
      out[i] = saturate<T>(shift_right(acc[i], shift));
    }
  } else {
    std::copy(acc.begin(), acc.end(), out.begin());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Binary elementwise layers

template <Element T>
void bias_add(const Tensor<T>& x0, const Tensor<T>& x1, Tensor<T>& out, OpStats* stats = nullptr) {
  const Dims dims = detail::broadcast_dims(x0.dims(), x1.dims());
  check(dims == x0.dims(), ErrorKind::ShapeMismatch,
        "bias " + to_string(x1.dims()) + " does not broadcast over " + to_string(x0.dims()));
  out.resize(dims);
  if constexpr (element_traits<T>::integer) {
    detail::require_quantizer_order(x0.quantizer(), x1.quantizer(), "BiasAdd");
    const int s = x0.quantizer() - x1.quantizer();
    detail::for_each_broadcast(x0.dims(), x1.dims(), dims, [&](std::size_t i, std::size_t a, std::size_t b) {
      out[i] = detail::saturate<T>(shift_right<std::int64_t>(x0[a], s) + x1[b]);
    });
    out.set_quantizer(x1.quantizer());
  } else {
    detail::for_each_broadcast(x0.dims(), x1.dims(), dims,
                               [&](std::size_t i, std::size_t a, std::size_t b) { out[i] = x0[a] + x1[b]; });
  }
  if (stats) stats->other_ops += out.size();
}

template <Element T>
void add(const Tensor<T>& x0, const Tensor<T>& x1, Tensor<T>& out, OpStats* stats = nullptr) {
  const Dims dims = detail::broadcast_dims(x0.dims(), x1.dims());
  out.resize(dims);
  if constexpr (element_traits<T>::integer) {
    const int q = std::min(x0.quantizer(), x1.quantizer());
    const int s0 = x0.quantizer() - q;
    const int s1 = x1.quantizer() - q;
    detail::for_each_broadcast(x0.dims(), x1.dims(), dims, [&](std::size_t i, std::size_t a, std::size_t b) {
      out[i] = detail::saturate<T>(shift_right<std::int64_t>(x0[a], s0) + shift_right<std::int64_t>(x1[b], s1));
    });
    out.set_quantizer(q);
  } else {
    detail::for_each_broadcast(x0.dims(), x1.dims(), dims,
                               [&](std::size_t i, std::size_t a, std::size_t b) { out[i] = x0[a] + x1[b]; });
  }
  if (stats) stats->other_ops += out.size();
}

/// Elementwise product, the one-term case of the MatMul rule.
template <Element T>
void mul(const Tensor<T>& x0, const Tensor<T>& x1, int internal_shift, Tensor<T>& out, OpStats* stats = nullptr) {
  const Dims dims = detail::broadcast_dims(x0.dims(), x1.dims());
  out.resize(dims);
  if constexpr (element_traits<T>::integer) {
    check(internal_shift >= 0, ErrorKind::QuantizerOrder, "negative internal shift");
    detail::require_quantizer_order(x0.quantizer(), internal_shift, "Mul");
    const int s = x1.quantizer() + internal_shift;
    detail::for_each_broadcast(x0.dims(), x1.dims(), dims, [&](std::size_t i, std::size_t a, std::size_t b) {
      const detail::exact_t<T> p = static_cast<detail::exact_t<T>>(x0[a]) * x1[b];
      detail::check_accumulator<T>(p, "Mul");
      out[i] = detail::saturate<T>(shift_right(p, s));
    });
    out.set_quantizer(x0.quantizer() - internal_shift);
  } else {
    detail::for_each_broadcast(x0.dims(), x1.dims(), dims,
                               [&](std::size_t i, std::size_t a, std::size_t b) { out[i] = x0[a] * x1[b]; });
  }
  if (stats) stats->other_ops += out.size();
}

template <Element T>
void maximum(const Tensor<T>& x0, const Tensor<T>& x1, Tensor<T>& out, OpStats* stats = nullptr) {
  const Dims dims = detail::broadcast_dims(x0.dims(), x1.dims());
  out.resize(dims);
  if constexpr (element_traits<T>::integer) {
    detail::require_quantizer_order(x0.quantizer(), x1.quantizer(), "Maximum");
    const int s = x0.quantizer() - x1.quantizer();
    detail::for_each_broadcast(x0.dims(), x1.dims(), dims, [&](std::size_t i, std::size_t a, std::size_t b) {
      out[i] = static_cast<T>(std::max<std::int64_t>(x0[a], shift_left_clipped(x1[b], s, width_of<T>)));
    });
    out.set_quantizer(x0.quantizer());
  } else {
    detail::for_each_broadcast(x0.dims(), x1.dims(), dims,
                               [&](std::size_t i, std::size_t a, std::size_t b) { out[i] = std::max(x0[a], x1[b]); });
  }
  if (stats) stats->other_ops += out.size();
}

// ---------------------------------------------------------------------------------------------
// Products

/// x [..., K] times w [K, N] -> [..., N].
template <Element T>
void matmul(const Tensor<T>& x, const Tensor<T>& w, int internal_shift, Tensor<T>& out, OpStats* stats = nullptr) {
  check(x.rank() >= 1, ErrorKind::ShapeMismatch, "MatMul input must have rank >= 1");
  detail::require_rank(w.dims(), 2, "MatMul weights");
  const int k_dim = x.dims().back();
  check(w.dim(0) == k_dim, ErrorKind::ShapeMismatch,
        "MatMul inner dims disagree: " + to_string(x.dims()) + " x " + to_string(w.dims()));
  const std::size_t K = static_cast<std::size_t>(k_dim);
  const std::size_t N = static_cast<std::size_t>(w.dim(1));
  const std::size_t M = x.size() / K;
  if constexpr (element_traits<T>::integer) {
    check(internal_shift >= 0, ErrorKind::QuantizerOrder, "negative internal shift");
    detail::require_quantizer_order(x.quantizer(), internal_shift, "MatMul");
  }
  Dims dims = x.dims();
  dims.back() = static_cast<int>(N);
  out.resize(dims);

  std::vector<detail::exact_t<T>> acc(N);
  for (std::size_t m = 0; m < M; ++m) {
    std::fill(acc.begin(), acc.end(), detail::exact_t<T>{});
    const T* xr = x.data().data() + m * K;
    for (std::size_t k = 0; k < K; ++k) {
      const T* wr = w.data().data() + k * N;
      if constexpr (std::is_same_v<T, std::int16_t>) {
        simd::axpy(acc.data(), wr, xr[k], N);
      } else {
        for (std::size_t n = 0; n < N; ++n) acc[n] += static_cast<detail::exact_t<T>>(xr[k]) * wr[n];
      }
      if (stats) stats->macs += N;
    }
    detail::finish_accumulators<T>(acc, w.quantizer() + internal_shift, out.data().subspan(m * N, N), "MatMul");
  }
  if constexpr (element_traits<T>::integer) out.set_quantizer(x.quantizer() - internal_shift);
}

/// x [N, H, W, C] (channels last), w [kh, kw, C/groups, Cout].
template <Element T>
void conv2d(const Tensor<T>& x, const Tensor<T>& w, const ConvParams& p, int internal_shift, Tensor<T>& out,
            OpStats* stats = nullptr) {
  detail::require_rank(x.dims(), 4, "Conv2D input");
  detail::require_rank(w.dims(), 4, "Conv2D weights");
  detail::check_stride(p.stride);
  check(p.groups >= 1, ErrorKind::ShapeMismatch, "groups must be >= 1");
  const int batch = x.dim(0), in_h = x.dim(1), in_w = x.dim(2), in_c = x.dim(3);
  const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
  check(in_c % p.groups == 0 && cout % p.groups == 0 && w.dim(2) == in_c / p.groups, ErrorKind::ShapeMismatch,
        "Conv2D channels: input " + to_string(x.dims()) + ", weights " + to_string(w.dims()) + ", groups " +
            std::to_string(p.groups));
  if constexpr (element_traits<T>::integer) {
    check(internal_shift >= 0, ErrorKind::QuantizerOrder, "negative internal shift");
    detail::require_quantizer_order(x.quantizer(), internal_shift, "Conv2D");
  }
  const auto gy = detail::window_geometry(in_h, kh, p.stride, p.padding);
  const auto gx = detail::window_geometry(in_w, kw, p.stride, p.padding);
  out.resize({batch, gy.out, gx.out, cout});

  const int cin_g = in_c / p.groups;
  const int cout_g = cout / p.groups;
  std::vector<detail::exact_t<T>> acc(static_cast<std::size_t>(cout));
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  for (int n = 0; n < batch; ++n) {
    for (int oy = 0; oy < gy.out; ++oy) {
      for (int ox = 0; ox < gx.out; ++ox) {
        std::fill(acc.begin(), acc.end(), detail::exact_t<T>{});
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * p.stride + ky - gy.pad;
          for (int kx = 0; kx < kw; ++kx) {
            if (stats) stats->macs += static_cast<std::uint64_t>(cin_g) * static_cast<std::uint64_t>(cout);
            const int ix = ox * p.stride + kx - gx.pad;
            if (iy < 0 || iy >= in_h || ix < 0 || ix >= in_w) continue;
            const T* xp = xd + ((static_cast<std::size_t>(n) * in_h + iy) * in_w + ix) * in_c;
            const T* wp = wd + (static_cast<std::size_t>(ky) * kw + kx) * cin_g * cout;
            for (int g = 0; g < p.groups; ++g) {
              for (int ci = 0; ci < cin_g; ++ci) {
                const T xv = xp[g * cin_g + ci];
                const T* wr = wp + static_cast<std::size_t>(ci) * cout + g * cout_g;
                auto* ar = acc.data() + g * cout_g;
                if constexpr (std::is_same_v<T, std::int16_t>) {
                  simd::axpy(ar, wr, xv, static_cast<std::size_t>(cout_g));
                } else {
                  for (int co = 0; co < cout_g; ++co) ar[co] += static_cast<detail::exact_t<T>>(xv) * wr[co];
                }
              }
            }
          }
        }
        const std::size_t base = ((static_cast<std::size_t>(n) * gy.out + oy) * gx.out + ox) * cout;
        detail::finish_accumulators<T>(acc, w.quantizer() + internal_shift,
                                       out.data().subspan(base, static_cast<std::size_t>(cout)), "Conv2D");
      }
    }
  }
  if constexpr (element_traits<T>::integer) out.set_quantizer(x.quantizer() - internal_shift);
}

/// Transposed convolution: x [N, H, W, C], w [kh, kw, C/groups, Cout]; each input sample scatters
/// its kernel footprint into the upsampled output.
template <Element T>
void conv2d_transpose(const Tensor<T>& x, const Tensor<T>& w, const ConvParams& p, int internal_shift,
                      Tensor<T>& out, OpStats* stats = nullptr) {
  detail::require_rank(x.dims(), 4, "Conv2DTranspose input");
  detail::require_rank(w.dims(), 4, "Conv2DTranspose weights");
  detail::check_stride(p.stride);
  check(p.groups >= 1, ErrorKind::ShapeMismatch, "groups must be >= 1");
  const int batch = x.dim(0), in_h = x.dim(1), in_w = x.dim(2), in_c = x.dim(3);
  const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
  check(in_c % p.groups == 0 && cout % p.groups == 0 && w.dim(2) == in_c / p.groups, ErrorKind::ShapeMismatch,
        "Conv2DTranspose channels: input " + to_string(x.dims()) + ", weights " + to_string(w.dims()));
  if constexpr (element_traits<T>::integer) {
    check(internal_shift >= 0, ErrorKind::QuantizerOrder, "negative internal shift");
    detail::require_quantizer_order(x.quantizer(), internal_shift, "Conv2DTranspose");
  }
  const auto gy = detail::transposed_geometry(in_h, kh, p.stride, p.padding);
  const auto gx = detail::transposed_geometry(in_w, kw, p.stride, p.padding);
  out.resize({batch, gy.out, gx.out, cout});

  const int cin_g = in_c / p.groups;
  const int cout_g = cout / p.groups;
  std::vector<detail::exact_t<T>> acc(out.size());
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  for (int n = 0; n < batch; ++n) {
    for (int iy = 0; iy < in_h; ++iy) {
      for (int ix = 0; ix < in_w; ++ix) {
        const T* xp = xd + ((static_cast<std::size_t>(n) * in_h + iy) * in_w + ix) * in_c;
        for (int ky = 0; ky < kh; ++ky) {
          const int oy = iy * p.stride + ky - gy.pad;
          for (int kx = 0; kx < kw; ++kx) {
            if (stats) stats->macs += static_cast<std::uint64_t>(cin_g) * static_cast<std::uint64_t>(cout);
            const int ox = ix * p.stride + kx - gx.pad;
            if (oy < 0 || oy >= gy.out || ox < 0 || ox >= gx.out) continue;
            auto* ap = acc.data() + ((static_cast<std::size_t>(n) * gy.out + oy) * gx.out + ox) * cout;
            const T* wp = wd + (static_cast<std::size_t>(ky) * kw + kx) * cin_g * cout;
            for (int g = 0; g < p.groups; ++g) {
              for (int ci = 0; ci < cin_g; ++ci) {
                const T xv = xp[g * cin_g + ci];
                const T* wr = wp + static_cast<std::size_t>(ci) * cout + g * cout_g;
                for (int co = 0; co < cout_g; ++co) ap[g * cout_g + co] += static_cast<detail::exact_t<T>>(xv) * wr[co];
              }
            }
          }
        }
      }
    }
  }
  detail::finish_accumulators<T>(acc, w.quantizer() + internal_shift, out.data(), "Conv2DTranspose");
  if constexpr (element_traits<T>::integer) out.set_quantizer(x.quantizer() - internal_shift);
}

// ---------------------------------------------------------------------------------------------
// Activations

template <Element T>
void leaky_relu(const Tensor<T>& x, double alpha, Tensor<T>& out, OpStats* stats = nullptr) {
  out.resize(x.dims());
  if constexpr (element_traits<T>::integer) {
    const SlopeCode a = leaky_slope(alpha, width_of<T>);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const detail::exact_t<T> v = x[i];
      out[i] = v >= 0 ? x[i] : detail::saturate<T>(shift_right<detail::exact_t<T>>(v * a.value, a.shift));
    }
    out.set_quantizer(x.quantizer());
  } else {
    const T a = static_cast<T>(alpha);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] < 0 ? a * x[i] : x[i];
  }
  if (stats) stats->other_ops += out.size();
}

/// Per-element slope tensor broadcast over x; negative inputs become (slope * x) >> q_slope.
template <Element T>
void prelu(const Tensor<T>& x, const Tensor<T>& slope, Tensor<T>& out, OpStats* stats = nullptr) {
  const Dims dims = detail::broadcast_dims(x.dims(), slope.dims());
  check(dims == x.dims(), ErrorKind::ShapeMismatch,
        "PRelu slope " + to_string(slope.dims()) + " does not broadcast over " + to_string(x.dims()));
  out.resize(dims);
  detail::for_each_broadcast(x.dims(), slope.dims(), dims, [&](std::size_t i, std::size_t a, std::size_t b) {
    if constexpr (element_traits<T>::integer) {
      const detail::exact_t<T> v = x[a];
      out[i] = v >= 0 ? x[a] : detail::saturate<T>(shift_right<detail::exact_t<T>>(v * slope[b], slope.quantizer()));
    } else {
      out[i] = x[a] < 0 ? slope[b] * x[a] : x[a];
    }
  });
  out.set_quantizer(x.quantizer());
  if (stats) stats->other_ops += out.size();
}

template <Element T>
void relu(const Tensor<T>& x, Tensor<T>& out, OpStats* stats = nullptr) {
  out.resize(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] < T{} ? T{} : x[i];
  out.set_quantizer(x.quantizer());
  if (stats) stats->other_ops += out.size();
}

/// Max pooling over k x k windows of x [N, H, W, C]; compares raw stored values.
template <Element T>
void maxpool(const Tensor<T>& x, int kernel, int stride, Padding padding, Tensor<T>& out, OpStats* stats = nullptr) {
  detail::require_rank(x.dims(), 4, "MaxPool input");
  check(kernel >= 1 && stride >= 1, ErrorKind::ShapeMismatch, "MaxPool kernel and stride must be >= 1");
  const int batch = x.dim(0), in_h = x.dim(1), in_w = x.dim(2), c = x.dim(3);
  const auto gy = detail::window_geometry(in_h, kernel, stride, padding);
  const auto gx = detail::window_geometry(in_w, kernel, stride, padding);
  out.resize({batch, gy.out, gx.out, c});
  std::size_t o = 0;
  for (int n = 0; n < batch; ++n)
    for (int oy = 0; oy < gy.out; ++oy)
      for (int ox = 0; ox < gx.out; ++ox)
        for (int ch = 0; ch < c; ++ch) {
          T best = std::numeric_limits<T>::lowest();
          for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx) {
              const int iy = oy * stride + ky - gy.pad;
              const int ix = ox * stride + kx - gx.pad;
              if (iy < 0 || iy >= in_h || ix < 0 || ix >= in_w) continue;
              best = std::max(best, x[((static_cast<std::size_t>(n) * in_h + iy) * in_w + ix) * c + ch]);
            }
          out[o++] = best;
        }
  out.set_quantizer(x.quantizer());
  if (stats) stats->other_ops += out.size() * static_cast<std::uint64_t>(kernel * kernel);
}

// ---------------------------------------------------------------------------------------------
// Data movement

template <Element T>
void concat(std::span<const Tensor<T>* const> parts, int axis, Tensor<T>& out, OpStats* stats = nullptr) {
  check(!parts.empty(), ErrorKind::ShapeMismatch, "Concat needs at least one input");
  const Dims& first = parts.front()->dims();
  const int ax = detail::normalize_axis(axis, static_cast<int>(first.size()));
  Dims dims = first;
  dims[ax] = 0;
  int q = parts.front()->quantizer();
  for (const auto* p : parts) {
    check(p->rank() == static_cast<int>(first.size()), ErrorKind::ShapeMismatch, "Concat rank mismatch");
    for (int i = 0; i < p->rank(); ++i)
      check(i == ax || p->dims()[i] == first[i], ErrorKind::ShapeMismatch,
            "Concat dims " + to_string(p->dims()) + " vs " + to_string(first));
    dims[ax] += p->dims()[ax];
    q = std::min(q, p->quantizer());
  }
  out.resize(dims);
  std::size_t outer = 1;
  for (int i = 0; i < ax; ++i) outer *= static_cast<std::size_t>(dims[i]);
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < dims.size(); ++i) inner *= static_cast<std::size_t>(dims[i]);
  const std::size_t out_row = static_cast<std::size_t>(dims[ax]) * inner;
  std::size_t offset = 0;
  for (const auto* p : parts) {
    const std::size_t row = static_cast<std::size_t>(p->dims()[ax]) * inner;
    const int s = p->quantizer() - q;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < row; ++i) {
        const T v = (*p)[o * row + i];
        if constexpr (element_traits<T>::integer)
          out[o * out_row + offset + i] = static_cast<T>(shift_right<std::int64_t>(v, s));
        else
          out[o * out_row + offset + i] = v;
      }
    offset += row;
  }
  if constexpr (element_traits<T>::integer) out.set_quantizer(q);
  if (stats) stats->other_ops += out.size();
}

/// Target dims may contain one -1 (inferred extent).
template <Element T>
void reshape(const Tensor<T>& x, const Dims& target, Tensor<T>& out) {
  Dims dims = target;
  std::size_t known = 1;
  int infer_at = -1;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == -1) {
      check(infer_at < 0, ErrorKind::ShapeMismatch, "reshape target has more than one -1");
      infer_at = static_cast<int>(i);
    } else {
      check(dims[i] > 0, ErrorKind::ShapeMismatch, "bad reshape target " + to_string(target));
      known *= static_cast<std::size_t>(dims[i]);
    }
  }
  if (infer_at >= 0) {
    check(known > 0 && x.size() % known == 0, ErrorKind::ShapeMismatch,
          "cannot reshape " + to_string(x.dims()) + " to " + to_string(target));
    dims[infer_at] = static_cast<int>(x.size() / known);
  }
  check(element_count(dims) == x.size(), ErrorKind::ShapeMismatch,
        "cannot reshape " + to_string(x.dims()) + " to " + to_string(target));
  out = Tensor<T>(dims, std::vector<T>(x.data().begin(), x.data().end()), x.quantizer());
}

/// Collapses to 2-D [prod(dims[:axis]), prod(dims[axis:])].
template <Element T>
void flatten(const Tensor<T>& x, int axis, Tensor<T>& out) {
  check(axis >= 0 && axis <= x.rank(), ErrorKind::ShapeMismatch, "flatten axis out of range");
  int lead = 1;
  for (int i = 0; i < axis; ++i) lead *= x.dims()[i];
  reshape(x, Dims{lead, static_cast<int>(x.size() / static_cast<std::size_t>(lead))}, out);
}

template <Element T>
void transpose(const Tensor<T>& x, const std::vector<int>& perm, Tensor<T>& out) {
  const int rank = x.rank();
  check(static_cast<int>(perm.size()) == rank, ErrorKind::ShapeMismatch, "transpose permutation rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(rank), false);
  Dims dims(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    check(perm[i] >= 0 && perm[i] < rank && !seen[perm[i]], ErrorKind::ShapeMismatch, "invalid permutation");
    seen[perm[i]] = true;
    dims[i] = x.dims()[perm[i]];
  }
  std::vector<std::size_t> in_strides(static_cast<std::size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * static_cast<std::size_t>(x.dims()[i + 1]);
  out.resize(dims);
  std::vector<int> idx(static_cast<std::size_t>(rank), 0);
  for (std::size_t o = 0; o < out.size(); ++o) {
    std::size_t src = 0;
    for (int i = 0; i < rank; ++i) src += static_cast<std::size_t>(idx[i]) * in_strides[perm[i]];
    out[o] = x[src];
    for (int k = rank - 1; k >= 0; --k) {
      if (++idx[k] < dims[k]) break;
      idx[k] = 0;
    }
  }
  out.set_quantizer(x.quantizer());
}

/// Per-axis half-open [start, end) windows; negative indices count from the end.
template <Element T>
void slice(const Tensor<T>& x, const std::vector<int>& starts, const std::vector<int>& ends, Tensor<T>& out) {
  const int rank = x.rank();
  check(static_cast<int>(starts.size()) == rank && static_cast<int>(ends.size()) == rank, ErrorKind::ShapeMismatch,
        "slice needs one start and end per axis");
  Dims dims(static_cast<std::size_t>(rank));
  std::vector<int> lo(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    const int n = x.dims()[i];
    int s = starts[i] < 0 ? starts[i] + n : starts[i];
    int e = ends[i] < 0 ? ends[i] + n : ends[i];
    s = std::clamp(s, 0, n);
    e = std::clamp(e, 0, n);
    check(e > s, ErrorKind::ShapeMismatch, "empty slice on axis " + std::to_string(i));
    lo[i] = s;
    dims[i] = e - s;
  }
  std::vector<std::size_t> strides(static_cast<std::size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i) strides[i] = strides[i + 1] * static_cast<std::size_t>(x.dims()[i + 1]);
  out.resize(dims);
  std::vector<int> idx(static_cast<std::size_t>(rank), 0);
  for (std::size_t o = 0; o < out.size(); ++o) {
    std::size_t src = 0;
    for (int i = 0; i < rank; ++i) src += static_cast<std::size_t>(idx[i] + lo[i]) * strides[i];
    out[o] = x[src];
    for (int k = rank - 1; k >= 0; --k) {
      if (++idx[k] < dims[k]) break;
      idx[k] = 0;
    }
  }
  out.set_quantizer(x.quantizer());
}

template <Element T>
void expand(const Tensor<T>& x, const Dims& target, Tensor<T>& out) {
  const Dims dims = detail::broadcast_dims(x.dims(), target);
  out.resize(dims);
  detail::for_each_broadcast(x.dims(), dims, dims, [&](std::size_t i, std::size_t a, std::size_t) { out[i] = x[a]; });
  out.set_quantizer(x.quantizer());
}

/// The extents of x as a rank-1 tensor with quantizer 0.
template <Element T>
void shape_of(const Tensor<T>& x, Tensor<T>& out) {
  out.resize({x.rank() == 0 ? 1 : x.rank()});
  out.fill(T{});
  for (int i = 0; i < x.rank(); ++i) {
    if constexpr (element_traits<T>::integer)
      out[i] = detail::saturate<T>(static_cast<std::int64_t>(x.dims()[i]));
    else
      out[i] = static_cast<T>(x.dims()[i]);
  }
  out.set_quantizer(0);
}

// ---------------------------------------------------------------------------------------------
// Value-returning conveniences for the common layers.

template <Element T>
Tensor<T> bias_add(const Tensor<T>& x0, const Tensor<T>& x1) {
  Tensor<T> out;
  bias_add(x0, x1, out);
  return out;
}

template <Element T>
Tensor<T> add(const Tensor<T>& x0, const Tensor<T>& x1) {
  Tensor<T> out;
  add(x0, x1, out);
  return out;
}

template <Element T>
Tensor<T> mul(const Tensor<T>& x0, const Tensor<T>& x1, int internal_shift = 0) {
  Tensor<T> out;
  mul(x0, x1, internal_shift, out);
  return out;
}

template <Element T>
Tensor<T> maximum(const Tensor<T>& x0, const Tensor<T>& x1) {
  Tensor<T> out;
  maximum(x0, x1, out);
  return out;
}

template <Element T>
Tensor<T> matmul(const Tensor<T>& x, const Tensor<T>& w, int internal_shift = 0) {
  Tensor<T> out;
  matmul(x, w, internal_shift, out);
  return out;
}

template <Element T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const ConvParams& p, int internal_shift = 0) {
  Tensor<T> out;
  conv2d(x, w, p, internal_shift, out);
  return out;
}

template <Element T>
Tensor<T> leaky_relu(const Tensor<T>& x, double alpha) {
  Tensor<T> out;
  leaky_relu(x, alpha, out);
  return out;
}

template <Element T>
Tensor<T> concat(std::initializer_list<const Tensor<T>*> parts, int axis = -1) {
  Tensor<T> out;
  std::vector<const Tensor<T>*> v(parts);
  concat<T>(std::span<const Tensor<T>* const>(v), axis, out);
  return out;
}

}  // namespace qnn
