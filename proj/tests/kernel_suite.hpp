#pragma once

// Randomised comparison of every integer kernel against the big-integer formulas in oracle.hpp.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracle.hpp"

namespace suite {

using oracle::big;
using Rng = std::mt19937_64;

inline int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

template <class T>
qnn::Tensor<T> random_tensor(Rng& rng, qnn::Dims dims, int q) {
  qnn::Tensor<T> t(std::move(dims), q);
  const std::int64_t hi = qnn::max_magnitude(qnn::width_of<T>);
  // Mix full-range values with small ones so that both saturation and exact paths are exercised.
  const bool small = uniform(rng, 0, 1) == 0;
  const std::int64_t lim = small ? std::min<std::int64_t>(hi, 100) : hi;
  std::uniform_int_distribution<std::int64_t> d(-lim, lim);
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

template <class T>
constexpr int W = qnn::bit_count(qnn::width_of<T>);

/// Runs `fn` and reports whether it matched the oracle. A NumericOverflow must be predicted.
template <class T, class Fn>
bool agree(const oracle::Expected& e, Fn&& fn) {
  qnn::Tensor<T> got;
  try {
    fn(got);
  } catch (const qnn::Error& err) {
    return e.overflow && err.kind() == qnn::ErrorKind::NumericOverflow;
  }
  return oracle::matches(e, got);
}

template <class T>
bool bias_add_case(Rng& rng) {
  const int m = uniform(rng, 1, 4), n = uniform(rng, 1, 6);
  const int q0 = uniform(rng, 0, W<T> + 4), q1 = uniform(rng, 0, q0);
  auto x0 = random_tensor<T>(rng, {m, n}, q0);
  auto x1 = random_tensor<T>(rng, {n}, q1);
  oracle::Expected e;
  e.q = q1;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      e.values.push_back(oracle::clip(oracle::floor_shift(oracle::at(x0, static_cast<std::size_t>(i * n + j)), q0 - q1) + oracle::at(x1, static_cast<std::size_t>(j)), W<T>));
  return agree<T>(e, [&](qnn::Tensor<T>& out) { qnn::bias_add(x0, x1, out); });
}

template <class T>
bool add_case(Rng& rng) {
  const int m = uniform(rng, 1, 4), n = uniform(rng, 1, 6);
  const int q0 = uniform(rng, 0, W<T> + 4), q1 = uniform(rng, 0, W<T> + 4);
  const bool bcast = uniform(rng, 0, 2) == 0;
  auto x0 = random_tensor<T>(rng, {m, n}, q0);
  auto x1 = bcast ? random_tensor<T>(rng, {n}, q1) : random_tensor<T>(rng, {m, n}, q1);
  oracle::Expected e;
  e.q = std::min(q0, q1);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const auto a = oracle::at(x0, static_cast<std::size_t>(i * n + j));
      const auto b = oracle::at(x1, static_cast<std::size_t>(bcast ? j : i * n + j));
      e.values.push_back(oracle::clip(oracle::floor_shift(a, q0 - e.q) + oracle::floor_shift(b, q1 - e.q), W<T>));
    }
  return agree<T>(e, [&](qnn::Tensor<T>& out) { qnn::add(x0, x1, out); });
}

template <class T>
bool mul_case(Rng& rng) {
  const int n = uniform(rng, 1, 8);
  const int q0 = uniform(rng, 0, W<T> + 4), q1 = uniform(rng, 0, W<T> + 4), qi = uniform(rng, 0, q0);
  auto x0 = random_tensor<T>(rng, {n}, q0);
  auto x1 = random_tensor<T>(rng, {n}, q1);
  oracle::Expected e;
  e.q = q0 - qi;
  for (int j = 0; j < n; ++j) {
    const big p = oracle::at(x0, static_cast<std::size_t>(j)) * oracle::at(x1, static_cast<std::size_t>(j));
    if (!oracle::fits_accumulator(p, W<T>)) e.overflow = true;
    e.values.push_back(oracle::clip(oracle::floor_shift(p, q1 + qi), W<T>));
  }
  return agree<T>(e, [&](qnn::Tensor<T>& out) { qnn::mul(x0, x1, qi, out); });
}

template <class T>
bool matmul_case(Rng& rng) {
  const int M = uniform(rng, 1, 4), K = uniform(rng, 1, 24), N = uniform(rng, 1, 6);
  const int q0 = uniform(rng, 0, W<T> + 4), q1 = uniform(rng, 0, W<T> + 4), qi = uniform(rng, 0, q0);
  auto x = random_tensor<T>(rng, {M, K}, q0);
  auto w = random_tensor<T>(rng, {K, N}, q1);
  oracle::Expected e;
  e.q = q0 - qi;
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      big s = 0;
      for (int k = 0; k < K; ++k) s += oracle::at(x, static_cast<std::size_t>(i * K + k)) * oracle::at(w, static_cast<std::size_t>(k * N + j));
      if (!oracle::fits_accumulator(s, W<T>)) e.overflow = true;
      e.values.push_back(oracle::clip(oracle::floor_shift(s, q1 + qi), W<T>));
    }
  return agree<T>(e, [&](qnn::Tensor<T>& out) { qnn::matmul(x, w, qi, out); });
}

template <class T>
bool conv_case(Rng& rng) {
  const int H = uniform(rng, 1, 5), Wd = uniform(rng, 1, 5);
  const int groups = uniform(rng, 1, 2);
  const int cin = groups * uniform(rng, 1, 2), cout = groups * uniform(rng, 1, 2);
  const int k = uniform(rng, 0, 1) ? 3 : 1;
  const int stride = uniform(rng, 1, 2);
  const bool valid = uniform(rng, 0, 1) == 1 && H >= k && Wd >= k;
  const int q0 = uniform(rng, 0, W<T> + 4), q1 = uniform(rng, 0, W<T> + 4), qi = uniform(rng, 0, q0);
  auto x = random_tensor<T>(rng, {1, H, Wd, cin}, q0);
  auto w = random_tensor<T>(rng, {k, k, cin / groups, cout}, q1);
  // Output geometry written out from the padding definitions.
  auto geom = [&](int in) {
    if (valid) return std::pair{(in - k) / stride + 1, 0};
    const int out = (in + stride - 1) / stride;
    return std::pair{out, std::max((out - 1) * stride + k - in, 0) / 2};
  };
  const auto [oh, ph] = geom(H);
  const auto [ow, pw] = geom(Wd);
  const int cig = cin / groups, cog = cout / groups;
  oracle::Expected e;
  e.q = q0 - qi;
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int co = 0; co < cout; ++co) {
        const int g = co / cog;
        big s = 0;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const int iy = oy * stride + ky - ph, ix = ox * stride + kx - pw;
            if (iy < 0 || ix < 0 || iy >= H || ix >= Wd) continue;
            for (int ci = 0; ci < cig; ++ci)
              s += oracle::at(x, static_cast<std::size_t>((iy * Wd + ix) * cin + g * cig + ci)) *
                   oracle::at(w, static_cast<std::size_t>(((ky * k + kx) * cig + ci) * cout + co));
          }
        if (!oracle::fits_accumulator(s, W<T>)) e.overflow = true;
        e.values.push_back(oracle::clip(oracle::floor_shift(s, q1 + qi), W<T>));
      }
  const qnn::ConvParams p{stride, groups, valid ? qnn::Padding::Valid : qnn::Padding::Same};
  return agree<T>(e, [&](qnn::Tensor<T>& out) { qnn::conv2d(x, w, p, qi, out); });
}

template <class T>
bool concat_case(Rng& rng) {
  const int parts = uniform(rng, 1, 3);
  const int rank = uniform(rng, 1, 3);
  const int axis = uniform(rng, 0, rank - 1);
  qnn::Dims base(static_cast<std::size_t>(rank));
  for (auto& d : base) d = uniform(rng, 1, 3);
  std::vector<qnn::Tensor<T>> ts;
  int q = 1 << 20;
  for (int p = 0; p < parts; ++p) {
    qnn::Dims d = base;
    d[static_cast<std::size_t>(axis)] = uniform(rng, 1, 3);
    const int qk = uniform(rng, 0, W<T> + 4);
    q = std::min(q, qk);
    ts.push_back(random_tensor<T>(rng, d, qk));
  }
  qnn::Dims od = base;
  od[static_cast<std::size_t>(axis)] = 0;
  for (const auto& t : ts) od[static_cast<std::size_t>(axis)] += t.dims()[static_cast<std::size_t>(axis)];
  oracle::Expected e;
  e.q = q;
  for (const auto& idx : oracle::all_indices(od)) {
    int pos = idx[static_cast<std::size_t>(axis)];
    std::size_t part = 0;
    while (pos >= ts[part].dims()[static_cast<std::size_t>(axis)]) pos -= ts[part++].dims()[static_cast<std::size_t>(axis)];
    auto local = idx;
    local[static_cast<std::size_t>(axis)] = pos;
    const auto& t = ts[part];
    const std::size_t flat = oracle::broadcast_index(t.dims(), t.dims(), local);
    e.values.push_back(oracle::floor_shift(oracle::at(t, flat), t.quantizer() - q));
  }
  std::vector<const qnn::Tensor<T>*> ptrs;
  for (const auto& t : ts) ptrs.push_back(&t);
  return agree<T>(e, [&](qnn::Tensor<T>& out) { qnn::concat<T>(ptrs, axis, out); });
}

template <class T>
bool leaky_case(Rng& rng) {
  const int n = uniform(rng, 1, 8);
  const int q0 = uniform(rng, 0, W<T> + 4);
  double alpha = std::uniform_real_distribution<double>(-0.999, 0.999)(rng);
  if (uniform(rng, 0, 3) == 0) alpha = std::ldexp(static_cast<double>(uniform(rng, -7, 7)), -3);
  auto x = random_tensor<T>(rng, {n}, q0);
  const auto slope = oracle::leaky_slope(alpha, W<T>);
  oracle::Expected e;
  e.q = q0;
  for (int j = 0; j < n; ++j) {
    const big v = oracle::at(x, static_cast<std::size_t>(j));
    e.values.push_back(v >= 0 ? v : oracle::clip(oracle::floor_shift(v * slope.value, slope.q), W<T>));
  }
  return agree<T>(e, [&](qnn::Tensor<T>& out) { qnn::leaky_relu(x, alpha, out); });
}

template <class T>
bool maximum_case(Rng& rng) {
  const int n = uniform(rng, 1, 8);
  const int q0 = uniform(rng, 0, W<T> + 4), q1 = uniform(rng, 0, q0);
  auto x0 = random_tensor<T>(rng, {n}, q0);
  auto x1 = random_tensor<T>(rng, {n}, q1);
  oracle::Expected e;
  e.q = q0;
  for (int j = 0; j < n; ++j) {
    const big a = oracle::at(x0, static_cast<std::size_t>(j));
    const big b = oracle::clip(oracle::at(x1, static_cast<std::size_t>(j)) * oracle::pow2(q0 - q1), W<T>);
    e.values.push_back(a > b ? a : b);
  }
  return agree<T>(e, [&](qnn::Tensor<T>& out) { qnn::maximum(x0, x1, out); });
}

struct KernelResult {
  std::string name;
  int cases = 0;
  int mismatches = 0;
};

/// Each kernel gets `cases` random cases, cycling through int8, int16 and int32.
inline std::vector<KernelResult> run_all(int cases, std::uint64_t seed) {
  using Case = bool (*)(Rng&);
  struct Entry {
    const char* name;
    Case c8, c16, c32;
  };
#define QNN_KERNEL(name, fn) Entry{name, &fn<std::int8_t>, &fn<std::int16_t>, &fn<std::int32_t>}
  const Entry entries[] = {
      QNN_KERNEL("BiasAdd", bias_add_case), QNN_KERNEL("Add", add_case),         QNN_KERNEL("Mul", mul_case),
      QNN_KERNEL("MatMul", matmul_case),    QNN_KERNEL("Conv2D", conv_case),     QNN_KERNEL("Concat", concat_case),
      QNN_KERNEL("LeakyReLU", leaky_case),  QNN_KERNEL("Maximum", maximum_case),
  };
#undef QNN_KERNEL
  std::vector<KernelResult> out;
  std::uint64_t k = 0;
  for (const auto& en : entries) {
    Rng rng(seed + 7919 * ++k);
    KernelResult r{en.name, cases, 0};
    for (int i = 0; i < cases; ++i) {
      const Case c = i % 3 == 0 ? en.c8 : i % 3 == 1 ? en.c16 : en.c32;
      if (!c(rng)) ++r.mismatches;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace suite
