#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "qnn/filter.hpp"
#include "qnn/intra.hpp"
#include "qnn/quantize.hpp"

namespace qnn::reference {

// ---------------------------------------------------------------------------------------------
// Sparse intra networks with random weights and a prescribed MAC budget

/// Published per-network figures: dense and sparse MACs per predicted pixel.
struct IntraBudget {
  intra::BlockShape shape;
  std::uint64_t dense_macs_per_pixel;
  std::uint64_t sparse_macs_per_pixel;
};

inline constexpr std::array<IntraBudget, 3> published_budgets{{
    {{4, 4}, 108300, 7773},
    {{8, 8}, 33155, 2624},
    {{16, 16}, 15627, 1411},
}};

inline constexpr int hidden_width = 1216;
inline constexpr int run_alignment = 8;

/// Fully connected layers: 4 for (16,16), 3 otherwise.
inline int fc_layers(intra::BlockShape s) { return s == intra::BlockShape{16, 16} ? 4 : 3; }

inline int intra_output_size(intra::BlockShape s) {
  return s.h * s.w + intra::rep_idx_classes + 2 * intra::grp_idx_classes;
}

/// Layer widths from input to output.
inline std::vector<int> intra_layer_widths(intra::BlockShape s) {
  std::vector<int> widths{static_cast<int>(intra::flattened_length(intra::default_context_spec(s), s.h, s.w))};
  for (int i = 0; i + 1 < fc_layers(s); ++i) widths.push_back(hidden_width);
  widths.push_back(intra_output_size(s));
  return widths;
}

inline std::uint64_t dense_macs(const std::vector<int>& widths) {
  std::uint64_t m = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) m += static_cast<std::uint64_t>(widths[i]) * static_cast<std::uint64_t>(widths[i + 1]);
  return m;
}

/// Sparse MACs per pixel used for a shape: the published figure when there is one, otherwise the
/// dense count scaled by the density of the published network with the same smaller side.
inline std::uint64_t sparse_budget_per_pixel(intra::BlockShape s) {
  for (const auto& b : published_budgets)
    if (b.shape == s) return b.sparse_macs_per_pixel;
  const int side = std::min(s.h, s.w);
  const IntraBudget& ref = side <= 4 ? published_budgets[0] : side <= 8 ? published_budgets[1] : published_budgets[2];
  const double density = static_cast<double>(ref.sparse_macs_per_pixel) / static_cast<double>(ref.dense_macs_per_pixel);
  const auto pixels = static_cast<std::uint64_t>(s.h * s.w);
  return static_cast<std::uint64_t>(std::llround(density * static_cast<double>(dense_macs(intra_layer_widths(s)) / pixels)));
}

/// Splits `total` aligned runs across layers in proportion to their dense sizes (largest remainder).
inline std::vector<std::uint64_t> split_runs(const std::vector<int>& widths, std::uint64_t total) {
  const std::size_t layers = widths.size() - 1;
  const double dense = static_cast<double>(dense_macs(widths));
  std::vector<std::uint64_t> runs(layers);
  std::vector<std::pair<double, std::size_t>> rem;
  std::uint64_t used = 0;
  for (std::size_t i = 0; i < layers; ++i) {
    const double share = static_cast<double>(total) * widths[i] * widths[i + 1] / dense;
    runs[i] = static_cast<std::uint64_t>(share);
    used += runs[i];
    rem.push_back({share - static_cast<double>(runs[i]), i});
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++runs[rem[k % layers].second];
  return runs;
}

/// Dense [rows, cols] float matrix whose non-zeros fill exactly `runs` distinct aligned slots of
/// `run_alignment` columns (cols must be a multiple of the alignment).
inline Tensor<float> random_block_sparse(int rows, int cols, std::uint64_t runs, std::mt19937_64& rng) {
  check(cols % run_alignment == 0, ErrorKind::InvalidArgument, "column count must be a multiple of 8");
  const int blocks = cols / run_alignment;
  const std::uint64_t slots = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(blocks);
  check(runs <= slots, ErrorKind::InvalidArgument, "more runs than aligned slots");
  std::vector<std::uint32_t> order(slots);
  std::iota(order.begin(), order.end(), 0u);
  // Partial Fisher-Yates with the engine directly, so the draw sequence is fixed across platforms.
  for (std::uint64_t i = 0; i < runs; ++i) {
    const std::uint64_t j = i + rng() % (slots - i);
    std::swap(order[i], order[j]);
  }
  const double per_row = static_cast<double>(runs) * run_alignment / rows;
  const double a = std::sqrt(3.0 / std::max(1.0, per_row));
  Tensor<float> w({rows, cols});
  for (std::uint64_t i = 0; i < runs; ++i) {
    const int r = static_cast<int>(order[i] / static_cast<std::uint32_t>(blocks));
    const int c0 = static_cast<int>(order[i] % static_cast<std::uint32_t>(blocks)) * run_alignment;
    for (int c = c0; c < c0 + run_alignment; ++c) {
      // Never exactly zero, so packing keeps every slot.
      float v = static_cast<float>((static_cast<double>(rng() >> 11) / 9007199254740992.0 * 2.0 - 1.0) * a);
      if (v == 0.0f) v = static_cast<float>(a / 2);
      w[static_cast<std::size_t>(r) * cols + c] = v;
    }
  }
  return w;
}

/// Float intra network for one shape: sparse FC layers, biases, LeakyReLU(0.1) between layers.
inline Graph intra_float_model(intra::BlockShape s, std::uint64_t seed = 1) {
  const auto widths = intra_layer_widths(s);
  const std::uint64_t total_runs = sparse_budget_per_pixel(s) * static_cast<std::uint64_t>(s.h * s.w) / run_alignment;
  const auto runs = split_runs(widths, total_runs);
  std::mt19937_64 rng(seed * 1000003u + static_cast<std::uint64_t>(s.h * 100 + s.w));
  GraphBuilder b(ElementWidth::f32);
  NodeId x = b.input({1, widths[0]});
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in_w = widths[l], out_w = widths[l + 1];
    const int cols = (in_w + run_alignment - 1) / run_alignment * run_alignment;
    Tensor<float> dense = random_block_sparse(out_w, cols, runs[l], rng);
    if (cols != in_w) {
      Tensor<float> cut({out_w, in_w});
      for (int r = 0; r < out_w; ++r)
        for (int c = 0; c < in_w; ++c) cut[static_cast<std::size_t>(r) * in_w + c] = dense[static_cast<std::size_t>(r) * cols + c];
      dense = std::move(cut);
    }
    x = b.sparse_matmul(x, pack_sparse(dense, run_alignment));
    Tensor<float> bias({out_w});
    for (auto& v : bias.data()) v = static_cast<float>((static_cast<double>(rng() >> 11) / 9007199254740992.0 - 0.5) * 0.1);
    x = b.add(OpKind::BiasAdd, {x, b.constant(std::move(bias))});
    if (l + 2 < widths.size()) x = b.add(OpKind::LeakyRelu, {x}, Attributes{}.set_alpha(0.1));
  }
  b.output(x);
  b.meta("intra.context", intra::context_metadata(intra::default_context_spec(s)));
  b.meta("intra.shape", std::to_string(s.h) + "x" + std::to_string(s.w));
  return b.build();
}

/// Synthetic preprocessed contexts: smooth ramps plus noise, at the float input scale.
inline CalibrationSet intra_calibration(intra::BlockShape s, int count, std::uint64_t seed = 7) {
  const int n = static_cast<int>(intra::flattened_length(intra::default_context_spec(s), s.h, s.w));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 4.0);
  std::uniform_real_distribution<double> slope(-1.0, 1.0);
  CalibrationSet set;
  for (int k = 0; k < count; ++k) {
    Tensor<float> t({1, n});
    const double g = slope(rng);
    for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = static_cast<float>(std::clamp(g * (i - n / 2) * 0.2 + noise(rng), -127.0, 127.0));
    set.push_back({std::move(t)});
  }
  return set;
}

inline Graph intra_int16_model(intra::BlockShape s, std::uint64_t seed = 1) {
  QuantizeOptions opt;
  return static_quantize(intra_float_model(s, seed), intra_calibration(s, 8), ElementWidth::i16, opt);
}

// ---------------------------------------------------------------------------------------------
// Filter networks

/// Residual = sum_i coeff[i] * input_i + bias over the normalised input planes, as a 1x1 convolution.
/// With all coefficients zero the residual is the constant `bias` (in units of the full sample range).
inline Graph linear_filter(const std::vector<double>& coeff, double bias, int patch = 144) {
  const int c = static_cast<int>(coeff.size());
  GraphBuilder b(ElementWidth::f32);
  std::vector<NodeId> ins;
  for (int i = 0; i < c; ++i) ins.push_back(b.input({1, patch, patch, 1}));
  NodeId x = c == 1 ? ins[0] : b.add(OpKind::Concat, ins, Attributes{}.set_axis(3));
  Tensor<float> w({1, 1, c, 1});
  for (int i = 0; i < c; ++i) w[static_cast<std::size_t>(i)] = static_cast<float>(coeff[static_cast<std::size_t>(i)]);
  x = b.add(OpKind::Conv2D, {x, b.constant(std::move(w))});
  x = b.add(OpKind::BiasAdd, {x, b.constant(Tensor<float>({1}, std::vector<float>{static_cast<float>(bias)}))});
  b.output(x);
  return b.build();
}

/// Small residual CNN: concat -> 3x3 conv (16) -> leaky -> 3x3 conv (16) -> leaky -> 3x3 conv (1).
inline Graph filter_float_model(int inputs = 4, int features = 16, std::uint64_t seed = 3, int patch = 144) {
  check(inputs == 4 || inputs == 5 || inputs == 7, ErrorKind::InvalidArgument, "filter models take 4, 5 or 7 inputs");
  std::mt19937_64 rng(seed);
  auto uniform = [&](double a) { return static_cast<float>((static_cast<double>(rng() >> 11) / 9007199254740992.0 * 2.0 - 1.0) * a); };
  GraphBuilder b(ElementWidth::f32);
  std::vector<NodeId> ins;
  for (int i = 0; i < inputs; ++i) ins.push_back(b.input({1, patch, patch, 1}));
  NodeId x = b.add(OpKind::Concat, ins, Attributes{}.set_axis(3));
  int cin = inputs;
  const int couts[3] = {features, features, 1};
  for (int l = 0; l < 3; ++l) {
    const int cout = couts[l];
    const double a = (l == 2 ? 0.02 : 1.0) * std::sqrt(3.0 / (9.0 * cin));
    Tensor<float> w({3, 3, cin, cout});
    for (auto& v : w.data()) v = uniform(a);
    x = b.add(OpKind::Conv2D, {x, b.constant(std::move(w))});
    Tensor<float> bias({cout});
    for (auto& v : bias.data()) v = uniform(l == 2 ? 0.001 : 0.05);
    x = b.add(OpKind::BiasAdd, {x, b.constant(std::move(bias))});
    if (l < 2) x = b.add(OpKind::LeakyRelu, {x}, Attributes{}.set_alpha(0.1));
    cin = cout;
  }
  b.output(x);
  return b.build();
}

/// Random smooth planes at the normalised input scale, one set per sample.
inline CalibrationSet filter_calibration(int inputs, int count, int patch = 144, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CalibrationSet set;
  for (int k = 0; k < count; ++k) {
    std::vector<Tensor<float>> sample;
    for (int i = 0; i < inputs; ++i) {
      Tensor<float> t({1, patch, patch, 1});
      const double base = u(rng), gx = (u(rng) - 0.5) / patch, gy = (u(rng) - 0.5) / patch;
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x)
          t[static_cast<std::size_t>(y) * patch + x] = static_cast<float>(std::clamp(base + gx * x + gy * y + (u(rng) - 0.5) * 0.05, 0.0, 1.0));
      sample.push_back(std::move(t));
    }
    set.push_back(std::move(sample));
  }
  return set;
}

inline Graph filter_int16_model(int inputs = 4, std::uint64_t seed = 3) {
  QuantizeOptions opt;
  opt.auto_input_q = true;
  return static_quantize(filter_float_model(inputs, 16, seed, 32), filter_calibration(inputs, 4, 32), ElementWidth::i16, opt);
}

}  // namespace qnn::reference
