#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "qnn/executor.hpp"
#include "qnn/model_io.hpp"
#include "qnn/plane.hpp"

namespace qnn::intra {

// ---------------------------------------------------------------------------------------------
// Block shapes, (h, w) = (height, width).

struct BlockShape {
  int h = 0;
  int w = 0;
  auto operator<=>(const BlockShape&) const = default;
};

inline constexpr std::array<BlockShape, 7> network_shapes{{{4, 4}, {4, 8}, {4, 16}, {4, 32}, {8, 8}, {8, 16}, {16, 16}}};

inline bool in_s(BlockShape s) { return std::find(network_shapes.begin(), network_shapes.end(), s) != network_shapes.end(); }

struct TransformRule {
  int gamma = 1;  // horizontal factor
  int delta = 1;  // vertical factor
  bool transpose = false;
  BlockShape network;
  bool operator==(const TransformRule&) const = default;
};

/// Context transformations per block shape; shapes without a row are not predicted by the NN mode.
inline std::optional<TransformRule> transform_rule(int h, int w) {
  struct Row {
    BlockShape block;
    TransformRule rule;
  };
  static constexpr Row rows[] = {
      {{4, 4}, {1, 1, false, {4, 4}}},     {{4, 8}, {1, 1, false, {4, 8}}},     {{8, 4}, {1, 1, true, {4, 8}}},
      {{4, 16}, {1, 1, false, {4, 16}}},   {{16, 4}, {1, 1, true, {4, 16}}},    {{4, 32}, {1, 1, false, {4, 32}}},
      {{32, 4}, {1, 1, true, {4, 32}}},    {{8, 8}, {1, 1, false, {8, 8}}},     {{8, 16}, {1, 1, false, {8, 16}}},
      {{16, 8}, {1, 1, true, {8, 16}}},    {{8, 32}, {2, 1, false, {8, 16}}},   {{32, 8}, {1, 2, true, {8, 16}}},
      {{16, 16}, {1, 1, false, {16, 16}}}, {{16, 32}, {2, 1, false, {16, 16}}}, {{32, 16}, {1, 2, false, {16, 16}}},
      {{32, 32}, {2, 2, false, {16, 16}}}, {{64, 64}, {4, 4, false, {16, 16}}},
  };
  for (const auto& r : rows)
    if (r.block.h == h && r.block.w == w) return r.rule;
  return std::nullopt;
}

/// Shapes the NN mode can predict.
inline bool in_s_bar(int h, int w) { return transform_rule(h, w).has_value(); }

inline std::vector<BlockShape> s_bar() {
  std::vector<BlockShape> out;
  for (int h = 1; h <= 64; ++h)
    for (int w = 1; w <= 64; ++w)
      if (in_s_bar(h, w)) out.push_back({h, w});
  return out;
}

// ---------------------------------------------------------------------------------------------
// Context geometry

struct ContextSpec {
  int n_a = 4;  // rows above
  int n_l = 4;  // columns left
  int e_h = 4;  // extension of the left part below 2h
  int e_w = 4;  // extension of the above part right of 2w
  bool operator==(const ContextSpec&) const = default;
};

/// Default per network shape: 4 everywhere when min(h, w) = 4, otherwise 8.
inline ContextSpec default_context_spec(BlockShape net) {
  const int v = std::min(net.h, net.w) == 4 ? 4 : 8;
  return {v, v, v, v};
}

inline std::size_t flattened_length(const ContextSpec& c, int h, int w) {
  return static_cast<std::size_t>(c.n_a * (c.n_l + 2 * w + c.e_w) + (2 * h + c.e_h) * c.n_l);
}

/// Context of the original block whose transformation yields `net_spec` around the network shape.
inline ContextSpec block_context_spec(const ContextSpec& net_spec, const TransformRule& rule) {
  ContextSpec c = net_spec;
  if (rule.transpose) {
    std::swap(c.n_a, c.n_l);
    std::swap(c.e_h, c.e_w);
  }
  c.n_a *= rule.delta;
  c.e_h *= rule.delta;
  c.n_l *= rule.gamma;
  c.e_w *= rule.gamma;
  return c;
}

/// The L-shaped context held in its bounding rectangle of (n_a + 2h + e_h) rows by (n_l + 2w + e_w)
/// columns. Cells outside the L (the block and the area right of / below it) are never available.
struct IntraContext {
  ContextSpec spec;
  int h = 0;
  int w = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::int32_t> samples;
  std::vector<std::uint8_t> available;
  std::int32_t mu = 0;
  int bit_depth = 10;

  bool in_l(int r, int c) const { return r < spec.n_a || c < spec.n_l; }
  std::int32_t& sample(int r, int c) { return samples[static_cast<std::size_t>(r) * cols + c]; }
  std::int32_t sample(int r, int c) const { return samples[static_cast<std::size_t>(r) * cols + c]; }
  bool avail(int r, int c) const { return available[static_cast<std::size_t>(r) * cols + c] != 0; }
};

inline IntraContext make_context(const ContextSpec& spec, int h, int w, int bit_depth) {
  IntraContext ctx;
  ctx.spec = spec;
  ctx.h = h;
  ctx.w = w;
  ctx.rows = spec.n_a + 2 * h + spec.e_h;
  ctx.cols = spec.n_l + 2 * w + spec.e_w;
  ctx.samples.assign(static_cast<std::size_t>(ctx.rows) * ctx.cols, 0);
  ctx.available.assign(ctx.samples.size(), 0);
  ctx.bit_depth = bit_depth;
  return ctx;
}

/// Integer mean of the available samples, halves rounded away from zero; 2^(b-1) when none is available.
inline std::int32_t available_mean(const IntraContext& ctx) {
  std::int64_t sum = 0, count = 0;
  for (std::size_t i = 0; i < ctx.samples.size(); ++i) {
    if (!ctx.available[i]) continue;
    sum += ctx.samples[i];
    ++count;
  }
  if (count == 0) return std::int32_t{1} << (ctx.bit_depth - 1);
  const std::int64_t mag = (2 * (sum < 0 ? -sum : sum) + count) / (2 * count);
  return static_cast<std::int32_t>(sum < 0 ? -mag : mag);
}

/// Decoded-state of the picture used to decide availability.
struct DecodedMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> decoded;
  bool at(int x, int y) const { return decoded[static_cast<std::size_t>(y) * width + x] != 0; }
};

/// Copies the context of the h x w block at (x, y). Without a mask, a sample is available when it
/// lies inside the picture and either above the block or left of it within the block's rows.
/// Throws OutOfFrame when x < n_l or y < n_a (the caller falls back to PLANAR).
inline IntraContext extract_context(const Plane& frame, int x, int y, int h, int w, const ContextSpec& spec,
                                    int bit_depth = 10, const DecodedMask* mask = nullptr) {
  check(x >= 0 && y >= 0 && x + w <= frame.width && y + h <= frame.height, ErrorKind::InvalidArgument,
        "block does not fit in the frame");
  if (x < spec.n_l || y < spec.n_a)
    fail(ErrorKind::OutOfFrame, "context of block at (" + std::to_string(x) + "," + std::to_string(y) +
                                    ") leaves the picture (n_a=" + std::to_string(spec.n_a) +
                                    ", n_l=" + std::to_string(spec.n_l) + ")");
  if (mask)
    check(mask->width == frame.width && mask->height == frame.height, ErrorKind::ShapeMismatch,
          "decoded mask and frame differ in size");
  IntraContext ctx = make_context(spec, h, w, bit_depth);
  for (int r = 0; r < ctx.rows; ++r) {
    for (int c = 0; c < ctx.cols; ++c) {
      if (!ctx.in_l(r, c)) continue;
      const int sx = x - spec.n_l + c;
      const int sy = y - spec.n_a + r;
      if (!frame.contains(sx, sy)) continue;
      const bool decoded = mask ? mask->at(sx, sy) : (sy < y || (sx < x && sy < y + h));
      if (!decoded) continue;
      ctx.sample(r, c) = frame.at(sx, sy);
      ctx.available[static_cast<std::size_t>(r) * ctx.cols + c] = 1;
    }
  }
  ctx.mu = available_mean(ctx);
  return ctx;
}

// ---------------------------------------------------------------------------------------------
// Context transformations

/// Down-samples by window means (gamma horizontal, delta vertical) over available samples, then transposes.
inline IntraContext apply_transform(const IntraContext& in, const TransformRule& rule) {
  check(in.rows % rule.delta == 0 && in.cols % rule.gamma == 0 && in.h % rule.delta == 0 && in.w % rule.gamma == 0 &&
            in.spec.n_a % rule.delta == 0 && in.spec.n_l % rule.gamma == 0,
        ErrorKind::ShapeMismatch, "context is not divisible by the down-sampling factors");
  ContextSpec ds{in.spec.n_a / rule.delta, in.spec.n_l / rule.gamma, in.spec.e_h / rule.delta, in.spec.e_w / rule.gamma};
  IntraContext mid = make_context(ds, in.h / rule.delta, in.w / rule.gamma, in.bit_depth);
  for (int r = 0; r < mid.rows; ++r) {
    for (int c = 0; c < mid.cols; ++c) {
      std::int64_t sum = 0, count = 0;
      for (int dy = 0; dy < rule.delta; ++dy)
        for (int dx = 0; dx < rule.gamma; ++dx) {
          const int rr = r * rule.delta + dy, cc = c * rule.gamma + dx;
          if (!in.avail(rr, cc)) continue;
          sum += in.sample(rr, cc);
          ++count;
        }
      if (count == 0) continue;
      mid.sample(r, c) = static_cast<std::int32_t>((2 * sum + count) / (2 * count));
      mid.available[static_cast<std::size_t>(r) * mid.cols + c] = 1;
    }
  }
  if (!rule.transpose) {
    mid.mu = available_mean(mid);
    return mid;
  }
  ContextSpec ts{ds.n_l, ds.n_a, ds.e_w, ds.e_h};
  IntraContext out = make_context(ts, mid.w, mid.h, in.bit_depth);
  for (int r = 0; r < mid.rows; ++r)
    for (int c = 0; c < mid.cols; ++c) {
      out.sample(c, r) = mid.sample(r, c);
      out.available[static_cast<std::size_t>(c) * out.cols + r] = mid.available[static_cast<std::size_t>(r) * mid.cols + c];
    }
  out.mu = available_mean(out);
  return out;
}

/// Block of samples, row-major.
struct Block {
  int h = 0;
  int w = 0;
  std::vector<std::int32_t> samples;
  std::int32_t at(int r, int c) const { return samples[static_cast<std::size_t>(r) * w + c]; }
  bool operator==(const Block&) const = default;
};

/// Transposes (if flagged), then up-samples by nearest-neighbour replication (delta vertical, gamma horizontal).
inline Block invert_transform(const Block& net, const TransformRule& rule) {
  Block t = net;
  if (rule.transpose) {
    t.h = net.w;
    t.w = net.h;
    for (int r = 0; r < net.h; ++r)
      for (int c = 0; c < net.w; ++c) t.samples[static_cast<std::size_t>(c) * t.w + r] = net.at(r, c);
  }
  Block out{t.h * rule.delta, t.w * rule.gamma, {}};
  out.samples.resize(static_cast<std::size_t>(out.h) * out.w);
  for (int r = 0; r < out.h; ++r)
    for (int c = 0; c < out.w; ++c) out.samples[static_cast<std::size_t>(r) * out.w + c] = t.at(r / rule.delta, c / rule.gamma);
  return out;
}

// ---------------------------------------------------------------------------------------------
// Pre- and post-processing

/// Flatten order: the above part row by row, then the left part row by row.
template <class Fn>
void for_each_l_cell(const IntraContext& ctx, Fn&& fn) {
  for (int r = 0; r < ctx.spec.n_a; ++r)
    for (int c = 0; c < ctx.cols; ++c) fn(r, c);
  for (int r = ctx.spec.n_a; r < ctx.spec.n_a + 2 * ctx.h + ctx.spec.e_h; ++r)
    for (int c = 0; c < ctx.spec.n_l; ++c) fn(r, c);
}

/// (X - mu) / 2^(b-8), unavailable samples 0, as a [1, L] float tensor.
inline Tensor<float> preprocess_float(const IntraContext& ctx) {
  Tensor<float> t({1, static_cast<int>(flattened_length(ctx.spec, ctx.h, ctx.w))});
  std::size_t i = 0;
  const int s = ctx.bit_depth - 8;
  for_each_l_cell(ctx, [&](int r, int c) {
    t[i++] = ctx.avail(r, c) ? static_cast<float>(std::ldexp(static_cast<double>(ctx.sample(r, c) - ctx.mu), -s)) : 0.0f;
  });
  return t;
}

/// (X - mu) * 2^(Q_in - b + 8) at quantizer Q_in.
template <IntegerElement T>
Tensor<T> preprocess_int(const IntraContext& ctx, int q_in) {
  Tensor<T> t({1, static_cast<int>(flattened_length(ctx.spec, ctx.h, ctx.w))}, q_in);
  std::size_t i = 0;
  const int s = q_in - ctx.bit_depth + 8;
  for_each_l_cell(ctx, [&](int r, int c) {
    const std::int64_t d = ctx.avail(r, c) ? ctx.sample(r, c) - ctx.mu : 0;
    const std::int64_t v = s >= 0 ? d * (std::int64_t{1} << s) : round_shift(d, -s);
    t[i++] = static_cast<T>(clip<std::int64_t>(v, width_of<T>));
  });
  return t;
}

inline std::int32_t clamp_sample(std::int64_t v, int bit_depth) {
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(v, 0, (std::int64_t{1} << bit_depth) - 1));
}

/// Float network output to samples: clamp(round(y * 2^(b-8)) + mu).
inline Block postprocess_float(std::span<const float> y, std::int32_t mu, int bit_depth, int h, int w) {
  check(y.size() == static_cast<std::size_t>(h) * w, ErrorKind::ShapeMismatch,
        "prediction has " + std::to_string(y.size()) + " values, block needs " + std::to_string(h * w));
  Block b{h, w, std::vector<std::int32_t>(y.size())};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = std::round(std::ldexp(static_cast<double>(y[i]), bit_depth - 8));
    b.samples[i] = clamp_sample(static_cast<std::int64_t>(v) + mu, bit_depth);
  }
  return b;
}

/// Integer network output (quantizer q_out) to samples.
template <class V>
Block postprocess_int(std::span<const V> y, int q_out, std::int32_t mu, int bit_depth, int h, int w) {
  check(y.size() == static_cast<std::size_t>(h) * w, ErrorKind::ShapeMismatch,
        "prediction has " + std::to_string(y.size()) + " values, block needs " + std::to_string(h * w));
  Block b{h, w, std::vector<std::int32_t>(y.size())};
  const int shift = q_out - (bit_depth - 8);
  for (std::size_t i = 0; i < y.size(); ++i) b.samples[i] = clamp_sample(round_shift(y[i], shift) + mu, bit_depth);
  return b;
}

// ---------------------------------------------------------------------------------------------
// Models and prediction

inline constexpr int rep_idx_classes = 67;
inline constexpr int grp_idx_classes = 8;

struct PredictionOutputs {
  Block prediction;
  int rep_idx = 0;
  int grp_idx1 = 0;
  int grp_idx2 = 0;
  TransformRule rule;
};

struct PlanarFallback {
  std::string reason;
};

using PredictResult = std::variant<PredictionOutputs, PlanarFallback>;

/// grpIdx in [0, 7]: LFNST set in the low two bits, transpose flag in bit 2.
inline int grp_transform_set(int grp_idx) { return grp_idx & 3; }
inline bool grp_transpose(int grp_idx) { return (grp_idx >> 2) != 0; }

/// One network with its context geometry.
struct IntraModel {
  BlockShape shape;
  Graph graph;
  ContextSpec spec;
};

inline std::string context_metadata(const ContextSpec& c) {
  return std::to_string(c.n_a) + "," + std::to_string(c.n_l) + "," + std::to_string(c.e_h) + "," + std::to_string(c.e_w);
}

inline ContextSpec parse_context_metadata(const std::string& s) {
  ContextSpec c;
  char sep[3];
  std::istringstream in(s);
  in >> c.n_a >> sep[0] >> c.n_l >> sep[1] >> c.e_h >> sep[2] >> c.e_w;
  check(in && !in.fail() && sep[0] == ',' && sep[1] == ',' && sep[2] == ',' && c.n_a > 0 && c.n_l > 0 && c.e_h >= 0 && c.e_w >= 0,
        ErrorKind::InvalidGraph, "bad intra.context metadata '" + s + "'");
  return c;
}

inline IntraModel make_intra_model(BlockShape shape, Graph g) {
  IntraModel m{shape, std::move(g), default_context_spec(shape)};
  if (auto c = m.graph.meta("intra.context")) m.spec = parse_context_metadata(*c);
  check(m.spec.n_a <= 8 && m.spec.n_l <= 8, ErrorKind::InvalidGraph, "network context exceeds 8 rows or columns");
  check(m.graph.inputs().size() == 1, ErrorKind::InvalidGraph, "intra network must take one input");
  check(element_count(m.graph.inputs()[0].dims) == flattened_length(m.spec, shape.h, shape.w), ErrorKind::InvalidGraph,
        "intra network input " + to_string(m.graph.inputs()[0].dims) + " does not match context length " +
            std::to_string(flattened_length(m.spec, shape.h, shape.w)));
  return m;
}

class IntraModelSet {
 public:
  void add(IntraModel m) {
    const BlockShape s = m.shape;
    models_.insert_or_assign(s, std::move(m));
  }
  const IntraModel* find(BlockShape s) const {
    auto it = models_.find(s);
    return it == models_.end() ? nullptr : &it->second;
  }
  std::size_t size() const { return models_.size(); }

  /// Loads every intra_<h>x<w>.smf1 present in `dir`.
  static IntraModelSet load_dir(const std::string& dir) {
    IntraModelSet set;
    for (BlockShape s : network_shapes) {
      const auto path = std::filesystem::path(dir) / model_file_name(s);
      if (std::filesystem::exists(path)) set.add(make_intra_model(s, load_model(path.string())));
    }
    return set;
  }

  static std::string model_file_name(BlockShape s) {
    return "intra_" + std::to_string(s.h) + "x" + std::to_string(s.w) + ".smf1";
  }

 private:
  std::map<BlockShape, IntraModel> models_;
};

namespace detail {

inline int argmax(std::span<const double> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// Output values as doubles in network units, concatenated over all graph outputs.
template <Element T>
std::vector<double> flatten_outputs(const std::vector<Tensor<T>>& outs) {
  std::vector<double> v;
  for (const auto& t : outs)
    for (std::size_t i = 0; i < t.size(); ++i) v.push_back(static_cast<double>(t[i]));
  return v;
}

}  // namespace detail

struct PredictOptions {
  int bit_depth = 10;
  const DecodedMask* mask = nullptr;
};

/// Full NN intra prediction of the h x w block at (x, y).
inline PredictResult predict_block(const Plane& frame, int x, int y, int h, int w, const IntraModelSet& models,
                                   const PredictOptions& opt = {}) {
  const auto rule = transform_rule(h, w);
  if (!rule) fail(ErrorKind::DisallowedShape, "NN intra prediction is not defined for (" + std::to_string(h) + ", " + std::to_string(w) + ")");
  const IntraModel* model = models.find(rule->network);
  if (!model)
    fail(ErrorKind::MissingModel, "no network for shape (" + std::to_string(rule->network.h) + ", " +
                                      std::to_string(rule->network.w) + ")");
  const ContextSpec spec = block_context_spec(model->spec, *rule);
  IntraContext ctx;
  try {
    ctx = extract_context(frame, x, y, h, w, spec, opt.bit_depth, opt.mask);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::OutOfFrame) return PlanarFallback{e.detail()};
    throw;
  }
  const IntraContext tctx = apply_transform(ctx, *rule);
  const int nh = rule->network.h, nw = rule->network.w;
  const std::size_t npix = static_cast<std::size_t>(nh) * nw;
  const Graph& g = model->graph;

  auto finish = [&](const std::vector<double>& flat, auto&& post) -> PredictionOutputs {
    check(flat.size() == npix + rep_idx_classes + 2 * grp_idx_classes, ErrorKind::InvalidGraph,
          "intra network emits " + std::to_string(flat.size()) + " values, expected " +
              std::to_string(npix + rep_idx_classes + 2 * grp_idx_classes));
    PredictionOutputs out;
    out.rule = *rule;
    out.prediction = invert_transform(post(), *rule);
    std::span<const double> heads(flat.data() + npix, flat.size() - npix);
    out.rep_idx = detail::argmax(heads.subspan(0, rep_idx_classes));
    out.grp_idx1 = detail::argmax(heads.subspan(rep_idx_classes, grp_idx_classes));
    out.grp_idx2 = detail::argmax(heads.subspan(rep_idx_classes + grp_idx_classes, grp_idx_classes));
    return out;
  };

  auto run_int = [&]<class T>(T) -> PredictionOutputs {
    const std::vector<Tensor<T>> in{[&] {
      Tensor<T> t = preprocess_int<T>(tctx, g.inputs()[0].q);
      t.resize(g.inputs()[0].dims);
      return t;
    }()};
    const auto outs = infer<T>(g, in);
    const auto flat = detail::flatten_outputs(outs);
    const int q_out = outs.front().quantizer();
    return finish(flat, [&] {
      std::vector<std::int64_t> y(flat.begin(), flat.begin() + static_cast<long>(npix));
      return postprocess_int<std::int64_t>(y, q_out, tctx.mu, opt.bit_depth, nh, nw);
    });
  };

  switch (g.width()) {
    case ElementWidth::f32: {
      Tensor<float> t = preprocess_float(tctx);
      t.resize(g.inputs()[0].dims);
      const auto outs = infer<float>(g, std::vector<Tensor<float>>{t});
      const auto flat = detail::flatten_outputs(outs);
      return finish(flat, [&] {
        std::vector<float> y(flat.begin(), flat.begin() + static_cast<long>(npix));
        return postprocess_float(y, tctx.mu, opt.bit_depth, nh, nw);
      });
    }
    case ElementWidth::i16: return run_int(std::int16_t{});
    case ElementWidth::i32: return run_int(std::int32_t{});
    case ElementWidth::i8: return run_int(std::int8_t{});
  }
  fail(ErrorKind::InvalidGraph, "unknown graph width");
}

// ---------------------------------------------------------------------------------------------
// Signaling and MPM plumbing

enum class SignalPath { NNMode, RegularSignaling };

struct LumaSignal {
  SignalPath path = SignalPath::RegularSignaling;
  bool flag_present = false;
  bool operator==(const LumaSignal&) const = default;
};

/// nnFlagY is coded only for shapes the NN mode supports.
inline LumaSignal signal_luma(int h, int w, bool nn_flag_y) {
  if (!in_s_bar(h, w)) return {SignalPath::RegularSignaling, false};
  return {nn_flag_y ? SignalPath::NNMode : SignalPath::RegularSignaling, true};
}

enum class ChromaMode {
  NNMode,          // NN intra prediction
  Planar,          // DM mapped to PLANAR
  DirectMode,      // DM inherits the collocated luma mode
  RegularSignaling // remaining chroma modes
};

struct ChromaSignal {
  ChromaMode mode = ChromaMode::RegularSignaling;
  bool flag_present = false;  // nnFlagC coded
  bool operator==(const ChromaSignal&) const = default;
};

/// Chroma mode for a pair of chroma blocks. `dm_requested` selects DM in the regular decision tree.
inline ChromaSignal signal_chroma(bool collocated_luma_is_nn, bool shape_in_s_bar, bool nn_flag_c, bool dm_requested) {
  if (collocated_luma_is_nn) {
    if (!dm_requested) return {ChromaMode::RegularSignaling, false};
    return {shape_in_s_bar ? ChromaMode::NNMode : ChromaMode::Planar, false};
  }
  if (shape_in_s_bar && nn_flag_c) return {ChromaMode::NNMode, true};
  return {dm_requested ? ChromaMode::DirectMode : ChromaMode::RegularSignaling, shape_in_s_bar};
}

/// PLANAR replaces the NN mode when the context leaves the picture.
inline bool planar_fallback(int x, int y, const ContextSpec& block_spec) { return x < block_spec.n_l || y < block_spec.n_a; }

struct NeighborMode {
  bool nn_coded = false;
  int mode = 0;     // conventional mode index (0 PLANAR, 1 DC, 2..66 angular)
  int rep_idx = 0;  // stored when nn_coded
};

/// Candidate index a neighbour contributes to the MPM list.
inline int mpm_substitute(const NeighborMode& n) { return n.nn_coded ? n.rep_idx : n.mode; }

}  // namespace qnn::intra
