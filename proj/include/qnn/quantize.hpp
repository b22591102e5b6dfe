#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "qnn/executor.hpp"

namespace qnn {

/// Largest q in [0, cap] with round(max_abs * 2^q) <= 2^(bits-1) - 1; the cap when max_abs is 0.
inline int choose_shift_bits(double max_abs, int bits, int cap) {
  check(max_abs >= 0.0 && std::isfinite(max_abs), ErrorKind::InvalidArgument, "max_abs must be finite and >= 0");
  if (max_abs == 0.0) return cap;
  const double limit = std::ldexp(1.0, bits - 1) - 1.0;
  int q = 0;
  while (q < cap && std::nearbyint(std::ldexp(max_abs, q + 1)) <= limit) ++q;
  return q;
}

/// Shift for a tensor stored at `width`: largest q with round(max_abs * 2^q) <= 2^(w-1) - 1.
/// Zero maps to w - 1; other results are capped at 2w - 2.
inline int choose_shift(double max_abs, ElementWidth width) {
  const int w = bit_count(width);
  if (max_abs == 0.0) return w - 1;
  return choose_shift_bits(max_abs, w, 2 * w - 2);
}

struct QuantizeOptions {
  /// Input quantizer. Unset means 7 for int16, 23 for int32, 3 for int8, unless `auto_input_q`.
  std::optional<int> input_q;
  /// Derive Q_in per input from calibration ranges instead of the fixed defaults.
  bool auto_input_q = false;
  double headroom = 1.25;
  /// Extra margin on accumulator sums: an overflow there is an error rather than a clip.
  double accumulator_headroom = 4.0;
  int max_refinements = 24;
};

inline int default_input_q(ElementWidth width) {
  switch (width) {
    case ElementWidth::i16: return 7;
    case ElementWidth::i32: return 23;
    case ElementWidth::i8: return 3;
    case ElementWidth::f32: return 0;
  }
  return 0;
}

using CalibrationSet = std::vector<std::vector<Tensor<float>>>;

namespace detail {

inline double max_abs(std::span<const float> v) {
  double m = 0.0;
  for (float x : v) m = std::max(m, std::abs(static_cast<double>(x)));
  return m;
}

inline const Tensor<float>& float_const(const Node& n) {
  const auto* t = std::get_if<Tensor<float>>(&std::get<AnyTensor>(n.payload));
  check(t != nullptr, ErrorKind::InvalidGraph, "node " + std::to_string(n.id) + ": constant is not float");
  return *t;
}

/// Per-node corrections found by checking a candidate integer graph against calibration data.
struct Refinement {
  std::map<NodeId, int> target_drop;  // lowers the latent target quantizer (saturation seen)
  std::map<NodeId, int> weight_drop;  // lowers the weight quantizer (accumulator overflow seen)
};

template <IntegerElement T>
class GraphQuantizer {
 public:
  GraphQuantizer(const Graph& g, const std::unordered_map<NodeId, double>& range, const std::vector<int>& input_q,
                 double headroom, double acc_headroom, const Refinement& refine)
      : g_(g), range_(range), input_q_(input_q), headroom_(headroom), acc_headroom_(acc_headroom), refine_(refine) {
    for (const auto& n : g.nodes()) {
      next_id_ = std::max(next_id_, n.id + 1);
      by_id_[n.id] = &n;
    }
    for (const auto& in : g.inputs()) next_id_ = std::max(next_id_, in.id + 1);
  }

  Graph build(const std::vector<std::size_t>& order) {
    static constexpr ElementWidth W = width_of<T>;
    std::vector<InputSpec> inputs = g_.inputs();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      inputs[i].q = input_q_[i];
      q_[inputs[i].id] = input_q_[i];
    }
    for (std::size_t i : order) lower(g_.nodes()[i]);
    auto meta = g_.metadata();
    meta["quant.headroom"] = std::to_string(headroom_);
    return Graph(W, std::move(inputs), std::move(nodes_), g_.outputs(), std::move(meta));
  }

 private:
  static constexpr ElementWidth W = width_of<T>;
  static constexpr int acc_bits = static_cast<int>(sizeof(typename element_traits<T>::accumulator) * 8);

  int target(NodeId id) const {
    const int drop = refine_.target_drop.count(id) ? refine_.target_drop.at(id) : 0;
    return std::max(0, choose_shift(headroom_ * range_.at(id), W) - drop);
  }

  /// Largest q0 + q1 for which the calibrated accumulator still fits.
  int accumulator_shift(NodeId id) const {
    return choose_shift_bits(acc_headroom_ * range_.at(id), acc_bits, 2 * acc_bits - 2);
  }

  bool is_const(NodeId id) const {
    auto it = by_id_.find(id);
    return it != by_id_.end() && it->second->kind == OpKind::Const;
  }

  /// Integer Const carrying the float constant `id` at quantizer q (shared between consumers asking for the same q).
  NodeId const_at(NodeId id, int q) {
    auto key = std::pair{id, q};
    if (auto it = const_cache_.find(key); it != const_cache_.end()) return it->second;
    const NodeId out = used_const_ids_.count(id) ? next_id_++ : id;
    used_const_ids_[id] = true;
    Node n;
    n.id = out;
    n.kind = OpKind::Const;
    n.payload = AnyTensor(quantize<T>(float_const(*by_id_.at(id)), q));
    nodes_.push_back(std::move(n));
    q_[out] = q;
    const_cache_[key] = out;
    return out;
  }

  double const_range(NodeId id) const { return max_abs(float_const(*by_id_.at(id)).data()); }

  /// Operand id ready for use at quantizer <= q_max: constants are materialized, latents shifted down when needed.
  NodeId operand(NodeId id, int q_max) {
    if (is_const(id)) return const_at(id, std::min(q_max, choose_shift(const_range(id), W)));
    const NodeId v = mapped(id);
    if (q_.at(v) <= q_max) return v;
    return requantize(v, q_max);
  }

  /// Mul by the constant 1 (q = 0) with internal shift d lowers a quantizer by d.
  NodeId requantize(NodeId v, int q) {
    const int d = q_.at(v) - q;
    const NodeId one = next_id_++;
    Node c;
    c.id = one;
    c.kind = OpKind::Const;
    c.payload = AnyTensor(Tensor<T>(Dims{1}, std::vector<T>{T{1}}, 0));
    nodes_.push_back(std::move(c));
    q_[one] = 0;
    Node m;
    m.id = next_id_++;
    m.kind = OpKind::Mul;
    m.inputs = {v, one};
    m.attrs.set_internal_shift(d);
    nodes_.push_back(m);
    q_[m.id] = q;
    return m.id;
  }

  NodeId mapped(NodeId id) {
    if (is_const(id)) return const_at(id, choose_shift(const_range(id), W));
    return id;
  }

  void emit(Node n, int q) {
    q_[n.id] = q;
    nodes_.push_back(std::move(n));
  }

  void lower(const Node& src) {
    Node n = src;
    n.payload = std::monostate{};
    const NodeId id = src.id;
    switch (src.kind) {
      case OpKind::Const: return;  // materialized on demand by consumers
      case OpKind::MatMul:
      case OpKind::Conv2D:
      case OpKind::Conv2DTranspose:
      case OpKind::Mul: {
        const NodeId x = mapped(src.inputs[0]);
        const int q0 = q_.at(x);
        const int wdrop = refine_.weight_drop.count(id) ? refine_.weight_drop.at(id) : 0;
        const int q1_max = std::max(0, accumulator_shift(id) - q0 - wdrop);
        const NodeId w = operand(src.inputs[1], q1_max);
        const int qi = std::clamp(q0 - target(id), 0, q0);
        n.inputs = {x, w};
        n.attrs.set_internal_shift(qi);
        emit(std::move(n), q0 - qi);
        return;
      }
      case OpKind::SparseMatMul: {
        const NodeId x = mapped(src.inputs[0]);
        const int q0 = q_.at(x);
        const auto& m = std::get<SparsePackedMatrix<float>>(std::get<AnySparse>(src.payload));
        const int wdrop = refine_.weight_drop.count(id) ? refine_.weight_drop.at(id) : 0;
        const int q1 = std::min(choose_shift(max_abs(m.values()), W), std::max(0, accumulator_shift(id) - q0 - wdrop));
        std::vector<T> values(m.values().size());
        for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<T>(quantize_float(m.values()[i], q1, W));
        n.payload = AnySparse(SparsePackedMatrix<T>(m.rows(), m.cols(), m.alignment(), m.runs(), std::move(values), q1));
        const int qi = std::clamp(q0 - target(id), 0, q0);
        n.inputs = {x};
        n.attrs.set_internal_shift(qi);
        emit(std::move(n), q0 - qi);
        return;
      }
      case OpKind::BiasAdd: {
        const NodeId x = mapped(src.inputs[0]);
        const int q0 = q_.at(x);
        const NodeId b = operand(src.inputs[1], std::min(q0, target(id)));
        n.inputs = {x, b};
        emit(std::move(n), q_.at(b));
        return;
      }
      case OpKind::Add: {
        const int t = target(id);
        NodeId a = operand(src.inputs[0], t);
        NodeId b = operand(src.inputs[1], t);
        n.inputs = {a, b};
        emit(std::move(n), std::min(q_.at(a), q_.at(b)));
        return;
      }
      case OpKind::Maximum: {
        const int t = target(id);
        NodeId a = operand(src.inputs[0], t);
        NodeId b = operand(src.inputs[1], t);
        if (q_.at(a) < q_.at(b)) std::swap(a, b);
        n.inputs = {a, b};
        emit(std::move(n), q_.at(a));
        return;
      }
      case OpKind::Concat: {
        int q = target(id);
        for (NodeId s : src.inputs) q = std::min(q, is_const(s) ? choose_shift(const_range(s), W) : q_.at(s));
        n.inputs.clear();
        for (NodeId s : src.inputs) n.inputs.push_back(operand(s, q));
        int out_q = q_.at(n.inputs.front());
        for (NodeId s : n.inputs) out_q = std::min(out_q, q_.at(s));
        emit(std::move(n), out_q);
        return;
      }
      case OpKind::LeakyRelu:
        if (!(std::abs(src.attrs.alpha) < 1.0))
          fail(ErrorKind::Unquantizable, "node " + std::to_string(id) + ": LeakyRelu slope " +
                                             std::to_string(src.attrs.alpha) + " has no integer form (|alpha| >= 1)");
        break;
      case OpKind::PRelu: {
        check(is_const(src.inputs[1]), ErrorKind::Unquantizable,
              "node " + std::to_string(id) + ": PRelu slope must be a constant");
        const double s = const_range(src.inputs[1]);
        check(s < 1.0, ErrorKind::Unquantizable,
              "node " + std::to_string(id) + ": PRelu slope magnitude " + std::to_string(s) + " >= 1");
        const NodeId x = mapped(src.inputs[0]);
        n.inputs = {x, const_at(src.inputs[1], choose_shift(s, W))};
        emit(std::move(n), q_.at(x));
        return;
      }
      case OpKind::Shape: {
        n.inputs = {mapped(src.inputs[0])};
        emit(std::move(n), 0);
        return;
      }
      default: break;
    }
    // Single-input layers keep their input quantizer.
    n.inputs = {mapped(src.inputs[0])};
    const int q = q_.at(n.inputs[0]);
    emit(std::move(n), q);
  }

  const Graph& g_;
  const std::unordered_map<NodeId, double>& range_;
  const std::vector<int>& input_q_;
  double headroom_;
  double acc_headroom_;
  const Refinement& refine_;
  std::unordered_map<NodeId, const Node*> by_id_;
  std::unordered_map<NodeId, int> q_;
  std::map<std::pair<NodeId, int>, NodeId> const_cache_;
  std::unordered_map<NodeId, bool> used_const_ids_;
  std::vector<Node> nodes_;
  NodeId next_id_ = 0;
};

/// Node whose target quantizer governs the output of `id`: single-input layers defer to their producer.
inline std::optional<NodeId> target_owner(const Graph& g, NodeId id) {
  for (;;) {
    const Node* n = g.find(id);
    if (!n) return std::nullopt;
    switch (n->kind) {
      case OpKind::MatMul:
      case OpKind::SparseMatMul:
      case OpKind::Conv2D:
      case OpKind::Conv2DTranspose:
      case OpKind::Mul:
      case OpKind::BiasAdd:
      case OpKind::Add:
      case OpKind::Maximum:
      case OpKind::Concat: return id;
      case OpKind::Const:
      case OpKind::Shape: return std::nullopt;
      default: id = n->inputs[0];
    }
  }
}

template <IntegerElement T>
bool saturated(const Tensor<T>& t) {
  const auto hi = static_cast<T>(max_magnitude(width_of<T>));
  for (T v : t.data())
    if (v == hi || v == -hi) return true;
  return false;
}

template <IntegerElement T>
Graph static_quantize_as(const Graph& g, const CalibrationSet& calib, const QuantizeOptions& opt) {
  static constexpr ElementWidth W = width_of<T>;
  ExecutionContext<float> fctx(g);
  std::unordered_map<NodeId, double> range;
  std::vector<double> input_range(g.inputs().size(), 0.0);
  for (const auto& sample : calib) {
    fctx.run(sample);
    for (std::size_t i = 0; i < sample.size(); ++i) input_range[i] = std::max(input_range[i], max_abs(sample[i].data()));
    for (const auto& n : g.nodes()) {
      double& r = range[n.id];
      r = std::max(r, max_abs(fctx.value(n.id).data()));
    }
  }
  std::vector<int> input_q(g.inputs().size());
  for (std::size_t i = 0; i < input_q.size(); ++i)
    input_q[i] = opt.input_q ? *opt.input_q
                 : opt.auto_input_q ? choose_shift(opt.headroom * input_range[i], W)
                                    : default_input_q(W);

  // Candidate graphs are checked on the calibration set: a saturated latent lowers that node's
  // target quantizer and an accumulator overflow lowers its weight quantizer.
  Refinement refine;
  for (int round = 0;; ++round) {
    GraphQuantizer<T> gq(g, range, input_q, opt.headroom, opt.accumulator_headroom, refine);
    Graph out = gq.build(fctx.analysis().order);
    if (round >= opt.max_refinements) return out;
    ExecutionContext<T> ictx(out);
    bool changed = false;
    for (const auto& sample : calib) {
      std::vector<Tensor<T>> qin;
      for (std::size_t i = 0; i < sample.size(); ++i) qin.push_back(quantize<T>(sample[i], input_q[i]));
      try {
        ictx.run(qin);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NumericOverflow || !ictx.failed_node()) throw;
        ++refine.weight_drop[*ictx.failed_node()];
        changed = true;
        break;
      }
      for (const auto& n : g.nodes()) {
        if (n.kind == OpKind::Const || !range.count(n.id)) continue;
        const Tensor<T>& v = ictx.value(n.id);
        const double limit = std::ldexp(static_cast<double>(max_magnitude(W)), -v.quantizer());
        if (!saturated(v) || range.at(n.id) >= limit || v.quantizer() == 0) continue;
        if (auto owner = target_owner(g, n.id)) {
          ++refine.target_drop[*owner];
          changed = true;
        }
      }
      if (changed) break;
    }
    if (!changed) return out;
  }
}

}  // namespace detail

/// Converts a float graph into an integer graph of `width` using calibration ranges.
inline Graph static_quantize(const Graph& g, const CalibrationSet& calib, ElementWidth width,
                             const QuantizeOptions& opt = {}) {
  check(g.width() == ElementWidth::f32, ErrorKind::InvalidArgument, "static_quantize expects a float32 graph");
  check(!calib.empty(), ErrorKind::CalibrationEmpty, "no calibration samples");
  if (auto v = validate(g); !v.empty())
    fail(ErrorKind::InvalidGraph, "node " + std::to_string(v.front().node) + ": " + v.front().message);
  for (const auto& n : g.nodes()) {
    if (n.kind == OpKind::LeakyRelu && !(std::abs(n.attrs.alpha) < 1.0))
      fail(ErrorKind::Unquantizable, "node " + std::to_string(n.id) + ": LeakyRelu slope " + std::to_string(n.attrs.alpha) +
                                         " has no integer form (|alpha| >= 1)");
  }
  switch (width) {
    case ElementWidth::i16: return detail::static_quantize_as<std::int16_t>(g, calib, opt);
    case ElementWidth::i32: return detail::static_quantize_as<std::int32_t>(g, calib, opt);
    case ElementWidth::i8: return detail::static_quantize_as<std::int8_t>(g, calib, opt);
    case ElementWidth::f32: break;
  }
  fail(ErrorKind::InvalidArgument, "target width must be an integer width");
}

/// Float twin of an integer graph: constants dequantized, internal shifts dropped, same structure.
inline Graph to_float_graph(const Graph& g) {
  if (g.width() == ElementWidth::f32) return g;
  std::vector<Node> nodes = g.nodes();
  for (auto& n : nodes) {
    if (auto* t = std::get_if<AnyTensor>(&n.payload)) {
      n.payload = std::visit(
          [](const auto& x) -> AnyTensor {
            using V = typename std::decay_t<decltype(x)>::value_type;
            if constexpr (element_traits<V>::integer)
              return dequantize(x);
            else
              return x;
          },
          *t);
    } else if (auto* s = std::get_if<AnySparse>(&n.payload)) {
      n.payload = std::visit(
          [](const auto& m) -> AnySparse {
            std::vector<float> v(m.values().size());
            for (std::size_t i = 0; i < v.size(); ++i)
              v[i] = static_cast<float>(std::ldexp(static_cast<double>(m.values()[i]), -m.quantizer()));
            return SparsePackedMatrix<float>(m.rows(), m.cols(), m.alignment(), m.runs(), std::move(v), 0);
          },
          *s);
    }
    // PRelu slopes were stored with their own quantizer; the float kernel reads them directly.
  }
  std::vector<InputSpec> inputs = g.inputs();
  for (auto& in : inputs) in.q = 0;
  return Graph(ElementWidth::f32, std::move(inputs), std::move(nodes), g.outputs(), g.metadata());
}

}  // namespace qnn
