#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "qnn/graph.hpp"

namespace qnn {

/// Mutable state for running one Graph: execution order, value slots and reusable output buffers.
/// A context is confined to one thread at a time; run many contexts over one shared Graph for concurrency.
template <Element T>
class ExecutionContext {
 public:
  /// `input_dims` overrides the declared input extents (for instance a different patch size).
  explicit ExecutionContext(const Graph& g, std::vector<Dims> input_dims = {}) : graph_(&g) {
    check(g.width() == width_of<T>, ErrorKind::InvalidArgument,
          std::string("graph width is ") + to_string(g.width()) + ", context width is " + to_string(width_of<T>));
    analysis_ = analyze(g, input_dims.empty() ? nullptr : &input_dims);
    if (!analysis_.ok()) {
      const auto& v = analysis_.violations.front();
      fail(ErrorKind::InvalidGraph, "node " + std::to_string(v.node) + ": " + v.message);
    }
    for (std::size_t i = 0; i < g.inputs().size(); ++i) {
      slot_[g.inputs()[i].id] = i;
      input_dims_.push_back(analysis_.dims.at(g.inputs()[i].id));
    }
    values_.resize(g.inputs().size() + g.nodes().size(), nullptr);
    buffers_.resize(g.nodes().size());
    for (std::size_t k = 0; k < analysis_.order.size(); ++k) {
      const Node& n = g.nodes()[analysis_.order[k]];
      slot_[n.id] = g.inputs().size() + k;
    }
  }

  const Graph& graph() const noexcept { return *graph_; }
  const Analysis& analysis() const noexcept { return analysis_; }
  const std::vector<Dims>& input_dims() const noexcept { return input_dims_; }

  /// Runs the graph. `per_node`, when given, receives one OpStats per node in execution order.
  std::vector<Tensor<T>> run(std::span<const Tensor<T>> inputs, OpStats* total = nullptr,
                             std::vector<std::pair<NodeId, OpStats>>* per_node = nullptr) {
    const Graph& g = *graph_;
    check(inputs.size() == g.inputs().size(), ErrorKind::ShapeMismatch,
          "graph takes " + std::to_string(g.inputs().size()) + " inputs, got " + std::to_string(inputs.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      check(inputs[i].dims() == input_dims_[i], ErrorKind::ShapeMismatch,
            "input " + std::to_string(i) + " has dims " + to_string(inputs[i].dims()) + ", expected " +
                to_string(input_dims_[i]));
      if constexpr (element_traits<T>::integer)
        check(inputs[i].quantizer() == g.inputs()[i].q, ErrorKind::QuantizerOrder,
              "input " + std::to_string(i) + " has q = " + std::to_string(inputs[i].quantizer()) +
                  ", graph declares " + std::to_string(g.inputs()[i].q));
      values_[i] = &inputs[i];
    }
    if (per_node) per_node->clear();
    failed_node_.reset();
    for (std::size_t k = 0; k < analysis_.order.size(); ++k) {
      const Node& n = g.nodes()[analysis_.order[k]];
      OpStats stats;
      try {
        values_[g.inputs().size() + k] = execute(n, buffers_[k], stats);
      } catch (const Error& e) {
        failed_node_ = n.id;
        fail(e.kind(), "node " + std::to_string(n.id) + " (" + to_string(n.kind) + "): " + e.detail());
      }
      if constexpr (element_traits<T>::integer) {
        const int got = values_[g.inputs().size() + k]->quantizer();
        check(got == analysis_.quantizer.at(n.id), ErrorKind::QuantizerOrder,
              "node " + std::to_string(n.id) + " produced q = " + std::to_string(got) + ", predicted " +
                  std::to_string(analysis_.quantizer.at(n.id)));
      }
      if (total) {
        total->macs += stats.macs;
        total->other_ops += stats.other_ops;
      }
      if (per_node) per_node->push_back({n.id, stats});
    }
    std::vector<Tensor<T>> out;
    out.reserve(g.outputs().size());
    for (NodeId id : g.outputs()) out.push_back(*values_[slot_.at(id)]);
    return out;
  }

  /// Value of any input or node from the most recent run.
  const Tensor<T>& value(NodeId id) const {
    const Tensor<T>* v = values_.at(slot_.at(id));
    check(v != nullptr, ErrorKind::InvalidArgument, "value " + std::to_string(id) + " has not been computed");
    return *v;
  }

  /// Node whose kernel raised the error that ended the most recent run.
  std::optional<NodeId> failed_node() const noexcept { return failed_node_; }

 private:

  const Tensor<T>* execute(const Node& n, Tensor<T>& out, OpStats& stats) const {
    const auto& a = n.attrs;
    auto in = [&](std::size_t i) -> const Tensor<T>& { return value(n.inputs[i]); };
    switch (n.kind) {
      case OpKind::Const: return &std::get<Tensor<T>>(std::get<AnyTensor>(n.payload));
      case OpKind::MatMul: matmul(in(0), in(1), a.internal_shift, out, &stats); break;
      case OpKind::SparseMatMul:
        spmv(std::get<SparsePackedMatrix<T>>(std::get<AnySparse>(n.payload)), in(0), a.internal_shift, out, &stats);
        break;
      case OpKind::Conv2D: conv2d(in(0), in(1), a.conv(), a.internal_shift, out, &stats); break;
      case OpKind::Conv2DTranspose: conv2d_transpose(in(0), in(1), a.conv(), a.internal_shift, out, &stats); break;
      case OpKind::Add: add(in(0), in(1), out, &stats); break;
      case OpKind::BiasAdd: bias_add(in(0), in(1), out, &stats); break;
      case OpKind::Mul: mul(in(0), in(1), a.internal_shift, out, &stats); break;
      case OpKind::Maximum: maximum(in(0), in(1), out, &stats); break;
      case OpKind::Concat: {
        std::vector<const Tensor<T>*> parts;
        for (NodeId src : n.inputs) parts.push_back(&value(src));
        concat<T>(parts, a.axis, out, &stats);
        break;
      }
      case OpKind::MaxPool: maxpool(in(0), a.kernel, a.stride, a.padding, out, &stats); break;
      case OpKind::Relu: relu(in(0), out, &stats); break;
      case OpKind::PRelu: prelu(in(0), in(1), out, &stats); break;
      case OpKind::LeakyRelu: leaky_relu(in(0), a.alpha, out, &stats); break;
      case OpKind::Flatten: flatten(in(0), a.has(AttrTag::Axis) ? a.axis : 1, out); break;
      case OpKind::Transpose: transpose(in(0), a.perm, out); break;
      case OpKind::Reshape: reshape(in(0), a.dims, out); break;
      case OpKind::Slice: slice(in(0), a.starts, a.ends, out); break;
      case OpKind::Expand: expand(in(0), a.dims, out); break;
      case OpKind::Shape: shape_of(in(0), out); break;
    }
    return &out;
  }

  const Graph* graph_;
  Analysis analysis_;
  std::vector<Dims> input_dims_;
  std::unordered_map<NodeId, std::size_t> slot_;
  std::vector<const Tensor<T>*> values_;
  std::vector<Tensor<T>> buffers_;
  std::optional<NodeId> failed_node_;
};

/// One-shot inference with a fresh context.
template <Element T>
std::vector<Tensor<T>> infer(const Graph& g, std::span<const Tensor<T>> inputs) {
  std::vector<Dims> dims;
  for (const auto& t : inputs) dims.push_back(t.dims());
  ExecutionContext<T> ctx(g, dims);
  return ctx.run(inputs);
}

template <Element T>
std::vector<Tensor<T>> infer(const Graph& g, const std::vector<Tensor<T>>& inputs) {
  return infer<T>(g, std::span<const Tensor<T>>(inputs));
}

/// Width-erased inference for tools: inputs and outputs carry their own width.
inline std::vector<AnyTensor> infer_any(const Graph& g, const std::vector<AnyTensor>& inputs) {
  auto run = [&]<class T>(T) {
    std::vector<Tensor<T>> typed;
    for (std::size_t i = 0; i < inputs.size(); ++i) typed.push_back(expect_tensor<T>(inputs[i], "input " + std::to_string(i)));
    std::vector<AnyTensor> out;
    for (auto& t : infer<T>(g, typed)) out.emplace_back(std::move(t));
    return out;
  };
  switch (g.width()) {
    case ElementWidth::f32: return run(float{});
    case ElementWidth::i32: return run(std::int32_t{});
    case ElementWidth::i16: return run(std::int16_t{});
    case ElementWidth::i8: return run(std::int8_t{});
  }
  fail(ErrorKind::InvalidGraph, "unknown graph width");
}

}  // namespace qnn
