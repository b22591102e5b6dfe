#pragma once

#include <vector>

#include "qnn/graph.hpp"

namespace qnn {

struct NodeComplexity {
  NodeId id = 0;
  OpKind kind = OpKind::Const;
  Dims out_dims;
  OpStats ops;
};

struct ComplexityReport {
  std::vector<NodeComplexity> nodes;  // execution order
  OpStats total;
};

namespace detail {

inline std::uint64_t volume(const Dims& d) { return static_cast<std::uint64_t>(element_count(d)); }

inline OpStats node_ops(const Node& n, const std::vector<const Dims*>& in, const Dims& out) {
  OpStats s;
  switch (n.kind) {
    case OpKind::MatMul: {
      const std::uint64_t K = static_cast<std::uint64_t>(in[0]->back());
      s.macs = volume(*in[0]) / K * K * static_cast<std::uint64_t>((*in[1])[1]);
      break;
    }
    case OpKind::SparseMatMul: {
      const auto& m = std::get<AnySparse>(n.payload);
      const std::uint64_t per_row = std::visit([](const auto& x) { return sparse_mac_count(x); }, m);
      s.macs = volume(*in[0]) / static_cast<std::uint64_t>(in[0]->back()) * per_row;
      break;
    }
    case OpKind::Conv2D: {
      const Dims& w = *in[1];
      s.macs = volume(out) / static_cast<std::uint64_t>(out[3]) * static_cast<std::uint64_t>(w[0] * w[1] * w[2]) *
               static_cast<std::uint64_t>(w[3]);
      break;
    }
    case OpKind::Conv2DTranspose: {
      const Dims& w = *in[1];
      s.macs = volume(*in[0]) / static_cast<std::uint64_t>((*in[0])[3]) * static_cast<std::uint64_t>(w[0] * w[1] * w[2]) *
               static_cast<std::uint64_t>(w[3]);
      break;
    }
    case OpKind::Add:
    case OpKind::BiasAdd:
    case OpKind::Mul:
    case OpKind::Maximum:
    case OpKind::Relu:
    case OpKind::PRelu:
    case OpKind::LeakyRelu:
    case OpKind::Concat: s.other_ops = volume(out); break;
    case OpKind::MaxPool: s.other_ops = volume(out) * static_cast<std::uint64_t>(n.attrs.kernel * n.attrs.kernel); break;
    default: break;
  }
  return s;
}

}  // namespace detail

/// Static operation count: one MAC per multiply-accumulate actually issued (padded taps and
/// zero values inside sparse runs included); elementwise work goes to other_ops.
inline ComplexityReport count_macs(const Graph& g, const std::vector<Dims>* input_dims = nullptr) {
  const Analysis an = analyze(g, input_dims);
  if (!an.ok()) {
    const auto& v = an.violations.front();
    fail(ErrorKind::InvalidGraph, "node " + std::to_string(v.node) + ": " + v.message);
  }
  ComplexityReport r;
  for (std::size_t i : an.order) {
    const Node& n = g.nodes()[i];
    std::vector<const Dims*> in;
    for (NodeId src : n.inputs) in.push_back(&an.dims.at(src));
    const Dims& out = an.dims.at(n.id);
    NodeComplexity c{n.id, n.kind, out, detail::node_ops(n, in, out)};
    r.total.macs += c.ops.macs;
    r.total.other_ops += c.ops.other_ops;
    r.nodes.push_back(std::move(c));
  }
  return r;
}

inline double kmac_per_pixel(std::uint64_t macs, std::uint64_t pixels) {
  check(pixels > 0, ErrorKind::InvalidArgument, "pixel count must be positive");
  return static_cast<double>(macs) / static_cast<double>(pixels) / 1000.0;
}

inline double kmac_per_pixel(const Graph& g, std::uint64_t pixels) { return kmac_per_pixel(count_macs(g).total.macs, pixels); }

}  // namespace qnn
