#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "qnn/kernels.hpp"
#include "qnn/sparse.hpp"
#include "qnn/stn1.hpp"

namespace qnn {

using NodeId = std::uint32_t;

enum class OpKind : std::uint16_t {
  Const = 0,
  MatMul,
  SparseMatMul,
  Conv2D,
  Conv2DTranspose,
  Add,
  BiasAdd,
  Mul,
  Concat,
  MaxPool,
  Maximum,
  Relu,
  PRelu,
  LeakyRelu,
  Flatten,
  Transpose,
  Reshape,
  Slice,
  Expand,
  Shape,
};

inline constexpr int op_kind_count = 20;

constexpr const char* to_string(OpKind k) {
  constexpr const char* names[] = {"Const",   "MatMul",  "SparseMatMul", "Conv2D",    "Conv2DTranspose",
                                   "Add",     "BiasAdd", "Mul",          "Concat",    "MaxPool",
                                   "Maximum", "Relu",    "PRelu",        "LeakyRelu", "Flatten",
                                   "Transpose", "Reshape", "Slice",      "Expand",    "Shape"};
  const auto i = static_cast<std::size_t>(k);
  return i < std::size(names) ? names[i] : "?";
}

/// Exact input count, or -1 for "one or more".
constexpr int arity(OpKind k) {
  switch (k) {
    case OpKind::Const: return 0;
    case OpKind::MatMul:
    case OpKind::Conv2D:
    case OpKind::Conv2DTranspose:
    case OpKind::Add:
    case OpKind::BiasAdd:
    case OpKind::Mul:
    case OpKind::Maximum:
    case OpKind::PRelu: return 2;
    case OpKind::Concat: return -1;
    default: return 1;
  }
}

constexpr bool uses_internal_shift(OpKind k) {
  return k == OpKind::MatMul || k == OpKind::SparseMatMul || k == OpKind::Conv2D || k == OpKind::Conv2DTranspose ||
         k == OpKind::Mul;
}

/// Attribute tags as stored in the model file; values in parentheses are defaults.
enum class AttrTag : std::uint8_t {
  Stride = 1,         // i32 (1)
  Groups = 2,         // i32 (1)
  Padding = 3,        // u8  (Same)
  Alpha = 4,          // f64 (0)
  InternalShift = 5,  // i32 (0)
  Axis = 6,           // i32 (-1)
  Kernel = 7,         // i32 (2)
  Dims = 8,           // i32 list
  Perm = 9,           // i32 list
  Starts = 10,        // i32 list
  Ends = 11,          // i32 list
};

inline constexpr int attr_tag_max = 11;

struct Attributes {
  int stride = 1;
  int groups = 1;
  Padding padding = Padding::Same;
  double alpha = 0.0;
  int internal_shift = 0;
  int axis = -1;
  int kernel = 2;
  std::vector<int> dims;
  std::vector<int> perm;
  std::vector<int> starts;
  std::vector<int> ends;
  /// Bit t set when tag t is stored explicitly, so re-saving reproduces the original bytes.
  std::uint32_t present = 0;

  bool has(AttrTag t) const { return (present >> static_cast<unsigned>(t)) & 1u; }
  void mark(AttrTag t) { present |= 1u << static_cast<unsigned>(t); }

  Attributes& set_stride(int v) { stride = v; mark(AttrTag::Stride); return *this; }
  Attributes& set_groups(int v) { groups = v; mark(AttrTag::Groups); return *this; }
  Attributes& set_padding(Padding v) { padding = v; mark(AttrTag::Padding); return *this; }
  Attributes& set_alpha(double v) { alpha = v; mark(AttrTag::Alpha); return *this; }
  Attributes& set_internal_shift(int v) { internal_shift = v; mark(AttrTag::InternalShift); return *this; }
  Attributes& set_axis(int v) { axis = v; mark(AttrTag::Axis); return *this; }
  Attributes& set_kernel(int v) { kernel = v; mark(AttrTag::Kernel); return *this; }
  Attributes& set_dims(std::vector<int> v) { dims = std::move(v); mark(AttrTag::Dims); return *this; }
  Attributes& set_perm(std::vector<int> v) { perm = std::move(v); mark(AttrTag::Perm); return *this; }
  Attributes& set_starts(std::vector<int> v) { starts = std::move(v); mark(AttrTag::Starts); return *this; }
  Attributes& set_ends(std::vector<int> v) { ends = std::move(v); mark(AttrTag::Ends); return *this; }

  ConvParams conv() const { return {stride, groups, padding}; }

  bool operator==(const Attributes&) const = default;
};

using Payload = std::variant<std::monostate, AnyTensor, AnySparse>;

struct Node {
  NodeId id = 0;
  OpKind kind = OpKind::Const;
  std::vector<NodeId> inputs;
  Attributes attrs;
  Payload payload;

  bool operator==(const Node&) const = default;
};

/// Declared graph input: the id other nodes refer to, its extents, and its quantizer (Q_in).
struct InputSpec {
  NodeId id = 0;
  Dims dims;
  int q = 0;
  bool operator==(const InputSpec&) const = default;
};

/// Immutable dataflow graph with a single storage width. Build with GraphBuilder or load_model.
class Graph {
 public:
  Graph() = default;
  Graph(ElementWidth width, std::vector<InputSpec> inputs, std::vector<Node> nodes, std::vector<NodeId> outputs,
        std::map<std::string, std::string> metadata = {})
      : width_(width),
        inputs_(std::move(inputs)),
        nodes_(std::move(nodes)),
        outputs_(std::move(outputs)),
        metadata_(std::move(metadata)) {}

  ElementWidth width() const noexcept { return width_; }
  const std::vector<InputSpec>& inputs() const noexcept { return inputs_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const std::vector<NodeId>& outputs() const noexcept { return outputs_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

  const Node* find(NodeId id) const {
    for (const auto& n : nodes_)
      if (n.id == id) return &n;
    return nullptr;
  }

  std::optional<std::string> meta(const std::string& key) const {
    auto it = metadata_.find(key);
    if (it == metadata_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const Graph&) const = default;

 private:
  ElementWidth width_ = ElementWidth::f32;
  std::vector<InputSpec> inputs_;
  std::vector<Node> nodes_;
  std::vector<NodeId> outputs_;
  std::map<std::string, std::string> metadata_;
};

/// Programmatic construction; ids are assigned sequentially in creation order.
class GraphBuilder {
 public:
  explicit GraphBuilder(ElementWidth width) : width_(width) {}

  NodeId input(Dims dims, int q = 0) {
    const NodeId id = next_++;
    inputs_.push_back({id, std::move(dims), q});
    return id;
  }

  template <Element T>
  NodeId constant(Tensor<T> t) {
    return add(OpKind::Const, {}, {}, AnyTensor(std::move(t)));
  }

  template <Element T>
  NodeId sparse_matmul(NodeId x, SparsePackedMatrix<T> m, Attributes attrs = {}) {
    return add(OpKind::SparseMatMul, {x}, std::move(attrs), AnySparse(std::move(m)));
  }

  NodeId add(OpKind kind, std::vector<NodeId> inputs, Attributes attrs = {}, Payload payload = {}) {
    const NodeId id = next_++;
    nodes_.push_back({id, kind, std::move(inputs), std::move(attrs), std::move(payload)});
    return id;
  }

  void output(NodeId id) { outputs_.push_back(id); }
  void meta(std::string key, std::string value) { metadata_[std::move(key)] = std::move(value); }

  Graph build() const { return Graph(width_, inputs_, nodes_, outputs_, metadata_); }

 private:
  ElementWidth width_;
  NodeId next_ = 0;
  std::vector<InputSpec> inputs_;
  std::vector<Node> nodes_;
  std::vector<NodeId> outputs_;
  std::map<std::string, std::string> metadata_;
};

// ---------------------------------------------------------------------------------------------
// Static analysis

struct Violation {
  NodeId node = 0;
  std::string message;
};

/// Result of static analysis: execution order and, for every value, its dims and predicted quantizer.
struct Analysis {
  std::vector<Violation> violations;
  std::vector<std::size_t> order;  // indices into graph.nodes(), topological
  std::unordered_map<NodeId, Dims> dims;
  std::unordered_map<NodeId, int> quantizer;

  bool ok() const { return violations.empty(); }
};

namespace detail {

inline const Dims* payload_dims(const Node& n) {
  if (auto* t = std::get_if<AnyTensor>(&n.payload)) return &dims_of_any(*t);
  return nullptr;
}

inline std::optional<int> payload_quantizer(const Node& n) {
  if (auto* t = std::get_if<AnyTensor>(&n.payload)) return quantizer_of_any(*t);
  if (auto* s = std::get_if<AnySparse>(&n.payload)) return std::visit([](const auto& m) { return m.quantizer(); }, *s);
  return std::nullopt;
}

inline std::optional<ElementWidth> payload_width(const Node& n) {
  if (auto* t = std::get_if<AnyTensor>(&n.payload)) return width_of_any(*t);
  if (auto* s = std::get_if<AnySparse>(&n.payload))
    return std::visit([](const auto& m) { return width_of<typename std::decay_t<decltype(m.values())>::value_type>; }, *s);
  return std::nullopt;
}

inline std::pair<int, int> sparse_extent(const Node& n) {
  const auto& s = std::get<AnySparse>(n.payload);
  return std::visit([](const auto& m) { return std::pair{m.rows(), m.cols()}; }, s);
}

/// Output dims of one node from its input dims, by running the kernels' shape rules on
/// zero-sized stand-ins would be wasteful, so the rules are restated here.
inline Dims infer_dims(const Node& n, const std::vector<const Dims*>& in) {
  const auto& a = n.attrs;
  switch (n.kind) {
    case OpKind::Const: return *payload_dims(n);
    case OpKind::MatMul: {
      require_rank(*in[1], 2, "MatMul weights");
      check(!in[0]->empty() && in[0]->back() == (*in[1])[0], ErrorKind::ShapeMismatch,
            "MatMul inner dims disagree: " + to_string(*in[0]) + " x " + to_string(*in[1]));
      Dims d = *in[0];
      d.back() = (*in[1])[1];
      return d;
    }
    case OpKind::SparseMatMul: {
      const auto [rows, cols] = sparse_extent(n);
      check(!in[0]->empty() && in[0]->back() == cols, ErrorKind::ShapeMismatch,
            "sparse product: input " + to_string(*in[0]) + " vs " + std::to_string(cols) + " columns");
      Dims d = *in[0];
      d.back() = rows;
      return d;
    }
    case OpKind::Conv2D:
    case OpKind::Conv2DTranspose: {
      const Dims& x = *in[0];
      const Dims& w = *in[1];
      require_rank(x, 4, "convolution input");
      require_rank(w, 4, "convolution weights");
      check_stride(a.stride);
      check(a.groups >= 1 && x[3] % a.groups == 0 && w[3] % a.groups == 0 && w[2] == x[3] / a.groups,
            ErrorKind::ShapeMismatch, "convolution channels: input " + to_string(x) + ", weights " + to_string(w));
      const bool tr = n.kind == OpKind::Conv2DTranspose;
      const auto gy = tr ? transposed_geometry(x[1], w[0], a.stride, a.padding) : window_geometry(x[1], w[0], a.stride, a.padding);
      const auto gx = tr ? transposed_geometry(x[2], w[1], a.stride, a.padding) : window_geometry(x[2], w[1], a.stride, a.padding);
      return {x[0], gy.out, gx.out, w[3]};
    }
    case OpKind::Add:
    case OpKind::Mul:
    case OpKind::Maximum: return broadcast_dims(*in[0], *in[1]);
    case OpKind::BiasAdd:
    case OpKind::PRelu: {
      const Dims d = broadcast_dims(*in[0], *in[1]);
      check(d == *in[0], ErrorKind::ShapeMismatch,
            to_string(*in[1]) + " does not broadcast over " + to_string(*in[0]));
      return d;
    }
    case OpKind::Concat: {
      const Dims& first = *in[0];
      const int ax = normalize_axis(a.axis, static_cast<int>(first.size()));
      Dims d = first;
      d[ax] = 0;
      for (const Dims* p : in) {
        check(p->size() == first.size(), ErrorKind::ShapeMismatch, "Concat rank mismatch");
        for (std::size_t i = 0; i < p->size(); ++i)
          check(static_cast<int>(i) == ax || (*p)[i] == first[i], ErrorKind::ShapeMismatch,
                "Concat dims " + to_string(*p) + " vs " + to_string(first));
        d[ax] += (*p)[ax];
      }
      return d;
    }
    case OpKind::MaxPool: {
      const Dims& x = *in[0];
      require_rank(x, 4, "MaxPool input");
      check(a.kernel >= 1 && a.stride >= 1, ErrorKind::ShapeMismatch, "MaxPool kernel and stride must be >= 1");
      return {x[0], window_geometry(x[1], a.kernel, a.stride, a.padding).out,
              window_geometry(x[2], a.kernel, a.stride, a.padding).out, x[3]};
    }
    case OpKind::Relu:
    case OpKind::LeakyRelu: return *in[0];
    case OpKind::Flatten: {
      const Dims& x = *in[0];
      const int axis = a.has(AttrTag::Axis) ? a.axis : 1;
      check(axis >= 0 && axis <= static_cast<int>(x.size()), ErrorKind::ShapeMismatch, "flatten axis out of range");
      int lead = 1;
      for (int i = 0; i < axis; ++i) lead *= x[i];
      return {lead, static_cast<int>(element_count(x) / static_cast<std::size_t>(lead))};
    }
    case OpKind::Transpose: {
      const Dims& x = *in[0];
      check(a.perm.size() == x.size(), ErrorKind::ShapeMismatch, "transpose permutation rank mismatch");
      Dims d(x.size());
      std::vector<bool> seen(x.size(), false);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const int p = a.perm[i];
        check(p >= 0 && p < static_cast<int>(x.size()) && !seen[p], ErrorKind::ShapeMismatch, "invalid permutation");
        seen[p] = true;
        d[i] = x[p];
      }
      return d;
    }
    case OpKind::Reshape: {
      Dims d = a.dims;
      std::size_t known = 1;
      int at = -1;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] == -1) {
          check(at < 0, ErrorKind::ShapeMismatch, "reshape target has more than one -1");
          at = static_cast<int>(i);
        } else {
          check(d[i] > 0, ErrorKind::ShapeMismatch, "bad reshape target " + to_string(a.dims));
          known *= static_cast<std::size_t>(d[i]);
        }
      }
      const std::size_t total = element_count(*in[0]);
      if (at >= 0) {
        check(total % known == 0, ErrorKind::ShapeMismatch, "cannot reshape " + to_string(*in[0]) + " to " + to_string(a.dims));
        d[at] = static_cast<int>(total / known);
      }
      check(element_count(d) == total, ErrorKind::ShapeMismatch,
            "cannot reshape " + to_string(*in[0]) + " to " + to_string(a.dims));
      return d;
    }
    case OpKind::Slice: {
      const Dims& x = *in[0];
      check(a.starts.size() == x.size() && a.ends.size() == x.size(), ErrorKind::ShapeMismatch,
            "slice needs one start and end per axis");
      Dims d(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        int s = a.starts[i] < 0 ? a.starts[i] + x[i] : a.starts[i];
        int e = a.ends[i] < 0 ? a.ends[i] + x[i] : a.ends[i];
        s = std::clamp(s, 0, x[i]);
        e = std::clamp(e, 0, x[i]);
        check(e > s, ErrorKind::ShapeMismatch, "empty slice on axis " + std::to_string(i));
        d[i] = e - s;
      }
      return d;
    }
    case OpKind::Expand: return broadcast_dims(*in[0], a.dims);
    case OpKind::Shape: return {in[0]->empty() ? 1 : static_cast<int>(in[0]->size())};
  }
  fail(ErrorKind::InvalidNode, "unknown op kind");
}

/// Output quantizer by the fixed-point rules; throws QuantizerOrder where a rule is undefined.
inline int infer_quantizer(const Node& n, const std::vector<int>& q) {
  const auto& a = n.attrs;
  switch (n.kind) {
    case OpKind::Const: return *payload_quantizer(n);
    case OpKind::MatMul:
    case OpKind::Conv2D:
    case OpKind::Conv2DTranspose:
    case OpKind::Mul:
    case OpKind::SparseMatMul:
      check(a.internal_shift >= 0, ErrorKind::QuantizerOrder, "negative internal shift");
      require_quantizer_order(q[0], a.internal_shift, to_string(n.kind));
      return q[0] - a.internal_shift;
    case OpKind::BiasAdd:
      require_quantizer_order(q[0], q[1], "BiasAdd");
      return q[1];
    case OpKind::Maximum:
      require_quantizer_order(q[0], q[1], "Maximum");
      return q[0];
    case OpKind::Add:
    case OpKind::Concat: return *std::min_element(q.begin(), q.end());
    case OpKind::Shape: return 0;
    default: return q[0];
  }
}

}  // namespace detail

/// Structural, shape and quantizer checks. Input dims may be overridden (e.g. other patch sizes).
inline Analysis analyze(const Graph& g, const std::vector<Dims>* input_dims = nullptr) {
  Analysis an;
  auto violation = [&](NodeId id, std::string msg) { an.violations.push_back({id, std::move(msg)}); };
  const bool integer = is_integer(g.width());

  std::unordered_map<NodeId, std::size_t> index;
  std::unordered_map<NodeId, bool> is_input;
  for (std::size_t i = 0; i < g.inputs().size(); ++i) {
    const auto& in = g.inputs()[i];
    if (is_input.count(in.id)) violation(in.id, "duplicate input id");
    is_input[in.id] = true;
    const Dims& d = input_dims && i < input_dims->size() ? (*input_dims)[i] : in.dims;
    bool good = !d.empty() || true;
    for (int e : d) good = good && e > 0;
    if (!good) violation(in.id, "input has non-positive extent " + to_string(d));
    if (integer && in.q < 0) violation(in.id, "negative input quantizer");
    an.dims[in.id] = d;
    an.quantizer[in.id] = in.q;
  }
  if (input_dims && input_dims->size() != g.inputs().size())
    violation(0, "expected " + std::to_string(g.inputs().size()) + " input shapes");

  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    const auto& n = g.nodes()[i];
    if (index.count(n.id) || is_input.count(n.id)) violation(n.id, "duplicate node id " + std::to_string(n.id));
    index[n.id] = i;
  }

  // Per-node structural checks.
  for (const auto& n : g.nodes()) {
    const int want = arity(n.kind);
    const int have = static_cast<int>(n.inputs.size());
    if ((want >= 0 && have != want) || (want < 0 && have < 1))
      violation(n.id, std::string(to_string(n.kind)) + " takes " + (want < 0 ? std::string("at least 1") : std::to_string(want)) +
                          " inputs, has " + std::to_string(have));
    for (NodeId src : n.inputs)
      if (!index.count(src) && !is_input.count(src))
        violation(n.id, "references missing id " + std::to_string(src));
    const auto width = detail::payload_width(n);
    if (n.kind == OpKind::Const && !std::holds_alternative<AnyTensor>(n.payload))
      violation(n.id, "Const without tensor payload");
    if (n.kind == OpKind::SparseMatMul && !std::holds_alternative<AnySparse>(n.payload))
      violation(n.id, "SparseMatMul without sparse payload");
    if (n.kind != OpKind::Const && n.kind != OpKind::SparseMatMul && !std::holds_alternative<std::monostate>(n.payload))
      violation(n.id, "unexpected payload");
    if (width && *width != g.width())
      violation(n.id, std::string("payload width ") + to_string(*width) + " differs from graph width " + to_string(g.width()));
    const auto& a = n.attrs;
    if (n.kind == OpKind::Conv2D || n.kind == OpKind::Conv2DTranspose) {
      if (a.stride != 1 && a.stride != 2) violation(n.id, "stride " + std::to_string(a.stride) + " not in {1,2}");
      if (a.groups < 1) violation(n.id, "groups must be >= 1");
    }
    if (n.kind == OpKind::MaxPool && (a.kernel < 1 || a.stride < 1)) violation(n.id, "MaxPool kernel and stride must be >= 1");
    if (n.kind == OpKind::LeakyRelu && integer && !(std::abs(a.alpha) < 1.0))
      violation(n.id, "LeakyReLU slope must satisfy |alpha| < 1");
    if (uses_internal_shift(n.kind) && a.internal_shift < 0) violation(n.id, "negative internal shift");
    if (integer && n.kind == OpKind::Const) {
      if (auto q = detail::payload_quantizer(n); q && *q < 0) violation(n.id, "negative constant quantizer");
    }
  }
  if (g.outputs().empty()) violation(0, "graph has no outputs");
  for (NodeId out : g.outputs())
    if (!index.count(out) && !is_input.count(out)) violation(out, "output references missing id " + std::to_string(out));
  if (!an.violations.empty()) return an;

  // Kahn's algorithm; among ready nodes the smallest id runs first.
  std::vector<int> pending(g.nodes().size(), 0);
  std::unordered_map<NodeId, std::vector<std::size_t>> consumers;
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    for (NodeId src : g.nodes()[i].inputs) {
      if (index.count(src)) {
        ++pending[i];
        consumers[src].push_back(i);
      }
    }
  }
  using Ready = std::pair<NodeId, std::size_t>;
  std::priority_queue<Ready, std::vector<Ready>, std::greater<>> ready;
  for (std::size_t i = 0; i < g.nodes().size(); ++i)
    if (pending[i] == 0) ready.push({g.nodes()[i].id, i});
  while (!ready.empty()) {
    const auto [id, i] = ready.top();
    ready.pop();
    an.order.push_back(i);
    for (std::size_t c : consumers[id])
      if (--pending[c] == 0) ready.push({g.nodes()[c].id, c});
  }
  if (an.order.size() != g.nodes().size()) {
    for (std::size_t i = 0; i < g.nodes().size(); ++i)
      if (pending[i] > 0) violation(g.nodes()[i].id, "node is part of a cycle");
    return an;
  }

  // Outputs must depend on at least one graph input.
  std::unordered_map<NodeId, bool> from_input(is_input.begin(), is_input.end());
  for (std::size_t i : an.order) {
    const auto& n = g.nodes()[i];
    bool any = false;
    for (NodeId src : n.inputs) any = any || from_input[src];
    from_input[n.id] = any;
  }
  for (NodeId out : g.outputs())
    if (!from_input[out]) violation(out, "output is not reachable from any input");

  // Shapes and quantizers.
  for (std::size_t i : an.order) {
    const auto& n = g.nodes()[i];
    std::vector<const Dims*> in_dims;
    std::vector<int> in_q;
    bool known = true;
    for (NodeId src : n.inputs) {
      auto it = an.dims.find(src);
      if (it == an.dims.end()) {
        known = false;
        break;
      }
      in_dims.push_back(&it->second);
      in_q.push_back(an.quantizer[src]);
    }
    if (!known) continue;
    try {
      an.dims[n.id] = detail::infer_dims(n, in_dims);
    } catch (const Error& e) {
      violation(n.id, e.what());
      continue;
    }
    if (integer) {
      try {
        an.quantizer[n.id] = detail::infer_quantizer(n, in_q);
      } catch (const Error& e) {
        violation(n.id, e.what());
        an.quantizer[n.id] = 0;
      }
    } else {
      an.quantizer[n.id] = 0;
    }
  }
  return an;
}

/// Empty iff the graph is executable.
inline std::vector<Violation> validate(const Graph& g) { return analyze(g).violations; }

}  // namespace qnn
