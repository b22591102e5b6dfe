#pragma once

#include <string>
#include <vector>

#include "qnn/graph.hpp"

namespace qnn {

// SMF1 layout, all integers little-endian:
//   "SMF1" | version u32 | width u8
//   | input count u32, then per input: id u32 | q i8 | rank u8 | rank x u32
//   | node count u32, then per node:
//       id u32 | kind u16 | arity u8 | arity x u32 input ids
//       | attr count u8 | TLVs (tag u8 | len u16 | value) in ascending tag order
//       | payload flag u8 (0 none, 1 STN1 tensor, 2 sparse matrix) | payload
//   | output count u32 | ids u32
//   | metadata count u32 | per entry: key len u16 | key | value len u32 | value

inline constexpr std::uint32_t smf1_version = 1;

namespace detail {

inline void write_int_list(io::ByteWriter& w, AttrTag tag, const std::vector<int>& v) {
  check(v.size() * 4 <= 0xffff, ErrorKind::InvalidArgument, "attribute list too long");
  w.u8(static_cast<std::uint8_t>(tag));
  w.u16(static_cast<std::uint16_t>(v.size() * 4));
  for (int x : v) w.i32(x);
}

inline void write_int(io::ByteWriter& w, AttrTag tag, int v) {
  w.u8(static_cast<std::uint8_t>(tag));
  w.u16(4);
  w.i32(v);
}

inline void write_attributes(io::ByteWriter& w, const Attributes& a) {
  int count = 0;
  for (int t = 1; t <= attr_tag_max; ++t) count += a.has(static_cast<AttrTag>(t));
  w.u8(static_cast<std::uint8_t>(count));
  if (a.has(AttrTag::Stride)) write_int(w, AttrTag::Stride, a.stride);
  if (a.has(AttrTag::Groups)) write_int(w, AttrTag::Groups, a.groups);
  if (a.has(AttrTag::Padding)) {
    w.u8(static_cast<std::uint8_t>(AttrTag::Padding));
    w.u16(1);
    w.u8(static_cast<std::uint8_t>(a.padding));
  }
  if (a.has(AttrTag::Alpha)) {
    w.u8(static_cast<std::uint8_t>(AttrTag::Alpha));
    w.u16(8);
    w.f64(a.alpha);
  }
  if (a.has(AttrTag::InternalShift)) write_int(w, AttrTag::InternalShift, a.internal_shift);
  if (a.has(AttrTag::Axis)) write_int(w, AttrTag::Axis, a.axis);
  if (a.has(AttrTag::Kernel)) write_int(w, AttrTag::Kernel, a.kernel);
  if (a.has(AttrTag::Dims)) write_int_list(w, AttrTag::Dims, a.dims);
  if (a.has(AttrTag::Perm)) write_int_list(w, AttrTag::Perm, a.perm);
  if (a.has(AttrTag::Starts)) write_int_list(w, AttrTag::Starts, a.starts);
  if (a.has(AttrTag::Ends)) write_int_list(w, AttrTag::Ends, a.ends);
}

inline Attributes read_attributes(io::ByteReader& r, NodeId id) {
  auto bad = [&](const std::string& msg) { fail(ErrorKind::InvalidNode, "node " + std::to_string(id) + ": " + msg); };
  Attributes a;
  const int count = r.u8();
  int last = 0;
  for (int i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const int tag = r.u8();
    const std::size_t len = r.u16();
    if (tag < 1 || tag > attr_tag_max) bad("unknown attribute tag " + std::to_string(tag) + " at offset " + std::to_string(at));
    if (tag <= last) bad("attribute tags out of order at offset " + std::to_string(at));
    last = tag;
    auto scalar = [&] {
      if (len != 4) bad("attribute " + std::to_string(tag) + " has length " + std::to_string(len));
      return static_cast<int>(r.i32());
    };
    auto list = [&] {
      if (len % 4 != 0) bad("attribute " + std::to_string(tag) + " has length " + std::to_string(len));
      std::vector<int> v(len / 4);
      for (auto& x : v) x = r.i32();
      return v;
    };
    switch (static_cast<AttrTag>(tag)) {
      case AttrTag::Stride: a.set_stride(scalar()); break;
      case AttrTag::Groups: a.set_groups(scalar()); break;
      case AttrTag::Padding: {
        if (len != 1) bad("padding attribute has length " + std::to_string(len));
        const int p = r.u8();
        if (p > 1) bad("unknown padding code " + std::to_string(p));
        a.set_padding(static_cast<Padding>(p));
        break;
      }
      case AttrTag::Alpha:
        if (len != 8) bad("alpha attribute has length " + std::to_string(len));
        a.set_alpha(r.f64());
        break;
      case AttrTag::InternalShift: a.set_internal_shift(scalar()); break;
      case AttrTag::Axis: a.set_axis(scalar()); break;
      case AttrTag::Kernel: a.set_kernel(scalar()); break;
      case AttrTag::Dims: a.set_dims(list()); break;
      case AttrTag::Perm: a.set_perm(list()); break;
      case AttrTag::Starts: a.set_starts(list()); break;
      case AttrTag::Ends: a.set_ends(list()); break;
    }
  }
  return a;
}

inline void write_dims(io::ByteWriter& w, const Dims& d) {
  w.u8(static_cast<std::uint8_t>(d.size()));
  for (int e : d) w.u32(static_cast<std::uint32_t>(e));
}

}  // namespace detail

inline std::vector<std::uint8_t> save_model_bytes(const Graph& g) {
  io::ByteWriter w;
  w.bytes("SMF1");
  w.u32(smf1_version);
  w.u8(static_cast<std::uint8_t>(g.width()));
  w.u32(static_cast<std::uint32_t>(g.inputs().size()));
  for (const auto& in : g.inputs()) {
    w.u32(in.id);
    check(in.q >= -128 && in.q <= 127, ErrorKind::InvalidArgument, "input quantizer does not fit in a byte");
    w.i8(static_cast<std::int8_t>(in.q));
    detail::write_dims(w, in.dims);
  }
  w.u32(static_cast<std::uint32_t>(g.nodes().size()));
  for (const auto& n : g.nodes()) {
    w.u32(n.id);
    w.u16(static_cast<std::uint16_t>(n.kind));
    check(n.inputs.size() <= 255, ErrorKind::InvalidArgument, "node " + std::to_string(n.id) + " has too many inputs");
    w.u8(static_cast<std::uint8_t>(n.inputs.size()));
    for (NodeId src : n.inputs) w.u32(src);
    detail::write_attributes(w, n.attrs);
    if (auto* t = std::get_if<AnyTensor>(&n.payload)) {
      w.u8(1);
      write_stn1(w, *t);
    } else if (auto* s = std::get_if<AnySparse>(&n.payload)) {
      w.u8(2);
      std::visit([&](const auto& m) { write_sparse(w, m); }, *s);
    } else {
      w.u8(0);
    }
  }
  w.u32(static_cast<std::uint32_t>(g.outputs().size()));
  for (NodeId id : g.outputs()) w.u32(id);
  w.u32(static_cast<std::uint32_t>(g.metadata().size()));
  for (const auto& [k, v] : g.metadata()) {
    check(k.size() <= 0xffff, ErrorKind::InvalidArgument, "metadata key too long");
    w.u16(static_cast<std::uint16_t>(k.size()));
    w.bytes(k);
    w.u32(static_cast<std::uint32_t>(v.size()));
    w.bytes(v);
  }
  return w.take();
}

/// Parses an SMF1 image. Structure is checked here; graph-level legality is left to validate().
inline Graph load_model_bytes(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < 4 || r.string(4) != "SMF1") fail(ErrorKind::BadMagic, "not an SMF1 model");
  const auto version = r.u32();
  check(version == smf1_version, ErrorKind::BadVersion, "unsupported model version " + std::to_string(version));
  const int code = r.u8();
  check(code <= 3, ErrorKind::InvalidNode, "unknown graph width code " + std::to_string(code));
  const auto width = static_cast<ElementWidth>(code);

  const std::uint32_t input_count = r.u32();
  check(input_count <= r.remaining(), ErrorKind::Truncated, "input table larger than the file");
  std::vector<InputSpec> inputs(input_count);
  for (auto& in : inputs) {
    in.id = r.u32();
    in.q = r.i8();
    in.dims.resize(r.u8());
    for (auto& d : in.dims) {
      const auto e = r.u32();
      check(e > 0 && e <= 0x7fffffffu, ErrorKind::InvalidNode, "input " + std::to_string(in.id) + " has a bad extent");
      d = static_cast<int>(e);
    }
  }

  const std::uint32_t node_count = r.u32();
  check(node_count <= r.remaining(), ErrorKind::Truncated, "node table larger than the file");
  std::vector<Node> nodes(node_count);
  for (auto& n : nodes) {
    const std::size_t at = r.offset();
    n.id = r.u32();
    const auto kind = r.u16();
    check(kind < op_kind_count, ErrorKind::InvalidNode,
          "node " + std::to_string(n.id) + " at offset " + std::to_string(at) + " has unknown op code " + std::to_string(kind));
    n.kind = static_cast<OpKind>(kind);
    n.inputs.resize(r.u8());
    for (auto& src : n.inputs) src = r.u32();
    const int want = arity(n.kind);
    const int have = static_cast<int>(n.inputs.size());
    check((want >= 0 && have == want) || (want < 0 && have >= 1), ErrorKind::InvalidNode,
          "node " + std::to_string(n.id) + " (" + to_string(n.kind) + ") has arity " + std::to_string(have));
    n.attrs = detail::read_attributes(r, n.id);
    const int flag = r.u8();
    const int expected = n.kind == OpKind::Const ? 1 : n.kind == OpKind::SparseMatMul ? 2 : 0;
    check(flag == expected, ErrorKind::InvalidNode,
          "node " + std::to_string(n.id) + " has payload flag " + std::to_string(flag) + ", expected " + std::to_string(expected));
    if (flag == 1)
      n.payload = read_stn1(r);
    else if (flag == 2)
      n.payload = read_sparse(r);
  }

  std::vector<NodeId> outputs(r.u32());
  check(outputs.size() <= r.remaining(), ErrorKind::Truncated, "output list larger than the file");
  for (auto& id : outputs) id = r.u32();

  std::map<std::string, std::string> metadata;
  const std::uint32_t meta_count = r.u32();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string key = r.string(r.u16());
    std::string value = r.string(r.u32());
    metadata[std::move(key)] = std::move(value);
  }
  check(r.at_end(), ErrorKind::InvalidNode, "trailing bytes after model at offset " + std::to_string(r.offset()));
  return Graph(width, std::move(inputs), std::move(nodes), std::move(outputs), std::move(metadata));
}

inline Graph load_model(const std::string& path) { return load_model_bytes(io::read_file(path)); }

inline void save_model(const std::string& path, const Graph& g) { io::write_file(path, save_model_bytes(g)); }

}  // namespace qnn
