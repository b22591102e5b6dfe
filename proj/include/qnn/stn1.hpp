#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <variant>
#include <vector>

#include "qnn/tensor.hpp"

namespace qnn {

using AnyTensor = std::variant<Tensor<float>, Tensor<std::int32_t>, Tensor<std::int16_t>, Tensor<std::int8_t>>;

inline ElementWidth width_of_any(const AnyTensor& t) {
  return std::visit([](const auto& x) { return width_of<typename std::decay_t<decltype(x)>::value_type>; }, t);
}

inline const Dims& dims_of_any(const AnyTensor& t) {
  return std::visit([](const auto& x) -> const Dims& { return x.dims(); }, t);
}

inline int quantizer_of_any(const AnyTensor& t) {
  return std::visit([](const auto& x) { return x.quantizer(); }, t);
}

namespace io {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void i8(std::int8_t v) { bytes_.push_back(static_cast<std::uint8_t>(v)); }
  void u16(std::uint16_t v) { raw(&v, sizeof v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void i32(std::int32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void bytes(std::string_view s) { raw(s.data(), s.size()); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }

  const std::vector<std::uint8_t>& buffer() const noexcept { return bytes_; }
  std::vector<std::uint8_t> take() noexcept { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::int8_t i8() { return get<std::int8_t>(); }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::int32_t i32() { return get<std::int32_t>(); }
  double f64() { return get<double>(); }
  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t offset() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  template <class V>
  V get() {
    V v;
    raw(&v, sizeof v);
    return v;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      fail(ErrorKind::Truncated, "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ", " +
                                     std::to_string(bytes_.size() - pos_) + " left");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  check(static_cast<bool>(out), ErrorKind::Io, "cannot create " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  check(static_cast<bool>(out), ErrorKind::Io, "short write to " + path);
}

}  // namespace io

// STN1: "STN1" | width u8 | q i8 | rank u8 | rank x u32 extents | row-major little-endian payload.

template <Element T>
void write_stn1(io::ByteWriter& w, const Tensor<T>& t) {
  w.bytes("STN1");
  w.u8(static_cast<std::uint8_t>(width_of<T>));
  check(t.quantizer() >= -128 && t.quantizer() <= 127, ErrorKind::InvalidArgument, "quantizer does not fit in a byte");
  w.i8(static_cast<std::int8_t>(t.quantizer()));
  check(t.rank() <= 255, ErrorKind::InvalidArgument, "rank too large");
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (int d : t.dims()) w.u32(static_cast<std::uint32_t>(d));
  w.raw(t.data().data(), t.size() * sizeof(T));
}

inline void write_stn1(io::ByteWriter& w, const AnyTensor& t) {
  std::visit([&](const auto& x) { write_stn1(w, x); }, t);
}

template <Element T>
std::vector<std::uint8_t> encode_stn1(const Tensor<T>& t) {
  io::ByteWriter w;
  write_stn1(w, t);
  return w.take();
}

inline AnyTensor read_stn1(io::ByteReader& r) {
  const std::size_t start = r.offset();
  if (r.remaining() < 4 || r.string(4) != "STN1") fail(ErrorKind::BadMagic, "expected STN1 at offset " + std::to_string(start));
  const auto code = r.u8();
  const int q = r.i8();
  const int rank = r.u8();
  Dims dims(static_cast<std::size_t>(rank));
  for (auto& d : dims) {
    const auto e = r.u32();
    check(e > 0 && e <= 0x7fffffffu, ErrorKind::InvalidNode, "bad extent in tensor at offset " + std::to_string(start));
    d = static_cast<int>(e);
  }
  auto load = [&]<class T>(T) -> AnyTensor {
    const std::size_t n = element_count(dims);
    check(n <= r.remaining() / sizeof(T), ErrorKind::Truncated,
          "tensor payload at offset " + std::to_string(start) + " is cut short");
    std::vector<T> data(n);
    r.raw(data.data(), n * sizeof(T));
    return Tensor<T>(dims, std::move(data), q);
  };
  switch (code) {
    case 0: return load(float{});
    case 1: return load(std::int32_t{});
    case 2: return load(std::int16_t{});
    case 3: return load(std::int8_t{});
    default: fail(ErrorKind::InvalidNode, "unknown width code " + std::to_string(code) + " at offset " + std::to_string(start));
  }
}

inline AnyTensor decode_stn1(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  AnyTensor t = read_stn1(r);
  check(r.at_end(), ErrorKind::InvalidNode, "trailing bytes after tensor");
  return t;
}

inline AnyTensor load_stn1(const std::string& path) { return decode_stn1(io::read_file(path)); }

template <Element T>
void save_stn1(const std::string& path, const Tensor<T>& t) {
  io::write_file(path, encode_stn1(t));
}

template <Element T>
Tensor<T> expect_tensor(AnyTensor t, const std::string& what) {
  auto* p = std::get_if<Tensor<T>>(&t);
  check(p != nullptr, ErrorKind::InvalidArgument,
        what + " has width " + to_string(width_of_any(t)) + ", expected " + to_string(width_of<T>));
  return std::move(*p);
}

}  // namespace qnn
