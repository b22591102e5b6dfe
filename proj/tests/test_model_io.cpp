#include <gtest/gtest.h>

#include "qnn/qnn.hpp"

namespace {

using qnn::ErrorKind;

ErrorKind load_error(std::vector<std::uint8_t> bytes) {
  try {
    qnn::load_model_bytes(bytes);
  } catch (const qnn::Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

qnn::Graph small_graph() {
  qnn::GraphBuilder b(qnn::ElementWidth::i16);
  const auto x = b.input({1, 4}, 7);
  qnn::Tensor<std::int16_t> w({4, 2}, std::vector<std::int16_t>{1, 2, 3, 4, 5, 6, 7, 8}, 6);
  auto y = b.add(qnn::OpKind::MatMul, {x, b.constant(w)}, qnn::Attributes{}.set_internal_shift(2));
  y = b.add(qnn::OpKind::LeakyRelu, {y}, qnn::Attributes{}.set_alpha(0.25));
  b.output(y);
  b.meta("note", "unit");
  return b.build();
}

TEST(ModelIo, RoundTripIsByteIdentical) {
  const auto g = small_graph();
  const auto bytes = qnn::save_model_bytes(g);
  const auto back = qnn::load_model_bytes(bytes);
  EXPECT_EQ(back, g);
  EXPECT_EQ(qnn::save_model_bytes(back), bytes);
}

TEST(ModelIo, ReferenceModelsRoundTrip) {
  const auto g = qnn::reference::intra_int16_model({4, 8});
  const auto bytes = qnn::save_model_bytes(g);
  EXPECT_EQ(qnn::save_model_bytes(qnn::load_model_bytes(bytes)), bytes);
}

TEST(ModelIo, CorruptInputsAreRejected) {
  const auto bytes = qnn::save_model_bytes(small_graph());
  auto bad_magic = bytes;
  bad_magic[0] ^= 0xff;
  EXPECT_EQ(load_error(bad_magic), ErrorKind::BadMagic);
  auto bad_version = bytes;
  bad_version[4] = 99;
  EXPECT_EQ(load_error(bad_version), ErrorKind::BadVersion);
  EXPECT_EQ(load_error({bytes.begin(), bytes.begin() + 3}), ErrorKind::BadMagic);
  for (std::size_t cut : {std::size_t{6}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_EQ(load_error(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(cut))), ErrorKind::Truncated)
        << cut;
}

TEST(ModelIo, TensorFileRoundTrip) {
  qnn::Tensor<std::int32_t> t({2, 3}, std::vector<std::int32_t>{1, -2, 3, -4, 5, -6}, 9);
  const auto bytes = qnn::encode_stn1(t);
  EXPECT_EQ(qnn::expect_tensor<std::int32_t>(qnn::decode_stn1(bytes), "t"), t);
  auto cut = bytes;
  cut.pop_back();
  EXPECT_THROW(qnn::decode_stn1(cut), qnn::Error);
}

TEST(Graph, ValidationFindsShapeErrors) {
  qnn::GraphBuilder b(qnn::ElementWidth::f32);
  const auto x = b.input({1, 4});
  const auto y = b.add(qnn::OpKind::MatMul, {x, b.constant(qnn::Tensor<float>({3, 2}))});
  b.output(y);
  EXPECT_FALSE(qnn::validate(b.build()).empty());
  EXPECT_TRUE(qnn::validate(small_graph()).empty());
}

}  // namespace
