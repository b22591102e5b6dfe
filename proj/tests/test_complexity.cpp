#include <gtest/gtest.h>

#include "qnn/qnn.hpp"

namespace {

TEST(Complexity, DenseMatMulCount) {
  qnn::GraphBuilder b(qnn::ElementWidth::f32);
  const auto x = b.input({3, 5});
  b.output(b.add(qnn::OpKind::MatMul, {x, b.constant(qnn::Tensor<float>({5, 7}))}));
  EXPECT_EQ(qnn::count_macs(b.build()).total.macs, 3u * 5 * 7);
}

TEST(Complexity, ConvCountFollowsOutputSize) {
  qnn::GraphBuilder b(qnn::ElementWidth::f32);
  const auto x = b.input({1, 8, 8, 2});
  b.output(b.add(qnn::OpKind::Conv2D, {x, b.constant(qnn::Tensor<float>({3, 3, 2, 4}))}, qnn::Attributes{}.set_stride(2)));
  EXPECT_EQ(qnn::count_macs(b.build()).total.macs, 4u * 4 * 4 * 3 * 3 * 2);
}

TEST(Complexity, ReferenceIntraBudgets) {
  for (const auto& b : qnn::reference::published_budgets) {
    const auto g = qnn::reference::intra_float_model(b.shape);
    const std::uint64_t px = static_cast<std::uint64_t>(b.shape.h * b.shape.w);
    std::uint64_t sparse = 0;
    for (const auto& n : qnn::count_macs(g).nodes)
      if (n.kind == qnn::OpKind::SparseMatMul) sparse += n.ops.macs;
    EXPECT_EQ(sparse, b.sparse_macs_per_pixel * px);
    EXPECT_NEAR(qnn::kmac_per_pixel(g, px), b.sparse_macs_per_pixel / 1000.0, 0.1);
  }
}

TEST(Complexity, LayerWidths) {
  const auto w = qnn::reference::intra_layer_widths({4, 4});
  ASSERT_EQ(w.size(), 4u);
  EXPECT_EQ(w[1], 1216);
  EXPECT_EQ(w.back(), 16 + 67 + 16);
  EXPECT_EQ(qnn::reference::fc_layers({16, 16}), 4);
}

}  // namespace
