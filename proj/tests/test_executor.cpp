#include <gtest/gtest.h>

#include "qnn/qnn.hpp"

namespace {

TEST(Executor, RunsGraphAndExposesValues) {
  qnn::GraphBuilder b(qnn::ElementWidth::i16);
  const auto x = b.input({1, 2}, 4);
  const auto w = b.constant(qnn::Tensor<std::int16_t>({2, 2}, std::vector<std::int16_t>{4, 0, 0, 8}, 3));
  const auto y = b.add(qnn::OpKind::MatMul, {x, w});
  const auto z = b.add(qnn::OpKind::Relu, {y});
  b.output(z);
  const auto g = b.build();
  qnn::ExecutionContext<std::int16_t> ctx(g);
  const std::vector in{qnn::Tensor<std::int16_t>({1, 2}, std::vector<std::int16_t>{16, -16}, 4)};
  qnn::OpStats stats;
  const auto out = ctx.run(in, &stats);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].quantizer(), 4);
  EXPECT_EQ(out[0][0], 8);
  EXPECT_EQ(out[0][1], 0);
  EXPECT_EQ(ctx.value(y)[1], -16);
  EXPECT_EQ(stats.macs, 4u);
}

TEST(Executor, RejectsWrongInputQuantizerAndWidth) {
  qnn::GraphBuilder b(qnn::ElementWidth::i16);
  const auto x = b.input({1, 2}, 4);
  b.output(b.add(qnn::OpKind::Relu, {x}));
  const auto g = b.build();
  qnn::ExecutionContext<std::int16_t> ctx(g);
  const std::vector bad{qnn::Tensor<std::int16_t>({1, 2}, 5)};
  try {
    ctx.run(bad);
    FAIL();
  } catch (const qnn::Error& e) {
    EXPECT_EQ(e.kind(), qnn::ErrorKind::QuantizerOrder);
  }
  EXPECT_THROW(qnn::ExecutionContext<std::int32_t>{g}, qnn::Error);
}

TEST(Executor, ReportsFailingNode) {
  qnn::GraphBuilder b(qnn::ElementWidth::i8);
  const auto x = b.input({1, 4}, 0);
  const auto w = b.constant(qnn::Tensor<std::int8_t>({4, 1}, std::vector<std::int8_t>(4, 127), 0));
  const auto y = b.add(qnn::OpKind::MatMul, {x, w});
  b.output(y);
  const auto g = b.build();
  qnn::ExecutionContext<std::int8_t> ctx(g);
  const std::vector in{qnn::Tensor<std::int8_t>({1, 4}, std::vector<std::int8_t>(4, 127), 0)};
  EXPECT_THROW(ctx.run(in), qnn::Error);
  ASSERT_TRUE(ctx.failed_node().has_value());
  EXPECT_EQ(*ctx.failed_node(), y);
}

TEST(Executor, InputDimsOverride) {
  const auto g = qnn::reference::filter_int16_model(4);
  std::vector<qnn::Dims> dims;
  for (const auto& in : g.inputs()) {
    auto d = in.dims;
    d[1] = d[2] = 20;
    dims.push_back(d);
  }
  qnn::ExecutionContext<std::int16_t> ctx(g, dims);
  std::vector<qnn::Tensor<std::int16_t>> in;
  for (std::size_t i = 0; i < dims.size(); ++i) in.emplace_back(dims[i], g.inputs()[i].q);
  const auto out = ctx.run(in);
  EXPECT_EQ(out[0].dim(1), 20);
}

}  // namespace
