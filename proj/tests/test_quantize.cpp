#include <gtest/gtest.h>

#include "random_graphs.hpp"

namespace {

TEST(Quantize, ChooseShift) {
  EXPECT_EQ(qnn::choose_shift(1.0, qnn::ElementWidth::i16), 14);
  EXPECT_EQ(qnn::choose_shift(0.0, qnn::ElementWidth::i16), 15);
  EXPECT_EQ(qnn::choose_shift(1e-12, qnn::ElementWidth::i16), 30);
  EXPECT_EQ(qnn::choose_shift(100.0, qnn::ElementWidth::i8), 0);
  EXPECT_EQ(qnn::choose_shift(0.9, qnn::ElementWidth::i8), 7);
}

TEST(Quantize, DefaultInputQuantizers) {
  EXPECT_EQ(qnn::default_input_q(qnn::ElementWidth::i16), 7);
  EXPECT_EQ(qnn::default_input_q(qnn::ElementWidth::i32), 23);
}

TEST(Quantize, IsDeterministicAndValid) {
  rg::Rng rng(8);
  const auto c = rg::random_cnn(rng);
  const auto a = qnn::static_quantize(c.graph, c.calib, qnn::ElementWidth::i16);
  const auto b = qnn::static_quantize(c.graph, c.calib, qnn::ElementWidth::i16);
  EXPECT_EQ(qnn::save_model_bytes(a), qnn::save_model_bytes(b));
  EXPECT_TRUE(qnn::validate(a).empty());
  EXPECT_EQ(a.inputs()[0].q, 7);
}

TEST(Quantize, CalibrationDataDoesNotSaturate) {
  rg::Rng rng(21);
  for (int i = 0; i < 10; ++i) {
    const auto c = i % 2 ? rg::random_cnn(rng) : rg::random_mlp(rng);
    qnn::QuantizeOptions opt;
    opt.auto_input_q = true;
    const auto q = qnn::static_quantize(c.graph, c.calib, qnn::ElementWidth::i16, opt);
    qnn::ExecutionContext<std::int16_t> ctx(q);
    for (const auto& s : c.calib) {
      std::vector<qnn::Tensor<std::int16_t>> in{qnn::quantize<std::int16_t>(s[0], q.inputs()[0].q)};
      for (const auto& o : ctx.run(in))
        for (auto v : o.data()) EXPECT_LT(std::abs(static_cast<int>(v)), 32767);
    }
  }
}

TEST(Quantize, FidelityOnHeldOutInputs) {
  rg::Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    const auto c = i % 2 ? rg::random_cnn(rng) : rg::random_mlp(rng);
    qnn::QuantizeOptions opt;
    opt.auto_input_q = true;
    const auto f = rg::measure(c, qnn::static_quantize(c.graph, c.calib, qnn::ElementWidth::i16, opt));
    EXPECT_LT(f.max_abs, 1.0 / 64);
    EXPECT_GE(f.min_latent_q, 10);
  }
}

TEST(Quantize, Errors) {
  rg::Rng rng(1);
  const auto c = rg::random_mlp(rng);
  try {
    qnn::static_quantize(c.graph, {}, qnn::ElementWidth::i16);
    FAIL();
  } catch (const qnn::Error& e) {
    EXPECT_EQ(e.kind(), qnn::ErrorKind::CalibrationEmpty);
  }
  qnn::GraphBuilder b(qnn::ElementWidth::f32);
  const auto x = b.input({1, 2});
  b.output(b.add(qnn::OpKind::LeakyRelu, {x}, qnn::Attributes{}.set_alpha(1.5)));
  try {
    qnn::static_quantize(b.build(), {{qnn::Tensor<float>({1, 2})}}, qnn::ElementWidth::i16);
    FAIL();
  } catch (const qnn::Error& e) {
    EXPECT_EQ(e.kind(), qnn::ErrorKind::Unquantizable);
  }
}

}  // namespace
