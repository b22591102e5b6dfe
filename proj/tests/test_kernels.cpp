#include <gtest/gtest.h>

#include "kernel_suite.hpp"

namespace {

using qnn::ErrorKind;
using qnn::Tensor;

template <class Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const qnn::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Io;
}

TEST(Kernels, RandomisedAgainstOracle) {
  for (const auto& r : suite::run_all(300, 11)) EXPECT_EQ(r.mismatches, 0) << r.name;
}

TEST(Kernels, OracleComparisonDetectsWrongValues) {
  // A deliberately wrong expectation must be reported as a mismatch.
  Tensor<std::int16_t> x({1, 2}, std::vector<std::int16_t>{3, 4}, 2);
  oracle::Expected e;
  e.q = 2;
  e.values = {3, 5};
  EXPECT_FALSE((suite::agree<std::int16_t>(e, [&](Tensor<std::int16_t>& out) { out = x; })));
  e.values = {3, 4};
  EXPECT_TRUE((suite::agree<std::int16_t>(e, [&](Tensor<std::int16_t>& out) { out = x; })));
  e.overflow = true;
  EXPECT_FALSE((suite::agree<std::int16_t>(e, [&](Tensor<std::int16_t>& out) { out = x; })));
}

TEST(Kernels, BiasAddAlignsToBiasQuantizer) {
  Tensor<std::int16_t> x({1, 3}, std::vector<std::int16_t>{100, -100, 32767}, 6);
  Tensor<std::int16_t> b({3}, std::vector<std::int16_t>{1, 1, 32767}, 4);
  const auto y = qnn::bias_add(x, b);
  EXPECT_EQ(y.quantizer(), 4);
  EXPECT_EQ(y[0], 26);   // (100 >> 2) + 1
  EXPECT_EQ(y[1], -24);  // floor(-100 / 4) + 1
  EXPECT_EQ(y[2], 32767);
  Tensor<std::int16_t> coarse({1, 3}, 2);
  EXPECT_EQ(kind_of([&] { qnn::bias_add(coarse, b); }), ErrorKind::QuantizerOrder);
}

TEST(Kernels, AddTakesSmallerQuantizer) {
  Tensor<std::int8_t> a({2}, std::vector<std::int8_t>{8, -8}, 3);
  Tensor<std::int8_t> b({2}, std::vector<std::int8_t>{1, 1}, 1);
  const auto y = qnn::add(a, b);
  EXPECT_EQ(y.quantizer(), 1);
  EXPECT_EQ(y[0], 3);
  EXPECT_EQ(y[1], -1);
}

TEST(Kernels, MatMulShiftsAndRejectsAccumulatorOverflow) {
  Tensor<std::int16_t> x({1, 2}, std::vector<std::int16_t>{256, 512}, 8);
  Tensor<std::int16_t> w({2, 1}, std::vector<std::int16_t>{128, 64}, 7);
  const auto y = qnn::matmul(x, w, 2);
  EXPECT_EQ(y.quantizer(), 6);
  EXPECT_EQ(y[0], (256 * 128 + 512 * 64) >> 9);
  Tensor<std::int16_t> big({1, 4}, std::vector<std::int16_t>(4, 32767), 0);
  Tensor<std::int16_t> wb({4, 1}, std::vector<std::int16_t>(4, 32767), 0);
  EXPECT_EQ(kind_of([&] { qnn::matmul(big, wb); }), ErrorKind::NumericOverflow);
}

TEST(Kernels, ConvRejectsStrideThree) {
  Tensor<std::int16_t> x({1, 4, 4, 1}, 0), w({3, 3, 1, 1}, 0);
  EXPECT_EQ(kind_of([&] { qnn::conv2d(x, w, qnn::ConvParams{3, 1, qnn::Padding::Same}); }), ErrorKind::UnsupportedStride);
}

TEST(Kernels, LeakySlopeQuantizer) {
  const auto s = qnn::leaky_slope(0.1, qnn::ElementWidth::i16);
  const auto o = oracle::leaky_slope(0.1, 16);
  EXPECT_EQ(s.shift, o.q);
  EXPECT_EQ(oracle::big(s.value), o.value);
  EXPECT_EQ(kind_of([] { qnn::leaky_slope(1.0, qnn::ElementWidth::i16); }), ErrorKind::SlopeOutOfRange);
}

TEST(Kernels, MaximumAlignsSecondOperand) {
  Tensor<std::int16_t> a({2}, std::vector<std::int16_t>{10, -10}, 4);
  Tensor<std::int16_t> b({2}, std::vector<std::int16_t>{1, -1}, 1);
  const auto y = qnn::maximum(a, b);
  EXPECT_EQ(y.quantizer(), 4);
  EXPECT_EQ(y[0], 10);
  EXPECT_EQ(y[1], -8);
  EXPECT_EQ(kind_of([&] { qnn::maximum(b, a); }), ErrorKind::QuantizerOrder);
}

TEST(Kernels, ConcatUsesMinimumQuantizer) {
  Tensor<std::int16_t> a({1, 1}, std::vector<std::int16_t>{64}, 6);
  Tensor<std::int16_t> b({1, 1}, std::vector<std::int16_t>{3}, 2);
  const auto y = qnn::concat({&a, &b}, 1);
  EXPECT_EQ(y.quantizer(), 2);
  EXPECT_EQ(y[0], 4);
  EXPECT_EQ(y[1], 3);
}

}  // namespace
