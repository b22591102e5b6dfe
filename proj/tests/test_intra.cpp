#include <gtest/gtest.h>

#include "qnn/qnn.hpp"

namespace {

using namespace qnn::intra;

TEST(Intra, TableShapesAndContextLimits) {
  EXPECT_EQ(s_bar().size(), 17u);
  for (const auto s : s_bar()) {
    const auto r = transform_rule(s.h, s.w);
    ASSERT_TRUE(r.has_value());
    EXPECT_TRUE(in_s(r->network));
    const int h = r->transpose ? s.w / r->gamma : s.h / r->delta;
    const int w = r->transpose ? s.h / r->delta : s.w / r->gamma;
    EXPECT_EQ(h, r->network.h) << s.h << "x" << s.w;
    EXPECT_EQ(w, r->network.w) << s.h << "x" << s.w;
  }
  EXPECT_FALSE(transform_rule(64, 32).has_value());
  EXPECT_FALSE(transform_rule(4, 64).has_value());
}

TEST(Intra, ContextExtractionMarksUnavailableSamples) {
  qnn::Plane frame(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) frame.at(x, y) = (x + 3 * y) % 1024;
  const auto spec = default_context_spec({4, 4});
  const auto ctx = extract_context(frame, 16, 16, 4, 4, spec);
  // Above-left corner sample is decoded; samples right of and below the block are not.
  EXPECT_TRUE(ctx.avail(0, 0));
  EXPECT_EQ(ctx.sample(0, 0), frame.at(16 - spec.n_l, 16 - spec.n_a));
  EXPECT_FALSE(ctx.avail(spec.n_a + 4 + 1, 1));
  EXPECT_THROW(extract_context(frame, 1, 1, 4, 4, spec), qnn::Error);
}

TEST(Intra, MeanFallsBackToMidGrey) {
  auto ctx = make_context(default_context_spec({4, 4}), 4, 4, 10);
  EXPECT_EQ(available_mean(ctx), 512);
}

TEST(Intra, PreAndPostprocessingInvert) {
  auto ctx = make_context(default_context_spec({8, 8}), 8, 8, 10);
  for_each_l_cell(ctx, [&](int r, int c) {
    ctx.sample(r, c) = (r * 37 + c * 11) % 1024;
    ctx.available[static_cast<std::size_t>(r) * ctx.cols + c] = 1;
  });
  ctx.mu = available_mean(ctx);
  const auto x = preprocess_int<std::int16_t>(ctx, 7);
  EXPECT_EQ(x.quantizer(), 7);
  const auto t = preprocess_float(ctx);
  const auto b = postprocess_float(t.data().subspan(0, 64), ctx.mu, 10, 8, 8);
  EXPECT_EQ(b.h, 8);
  for (auto v : b.samples) EXPECT_TRUE(v >= 0 && v <= 1023);
}

TEST(Intra, TransformRoundTripOnBlocks) {
  for (const auto s : s_bar()) {
    const auto r = *transform_rule(s.h, s.w);
    Block net;
    net.h = r.network.h;
    net.w = r.network.w;
    net.samples.assign(static_cast<std::size_t>(net.h * net.w), 0);
    for (std::size_t i = 0; i < net.samples.size(); ++i) net.samples[i] = static_cast<std::int32_t>(i);
    const auto full = invert_transform(net, r);
    EXPECT_EQ(full.h, s.h);
    EXPECT_EQ(full.w, s.w);
  }
}

TEST(Intra, PredictBlockWithReferenceModels) {
  IntraModelSet set;
  set.add(make_intra_model({4, 4}, qnn::reference::intra_int16_model({4, 4})));
  qnn::Plane frame(64, 64, 500);
  const auto r = predict_block(frame, 16, 16, 4, 4, set);
  ASSERT_TRUE(std::holds_alternative<PredictionOutputs>(r));
  const auto& p = std::get<PredictionOutputs>(r);
  EXPECT_EQ(p.prediction.samples.size(), 16u);
  EXPECT_LT(p.rep_idx, rep_idx_classes);
  EXPECT_TRUE(std::holds_alternative<PlanarFallback>(predict_block(frame, 0, 16, 4, 4, set)));
  try {
    predict_block(frame, 16, 16, 8, 8, set);
    FAIL();
  } catch (const qnn::Error& e) {
    EXPECT_EQ(e.kind(), qnn::ErrorKind::MissingModel);
  }
  try {
    predict_block(frame, 16, 16, 12, 4, set);
    FAIL();
  } catch (const qnn::Error& e) {
    EXPECT_EQ(e.kind(), qnn::ErrorKind::DisallowedShape);
  }
}

TEST(Intra, Signaling) {
  EXPECT_EQ(signal_luma(8, 8, true).path, SignalPath::NNMode);
  EXPECT_FALSE(signal_luma(4, 64, true).flag_present);
  EXPECT_EQ(signal_chroma(true, false, false, true).mode, ChromaMode::Planar);
  EXPECT_EQ(signal_chroma(true, true, false, true).mode, ChromaMode::NNMode);
  EXPECT_EQ(signal_chroma(false, true, false, true).mode, ChromaMode::DirectMode);
  EXPECT_EQ(mpm_substitute({true, 1, 40}), 40);
}

}  // namespace
