#include <gtest/gtest.h>

#include <random>

#include "qnn/qnn.hpp"

namespace {

using namespace qnn::filter;

qnn::Plane noise_plane(std::mt19937_64& rng, int w, int h) {
  qnn::Plane p(w, h);
  std::uniform_int_distribution<int> d(200, 800);
  for (auto& v : p.samples) v = d(rng);
  return p;
}

FilterInputs inputs_for(const qnn::Plane& rec, bool ipb = false) {
  FilterInputs in;
  in.rec = rec;
  in.pred = rec;
  in.bs = qnn::Plane(rec.width, rec.height, 0);
  if (ipb) in.ipb = qnn::Plane(rec.width, rec.height, 1);
  return in;
}

TEST(Filter, CandidateListsAndGates) {
  EXPECT_EQ(candidate_list(32, TemporalLayer::Low), (CandidateList{32, 27, 22}));
  EXPECT_EQ(candidate_list(32, TemporalLayer::High), (CandidateList{32, 27, 37}));
  EXPECT_EQ(layer_of(2), TemporalLayer::Low);
  EXPECT_EQ(temporal_gate(3), TemporalMode::Temporal);
  EXPECT_EQ(temporal_gate(0), TemporalMode::Regular);
  EXPECT_EQ(granularity(3840, 2160, BitrateClass::Low), 256);
  EXPECT_EQ(granularity(1920, 1080, BitrateClass::High), 64);
  EXPECT_EQ(granularity(1920, 1080, BitrateClass::Low), 128);
  EXPECT_EQ(granularity(832, 480, BitrateClass::High), 32);
}

TEST(Filter, IdentityFilterKeepsReconstruction) {
  // Zero coefficients give a zero residual.
  const auto g = qnn::reference::linear_filter({0, 0, 0, 0}, 0.0);
  std::mt19937_64 rng(1);
  const auto rec = noise_plane(rng, 50, 37);
  EXPECT_EQ(apply_nn_filter(inputs_for(rec), g, 32), rec);
}

TEST(Filter, PatchSizeDoesNotChangeOutput) {
  const auto g = qnn::reference::filter_int16_model(4);
  std::mt19937_64 rng(2);
  const auto rec = noise_plane(rng, 90, 70);
  FilterConfig a{64, 1}, b{128, 3};
  EXPECT_EQ(apply_nn_filter(inputs_for(rec), g, 32, a), apply_nn_filter(inputs_for(rec), g, 32, b));
}

TEST(Filter, MissingPlaneIsReported) {
  const auto g = qnn::reference::filter_int16_model(5);
  std::mt19937_64 rng(3);
  try {
    apply_nn_filter(inputs_for(noise_plane(rng, 16, 16)), g, 32);
    FAIL();
  } catch (const qnn::Error& e) {
    EXPECT_EQ(e.kind(), qnn::ErrorKind::MissingPlane);
  }
}

TEST(Filter, ScaleDerivation) {
  qnn::Plane orig(2, 1), db(2, 1), nn(2, 1);
  orig.samples = {10, 20};
  db.samples = {0, 0};
  nn.samples = {20, 40};
  const auto s = derive_scale(orig, nn, db);
  EXPECT_FALSE(s.degenerate);
  EXPECT_DOUBLE_EQ(s.value(), 0.5);
  EXPECT_EQ(s.k, 32);
  EXPECT_EQ(apply_scale(nn, db, s.k, 10), orig);
  EXPECT_TRUE(derive_scale(orig, db, db).degenerate);
}

TEST(Filter, SelectionPrefersBlockControlWhenRegionsDiffer) {
  std::mt19937_64 rng(4);
  const auto orig = noise_plane(rng, 16, 8);
  qnn::Plane db = orig;
  for (auto& v : db.samples) v += 12;
  qnn::Plane nn1 = db, nn2 = db, nn3 = db;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x) (x < 8 ? nn1 : nn2).at(x, y) = orig.at(x, y);
  SelectOptions o;
  o.block_size = 8;
  o.lambda = 1.0;
  const auto d = select_from_planes(orig, db, {&nn1, &nn2, &nn3}, o);
  EXPECT_EQ(d.mode, DecisionMode::PerBlock);
  EXPECT_EQ(d.block_params, (std::vector<int>{1, 2}));
  EXPECT_EQ(reconstruct(d, db, {&nn1, &nn2, &nn3}, 10), orig);
  o.lambda = 1e9;
  EXPECT_NE(select_from_planes(orig, db, {&nn1, &nn2, &nn3}, o).mode, DecisionMode::PerBlock);
}

TEST(Filter, HarnessChecksTemporalInputs) {
  const auto g = qnn::reference::filter_int16_model(4);
  std::mt19937_64 rng(5);
  const auto orig = noise_plane(rng, 40, 40);
  HarnessOptions opt;
  opt.qp = 32;
  opt.tid = 1;
  const auto r = run_filter(orig, orig, inputs_for(orig), g, opt);
  EXPECT_EQ(r.decision.candidates, (CandidateList{32, 27, 22}));
  EXPECT_EQ(r.output.width, 40);
  opt.tid = 4;
  EXPECT_THROW(run_filter(orig, orig, inputs_for(orig), g, opt), qnn::Error);
}

TEST(Filter, AllIntraUsesOneParameter) {
  const auto g = qnn::reference::filter_int16_model(4);
  std::mt19937_64 rng(6);
  const auto orig = noise_plane(rng, 32, 32);
  HarnessOptions opt;
  opt.all_intra = true;
  const auto r = run_filter(orig, orig, inputs_for(orig), g, opt);
  if (r.decision.mode == DecisionMode::Uniform) EXPECT_EQ(r.decision.param, 1);
  for (int p : r.decision.block_params) EXPECT_LE(p, 1);
}

}  // namespace
