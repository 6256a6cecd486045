// Copyright 2026 The CONFETI Desk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "confeti/network.hpp"

#include "../support/gradcheck.hpp"

#include <gtest/gtest.h>

using namespace confeti;
using namespace confeti::net;

namespace {

NetworkConfig small_config() {
  NetworkConfig c;
  c.feature_dim = 16;
  c.projection_dim = 8;
  c.base_width = 8;
  c.norm_groups = 4;
  return c;
}

}  // namespace

TEST(NetworkConfig, Validation) {
  NetworkConfig c;
  EXPECT_NO_THROW(c.validate());
  c.in_channels = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = NetworkConfig{};
  c.feature_dim = 12;
  c.norm_groups = 8;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(SegNet, OutputGeometryAndSoftmax) {
  torch::manual_seed(0);
  SegModel model(small_config());
  auto x = torch::rand({2, 3, 32, 32});
  auto out = model->forward(x);
  EXPECT_EQ(out.logits.sizes(), (std::vector<std::int64_t>{2, 5, 32, 32}));
  EXPECT_EQ(out.features.sizes(), (std::vector<std::int64_t>{2, 16, 8, 8}));
  auto sums = torch::softmax(out.logits, 1).sum(1);
  EXPECT_LT((sums - 1.0).abs().max().item<double>(), 1e-5);
  EXPECT_THROW(model->forward(torch::rand({1, 1, 32, 32})), ShapeError);
}

TEST(SegNet, ZeroImageGivesFiniteLogits) {
  torch::manual_seed(1);
  SegModel model(small_config());
  auto out = model->forward(torch::zeros({1, 3, 32, 32}));
  EXPECT_TRUE(torch::isfinite(out.logits).all().item<bool>());
}

TEST(SegNet, NoCrossBatchLeakage) {
  torch::manual_seed(2);
  SegModel model(small_config());
  auto a = torch::rand({1, 3, 32, 32});
  auto b = torch::rand({1, 3, 32, 32});
  auto joint = model->forward(torch::cat({a, b})).logits;
  auto single_a = model->forward(a).logits;
  auto single_b = model->forward(b).logits;
  EXPECT_TRUE(torch::allclose(joint[0], single_a[0], 1e-5, 1e-6));
  EXPECT_TRUE(torch::allclose(joint[1], single_b[0], 1e-5, 1e-6));
}

TEST(SegNet, PredictMatchesArgmax) {
  torch::manual_seed(3);
  SegModel model(small_config());
  auto x = torch::rand({5, 3, 32, 32});
  auto pred = predict(model, x, 2);
  EXPECT_TRUE(torch::equal(pred, model->forward(x).logits.argmax(1)));
}

TEST(ProjectionHead, UnitNormAndDeterministic) {
  torch::manual_seed(4);
  ProjectionHead head(16, 8);
  auto f = torch::randn({2, 16, 5, 5}) * 3.0;
  auto v = head->forward(f);
  EXPECT_LT((v.norm(2, 1) - 1.0).abs().max().item<double>(), 1e-5);
  // Two identical pixels map to identical projections.
  f.select(3, 1).copy_(f.select(3, 0));
  auto w = head->forward(f);
  EXPECT_TRUE(torch::equal(w.select(3, 0), w.select(3, 1)));
}

TEST(ProjectionHead, GradientMatchesFiniteDifferences) {
  torch::manual_seed(5);
  ProjectionHead head(6, 4);
  head->to(torch::kFloat64);
  auto f = torch::randn({2, 6, 3, 3}, torch::kFloat64);
  auto target = torch::randn({2, 4, 3, 3}, torch::kFloat64);
  auto report = gradcheck::check([&] { return (head->forward(f) * target).sum(); }, head->parameters(), 20, 1);
  EXPECT_LT(report.max_rel_error(), 1e-3);
}

TEST(CamHead, ZeroWeightsGiveZeroScores) {
  CamHead head(3, 4);
  {
    torch::NoGradGuard g;
    head->weight.zero_();
  }
  auto s = head->scores(torch::randn({2, 4, 5, 5}));
  EXPECT_EQ(s.abs().max().item<double>(), 0.0);
}

TEST(CamHead, ConstantFeaturesWithOnesGiveDepth) {
  CamHead head(2, 4);
  {
    torch::NoGradGuard g;
    head->weight.fill_(1.0);
  }
  auto s = head->scores(torch::ones({1, 4, 3, 3}));
  EXPECT_FLOAT_EQ(s[0][0].item<float>(), 4.0f);
  EXPECT_FLOAT_EQ(s[0][1].item<float>(), 4.0f);
}

TEST(CamHead, PoolThenProjectEqualsProjectThenPool) {
  torch::manual_seed(6);
  CamHead head(5, 8);
  head->to(torch::kFloat64);
  auto f = torch::randn({3, 8, 4, 6}, torch::kFloat64);
  auto pooled_first = head->scores(f);
  auto per_pixel = torch::einsum("kd,bdhw->bkhw", {head->weight, f}).mean({2, 3});
  EXPECT_TRUE(torch::allclose(pooled_first, per_pixel, 1e-12, 1e-12));
}

TEST(CamHead, HandEvaluatedMap) {
  CamHead head(1, 2);
  {
    torch::NoGradGuard g;
    head->weight.copy_(torch::tensor({{1.0f, -1.0f}}));
  }
  auto f = torch::tensor({2.0f, 0.0f}).view({1, 2, 1, 1});
  EXPECT_FLOAT_EQ(head->cam(f).item<float>(), 2.0f);
  auto neg = torch::tensor({0.0f, 3.0f}).view({1, 2, 1, 1});
  EXPECT_FLOAT_EQ(head->cam(neg).item<float>(), 0.0f);
}

TEST(CamHead, LinearityHomogeneityAndRange) {
  torch::manual_seed(7);
  CamHead head(4, 6);
  head->to(torch::kFloat64);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = torch::randn({2, 6, 3, 3}, torch::kFloat64);
    const double a = 0.1 + 3.0 * trial / 20.0;
    EXPECT_TRUE(torch::allclose(head->scores(f * a), head->scores(f) * a, 1e-12, 1e-12));
    EXPECT_TRUE(torch::allclose(head->scores(f * -a), head->scores(f) * -a, 1e-12, 1e-12));
    EXPECT_TRUE(torch::allclose(head->cam(f * a), head->cam(f) * a, 1e-12, 1e-12));
    EXPECT_GE(head->cam(f).min().item<double>(), 0.0);
  }
}

TEST(SegModel, EndToEndGradientCheck) {
  torch::manual_seed(8);
  SegModel model(small_config());
  model->to(torch::kFloat64);
  auto x = torch::rand({1, 3, 16, 16}, torch::kFloat64);
  auto report = gradcheck::check([&] { return model->forward(x).logits.sum(); }, model->segnet->parameters(), 24, 2);
  EXPECT_EQ(report.entries.size(), 24u);
  EXPECT_LT(report.max_rel_error(), 1e-3);
}

TEST(SegModel, CloneIsIndependentCopy) {
  torch::manual_seed(9);
  SegModel a(small_config());
  auto b = clone_model(a);
  auto x = torch::rand({1, 3, 16, 16});
  EXPECT_TRUE(torch::equal(a->forward(x).logits, b->forward(x).logits));
  {
    torch::NoGradGuard g;
    b->segnet->classifier->weight.add_(1.0);
  }
  EXPECT_FALSE(torch::equal(a->forward(x).logits, b->forward(x).logits));
}
