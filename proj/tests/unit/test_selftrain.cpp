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


#include "confeti/selftrain.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace confeti;
using namespace confeti::selftrain;

namespace {

net::NetworkConfig tiny() {
  net::NetworkConfig c;
  c.feature_dim = 8;
  c.projection_dim = 4;
  c.base_width = 4;
  c.norm_groups = 4;
  return c;
}

torch::Tensor logits_from_probs(std::vector<double> probs) {
  auto p = torch::tensor(probs, torch::kFloat64);
  return torch::log(p).view({1, -1, 1, 1});
}

}  // namespace

TEST(Ema, IdentityCases) {
  torch::manual_seed(0);
  auto pair = TeacherStudentPair::create(tiny(), 0.999);
  {
    torch::NoGradGuard g;
    for (auto& p : pair.student->parameters()) p.add_(torch::randn_like(p));
  }
  auto before = clone_model(pair.teacher);
  ema_update(pair.teacher, pair.student, 1.0);
  for (std::size_t i = 0; i < before->parameters().size(); ++i) {
    EXPECT_TRUE(torch::equal(before->parameters()[i], pair.teacher->parameters()[i]));
  }
  ema_update(pair.teacher, pair.student, 0.0);
  for (std::size_t i = 0; i < before->parameters().size(); ++i) {
    EXPECT_TRUE(torch::equal(pair.student->parameters()[i], pair.teacher->parameters()[i]));
  }
  EXPECT_THROW(ema_update(pair.teacher, pair.student, 1.5), ConfigError);
}

TEST(Ema, ScalarCaseAndElementwiseFormula) {
  torch::manual_seed(1);
  auto pair = TeacherStudentPair::create(tiny(), 0.9);
  pair.teacher->to(torch::kFloat64);
  pair.student->to(torch::kFloat64);
  {
    torch::NoGradGuard g;
    for (auto& p : pair.teacher->parameters()) p.fill_(1.0);
    for (auto& p : pair.student->parameters()) p.fill_(0.0);
  }
  ema_update(pair);
  for (const auto& p : pair.teacher->parameters()) {
    EXPECT_EQ(p.min().item<double>(), 0.9);
    EXPECT_EQ(p.max().item<double>(), 0.9);
  }
  {
    torch::NoGradGuard g;
    for (auto& p : pair.teacher->parameters()) p.copy_(torch::randn_like(p));
    for (auto& p : pair.student->parameters()) p.copy_(torch::randn_like(p));
  }
  for (double beta : {0.0, 0.3, 0.9, 0.999, 1.0}) {
    std::vector<torch::Tensor> expected;
    for (std::size_t i = 0; i < pair.teacher->parameters().size(); ++i) {
      auto t = pair.teacher->parameters()[i].detach().clone();
      auto s = pair.student->parameters()[i].detach();
      expected.push_back(t * beta + s * (1.0 - beta));
    }
    ema_update(pair.teacher, pair.student, beta);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      EXPECT_TRUE(torch::equal(pair.teacher->parameters()[i], expected[i])) << "beta " << beta;
    }
  }
}

TEST(TeacherStudentPair, TeacherStartsAsCopyAndIsGradientFree) {
  torch::manual_seed(2);
  auto pair = TeacherStudentPair::create(tiny(), 0.999);
  for (std::size_t i = 0; i < pair.student->parameters().size(); ++i) {
    EXPECT_TRUE(torch::equal(pair.student->parameters()[i], pair.teacher->parameters()[i]));
    EXPECT_FALSE(pair.teacher->parameters()[i].requires_grad());
  }
  auto x = torch::rand({2, 3, 16, 16});
  synth::LabelMap y{torch::randint(0, 5, {2, 16, 16}, torch::kInt64)};
  auto pl = pseudo_label(pair.teacher, synth::ImageBatch{x});
  ce_loss(pair.student->forward(x).logits, pl.labels).value.backward();
  for (const auto& p : pair.teacher->parameters()) EXPECT_FALSE(p.grad().defined());
  bool student_has_grad = false;
  for (const auto& p : pair.student->parameters()) student_has_grad |= p.grad().defined();
  EXPECT_TRUE(student_has_grad);
}

TEST(PseudoLabel, DegenerateTieAndArgmax) {
  auto one = pseudo_label_from_logits(torch::tensor({10.0, -1e9, -1e9}, torch::kFloat64).view({1, 3, 1, 1}));
  EXPECT_EQ(one.labels.data.item<std::int64_t>(), 0);
  EXPECT_NEAR(one.confidence.item<double>(), 1.0, 1e-12);

  auto mid = pseudo_label_from_logits(logits_from_probs({0.2, 0.5, 0.3}));
  EXPECT_EQ(mid.labels.data.item<std::int64_t>(), 1);
  EXPECT_NEAR(mid.confidence.item<double>(), 0.5, 1e-12);

  auto tie = pseudo_label_from_logits(torch::tensor({0.7, 0.7}, torch::kFloat64).view({1, 2, 1, 1}));
  EXPECT_EQ(tie.labels.data.item<std::int64_t>(), 0);
}

TEST(PseudoLabel, InvariantUnderMonotoneTransforms) {
  torch::manual_seed(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto logits = torch::randn({2, 5, 4, 4}, torch::kFloat64);
    auto base = pseudo_label_from_logits(logits).labels.data;
    const double c = (trial - 25) * 0.37;
    const double a = 0.05 + trial * 0.2;
    EXPECT_TRUE(torch::equal(base, pseudo_label_from_logits(logits + c).labels.data));
    EXPECT_TRUE(torch::equal(base, pseudo_label_from_logits(logits * a).labels.data));
    EXPECT_TRUE(torch::equal(base, pseudo_label_from_logits(torch::exp(logits)).labels.data));
  }
}

TEST(CeLoss, ClosedFormCases) {
  synth::LabelMap y{torch::tensor({0, 1, 2, 3}, torch::kInt64).view({1, 2, 2})};
  auto uniform = torch::zeros({1, 5, 2, 2}, torch::kFloat64);
  EXPECT_NEAR(ce_loss(uniform, y).item(), std::log(5.0), 1e-12);

  auto sure = torch::full({1, 5, 2, 2}, -1e4, torch::kFloat64);
  for (int i = 0; i < 4; ++i) sure[0][i][i / 2][i % 2] = 1e4;
  EXPECT_NEAR(ce_loss(sure, y).item(), 0.0, 1e-12);
}

TEST(CeLoss, IgnoredPixelsAreExcluded) {
  torch::manual_seed(4);
  auto logits = torch::randn({1, 3, 2, 2}, torch::kFloat64);
  synth::LabelMap all{torch::tensor({0, 1, 2, 1}, torch::kInt64).view({1, 2, 2})};
  synth::LabelMap some{torch::tensor({0, 255, 2, 255}, torch::kInt64).view({1, 2, 2})};
  EXPECT_NEAR(ce_loss(logits, some).item(), oracle::cross_entropy(logits, some.data, 255), 1e-12);
  EXPECT_NE(ce_loss(logits, some).item(), ce_loss(logits, all).item());
  synth::LabelMap none{torch::full({1, 2, 2}, 255, torch::kInt64)};
  EXPECT_TRUE(ce_loss(logits, none).skipped);
}

TEST(CeLoss, MatchesOracleAndIsNonNegative) {
  torch::manual_seed(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto logits = torch::randn({2, 5, 4, 4}, torch::kFloat64) * 3.0;
    auto labels = torch::randint(0, 5, {2, 4, 4}, torch::kInt64);
    const double got = ce_loss(logits, synth::LabelMap{labels}).item();
    EXPECT_NEAR(got, oracle::cross_entropy(logits, labels, 255), 1e-9);
    EXPECT_GE(got, 0.0);
  }
}

TEST(CeLoss, ShapeMismatchThrows) {
  synth::LabelMap y{torch::zeros({1, 3, 3}, torch::kInt64)};
  EXPECT_THROW(ce_loss(torch::zeros({1, 5, 2, 2}), y), ShapeError);
}
