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


#include "confeti/styler.hpp"

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace confeti;
using namespace confeti::style;

namespace {

StyleConfig small_style() {
  StyleConfig c;
  c.base_width = 8;
  c.patch_dim = 16;
  c.num_patches = 8;
  c.norm_groups = 4;
  return c;
}

torch::Tensor unit_rows(const torch::Tensor& x) {
  return torch::nn::functional::normalize(x, torch::nn::functional::NormalizeFuncOptions().dim(-1));
}

proto::PrototypeBank bank_from(const torch::Tensor& rows, const std::vector<bool>& active) {
  proto::BankConfig c;
  c.num_classes = static_cast<int>(rows.size(0));
  c.dim = static_cast<int>(rows.size(1));
  proto::PrototypeBank bank(c);
  bank.to(rows.scalar_type());
  std::vector<std::optional<torch::Tensor>> est(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (active[i]) est[i] = rows[static_cast<std::int64_t>(i)];
  }
  bank.update(est);
  return bank;
}

}  // namespace

TEST(Generator, NearIdentityAtInitAndBounded) {
  torch::manual_seed(0);
  Generator g(small_style());
  auto x = torch::rand({2, 3, 32, 32}) * 0.9 + 0.05;
  auto y = stylize(g, x);
  EXPECT_EQ(y.sizes(), x.sizes());
  EXPECT_LT((y - x).abs().max().item<double>(), 0.1);
  EXPECT_GE(y.min().item<double>(), 0.0);
  EXPECT_LE(y.max().item<double>(), 1.0);
  EXPECT_TRUE(torch::equal(y, stylize(g, x)));
  EXPECT_EQ(g->encode_taps(x).size(), 3u);
}

TEST(Generator, OutputStaysInUnitRangeAfterLargeWeights) {
  torch::manual_seed(1);
  Generator g(small_style());
  {
    torch::NoGradGuard ng;
    for (auto& p : g->parameters()) p.normal_(0.0, 3.0);
  }
  auto y = stylize(g, torch::rand({1, 3, 16, 16}));
  EXPECT_GE(y.min().item<double>(), 0.0);
  EXPECT_LE(y.max().item<double>(), 1.0);
  EXPECT_TRUE(torch::isfinite(y).all().item<bool>());
}

TEST(Discriminator, ScoreMapShape) {
  torch::manual_seed(2);
  Discriminator d(small_style());
  auto s = d->forward(torch::rand({2, 3, 32, 32}));
  EXPECT_EQ(s.size(0), 2);
  EXPECT_EQ(s.size(1), 1);
  EXPECT_GT(s.size(2), 1);
}

TEST(Patches, LocationsDistinctAndCapped) {
  std::mt19937_64 rng(3);
  auto loc = sample_locations(100, 20, rng);
  EXPECT_EQ(loc.size(), 20u);
  EXPECT_EQ(std::set<std::int64_t>(loc.begin(), loc.end()).size(), 20u);
  for (auto l : loc) EXPECT_TRUE(l >= 0 && l < 100);
  EXPECT_EQ(sample_locations(5, 20, rng).size(), 5u);
}

TEST(Patches, UnitNormAndShapes) {
  torch::manual_seed(4);
  StyleModule s(small_style(), 8);
  std::mt19937_64 rng(4);
  auto locs = sample_tap_locations(s, 32, 32, rng);
  ASSERT_EQ(locs.size(), 3u);
  auto feats = extract_patches(s, torch::rand({2, 3, 32, 32}), locs);
  ASSERT_EQ(feats.size(), 3u);
  for (std::size_t l = 0; l < feats.size(); ++l) {
    EXPECT_EQ(feats[l].size(0), 2);
    EXPECT_EQ(feats[l].size(1), static_cast<std::int64_t>(locs[l].size()));
    EXPECT_EQ(feats[l].size(2), 16);
    EXPECT_LT((feats[l].norm(2, -1) - 1.0).abs().max().item<double>(), 1e-5);
  }
}

TEST(PatchNce, ClosedForms) {
  auto e = torch::eye(2, torch::kFloat64).view({1, 2, 2});
  PatchSet s{{e}, {e}};
  EXPECT_NEAR(patchnce_loss(s, 1.0).item(), -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
  EXPECT_NEAR(patchnce_loss(s, 1.0).item(), 0.3133, 1e-4);

  auto same = torch::tensor({1.0, 0.0, 1.0, 0.0}, torch::kFloat64).view({1, 2, 2});
  PatchSet t{{same}, {same}};
  EXPECT_NEAR(patchnce_loss(t, 0.5).item(), std::log(2.0), 1e-12);

  auto single = torch::tensor({1.0, 0.0}, torch::kFloat64).view({1, 1, 2});
  EXPECT_TRUE(patchnce_loss({{single}, {single}}, 0.07).skipped);
}

TEST(PatchNce, MatchesOracle) {
  torch::manual_seed(5);
  for (int trial = 0; trial < 100; ++trial) {
    PatchSet s;
    for (int l = 0; l < 3; ++l) {
      const int n = 2 + (trial + l) % 5;
      s.anchors.push_back(unit_rows(torch::randn({2, n, 6}, torch::kFloat64)));
      s.positives.push_back(unit_rows(torch::randn({2, n, 6}, torch::kFloat64)));
    }
    const double t = 0.05 + 0.1 * (trial % 5);
    EXPECT_NEAR(patchnce_loss(s, t).item(), oracle::patchnce(s.anchors, s.positives, t), 1e-9);
  }
}

TEST(PatchNce, InvariantToOrderOfNegatives) {
  torch::manual_seed(6);
  auto a = unit_rows(torch::randn({4, 6}, torch::kFloat64));
  auto p = unit_rows(torch::randn({4, 6}, torch::kFloat64));
  auto negs = unit_rows(torch::randn({4, 5, 6}, torch::kFloat64));
  auto perm = torch::randperm(5, torch::kInt64);
  auto l1 = infonce_loss(a, p, negs, 0.07);
  auto l2 = infonce_loss(a, p, negs.index_select(1, perm), 0.07);
  EXPECT_NEAR(l1.item<double>(), l2.item<double>(), 1e-12);
}

TEST(PatchNce, GradientMatchesFiniteDifferences) {
  torch::manual_seed(7);
  auto ra = torch::randn({2, 5, 6}, torch::kFloat64).requires_grad_(true);
  auto rp = torch::randn({2, 5, 6}, torch::kFloat64).requires_grad_(true);
  auto loss = [&] { return patchnce_loss({{unit_rows(ra)}, {unit_rows(rp)}}, 0.2).value; };
  EXPECT_LT(gradcheck::check(loss, {ra, rp}, 30, 7).max_rel_error(), 1e-3);
}

TEST(Gan, ClosedForms) {
  auto half = torch::full({2, 1, 4, 4}, 0.5, torch::kFloat64);
  auto g = gan_losses_from_scores(half, half, half);
  EXPECT_NEAR(g.generator.item<double>(), 0.25, 1e-15);
  EXPECT_NEAR(g.discriminator_real.item<double>(), 0.25, 1e-15);
  EXPECT_NEAR(g.discriminator_fake.item<double>(), 0.25, 1e-15);
  auto ones = torch::ones({1, 1, 3, 3}, torch::kFloat64);
  auto zeros = torch::zeros({1, 1, 3, 3}, torch::kFloat64);
  auto perfect = gan_losses_from_scores(ones, zeros, zeros);
  EXPECT_NEAR(perfect.discriminator().item<double>(), 0.0, 1e-15);
  EXPECT_NEAR(perfect.generator.item<double>(), 1.0, 1e-15);
}

TEST(Gan, GeneratorTermLeavesDiscriminatorAlone) {
  torch::manual_seed(8);
  StyleModule s(small_style(), 8);
  auto src = torch::rand({1, 3, 16, 16});
  auto real = torch::rand({1, 3, 16, 16});
  auto fake = s->generator->forward(src);
  auto terms = gan_losses(s->discriminator, real, fake);
  terms.generator.backward();
  for (auto& p : s->discriminator->parameters()) {
    EXPECT_TRUE(!p.grad().defined() || p.grad().abs().sum().item<double>() == 0.0);
  }
  double gsum = 0.0;
  for (auto& p : s->generator->parameters()) {
    if (p.grad().defined()) gsum += p.grad().abs().sum().item<double>();
  }
  EXPECT_GT(gsum, 0.0);
  for (auto& p : s->generator->parameters()) p.mutable_grad() = torch::Tensor();
  terms.discriminator().backward();
  for (auto& p : s->generator->parameters()) EXPECT_FALSE(p.grad().defined());
}

TEST(SemanticConsistency, ZeroAndHandCases) {
  AffineMap phi(2);
  phi->to(torch::kFloat64);
  auto bank = bank_from(torch::eye(2, torch::kFloat64), {true, false});
  auto v = torch::tensor({0.6, 0.8}, torch::kFloat64).view({1, 2, 1, 1});
  EXPECT_NEAR(semantic_consistency_loss(v, v, bank, phi).item(), 0.0, 1e-15);
  auto src = torch::tensor({1.0, 0.0}, torch::kFloat64).view({1, 2, 1, 1});
  auto sty = torch::tensor({0.0, 1.0}, torch::kFloat64).view({1, 2, 1, 1});
  EXPECT_NEAR(semantic_consistency_loss(src, sty, bank, phi).item(), 1.0, 1e-15);

  proto::BankConfig c;
  c.num_classes = 2;
  c.dim = 2;
  proto::PrototypeBank empty(c);
  EXPECT_TRUE(semantic_consistency_loss(src.to(torch::kFloat32), sty.to(torch::kFloat32), empty, phi).skipped);
}

TEST(SemanticConsistency, MatchesOracle) {
  torch::manual_seed(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<bool> active(4);
    for (int c = 0; c < 4; ++c) active[static_cast<std::size_t>(c)] = (c + trial) % 3 != 0;
    auto bank = bank_from(torch::randn({4, 6}, torch::kFloat64), active);
    AffineMap phi(6);
    phi->to(torch::kFloat64);
    {
      torch::NoGradGuard ng;
      phi->scale.normal_(1.0, 0.3);
      phi->shift.normal_(0.0, 0.1);
    }
    auto vs = torch::randn({2, 6, 3, 3}, torch::kFloat64);
    auto vt = torch::randn({2, 6, 3, 3}, torch::kFloat64);
    EXPECT_NEAR(semantic_consistency_loss(vs, vt, bank, phi).item(),
                oracle::semantic_consistency(vs, vt, bank.prototypes(), active, phi->scale, phi->shift), 1e-9);
  }
}

TEST(SemanticConsistency, GradientMatchesFiniteDifferences) {
  torch::manual_seed(10);
  auto bank = bank_from(torch::randn({3, 6}, torch::kFloat64), {true, true, true});
  AffineMap phi(6);
  phi->to(torch::kFloat64);
  auto vs = torch::randn({1, 6, 2, 2}, torch::kFloat64);
  auto vt = torch::randn({1, 6, 2, 2}, torch::kFloat64).requires_grad_(true);
  auto loss = [&] { return semantic_consistency_loss(vs, vt, bank, phi).value; };
  std::vector<torch::Tensor> params{vt, phi->scale, phi->shift};
  EXPECT_LT(gradcheck::check(loss, params, 30, 10).max_rel_error(), 1e-3);
}

TEST(SemanticConsistency, StopGradientContract) {
  torch::manual_seed(11);
  net::NetworkConfig nc;
  nc.feature_dim = 16;
  nc.projection_dim = 8;
  nc.base_width = 8;
  nc.norm_groups = 4;
  net::SegModel student(nc);
  StyleModule s(small_style(), 8);
  auto bank = bank_from(torch::randn({5, 8}), {true, true, false, true, true});
  auto src = torch::rand({2, 3, 32, 32});
  // Push the generator away from identity so the two passes differ.
  {
    torch::NoGradGuard ng;
    s->generator->dec_out->weight.normal_(0.0, 0.5);
  }
  auto sty = s->generator->forward(src);
  auto term = semantic_consistency_through(student, src, sty, bank, s->phi);
  ASSERT_FALSE(term.skipped);
  term.value.backward();
  double gen = 0.0;
  for (auto& p : s->generator->parameters()) {
    if (p.grad().defined()) gen += p.grad().abs().sum().item<double>();
  }
  EXPECT_GT(gen, 0.0);
  EXPECT_TRUE(s->phi->scale.grad().defined());
  for (auto& p : student->parameters()) {
    EXPECT_TRUE(!p.grad().defined() || p.grad().abs().sum().item<double>() == 0.0);
    EXPECT_TRUE(p.requires_grad());  // restored after the frozen pass
  }
}
