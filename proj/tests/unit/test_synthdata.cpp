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


#include "confeti/synthdata.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

namespace fs = std::filesystem;
using namespace confeti;
using namespace confeti::synth;

namespace {

SceneSpec small_spec(std::uint64_t seed = 3) {
  SceneSpec s;
  s.image_size = 32;
  s.seed = seed;
  return s;
}

DomainShift strong_shift() { return {60.0, -0.35, 0.06, 0.35}; }

}  // namespace

TEST(SceneSpec, RejectsInvalidDimensions) {
  SceneSpec s;
  s.image_size = 8;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SceneSpec{};
  s.num_classes = 6;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SceneSpec{};
  s.num_classes = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(generate_pair(SceneSpec{}, {}, 0, 1), ConfigError);
}

TEST(RenderScene, LabelsInRangeAndImagesInUnitInterval) {
  for (int k = 2; k <= kMaxClasses; ++k) {
    auto spec = small_spec();
    spec.num_classes = k;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto scene = render_scene(spec, seed);
      EXPECT_GE(scene.label.min().item<std::int64_t>(), 0);
      EXPECT_LT(scene.label.max().item<std::int64_t>(), k);
      EXPECT_GE(scene.image.min().item<double>(), 0.0);
      EXPECT_LE(scene.image.max().item<double>(), 1.0);
    }
  }
}

TEST(RenderScene, SameSeedIsBitIdentical) {
  auto a = render_scene(small_spec(), 99);
  auto b = render_scene(small_spec(), 99);
  EXPECT_TRUE(torch::equal(a.image, b.image));
  EXPECT_TRUE(torch::equal(a.label, b.label));
  auto c = render_scene(small_spec(), 100);
  EXPECT_FALSE(torch::equal(a.image, c.image));
}

TEST(GeneratePair, SeedSevenTwiceIsIdentical) {
  auto spec = small_spec(7);
  auto a = generate_pair(spec, strong_shift(), 6, 6);
  auto b = generate_pair(spec, strong_shift(), 6, 6);
  EXPECT_TRUE(torch::equal(a.source.images.data, b.source.images.data));
  EXPECT_TRUE(torch::equal(a.source.labels.data, b.source.labels.data));
  EXPECT_TRUE(torch::equal(a.target.images.data, b.target.images.data));
  EXPECT_TRUE(torch::equal(a.target.labels.for_evaluation().data, b.target.labels.for_evaluation().data));
}

TEST(GeneratePair, ZeroShiftMatchesSourceDistributionDraw) {
  auto spec = small_spec(11);
  auto pair = generate_pair(spec, DomainShift{}, 2, 4);
  for (std::int64_t i = 0; i < 4; ++i) {
    auto scene = render_scene(spec, image_seed(spec.seed, kTargetDomain, i));
    EXPECT_TRUE(torch::equal(pair.target.images.data[i], scene.image));
    EXPECT_TRUE(torch::equal(pair.target.labels.for_evaluation().data[i], scene.label));
  }
}

TEST(GeneratePair, ShiftLeavesLabelsAndStaysInRange) {
  auto spec = small_spec(5);
  auto shifted = generate_pair(spec, strong_shift(), 2, 8);
  auto plain = generate_pair(spec, DomainShift{}, 2, 8);
  EXPECT_TRUE(torch::equal(shifted.target.labels.for_evaluation().data, plain.target.labels.for_evaluation().data));
  EXPECT_FALSE(torch::equal(shifted.target.images.data, plain.target.images.data));
  EXPECT_GE(shifted.target.images.data.min().item<double>(), 0.0);
  EXPECT_LE(shifted.target.images.data.max().item<double>(), 1.0);
}

TEST(GeneratePair, HeldOutSplitDiffersFromTrainingTarget) {
  auto spec = small_spec(5);
  auto pair = generate_pair(spec, strong_shift(), 2, 4);
  auto held = generate_target(spec, strong_shift(), 4, kHeldOutDomain);
  EXPECT_FALSE(torch::equal(pair.target.images.data, held.images.data));
}

TEST(ApplyShift, EachComponentChangesPixelsOnly) {
  auto scene = render_scene(small_spec(), 1);
  EXPECT_TRUE(torch::equal(apply_shift(scene.image, DomainShift{}, 4), scene.image));
  const DomainShift parts[] = {{30.0, 0, 0, 0}, {0, -0.3, 0, 0}, {0, 0, 0.05, 0}, {0, 0, 0, 0.3}};
  for (const auto& s : parts) {
    auto out = apply_shift(scene.image, s, 4);
    EXPECT_FALSE(torch::equal(out, scene.image));
    EXPECT_GE(out.min().item<double>(), 0.0);
    EXPECT_LE(out.max().item<double>(), 1.0);
  }
}

TEST(ClassFrequencies, SumToOneOnBenchmarkSizedDraw) {
  SceneSpec spec;
  spec.seed = 0;
  auto pair = generate_pair(spec, DomainShift{}, 200, 1);
  auto freq = class_frequencies(pair.source.labels, spec.num_classes);
  double total = 0.0;
  for (double f : freq) {
    EXPECT_GT(f, 0.0);
    total += f;
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(LabelMap, ValidateRejectsOutOfRange) {
  LabelMap ok{torch::tensor({0, 1, 255}, torch::kInt64).reshape({1, 1, 3})};
  EXPECT_NO_THROW(ok.validate(2));
  LabelMap bad{torch::tensor({0, 3}, torch::kInt64).reshape({1, 1, 2})};
  EXPECT_THROW(bad.validate(3), ShapeError);
  auto oh = ok.one_hot(2);
  EXPECT_EQ(oh.size(1), 2);
  EXPECT_EQ(oh.sum().item<double>(), 2.0);
}

TEST(Augment, IdentityParamsReturnInput) {
  auto pair = generate_pair(small_spec(), strong_shift(), 4, 1);
  std::mt19937_64 rng(1);
  auto out = augment(pair.source.images, AugmentParams::identity(), rng);
  EXPECT_TRUE(torch::equal(out.data, pair.source.images.data));
}

TEST(Augment, SeededOutputIsReproducibleAndBounded) {
  auto pair = generate_pair(small_spec(), strong_shift(), 6, 1);
  AugmentParams p;
  p.jitter_probability = 1.0;
  p.blur_probability = 1.0;
  std::mt19937_64 r1(42), r2(42);
  auto a = augment(pair.source.images, p, r1);
  auto b = augment(pair.source.images, p, r2);
  EXPECT_TRUE(torch::equal(a.data, b.data));
  EXPECT_GE(a.data.min().item<double>(), 0.0);
  EXPECT_LE(a.data.max().item<double>(), 1.0);
}

TEST(Augment, LargeBlurReducesPerImageVariance) {
  auto pair = generate_pair(small_spec(), DomainShift{}, 5, 1);
  for (std::int64_t i = 0; i < 5; ++i) {
    auto img = pair.source.images.data[i];
    auto blurred = gaussian_blur(img, 3.0);
    EXPECT_LT(blurred.var().item<double>(), img.var().item<double>());
  }
  auto constant = torch::full({3, 16, 16}, 0.4);
  EXPECT_TRUE(torch::allclose(gaussian_blur(constant, 2.0), constant, 1e-6, 1e-6));
}

TEST(ClassMix, EmptySubsetGivesTarget) {
  auto pair = generate_pair(small_spec(), strong_shift(), 3, 3);
  auto mix = classmix(pair.source.images, pair.source.labels, pair.target.images,
                      pair.target.labels.for_evaluation(), {{}, {}, {}});
  EXPECT_TRUE(torch::equal(mix.image.data, pair.target.images.data));
  EXPECT_TRUE(torch::equal(mix.label.data, pair.target.labels.for_evaluation().data));
  EXPECT_FALSE(mix.mask.any().item<bool>());
}

TEST(ClassMix, FullSubsetGivesSource) {
  auto pair = generate_pair(small_spec(), strong_shift(), 2, 2);
  std::vector<std::int64_t> all = {0, 1, 2, 3, 4};
  auto mix = classmix(pair.source.images, pair.source.labels, pair.target.images,
                      pair.target.labels.for_evaluation(), {all, all});
  EXPECT_TRUE(torch::equal(mix.image.data, pair.source.images.data));
  EXPECT_TRUE(torch::equal(mix.label.data, pair.source.labels.data));
}

TEST(ClassMix, TwoByTwoToy) {
  ImageBatch src{torch::ones({1, 3, 2, 2})};
  ImageBatch tgt{torch::zeros({1, 3, 2, 2})};
  LabelMap sl{torch::tensor({1, 0, 0, 2}, torch::kInt64).reshape({1, 2, 2})};
  LabelMap tl{torch::tensor({3, 3, 3, 3}, torch::kInt64).reshape({1, 2, 2})};
  auto mix = classmix(src, sl, tgt, tl, {{1}});
  auto expected_mask = torch::tensor({true, false, false, false}).reshape({1, 2, 2});
  EXPECT_TRUE(torch::equal(mix.mask, expected_mask));
  EXPECT_EQ(mix.image.data[0][0][0][0].item<float>(), 1.0f);
  EXPECT_EQ(mix.image.data[0][0][0][1].item<float>(), 0.0f);
  EXPECT_EQ(mix.label.data[0][0][0].item<std::int64_t>(), 1);
  EXPECT_EQ(mix.label.data[0][1][1].item<std::int64_t>(), 3);
}

TEST(ClassMix, LabelRuleHoldsOnRandomInstances) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    torch::manual_seed(trial);
    auto sl = torch::randint(0, 5, {2, 8, 8}, torch::kInt64);
    auto tl = torch::randint(0, 5, {2, 8, 8}, torch::kInt64);
    auto si = torch::rand({2, 3, 8, 8});
    auto ti = torch::rand({2, 3, 8, 8});
    std::vector<std::vector<std::int64_t>> subsets = {sample_mix_classes(sl[0], rng), sample_mix_classes(sl[1], rng)};
    auto mix = classmix(ImageBatch{si}, LabelMap{sl}, ImageBatch{ti}, LabelMap{tl}, subsets);
    auto expected = torch::where(mix.mask, sl, tl);
    EXPECT_TRUE(torch::equal(mix.label.data, expected));
    auto expected_img = torch::where(mix.mask.unsqueeze(1), si, ti);
    EXPECT_TRUE(torch::equal(mix.image.data, expected_img));
  }
}

TEST(ClassMix, RejectsShapeMismatch) {
  ImageBatch a{torch::zeros({1, 3, 4, 4})};
  ImageBatch b{torch::zeros({1, 3, 4, 5})};
  LabelMap l{torch::zeros({1, 4, 4}, torch::kInt64)};
  EXPECT_THROW(classmix(a, l, b, l, {{}}), ShapeError);
  EXPECT_THROW(classmix(a, l, a, l, {{}, {}}), ShapeError);
}

TEST(SampleMixClasses, HalfOfPresentClassesRoundedUp) {
  std::mt19937_64 rng(3);
  auto lbl = torch::tensor({0, 1, 2, 4, 255}, torch::kInt64).reshape({1, 5});
  for (int i = 0; i < 20; ++i) {
    auto chosen = sample_mix_classes(lbl, rng);
    ASSERT_EQ(chosen.size(), 2u);
    EXPECT_TRUE(std::is_sorted(chosen.begin(), chosen.end()));
    for (auto c : chosen) EXPECT_NE(c, 255);
  }
  auto three = torch::tensor({0, 1, 2}, torch::kInt64).reshape({1, 3});
  EXPECT_EQ(sample_mix_classes(three, rng).size(), 2u);
}

TEST(Hsv, RoundTrip) {
  torch::manual_seed(0);
  auto rgb = torch::rand({3, 8, 8}, torch::kFloat64);
  auto back = hsv_to_rgb(rgb_to_hsv(rgb, 0), 0);
  EXPECT_TRUE(torch::allclose(rgb, back, 1e-9, 1e-9));
}

TEST(Dataset, WriteReadRoundTrip) {
  const auto dir = fs::temp_directory_path() / "confeti_synth_roundtrip";
  fs::remove_all(dir);
  auto pair = generate_pair(small_spec(2), strong_shift(), 3, 2);
  write_dataset(pair, dir);
  EXPECT_TRUE(fs::exists(dir / "manifest.txt"));
  auto back = read_dataset(dir);
  EXPECT_TRUE(torch::equal(back.source.labels.data, pair.source.labels.data));
  EXPECT_TRUE(torch::equal(back.target.labels.for_evaluation().data, pair.target.labels.for_evaluation().data));
  EXPECT_LE((back.source.images.data - pair.source.images.data).abs().max().item<double>(), 0.5 / 255.0 + 1e-6);
  EXPECT_EQ(back.spec.seed, 2u);
  EXPECT_DOUBLE_EQ(back.shift.hue_rotation, 60.0);
  fs::remove_all(dir);
}
