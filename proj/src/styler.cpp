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

#include "confeti/module_utils.hpp"

#include <algorithm>
#include <numeric>

namespace confeti::style {

namespace F = torch::nn::functional;

namespace {

constexpr double kLogitClamp = 1e-3;

torch::nn::Sequential conv_gn_relu(int in, int out, int stride, int groups) {
  return torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)),
      torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min(groups, out), out)),
      torch::nn::ReLU());
}

torch::nn::Sequential residual_body(int ch, int groups) {
  return torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, ch, 3).padding(1)),
      torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min(groups, ch), ch)),
      torch::nn::ReLU(),
      torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, ch, 3).padding(1)),
      torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min(groups, ch), ch)));
}

}  // namespace

void StyleConfig::validate() const {
  if (base_width < 1 || patch_dim < 1) throw ConfigError("style widths must be positive");
  if (num_patches < 1) throw ConfigError("num_patches must be >= 1");
  if (!(nce_temperature > 0.0)) throw ConfigError("nce temperature must be positive");
  if (init_scale < 0.0) throw ConfigError("init_scale must be >= 0");
}

GeneratorImpl::GeneratorImpl(const StyleConfig& config) : config_(config) {
  config.validate();
  const int w = config.base_width;
  const int g = config.norm_groups;
  enc_in = register_module("enc_in", conv_gn_relu(3, w, 1, g));
  enc_down = register_module("enc_down", conv_gn_relu(w, 2 * w, 2, g));
  enc_res = register_module("enc_res", residual_body(2 * w, g));
  dec_res = register_module("dec_res", residual_body(2 * w, g));
  auto up = torch::nn::Sequential(torch::nn::Upsample(
      torch::nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
  auto up_conv = conv_gn_relu(2 * w, w, 1, g);
  for (const auto& m : *up_conv) up->push_back(m);
  dec_up = register_module("dec_up", up);
  dec_out = register_module("dec_out",
                            torch::nn::Conv2d(torch::nn::Conv2dOptions(w, 3, 3).padding(1)));
  torch::NoGradGuard no_grad;
  dec_out->weight.normal_(0.0, config.init_scale);
  dec_out->bias.zero_();
}

std::vector<torch::Tensor> GeneratorImpl::encode_taps(const torch::Tensor& images) {
  auto h0 = enc_in->forward(images);
  auto h1 = enc_down->forward(h0);
  auto h2 = torch::relu(h1 + enc_res->forward(h1));
  return {images, h1, h2};
}

std::vector<int> GeneratorImpl::tap_channels() const {
  return {3, 2 * config_.base_width, 2 * config_.base_width};
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("generator expects B x 3 x H x W");
  auto taps = encode_taps(images);
  auto h = torch::relu(taps[2] + dec_res->forward(taps[2]));
  auto delta = dec_out->forward(dec_up->forward(h));
  if (delta.sizes() != images.sizes()) {
    delta = F::interpolate(delta, F::InterpolateFuncOptions()
                                      .size(std::vector<std::int64_t>{images.size(2), images.size(3)})
                                      .mode(torch::kNearest));
  }
  return torch::sigmoid(torch::logit(images.clamp(kLogitClamp, 1.0 - kLogitClamp)) + delta);
}

DiscriminatorImpl::DiscriminatorImpl(const StyleConfig& config) {
  const int w = config.base_width;
  body = register_module(
      "body",
      torch::nn::Sequential(
          torch::nn::Conv2d(torch::nn::Conv2dOptions(3, w, 4).stride(2).padding(1)),
          torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
          torch::nn::Conv2d(torch::nn::Conv2dOptions(w, 2 * w, 4).stride(2).padding(1)),
          torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min(config.norm_groups, 2 * w), 2 * w)),
          torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
          torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * w, 1, 3).padding(1))));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images) { return body->forward(images); }

PatchHeadImpl::PatchHeadImpl(int in_channels, int out_dim) {
  fc1 = register_module("fc1", torch::nn::Linear(in_channels, out_dim));
  fc2 = register_module("fc2", torch::nn::Linear(out_dim, out_dim));
}

torch::Tensor PatchHeadImpl::forward(const torch::Tensor& x) {
  auto z = fc2->forward(torch::relu(fc1->forward(x)));
  return F::normalize(z, F::NormalizeFuncOptions().dim(-1).eps(1e-12));
}

AffineMapImpl::AffineMapImpl(int dim) {
  scale = register_parameter("scale", torch::ones({dim}));
  shift = register_parameter("shift", torch::zeros({dim}));
}

torch::Tensor AffineMapImpl::forward(const torch::Tensor& x) {
  if (x.dim() == 4) return x * scale.view({1, -1, 1, 1}) + shift.view({1, -1, 1, 1});
  return x * scale + shift;
}

StyleModuleImpl::StyleModuleImpl(const StyleConfig& config, int projection_dim) : config_(config) {
  generator = register_module("generator", Generator(config));
  discriminator = register_module("discriminator", Discriminator(config));
  heads = register_module("heads", torch::nn::ModuleList());
  for (int ch : generator->tap_channels()) heads->push_back(PatchHead(ch, config.patch_dim));
  phi = register_module("phi", AffineMap(projection_dim));
}

std::vector<torch::Tensor> StyleModuleImpl::generator_side_parameters() {
  auto params = generator->parameters();
  params = concat(std::move(params), heads->parameters());
  return concat(std::move(params), phi->parameters());
}

torch::Tensor stylize(Generator& generator, const torch::Tensor& source) {
  return generator->forward(source);
}

std::vector<std::int64_t> sample_locations(std::int64_t positions, int count, std::mt19937_64& rng) {
  std::vector<std::int64_t> all(static_cast<std::size_t>(positions));
  std::iota(all.begin(), all.end(), 0);
  const auto keep = std::min<std::size_t>(all.size(), static_cast<std::size_t>(std::max(count, 0)));
  for (std::size_t i = 0; i < keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(keep);
  return all;
}

std::vector<std::vector<std::int64_t>> sample_tap_locations(StyleModule& style, std::int64_t height,
                                                            std::int64_t width, std::mt19937_64& rng) {
  torch::NoGradGuard no_grad;
  auto probe = torch::zeros({1, 3, height, width}, style->parameters().front().options());
  auto taps = style->generator->encode_taps(probe);
  std::vector<std::vector<std::int64_t>> locations;
  for (const auto& t : taps) {
    locations.push_back(sample_locations(t.size(2) * t.size(3), style->config().num_patches, rng));
  }
  return locations;
}

PatchFeatures extract_patches(StyleModule& style, const torch::Tensor& images,
                              const std::vector<std::vector<std::int64_t>>& locations) {
  auto taps = style->generator->encode_taps(images);
  if (locations.size() != taps.size()) throw ShapeError("need one location list per encoder tap");
  PatchFeatures out;
  for (std::size_t l = 0; l < taps.size(); ++l) {
    const auto& t = taps[l];
    const auto b = t.size(0);
    const auto c = t.size(1);
    auto index = torch::tensor(locations[l], torch::kInt64);
    if (index.numel() > 0 && index.max().item<std::int64_t>() >= t.size(2) * t.size(3)) {
      throw ShapeError("patch location outside the feature map");
    }
    auto picked = t.flatten(2).index_select(2, index).permute({0, 2, 1});  // B x N x C
    const auto n = picked.size(1);
    auto head = style->heads[l]->as<PatchHeadImpl>();
    out.push_back(head->forward(picked.reshape({b * n, c})).reshape({b, n, -1}));
  }
  return out;
}

torch::Tensor infonce_loss(const torch::Tensor& anchors, const torch::Tensor& positives,
                           const torch::Tensor& negatives, double temperature) {
  auto pos = (anchors * positives).sum(-1, /*keepdim=*/true) / temperature;  // M x 1
  torch::Tensor logits = pos;
  if (negatives.size(1) > 0) {
    auto neg = torch::bmm(negatives, anchors.unsqueeze(2)).squeeze(2) / temperature;  // M x n
    logits = torch::cat({pos, neg}, 1);
  }
  return -torch::log_softmax(logits, 1).select(1, 0).mean();
}

LossTerm patchnce_loss(const PatchSet& patches, double temperature) {
  if (patches.anchors.empty() || patches.anchors.size() != patches.positives.size()) {
    throw ShapeError("patchnce_loss: anchors/positives per tap mismatch");
  }
  bool any_negative = false;
  torch::Tensor total;
  for (std::size_t l = 0; l < patches.anchors.size(); ++l) {
    const auto& a = patches.anchors[l];
    const auto& p = patches.positives[l];
    if (a.sizes() != p.sizes()) throw ShapeError("patchnce_loss: anchor/positive shapes differ");
    any_negative = any_negative || a.size(1) > 1;
    // Row i of the B x N x N similarity matrix holds the positive on the
    // diagonal and the N-1 negatives elsewhere.
    auto logits = torch::bmm(a, p.transpose(1, 2)) / temperature;
    auto term = -torch::log_softmax(logits, 2).diagonal(0, 1, 2).mean();
    total = total.defined() ? total + term : term;
  }
  total = total / static_cast<double>(patches.anchors.size());
  return {total, !any_negative};
}

GanTerms gan_losses_from_scores(const torch::Tensor& real_scores, const torch::Tensor& fake_scores,
                                const torch::Tensor& fake_scores_detached) {
  GanTerms out;
  out.generator = (fake_scores - 1.0).pow(2).mean();
  out.discriminator_real = (real_scores - 1.0).pow(2).mean();
  out.discriminator_fake = fake_scores_detached.pow(2).mean();
  return out;
}

GanTerms gan_losses(Discriminator& discriminator, const torch::Tensor& real_target,
                    const torch::Tensor& fake) {
  torch::Tensor fake_scores;
  {
    // The generator term must not move the discriminator.
    FreezeGuard frozen(discriminator->parameters());
    fake_scores = discriminator->forward(fake);
  }
  auto real_scores = discriminator->forward(real_target);
  auto fake_detached = discriminator->forward(fake.detach());
  return gan_losses_from_scores(real_scores, fake_scores, fake_detached);
}

LossTerm semantic_consistency_loss(const torch::Tensor& v_src, const torch::Tensor& v_sty,
                                   const proto::PrototypeBank& bank, AffineMap& phi) {
  if (v_src.sizes() != v_sty.sizes() || v_src.dim() != 4) {
    throw ShapeError("semantic_consistency_loss expects matching B x P x h x w inputs");
  }
  if (bank.fill_count() == 0) return skipped_term(v_sty.options());
  auto protos = bank.active_prototypes().to(v_sty.scalar_type());
  auto sim_src = torch::einsum("bphw,kp->bkhw", {v_src.detach(), protos});
  auto sim_sty = torch::einsum("bphw,kp->bkhw", {phi->forward(v_sty), protos});
  return {(sim_src - sim_sty).pow(2).mean(), false};
}

LossTerm semantic_consistency_through(net::SegModel& student, const torch::Tensor& source,
                                      const torch::Tensor& stylized,
                                      const proto::PrototypeBank& bank, AffineMap& phi) {
  torch::Tensor v_src;
  {
    torch::NoGradGuard no_grad;
    v_src = student->projection->forward(student->segnet->backbone_forward(source));
  }
  torch::Tensor v_sty;
  {
    FreezeGuard frozen(student->parameters());
    v_sty = student->projection->forward(student->segnet->backbone_forward(stylized));
  }
  return semantic_consistency_loss(v_src, v_sty, bank, phi);
}

}  // namespace confeti::style
