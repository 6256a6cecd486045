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

// Pixel-level alignment: one-sided source->target generator with a
// least-squares patch discriminator, multi-layer patch projection heads and
// PatchNCE, and the prototype-based semantic consistency loss.

#pragma once

#include "confeti/network.hpp"
#include "confeti/protobank.hpp"

#include <random>
#include <vector>

namespace confeti::style {

struct StyleConfig {
  int base_width = 16;
  int patch_dim = 128;      // output width of every patch head
  int num_patches = 64;     // sampled locations per tap per image
  double nce_temperature = 0.07;
  double init_scale = 1e-3; // std of the generator's output-layer weights
  int norm_groups = 8;

  void validate() const;
};

/// Encoder -> decoder with a residual output path:
///   G(x) = sigmoid(logit(x) + delta(x)),
/// so a generator with near-zero output weights is close to the identity
/// and the output always lies in (0, 1).
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const StyleConfig& config);

  torch::Tensor forward(const torch::Tensor& images);
  /// Encoder feature taps: the input itself, the downsampled features and
  /// the encoder output. Always three entries.
  std::vector<torch::Tensor> encode_taps(const torch::Tensor& images);
  std::vector<int> tap_channels() const;

  torch::nn::Sequential enc_in{nullptr};
  torch::nn::Sequential enc_down{nullptr};
  torch::nn::Sequential enc_res{nullptr};
  torch::nn::Sequential dec_res{nullptr};
  torch::nn::Sequential dec_up{nullptr};
  torch::nn::Conv2d dec_out{nullptr};

 private:
  StyleConfig config_;
};
TORCH_MODULE(Generator);

/// PatchGAN-style discriminator producing a real/fake score map.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const StyleConfig& config);
  torch::Tensor forward(const torch::Tensor& images);

  torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(Discriminator);

/// 2-layer MLP followed by l2 normalisation, applied to N x C vectors.
class PatchHeadImpl : public torch::nn::Module {
 public:
  PatchHeadImpl(int in_channels, int out_dim);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear fc1{nullptr};
  torch::nn::Linear fc2{nullptr};
};
TORCH_MODULE(PatchHead);

/// Per-channel scale-and-shift on projected features, identity at init.
class AffineMapImpl : public torch::nn::Module {
 public:
  explicit AffineMapImpl(int dim);
  /// x: B x P x h x w (or N x P).
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor scale;
  torch::Tensor shift;
};
TORCH_MODULE(AffineMap);

/// Generator, discriminator, patch heads and phi.
class StyleModuleImpl : public torch::nn::Module {
 public:
  StyleModuleImpl(const StyleConfig& config, int projection_dim);

  const StyleConfig& config() const { return config_; }
  /// Parameters moved by the generator-side optimizer (G, heads, phi).
  std::vector<torch::Tensor> generator_side_parameters();

  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  torch::nn::ModuleList heads{nullptr};
  AffineMap phi{nullptr};

 private:
  StyleConfig config_;
};
TORCH_MODULE(StyleModule);

/// Output in [0,1], same shape, deterministic.
torch::Tensor stylize(Generator& generator, const torch::Tensor& source);

/// Up to `count` distinct flat positions in [0, positions), without
/// replacement (capped at `positions`).
std::vector<std::int64_t> sample_locations(std::int64_t positions, int count, std::mt19937_64& rng);

/// One tap's sampled features: B x N x C_patch, unit norm.
using PatchFeatures = std::vector<torch::Tensor>;

/// Runs the encoder on `images` and projects the features at the given
/// flat locations (one location list per tap, shared by every image).
PatchFeatures extract_patches(StyleModule& style, const torch::Tensor& images,
                              const std::vector<std::vector<std::int64_t>>& locations);

/// Draws one location list per tap for images of the given size.
std::vector<std::vector<std::int64_t>> sample_tap_locations(StyleModule& style, std::int64_t height,
                                                            std::int64_t width, std::mt19937_64& rng);

/// Anchors from the stylized image and positives from the source image at
/// the same locations. The negatives of anchor i are the other sampled
/// locations of the same image and tap.
struct PatchSet {
  std::vector<torch::Tensor> anchors;    // per tap: B x N x C
  std::vector<torch::Tensor> positives;  // per tap: B x N x C
};

/// Generic InfoNCE: mean over rows of
///   -log exp(a.p/T) / (exp(a.p/T) + sum_n exp(a.n/T)).
///   anchors M x C, positives M x C, negatives M x n x C (n may be 0).
torch::Tensor infonce_loss(const torch::Tensor& anchors, const torch::Tensor& positives,
                           const torch::Tensor& negatives, double temperature);

/// Mean over taps and anchors of the PatchNCE term. `skipped` is set when
/// every tap has a single location (no negatives).
LossTerm patchnce_loss(const PatchSet& patches, double temperature);

struct GanTerms {
  torch::Tensor generator;           // mean (E(fake) - 1)^2
  torch::Tensor discriminator_real;  // mean (E(real) - 1)^2
  torch::Tensor discriminator_fake;  // mean E(fake.detach())^2
  torch::Tensor discriminator() const { return discriminator_real + discriminator_fake; }
};

/// Least-squares adversarial terms. The generator term keeps the graph to
/// `fake`; the discriminator terms see a detached fake.
GanTerms gan_losses(Discriminator& discriminator, const torch::Tensor& real_target,
                    const torch::Tensor& fake);

/// LSGAN terms from precomputed score maps (used by tests).
GanTerms gan_losses_from_scores(const torch::Tensor& real_scores, const torch::Tensor& fake_scores,
                                const torch::Tensor& fake_scores_detached);

/// (1 / (h w K')) sum_j sum_c (v_src_j . p_c - phi(v_sty_j) . p_c)^2 over
/// initialized classes; the per-image mean is then averaged over the batch.
/// v_src and v_sty are B x P x h x w. Skipped when the bank is empty.
LossTerm semantic_consistency_loss(const torch::Tensor& v_src, const torch::Tensor& v_sty,
                                   const proto::PrototypeBank& bank, AffineMap& phi);

/// Full semantic-consistency pass: student projections of the source image
/// (no graph) and of the stylized image (student parameters frozen, so only
/// the generator behind `stylized` and phi receive gradients).
LossTerm semantic_consistency_through(net::SegModel& student, const torch::Tensor& source,
                                      const torch::Tensor& stylized,
                                      const proto::PrototypeBank& bank, AffineMap& phi);

}  // namespace confeti::style
