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

// Feature-level alignment: CAM classification loss, CAM-weighted prototype
// estimation, the EMA prototype bank, pixel-to-prototype contrast and the
// diversity regulariser.

#pragma once

#include "confeti/common.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace confeti::proto {

struct BankConfig {
  int num_classes = 5;
  int dim = 128;
  double gamma = 0.99;       // prototype EMA momentum
  double temperature = 0.1;  // shared by likelihood, PCL and diversity term
  int top_n = 32;            // highest-CAM pixels kept per class per step

  void validate() const;
};

/// K unit-norm class prototypes. Classes become "initialized" the first
/// time an estimate for them arrives; only initialized classes take part
/// in the softmax over prototypes. The prototype tensor never requires grad.
class PrototypeBank {
 public:
  explicit PrototypeBank(const BankConfig& config);

  const BankConfig& config() const { return config_; }
  /// K x P, detached.
  const torch::Tensor& prototypes() const { return prototypes_; }
  bool initialized(std::int64_t c) const { return initialized_.at(static_cast<std::size_t>(c)); }
  /// Sorted ids of initialized classes.
  std::vector<std::int64_t> initialized_classes() const;
  int fill_count() const;
  /// Rows of prototypes() for initialized classes (K' x P).
  torch::Tensor active_prototypes() const;

  /// First observation: p_c = p'_c / |p'_c|. Afterwards
  /// p_c = normalize(gamma p_c + (1 - gamma) p'_c). Zero or non-finite
  /// estimates are ignored.
  void update(const std::vector<std::optional<torch::Tensor>>& batch_prototypes);
  void reset();

  /// K x K cosine similarities (NaN rows/cols for uninitialized classes).
  torch::Tensor cosine_matrix() const;

  void to(torch::ScalarType dtype);
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  BankConfig config_;
  torch::Tensor prototypes_;
  std::vector<bool> initialized_;
};

/// Mean over batch and classes of binary cross-entropy between
/// sigmoid(scores) and class presence; probabilities clamped to
/// [1e-7, 1 - 1e-7].
torch::Tensor cam_bce_loss(const torch::Tensor& scores, const torch::Tensor& presence);

/// B x K float presence indicators from a B x H x W label map.
torch::Tensor class_presence(const torch::Tensor& labels, int num_classes,
                             std::int64_t ignore_index = kIgnoreIndex);

/// Nearest-neighbour resize of a B x H x W label map to h x w.
torch::Tensor downsample_labels(const torch::Tensor& labels, std::int64_t h, std::int64_t w);

/// CAM-weighted batch prototypes. For every class c: candidate pixels are
/// those labelled c (anywhere in the batch); the top_n of them by M_c are
/// kept and averaged with weights M_c. Absent classes, or classes whose
/// kept weights sum to zero, yield std::nullopt.
///   cam:    B x K x h x w (non-negative)
///   v:      B x P x h x w projected teacher features
///   labels: B x h x w
std::vector<std::optional<torch::Tensor>> estimate_prototypes(const torch::Tensor& cam,
                                                              const torch::Tensor& v,
                                                              const torch::Tensor& labels,
                                                              int top_n,
                                                              std::int64_t ignore_index = kIgnoreIndex);

/// Softmax over initialized classes of (v . p_c) / T. v is N x P (or P);
/// columns follow bank.initialized_classes(). Throws when fewer than two
/// classes are initialized.
torch::Tensor pcl_likelihood(const torch::Tensor& v, const PrototypeBank& bank);

struct SampledPixelSet {
  torch::Tensor features;  // N x P, unit norm, carries autograd history
  torch::Tensor labels;    // N
};

/// Draws up to `n` pixels stratified uniformly over the classes present in
/// `labels` (ignored pixels never drawn), without replacement per class.
SampledPixelSet sample_pixels(const torch::Tensor& v, const torch::Tensor& labels, int n,
                              std::mt19937_64& rng, std::int64_t ignore_index = kIgnoreIndex);

/// Mean over samples of -log pcl_likelihood at the sample's class. Samples
/// of uninitialized classes are dropped; skipped when fewer than two
/// classes are initialized or no sample survives.
LossTerm pcl_loss(const SampledPixelSet& samples, const PrototypeBank& bank);

/// Negative normalised entropy of the prototype assignment of the mean
/// feature: with q = softmax(vbar . p / T) over initialized classes,
/// returns (1 / log K') sum_c q_c log q_c, in [-1, 0]. `v` is B x P x h x w;
/// vbar is its mean over batch and pixels, renormalised.
LossTerm diversity_reg(const torch::Tensor& v, const PrototypeBank& bank);

/// Same quantity for an explicit unit mean feature (length P).
LossTerm diversity_reg_from_mean(const torch::Tensor& mean_feature, const PrototypeBank& bank);

}  // namespace confeti::proto
