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

// Procedural two-domain shapes benchmark: a labeled source domain, a
// style-shifted unlabeled target domain, photometric augmentation and
// cross-domain ClassMix.

#pragma once

#include "confeti/common.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace confeti::synth {

/// Class ids of the shapes benchmark. A spec with fewer classes uses a
/// prefix of this list.
enum class ShapeClass : std::int64_t {
  kBackground = 0,
  kCircle = 1,
  kSquare = 2,
  kTriangle = 3,
  kStripe = 4,
};
inline constexpr int kMaxClasses = 5;

const char* class_name(std::int64_t class_id);

struct SceneSpec {
  int image_size = 64;
  int num_classes = 5;
  int min_shapes = 2;
  int max_shapes = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Photometric shift applied to rendered scenes to form the target domain.
/// Every parameter is an offset from "no change", so the all-zero shift is
/// the identity.
struct DomainShift {
  double hue_rotation = 0.0;              // degrees
  double contrast_scale = 0.0;            // relative contrast change, 0 keeps contrast
  double additive_noise_sigma = 0.0;      // intensity units
  double texture_overlay_strength = 0.0;  // blend weight in [0, 1]

  void validate() const;
  bool is_identity() const;
};

/// Images B x 3 x H x W (float32, [0,1]).
struct ImageBatch {
  torch::Tensor data;

  std::int64_t size() const { return data.size(0); }
  void validate() const;
};

/// Class-index maps B x H x W (int64), entries in [0,K) or kIgnoreIndex.
struct LabelMap {
  torch::Tensor data;
  std::int64_t ignore_index = kIgnoreIndex;

  void validate(int num_classes) const;
  /// B x K x H x W one-hot expansion; ignored pixels are all-zero.
  torch::Tensor one_hot(int num_classes) const;
};

/// Labels that exist only for scoring. Training code receives a
/// TargetDomain, which carries these behind an evaluation-only accessor.
class EvalOnlyLabels {
 public:
  EvalOnlyLabels() = default;
  explicit EvalOnlyLabels(LabelMap labels) : labels_(std::move(labels)) {}

  const LabelMap& for_evaluation() const { return labels_; }
  /// Overwrites the stored labels; only the leakage audit uses this.
  LabelMap& mutable_for_audit() { return labels_; }

 private:
  LabelMap labels_;
};

struct SourceDomain {
  ImageBatch images;
  LabelMap labels;
};

struct TargetDomain {
  ImageBatch images;
  EvalOnlyLabels labels;
};

struct DomainPair {
  SceneSpec spec;
  DomainShift shift;
  SourceDomain source;
  TargetDomain target;
};

/// Renders one scene. Pure function of (spec, image_seed).
struct Scene {
  torch::Tensor image;  // 3 x H x W
  torch::Tensor label;  // H x W
};
Scene render_scene(const SceneSpec& spec, std::uint64_t image_seed);

/// Per-image seed derivation shared by the generator and the tests.
std::uint64_t image_seed(std::uint64_t dataset_seed, int domain, std::int64_t index);
inline constexpr int kSourceDomain = 0;
inline constexpr int kTargetDomain = 1;

/// Applies the shift to one 3 x H x W image. `noise_seed` drives the
/// additive noise and the texture phase.
torch::Tensor apply_shift(const torch::Tensor& image, const DomainShift& shift,
                          std::uint64_t noise_seed);

DomainPair generate_pair(const SceneSpec& spec, const DomainShift& shift,
                         std::int64_t n_source, std::int64_t n_target);

/// Extra target-distribution split (used for the held-out evaluation set).
/// `domain` must differ from kSourceDomain/kTargetDomain to get fresh scenes.
TargetDomain generate_target(const SceneSpec& spec, const DomainShift& shift, std::int64_t count,
                             int domain);
inline constexpr int kHeldOutDomain = 2;

/// Per-class pixel frequencies over a label map (ignored pixels excluded).
std::vector<double> class_frequencies(const LabelMap& labels, int num_classes);

struct AugmentParams {
  double jitter_probability = 0.2;
  double jitter_strength = 0.2;  // brightness/contrast/saturation/hue range
  double blur_probability = 0.5;
  double blur_sigma_min = 0.15;
  double blur_sigma_max = 1.15;

  static AugmentParams identity() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }
};

/// Seeded photometric augmentation (color jitter then Gaussian blur).
/// Labels are never touched; the output stays in [0,1].
ImageBatch augment(const ImageBatch& batch, const AugmentParams& params, std::mt19937_64& rng);

/// Separable Gaussian blur with reflect padding; sigma <= 0 is the identity.
torch::Tensor gaussian_blur(const torch::Tensor& image, double sigma);

struct MixResult {
  ImageBatch image;
  LabelMap label;
  torch::Tensor mask;  // B x H x W, bool, true where the pixel came from source
};

/// Pastes the pixels of the chosen source classes onto the target image.
/// `class_subsets[b]` lists the classes copied for batch item b.
MixResult classmix(const ImageBatch& source_image, const LabelMap& source_label,
                   const ImageBatch& target_image, const LabelMap& target_pseudolabel,
                   const std::vector<std::vector<std::int64_t>>& class_subsets);

/// Uniformly draws ceil(n/2) of the n classes present in `label` (H x W).
std::vector<std::int64_t> sample_mix_classes(const torch::Tensor& label, std::mt19937_64& rng,
                                             std::int64_t ignore_index = kIgnoreIndex);

// RGB <-> HSV on tensors whose channel dimension is `dim` (size 3).
// Hue is in [0,1).
torch::Tensor rgb_to_hsv(const torch::Tensor& rgb, std::int64_t dim);
torch::Tensor hsv_to_rgb(const torch::Tensor& hsv, std::int64_t dim);

// On-disk layout written by `gen-data`:
//   <dir>/manifest.txt
//   <dir>/source/images/NNNNN.png, <dir>/source/labels/NNNNN.png
//   <dir>/target/images/NNNNN.png, <dir>/target/labels_eval_only/NNNNN.png
void write_dataset(const DomainPair& pair, const std::filesystem::path& dir);
DomainPair read_dataset(const std::filesystem::path& dir);

}  // namespace confeti::synth
