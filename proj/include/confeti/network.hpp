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

// Segmentation network f = decoder o backbone, the non-linear projection
// head feeding the prototype space, and the linear CAM classifier.

#pragma once

#include "confeti/common.hpp"

#include <string>

namespace confeti::net {

struct NetworkConfig {
  int in_channels = 3;
  int num_classes = 5;
  int feature_dim = 64;      // D, backbone output channels
  int projection_dim = 128;  // P
  int base_width = 16;       // channels of the first encoder block
  int norm_groups = 8;

  void validate() const;
  /// One-line "key=value ..." description written next to checkpoints.
  std::string describe() const;
};

struct SegOutput {
  torch::Tensor logits;    // B x K x H x W
  torch::Tensor features;  // B x D x H/4 x W/4
};

/// Backbone: four conv blocks (two of them stride 2) followed by two
/// dilated blocks; every block is conv -> GroupNorm -> ReLU, so outputs do
/// not depend on batch composition. Decoder: 1x1 conv to K channels and a
/// bilinear upsample back to the input size.
class SegNetImpl : public torch::nn::Module {
 public:
  explicit SegNetImpl(const NetworkConfig& config);

  SegOutput forward(const torch::Tensor& images);
  torch::Tensor backbone_forward(const torch::Tensor& images);
  torch::Tensor decode(const torch::Tensor& features, torch::IntArrayRef output_size);

  torch::nn::Sequential backbone{nullptr};
  torch::nn::Conv2d classifier{nullptr};

 private:
  NetworkConfig config_;
};
TORCH_MODULE(SegNet);

/// 1x1 conv -> ReLU -> 1x1 conv -> per-pixel l2 normalisation.
class ProjectionHeadImpl : public torch::nn::Module {
 public:
  ProjectionHeadImpl(int feature_dim, int projection_dim);

  /// B x D x h x w -> B x P x h x w with unit-norm pixel vectors.
  torch::Tensor forward(const torch::Tensor& features);

  torch::nn::Conv2d hidden{nullptr};
  torch::nn::Conv2d output{nullptr};
};
TORCH_MODULE(ProjectionHead);

/// Bias-free linear classifier w (K x D) applied after global average
/// pooling; the same weights produce the class activation maps.
class CamHeadImpl : public torch::nn::Module {
 public:
  CamHeadImpl(int num_classes, int feature_dim);

  /// s_c = 1/(h w) sum_d w_cd sum_j f_dj  -> B x K.
  torch::Tensor scores(const torch::Tensor& features);
  /// M_c = ReLU(sum_d w_cd f_d,:)  -> B x K x h x w, non-negative.
  torch::Tensor cam(const torch::Tensor& features);

  torch::Tensor weight;
};
TORCH_MODULE(CamHead);

/// Everything the student (or the teacher) owns: f, g and the CAM head.
class SegModelImpl : public torch::nn::Module {
 public:
  explicit SegModelImpl(const NetworkConfig& config);

  SegOutput forward(const torch::Tensor& images) { return segnet->forward(images); }
  const NetworkConfig& config() const { return config_; }

  SegNet segnet{nullptr};
  ProjectionHead projection{nullptr};
  CamHead cam_head{nullptr};

 private:
  NetworkConfig config_;
};
TORCH_MODULE(SegModel);

/// Fresh model whose parameters equal `model`'s.
SegModel clone_model(const SegModel& model);

/// Argmax prediction B x H x W, computed without gradients.
torch::Tensor predict(SegModel& model, const torch::Tensor& images, std::int64_t batch_size = 32);

}  // namespace confeti::net
