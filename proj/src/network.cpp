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

#include "confeti/module_utils.hpp"

#include <cmath>
#include <sstream>

namespace confeti::net {

namespace F = torch::nn::functional;

namespace {

void add_conv_block(torch::nn::Sequential& seq, int in, int out, int stride, int dilation, int groups) {
  seq->push_back(torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(dilation).dilation(dilation)));
  seq->push_back(torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min(groups, out), out)));
  seq->push_back(torch::nn::ReLU());
}

}  // namespace

void NetworkConfig::validate() const {
  if (in_channels != 3) throw ConfigError("network expects 3 input channels");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (feature_dim < 1 || projection_dim < 1 || base_width < 1) {
    throw ConfigError("network widths must be positive");
  }
  if (norm_groups < 1 || feature_dim % std::min(norm_groups, feature_dim) != 0 ||
      base_width % std::min(norm_groups, base_width) != 0) {
    throw ConfigError("norm_groups must divide every block width");
  }
}

std::string NetworkConfig::describe() const {
  std::ostringstream os;
  os << "in_channels=" << in_channels << " num_classes=" << num_classes
     << " feature_dim=" << feature_dim << " projection_dim=" << projection_dim
     << " base_width=" << base_width << " norm_groups=" << norm_groups
     << " backbone=conv" << base_width << ",conv" << 2 * base_width << "/s2,conv" << feature_dim
     << "/s2,conv" << feature_dim << ",dil2,dil2 decoder=conv1x1+bilinear";
  return os.str();
}

SegNetImpl::SegNetImpl(const NetworkConfig& config) : config_(config) {
  config.validate();
  const int w = config.base_width;
  const int d = config.feature_dim;
  const int g = config.norm_groups;
  backbone = torch::nn::Sequential();
  add_conv_block(backbone, config.in_channels, w, 1, 1, g);
  add_conv_block(backbone, w, 2 * w, 2, 1, g);
  add_conv_block(backbone, 2 * w, d, 2, 1, g);
  add_conv_block(backbone, d, d, 1, 1, g);
  add_conv_block(backbone, d, d, 1, 2, g);
  add_conv_block(backbone, d, d, 1, 2, g);
  register_module("backbone", backbone);
  classifier = register_module(
      "classifier", torch::nn::Conv2d(torch::nn::Conv2dOptions(d, config.num_classes, 1)));
}

torch::Tensor SegNetImpl::backbone_forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != config_.in_channels) {
    throw ShapeError("SegNet expects B x 3 x H x W input");
  }
  return backbone->forward(images);
}

torch::Tensor SegNetImpl::decode(const torch::Tensor& features, torch::IntArrayRef output_size) {
  auto logits = classifier->forward(features);
  return F::interpolate(logits, F::InterpolateFuncOptions()
                                    .size(std::vector<std::int64_t>(output_size.begin(), output_size.end()))
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
}

SegOutput SegNetImpl::forward(const torch::Tensor& images) {
  SegOutput out;
  out.features = backbone_forward(images);
  out.logits = decode(out.features, {images.size(2), images.size(3)});
  return out;
}

ProjectionHeadImpl::ProjectionHeadImpl(int feature_dim, int projection_dim) {
  hidden = register_module(
      "hidden", torch::nn::Conv2d(torch::nn::Conv2dOptions(feature_dim, feature_dim, 1)));
  output = register_module(
      "output", torch::nn::Conv2d(torch::nn::Conv2dOptions(feature_dim, projection_dim, 1)));
}

torch::Tensor ProjectionHeadImpl::forward(const torch::Tensor& features) {
  auto z = output->forward(torch::relu(hidden->forward(features)));
  return F::normalize(z, F::NormalizeFuncOptions().dim(1).eps(1e-12));
}

CamHeadImpl::CamHeadImpl(int num_classes, int feature_dim) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  weight = register_parameter("weight",
                              torch::empty({num_classes, feature_dim}).uniform_(-bound, bound));
}

torch::Tensor CamHeadImpl::scores(const torch::Tensor& features) {
  if (features.dim() != 4 || features.size(1) != weight.size(1)) {
    throw ShapeError("CamHead: feature channels do not match weight");
  }
  return torch::matmul(features.mean({2, 3}), weight.t());
}

torch::Tensor CamHeadImpl::cam(const torch::Tensor& features) {
  if (features.dim() != 4 || features.size(1) != weight.size(1)) {
    throw ShapeError("CamHead: feature channels do not match weight");
  }
  return torch::relu(torch::einsum("kd,bdhw->bkhw", {weight, features}));
}

SegModelImpl::SegModelImpl(const NetworkConfig& config) : config_(config) {
  segnet = register_module("segnet", SegNet(config));
  projection = register_module("projection",
                               ProjectionHead(config.feature_dim, config.projection_dim));
  cam_head = register_module("cam_head", CamHead(config.num_classes, config.feature_dim));
}

SegModel clone_model(const SegModel& model) {
  SegModel copy(model->config());
  const auto dtype = model->parameters().front().scalar_type();
  copy->to(dtype);
  copy_state(*model, *copy);
  return copy;
}

torch::Tensor predict(SegModel& model, const torch::Tensor& images, std::int64_t batch_size) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> out;
  for (std::int64_t start = 0; start < images.size(0); start += batch_size) {
    const auto end = std::min(images.size(0), start + batch_size);
    out.push_back(model->forward(images.slice(0, start, end)).logits.argmax(1));
  }
  return torch::cat(out);
}

}  // namespace confeti::net
