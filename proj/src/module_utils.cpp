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

#include "confeti/module_utils.hpp"

#include "confeti/common.hpp"

#include <cmath>

namespace confeti {

FreezeGuard::FreezeGuard(std::vector<torch::Tensor> params) : params_(std::move(params)) {
  previous_.reserve(params_.size());
  for (auto& p : params_) {
    previous_.push_back(p.requires_grad());
    p.set_requires_grad(false);
  }
}

FreezeGuard::~FreezeGuard() {
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(previous_[i]);
}

void copy_state(const torch::nn::Module& from, torch::nn::Module& to) {
  torch::NoGradGuard no_grad;
  auto src = from.named_parameters(true);
  auto dst = to.named_parameters(true);
  if (src.size() != dst.size()) throw ShapeError("parameter trees differ in size");
  for (const auto& item : src) {
    auto* target = dst.find(item.key());
    if (target == nullptr) throw ShapeError("parameter " + item.key() + " missing in destination");
    if (target->sizes() != item.value().sizes()) {
      throw ShapeError("parameter " + item.key() + " has mismatched shape");
    }
    target->copy_(item.value());
  }
  auto src_buffers = from.named_buffers(true);
  auto dst_buffers = to.named_buffers(true);
  for (const auto& item : src_buffers) {
    auto* target = dst_buffers.find(item.key());
    if (target == nullptr) throw ShapeError("buffer " + item.key() + " missing in destination");
    target->copy_(item.value());
  }
}

std::uint64_t parameter_fingerprint(const torch::nn::Module& module) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : module.parameters(true)) {
    auto c = p.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

double grad_norm(const std::vector<torch::Tensor>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.grad().defined()) sq += p.grad().to(torch::kFloat64).pow(2).sum().item<double>();
  }
  return std::sqrt(sq);
}

void zero_grad(const std::vector<torch::Tensor>& params) {
  for (auto p : params) {
    if (p.grad().defined()) p.mutable_grad() = torch::Tensor();
  }
}

std::vector<torch::Tensor> concat(std::vector<torch::Tensor> a, const std::vector<torch::Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace confeti
