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

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace confeti {

/// Turns off requires_grad on a parameter set for the guard's lifetime.
/// Used where a loss must pass through a network without updating it.
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<torch::Tensor> params);
  ~FreezeGuard();

  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<torch::Tensor> params_;
  std::vector<bool> previous_;
};

/// Copies every parameter and buffer of `from` into `to`. Throws ShapeError
/// when the two trees are not isomorphic.
void copy_state(const torch::nn::Module& from, torch::nn::Module& to);

/// FNV-1a hash over all parameter bytes, in registration order.
std::uint64_t parameter_fingerprint(const torch::nn::Module& module);

/// Euclidean norm over the accumulated gradients of `params`
/// (parameters without a gradient count as zero).
double grad_norm(const std::vector<torch::Tensor>& params);

void zero_grad(const std::vector<torch::Tensor>& params);

/// Concatenation helper for parameter groups.
std::vector<torch::Tensor> concat(std::vector<torch::Tensor> a, const std::vector<torch::Tensor>& b);

}  // namespace confeti
