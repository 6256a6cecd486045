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
#include <stdexcept>
#include <string>

namespace confeti {

/// Label value excluded from every loss and from evaluation.
inline constexpr std::int64_t kIgnoreIndex = 255;

/// Invalid configuration values, unknown keys, bad dimensions.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shape or structure mismatch between collaborating objects.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure during training (non-finite loss and similar).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scalar loss together with a flag telling whether the term was
/// degenerate this step (empty sample set, cold prototype bank, ...).
/// A skipped term always carries a zero value so it can be summed blindly.
struct LossTerm {
  torch::Tensor value;
  bool skipped = false;

  double item() const { return value.defined() ? value.item<double>() : 0.0; }
};

inline LossTerm skipped_term(const torch::TensorOptions& options) {
  return {torch::zeros({}, options), true};
}

}  // namespace confeti
