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

#include <filesystem>

namespace confeti::io {

/// 3 x H x W float image in [0,1] -> 8-bit RGB PNG.
void write_rgb_png(const std::filesystem::path& path, const torch::Tensor& image);
/// 8-bit RGB PNG -> 3 x H x W float32 in [0,1].
torch::Tensor read_rgb_png(const std::filesystem::path& path);

/// H x W integer map -> single-channel PNG, pixel value = class id.
void write_label_png(const std::filesystem::path& path, const torch::Tensor& label);
torch::Tensor read_label_png(const std::filesystem::path& path);

}  // namespace confeti::io
