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

#include "confeti/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <stdexcept>

namespace confeti::io {

namespace fs = std::filesystem;

void write_rgb_png(const fs::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) {
    throw std::invalid_argument("write_rgb_png expects a 3 x H x W tensor");
  }
  auto hwc = (image.detach().to(torch::kFloat32).clamp(0.0, 1.0) * 255.0)
                 .round()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .contiguous();
  const int h = static_cast<int>(hwc.size(0));
  const int w = static_cast<int>(hwc.size(1));
  cv::Mat rgb(h, w, CV_8UC3, hwc.data_ptr<std::uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) {
    throw std::runtime_error("cannot write image " + path.string());
  }
}

torch::Tensor read_rgb_png(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot read image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto hwc = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

void write_label_png(const fs::path& path, const torch::Tensor& label) {
  if (label.dim() != 2) throw std::invalid_argument("write_label_png expects an H x W tensor");
  if (label.min().item<std::int64_t>() < 0 || label.max().item<std::int64_t>() > 255) {
    throw std::invalid_argument("label values must fit in 8 bits");
  }
  auto u8 = label.to(torch::kUInt8).contiguous();
  cv::Mat mat(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1,
              u8.data_ptr<std::uint8_t>());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) {
    throw std::runtime_error("cannot write label map " + path.string());
  }
}

torch::Tensor read_label_png(const fs::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw std::runtime_error("cannot read label map " + path.string());
  if (mat.channels() != 1 || mat.depth() != CV_8U) {
    throw std::runtime_error("label map must be single-channel 8-bit: " + path.string());
  }
  return torch::from_blob(mat.data, {mat.rows, mat.cols}, torch::kUInt8)
      .clone()
      .to(torch::kInt64);
}

}  // namespace confeti::io
