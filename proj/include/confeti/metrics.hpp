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

#include "confeti/common.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace confeti {

/// Confusion-matrix IoU. Classes that never occur in the ground truth are
/// not averaged into mIoU; their IoU is still reported (0 when predicted,
/// NaN when neither predicted nor present).
struct EvalResult {
  double miou = 0.0;
  std::vector<double> iou;
  std::vector<bool> present;
  torch::Tensor confusion;  // K x K int64, rows = ground truth
};

/// pred and gt are integer maps of identical shape. Pixels with
/// gt == ignore_index are excluded. Throws on an empty input.
EvalResult evaluate_predictions(const torch::Tensor& pred, const torch::Tensor& gt, int num_classes,
                                std::int64_t ignore_index = kIgnoreIndex);

/// Loss names in CSV column order.
inline constexpr std::array<const char*, 10> kLossNames = {
    "total", "ce_src", "ce_mix", "pcl", "cam", "reg", "gan_g", "gan_d", "nce", "sc"};

struct LossValues {
  std::array<double, kLossNames.size()> values{};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  LossValues& operator+=(const LossValues& other);
  LossValues scaled(double factor) const;
};

enum LossIndex : std::size_t {
  kTotal = 0, kCeSrc, kCeMix, kPcl, kCam, kReg, kGanG, kGanD, kNce, kSc
};

/// One metrics CSV line. Loss values are means over the steps since the
/// previous row.
struct MetricsRow {
  std::int64_t step = 0;
  int phase = 0;  // 0 = offline style pre-training, 1 = joint / segmentation, 2 = second round
  LossValues losses;
  double miou = 0.0;
  std::vector<double> iou;
  int bank_fill = 0;
  double pl_confidence = 0.0;
};

/// Fixed header: step,phase,loss_<name>...,miou,iou_<class>...,bank_fill,pl_confidence
std::string metrics_header(int num_classes);
std::string metrics_line(const MetricsRow& row);

/// Appends rows to a CSV file, writing the header on creation.
class MetricsWriter {
 public:
  MetricsWriter(std::filesystem::path path, int num_classes);
  void append(const MetricsRow& row);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int num_classes_;
};

}  // namespace confeti
