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

#include "confeti/metrics.hpp"

#include "confeti/synthdata.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace confeti {

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

EvalResult evaluate_predictions(const torch::Tensor& pred, const torch::Tensor& gt, int num_classes,
                                std::int64_t ignore_index) {
  if (pred.sizes() != gt.sizes()) throw ShapeError("prediction and ground truth shapes differ");
  if (gt.numel() == 0) throw ConfigError("evaluation set is empty");
  auto g = gt.flatten().to(torch::kInt64);
  auto p = pred.flatten().to(torch::kInt64);
  auto keep = g != ignore_index;
  g = g.masked_select(keep);
  p = p.masked_select(keep);
  if (g.numel() == 0) throw ConfigError("evaluation set has no labelled pixels");
  auto valid_p = (p >= 0) & (p < num_classes);
  // Out-of-range predictions count as false negatives only.
  auto flat = g * num_classes + torch::where(valid_p, p, torch::zeros_like(p));
  auto confusion = torch::bincount(flat.masked_select(valid_p), {}, num_classes * num_classes)
                       .reshape({num_classes, num_classes});

  EvalResult out;
  out.confusion = confusion;
  auto gt_count = torch::bincount(g, {}, num_classes);
  auto cm = confusion.to(torch::kFloat64);
  double sum = 0.0;
  int count = 0;
  for (int c = 0; c < num_classes; ++c) {
    const double tp = cm[c][c].item<double>();
    const double fp = cm.select(1, c).sum().item<double>() - tp;
    const double fn = gt_count[c].item<double>() - tp;
    const double denom = tp + fp + fn;
    const bool present = gt_count[c].item<std::int64_t>() > 0;
    const double iou = denom > 0 ? tp / denom : std::numeric_limits<double>::quiet_NaN();
    out.iou.push_back(iou);
    out.present.push_back(present);
    if (present) {
      sum += iou;
      ++count;
    }
  }
  out.miou = count > 0 ? sum / count : 0.0;
  return out;
}

LossValues& LossValues::operator+=(const LossValues& other) {
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
  return *this;
}

LossValues LossValues::scaled(double factor) const {
  LossValues out = *this;
  for (auto& v : out.values) v *= factor;
  return out;
}

std::string metrics_header(int num_classes) {
  std::ostringstream os;
  os << "step,phase";
  for (const auto* name : kLossNames) os << ",loss_" << name;
  os << ",miou";
  for (int c = 0; c < num_classes; ++c) os << ",iou_" << synth::class_name(c);
  os << ",bank_fill,pl_confidence";
  return os.str();
}

std::string metrics_line(const MetricsRow& row) {
  std::ostringstream os;
  os << row.step << "," << row.phase;
  for (double v : row.losses.values) os << "," << fmt(v);
  os << "," << fmt(row.miou);
  for (double v : row.iou) os << "," << fmt(v);
  os << "," << row.bank_fill << "," << fmt(row.pl_confidence);
  return os.str();
}

MetricsWriter::MetricsWriter(std::filesystem::path path, int num_classes)
    : path_(std::move(path)), num_classes_(num_classes) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::trunc);
  out << metrics_header(num_classes_) << "\n";
}

void MetricsWriter::append(const MetricsRow& row) {
  std::ofstream out(path_, std::ios::app);
  out << metrics_line(row) << "\n";
}

}  // namespace confeti
