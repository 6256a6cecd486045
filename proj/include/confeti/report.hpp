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


// Post-hoc run report: metrics CSV -> summary text + curve PNGs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace confeti::report {

struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  /// Index of `name`; throws ConfigError naming the column when absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  std::vector<double> values(const std::string& name) const;
};

/// Parses a metrics CSV and checks the fixed schema. Throws ConfigError on
/// an unreadable or empty file, or on a missing column (the message names it).
MetricsTable read_metrics_csv(const std::filesystem::path& path);
MetricsTable parse_metrics_csv(const std::string& text);

/// Plotted data, one x array shared by every named series.
struct CurveData {
  std::string title;
  std::vector<double> x;
  std::vector<std::pair<std::string, std::vector<double>>> series;
};

/// Loss terms against step (every row).
CurveData loss_curves(const MetricsTable& table);
/// mIoU against step (segmentation rows only; phase 0 has no segmenter).
CurveData miou_curve(const MetricsTable& table);

struct Summary {
  std::size_t rows = 0;
  std::int64_t final_step = 0;
  double final_miou = 0.0;
  std::int64_t best_step = 0;
  double best_miou = 0.0;
  std::vector<std::pair<std::string, double>> final_iou;
  std::string text() const;
};

Summary summarize(const MetricsTable& table);

/// Line plot with axes and legend.
void render_curves(const CurveData& curves, const std::filesystem::path& png);

/// Reads <run_dir>/metrics.csv, writes summary.txt, loss_curves.png and
/// miou_curve.png into run_dir.
Summary write_report(const std::filesystem::path& run_dir);

}  // namespace confeti::report
