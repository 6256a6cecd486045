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


#include "confeti/report.hpp"

#include "confeti/common.hpp"
#include "confeti/metrics.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace confeti::report {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
  if (cell == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("metrics CSV line " + std::to_string(line_no) + ": bad value '" + cell + "'");
  }
}

std::vector<std::string> required_columns() {
  std::vector<std::string> cols = {"step", "phase"};
  for (const auto* name : kLossNames) cols.push_back(std::string("loss_") + name);
  cols.push_back("miou");
  return cols;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

const std::vector<cv::Scalar>& palette() {
  static const std::vector<cv::Scalar> colours = {
      {180, 119, 31}, {14, 127, 255}, {44, 160, 44},  {40, 39, 214},  {189, 103, 148},
      {75, 86, 140},  {194, 119, 227}, {127, 127, 127}, {34, 189, 188}, {207, 190, 23}};
  return colours;
}

}  // namespace

std::size_t MetricsTable::column(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ConfigError("metrics CSV is missing column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

bool MetricsTable::has_column(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

std::vector<double> MetricsTable::values(const std::string& name) const {
  const auto c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[c]);
  return out;
}

MetricsTable parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  MetricsTable t;
  if (!std::getline(in, line) || line.empty()) throw ConfigError("metrics CSV is empty");
  t.columns = split(line);
  for (const auto& col : required_columns()) t.column(col);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.columns.size()) {
      throw ConfigError("metrics CSV line " + std::to_string(line_no) + ": expected " +
                        std::to_string(t.columns.size()) + " fields, got " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_cell(c, line_no));
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw ConfigError("metrics CSV has no data rows");
  return t;
}

MetricsTable read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read metrics CSV " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_metrics_csv(ss.str());
}

CurveData loss_curves(const MetricsTable& table) {
  CurveData d;
  d.title = "loss terms";
  d.x = table.values("step");
  for (const auto* name : kLossNames) {
    const std::string col = std::string("loss_") + name;
    d.series.emplace_back(name, table.values(col));
  }
  return d;
}

CurveData miou_curve(const MetricsTable& table) {
  CurveData d;
  d.title = "target mIoU";
  const auto step = table.column("step");
  const auto phase = table.column("phase");
  const auto miou = table.column("miou");
  std::vector<double> y;
  for (const auto& r : table.rows) {
    if (r[phase] == 0.0) continue;
    d.x.push_back(r[step]);
    y.push_back(r[miou]);
  }
  d.series.emplace_back("miou", std::move(y));
  return d;
}

Summary summarize(const MetricsTable& table) {
  Summary s;
  s.rows = table.rows.size();
  const auto step = table.column("step");
  const auto phase = table.column("phase");
  const auto miou = table.column("miou");
  const std::vector<double>* last = nullptr;
  bool have_best = false;
  for (const auto& r : table.rows) {
    if (r[phase] == 0.0) continue;
    last = &r;
    if (!have_best || r[miou] > s.best_miou) {
      s.best_miou = r[miou];
      s.best_step = static_cast<std::int64_t>(r[step]);
      have_best = true;
    }
  }
  if (last == nullptr) {
    s.final_step = static_cast<std::int64_t>(table.rows.back()[step]);
    return s;
  }
  s.final_step = static_cast<std::int64_t>((*last)[step]);
  s.final_miou = (*last)[miou];
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (table.columns[c].rfind("iou_", 0) == 0) {
      s.final_iou.emplace_back(table.columns[c].substr(4), (*last)[c]);
    }
  }
  return s;
}

std::string Summary::text() const {
  std::ostringstream os;
  os << "rows=" << rows << "\n";
  os << "final_step=" << final_step << "\n";
  os << "final_miou=" << fmt(final_miou) << "\n";
  os << "best_step=" << best_step << "\n";
  os << "best_miou=" << fmt(best_miou) << "\n";
  for (const auto& [name, v] : final_iou) {
    os << "final_iou_" << name << "=" << (std::isnan(v) ? std::string("nan") : fmt(v)) << "\n";
  }
  return os.str();
}

void render_curves(const CurveData& curves, const fs::path& png) {
  constexpr int kW = 800, kH = 480, kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;
  cv::Mat img(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255));
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (double x : curves.x) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
  }
  for (const auto& [name, ys] : curves.series) {
    for (double y : ys) {
      if (!std::isfinite(y)) continue;
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0;
  if (!std::isfinite(y0)) y0 = 0.0, y1 = 1.0;
  if (x1 - x0 < 1e-12) x1 = x0 + 1.0;
  if (y1 - y0 < 1e-12) y1 = y0 + 1.0;
  const int pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto to_px = [&](double x, double y) {
    return cv::Point(kLeft + static_cast<int>(std::lround((x - x0) / (x1 - x0) * pw)),
                     kTop + ph - static_cast<int>(std::lround((y - y0) / (y1 - y0) * ph)));
  };
  const cv::Scalar black(0, 0, 0);
  cv::rectangle(img, cv::Point(kLeft, kTop), cv::Point(kLeft + pw, kTop + ph), black, 1);
  cv::putText(img, curves.title, cv::Point(kLeft, kTop - 12), cv::FONT_HERSHEY_SIMPLEX, 0.6, black, 1);
  cv::putText(img, "step", cv::Point(kLeft + pw / 2 - 15, kH - 10), cv::FONT_HERSHEY_SIMPLEX, 0.5, black, 1);
  for (int i = 0; i <= 4; ++i) {
    const double fy = y0 + (y1 - y0) * i / 4.0;
    const double fx = x0 + (x1 - x0) * i / 4.0;
    auto py = to_px(x0, fy);
    auto px = to_px(fx, y0);
    std::ostringstream ly, lx;
    ly.precision(3);
    ly << fy;
    lx << static_cast<long long>(std::llround(fx));
    cv::putText(img, ly.str(), cv::Point(5, py.y + 4), cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1);
    cv::putText(img, lx.str(), cv::Point(px.x - 10, kTop + ph + 18), cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1);
  }
  for (std::size_t s = 0; s < curves.series.size(); ++s) {
    const auto& [name, ys] = curves.series[s];
    const auto colour = palette()[s % palette().size()];
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < ys.size() && i < curves.x.size(); ++i) {
      if (!std::isfinite(ys[i])) continue;
      pts.push_back(to_px(curves.x[i], ys[i]));
    }
    if (pts.size() == 1) cv::circle(img, pts[0], 3, colour, cv::FILLED);
    if (pts.size() > 1) cv::polylines(img, pts, false, colour, 2, cv::LINE_AA);
    const int ly = kTop + 10 + static_cast<int>(s) * 18;
    cv::line(img, cv::Point(kW - kRight + 10, ly), cv::Point(kW - kRight + 30, ly), colour, 2);
    cv::putText(img, name, cv::Point(kW - kRight + 35, ly + 4), cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1);
  }
  if (png.has_parent_path()) fs::create_directories(png.parent_path());
  if (!cv::imwrite(png.string(), img)) throw std::runtime_error("cannot write " + png.string());
}

Summary write_report(const fs::path& run_dir) {
  const auto table = read_metrics_csv(run_dir / "metrics.csv");
  auto summary = summarize(table);
  std::ofstream(run_dir / "summary.txt") << summary.text();
  render_curves(loss_curves(table), run_dir / "loss_curves.png");
  render_curves(miou_curve(table), run_dir / "miou_curve.png");
  return summary;
}

}  // namespace confeti::report
