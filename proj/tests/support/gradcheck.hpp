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


// Central finite differences on randomly chosen scalar parameter entries.

#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace gradcheck {

struct Entry {
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct Report {
  std::vector<Entry> entries;
  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.rel_error);
    return m;
  }
};

/// Relative error with an absolute floor so entries whose true gradient is
/// zero compare against `floor` instead of against each other.
inline double rel_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// `loss` must rebuild its graph on every call and return a double scalar.
/// Entries are drawn uniformly over (parameter, element) pairs.
inline Report check(const std::function<torch::Tensor()>& loss, const std::vector<torch::Tensor>& params,
                    int count, std::uint64_t seed, double eps = 1e-6) {
  std::vector<std::pair<std::size_t, std::int64_t>> all;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::int64_t j = 0; j < params[i].numel(); ++j) all.emplace_back(i, j);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(count)));

  for (auto p : params) {
    if (p.grad().defined()) p.mutable_grad() = torch::Tensor();
  }
  loss().backward();
  Report report;
  for (const auto& [pi, idx] : all) {
    auto p = params[pi];
    const double analytic = p.grad().defined() ? p.grad().reshape({-1})[idx].item<double>() : 0.0;
    auto view = p.data().reshape({-1});
    const double orig = view[idx].item<double>();
    double plus = 0.0, minus = 0.0;
    {
      torch::NoGradGuard no_grad;
      view[idx].fill_(orig + eps);
      plus = loss().item<double>();
      view[idx].fill_(orig - eps);
      minus = loss().item<double>();
      view[idx].fill_(orig);
    }
    const double numeric = (plus - minus) / (2.0 * eps);
    report.entries.push_back({analytic, numeric, rel_error(analytic, numeric)});
  }
  return report;
}

}  // namespace gradcheck
