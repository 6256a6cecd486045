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

#include "confeti/protobank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace confeti::proto {

namespace F = torch::nn::functional;

void BankConfig::validate() const {
  if (num_classes < 2) throw ConfigError("bank needs at least two classes");
  if (dim < 1) throw ConfigError("prototype dim must be positive");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (top_n < 1) throw ConfigError("top_n must be >= 1");
}

PrototypeBank::PrototypeBank(const BankConfig& config) : config_(config) {
  config.validate();
  reset();
}

void PrototypeBank::reset() {
  prototypes_ = torch::zeros({config_.num_classes, config_.dim});
  initialized_.assign(static_cast<std::size_t>(config_.num_classes), false);
}

std::vector<std::int64_t> PrototypeBank::initialized_classes() const {
  std::vector<std::int64_t> out;
  for (std::size_t c = 0; c < initialized_.size(); ++c) {
    if (initialized_[c]) out.push_back(static_cast<std::int64_t>(c));
  }
  return out;
}

int PrototypeBank::fill_count() const {
  return static_cast<int>(std::count(initialized_.begin(), initialized_.end(), true));
}

torch::Tensor PrototypeBank::active_prototypes() const {
  const auto ids = initialized_classes();
  auto index = torch::tensor(ids, torch::kInt64);
  return prototypes_.index_select(0, index);
}

void PrototypeBank::update(const std::vector<std::optional<torch::Tensor>>& batch_prototypes) {
  if (static_cast<int>(batch_prototypes.size()) != config_.num_classes) {
    throw ShapeError("bank update needs one optional estimate per class");
  }
  torch::NoGradGuard no_grad;
  for (int c = 0; c < config_.num_classes; ++c) {
    const auto& estimate = batch_prototypes[static_cast<std::size_t>(c)];
    if (!estimate) continue;
    auto p_new = estimate->detach().to(prototypes_.scalar_type()).reshape({-1});
    if (p_new.size(0) != config_.dim) throw ShapeError("prototype estimate has wrong dim");
    if (!torch::isfinite(p_new).all().item<bool>()) continue;
    auto row = prototypes_[c];
    torch::Tensor mixed;
    if (!initialized_[static_cast<std::size_t>(c)]) {
      mixed = p_new;
    } else {
      mixed = row * config_.gamma + p_new * (1.0 - config_.gamma);
    }
    const double norm = mixed.norm().item<double>();
    if (!(norm > 0.0)) continue;
    row.copy_(mixed / norm);
    initialized_[static_cast<std::size_t>(c)] = true;
  }
}

torch::Tensor PrototypeBank::cosine_matrix() const {
  auto sim = torch::matmul(prototypes_, prototypes_.t());
  for (int c = 0; c < config_.num_classes; ++c) {
    if (!initialized_[static_cast<std::size_t>(c)]) {
      sim.index_put_({c}, std::numeric_limits<double>::quiet_NaN());
      sim.index_put_({torch::indexing::Slice(), c}, std::numeric_limits<double>::quiet_NaN());
    }
  }
  return sim;
}

void PrototypeBank::to(torch::ScalarType dtype) { prototypes_ = prototypes_.to(dtype); }

void PrototypeBank::save(const std::string& path) const {
  std::vector<std::int64_t> flags(initialized_.begin(), initialized_.end());
  torch::save(std::vector<torch::Tensor>{prototypes_, torch::tensor(flags, torch::kInt64)}, path);
}

void PrototypeBank::load(const std::string& path) {
  std::vector<torch::Tensor> tensors;
  torch::load(tensors, path);
  if (tensors.size() != 2 || tensors[0].sizes() != prototypes_.sizes()) {
    throw ShapeError("prototype bank checkpoint does not match configuration");
  }
  prototypes_ = tensors[0];
  for (int c = 0; c < config_.num_classes; ++c) {
    initialized_[static_cast<std::size_t>(c)] = tensors[1][c].item<std::int64_t>() != 0;
  }
}

// ---------------------------------------------------------------------------

torch::Tensor cam_bce_loss(const torch::Tensor& scores, const torch::Tensor& presence) {
  if (scores.sizes() != presence.sizes()) throw ShapeError("cam_bce_loss: scores/presence shape");
  constexpr double kEps = 1e-7;
  auto p = torch::sigmoid(scores).clamp(kEps, 1.0 - kEps);
  auto y = presence.to(scores.scalar_type());
  return -(y * torch::log(p) + (1.0 - y) * torch::log(1.0 - p)).mean();
}

torch::Tensor class_presence(const torch::Tensor& labels, int num_classes,
                             std::int64_t ignore_index) {
  auto out = torch::zeros({labels.size(0), num_classes}, torch::kFloat32);
  for (int c = 0; c < num_classes; ++c) {
    if (c == ignore_index) continue;
    out.select(1, c).copy_((labels == c).flatten(1).any(1).to(torch::kFloat32));
  }
  return out;
}

torch::Tensor downsample_labels(const torch::Tensor& labels, std::int64_t h, std::int64_t w) {
  if (labels.size(1) == h && labels.size(2) == w) return labels;
  auto as_float = labels.unsqueeze(1).to(torch::kFloat32);
  auto resized = F::interpolate(as_float, F::InterpolateFuncOptions()
                                              .size(std::vector<std::int64_t>{h, w})
                                              .mode(torch::kNearest));
  return resized.squeeze(1).to(torch::kInt64);
}

std::vector<std::optional<torch::Tensor>> estimate_prototypes(const torch::Tensor& cam,
                                                              const torch::Tensor& v,
                                                              const torch::Tensor& labels,
                                                              int top_n,
                                                              std::int64_t ignore_index) {
  if (cam.dim() != 4 || v.dim() != 4 || labels.dim() != 3) {
    throw ShapeError("estimate_prototypes expects B x K x h x w, B x P x h x w, B x h x w");
  }
  if (cam.size(0) != v.size(0) || cam.size(2) != v.size(2) || cam.size(3) != v.size(3) ||
      labels.size(0) != cam.size(0) || labels.size(1) != cam.size(2) ||
      labels.size(2) != cam.size(3)) {
    throw ShapeError("estimate_prototypes: spatial/batch dims disagree");
  }
  if (top_n < 1) throw ConfigError("top_n must be >= 1");
  torch::NoGradGuard no_grad;
  const auto k = cam.size(1);
  const auto p = v.size(1);
  // Pixel-major views: (B*h*w) x K, (B*h*w) x P, (B*h*w).
  auto cam_flat = cam.permute({0, 2, 3, 1}).reshape({-1, k});
  auto v_flat = v.permute({0, 2, 3, 1}).reshape({-1, p});
  auto lbl_flat = labels.reshape({-1});

  std::vector<std::optional<torch::Tensor>> out(static_cast<std::size_t>(k));
  for (std::int64_t c = 0; c < k; ++c) {
    if (c == ignore_index) continue;
    auto candidates = (lbl_flat == c).nonzero().reshape({-1});
    if (candidates.numel() == 0) continue;
    auto weights = cam_flat.index_select(0, candidates).select(1, c);
    const auto keep = std::min<std::int64_t>(top_n, candidates.numel());
    auto [top_w, top_idx] = weights.topk(keep, 0, /*largest=*/true, /*sorted=*/true);
    const double total = top_w.sum().item<double>();
    if (!(total > 0.0)) continue;
    auto feats = v_flat.index_select(0, candidates.index_select(0, top_idx));
    out[static_cast<std::size_t>(c)] = (top_w.unsqueeze(1) * feats).sum(0) / top_w.sum();
  }
  return out;
}

torch::Tensor pcl_likelihood(const torch::Tensor& v, const PrototypeBank& bank) {
  if (bank.fill_count() < 2) throw ConfigError("pcl_likelihood needs >= 2 initialized prototypes");
  auto protos = bank.active_prototypes().to(v.scalar_type());
  auto logits = torch::matmul(v, protos.t()) / bank.config().temperature;
  return torch::softmax(logits, -1);
}

SampledPixelSet sample_pixels(const torch::Tensor& v, const torch::Tensor& labels, int n,
                              std::mt19937_64& rng, std::int64_t ignore_index) {
  if (v.dim() != 4 || labels.dim() != 3 || v.size(0) != labels.size(0) ||
      v.size(2) != labels.size(1) || v.size(3) != labels.size(2)) {
    throw ShapeError("sample_pixels: features B x P x h x w and labels B x h x w disagree");
  }
  const auto p = v.size(1);
  auto v_flat = v.permute({0, 2, 3, 1}).reshape({-1, p});
  auto lbl_flat = labels.reshape({-1}).contiguous();

  // Bucket pixel indices by class (deterministic order).
  std::vector<std::pair<std::int64_t, std::vector<std::int64_t>>> buckets;
  {
    const auto* data = lbl_flat.data_ptr<std::int64_t>();
    std::vector<std::vector<std::int64_t>> by_class;
    for (std::int64_t i = 0; i < lbl_flat.numel(); ++i) {
      const auto c = data[i];
      if (c == ignore_index || c < 0) continue;
      if (static_cast<std::size_t>(c) >= by_class.size()) by_class.resize(static_cast<std::size_t>(c) + 1);
      by_class[static_cast<std::size_t>(c)].push_back(i);
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      if (!by_class[c].empty()) buckets.emplace_back(static_cast<std::int64_t>(c), std::move(by_class[c]));
    }
  }
  std::vector<std::int64_t> picked;
  std::vector<std::int64_t> picked_labels;
  if (!buckets.empty() && n > 0) {
    const auto per_class = static_cast<std::size_t>(n) / buckets.size();
    auto remainder = static_cast<std::size_t>(n) % buckets.size();
    for (auto& [cls, idx] : buckets) {
      auto quota = per_class + (remainder > 0 ? 1 : 0);
      if (remainder > 0) --remainder;
      quota = std::min(quota, idx.size());
      // Partial Fisher-Yates: first `quota` entries become the sample.
      for (std::size_t i = 0; i < quota; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
        picked.push_back(idx[i]);
        picked_labels.push_back(cls);
      }
    }
  }
  SampledPixelSet out;
  auto index = torch::tensor(picked, torch::kInt64);
  out.features = v_flat.index_select(0, index);
  out.labels = torch::tensor(picked_labels, torch::kInt64);
  return out;
}

LossTerm pcl_loss(const SampledPixelSet& samples, const PrototypeBank& bank) {
  const auto options = samples.features.options();
  if (bank.fill_count() < 2 || samples.features.size(0) == 0) return skipped_term(options);
  const auto active = bank.initialized_classes();
  // Map class id -> column in the likelihood; -1 for uninitialized.
  std::vector<std::int64_t> column(static_cast<std::size_t>(bank.config().num_classes), -1);
  for (std::size_t i = 0; i < active.size(); ++i) column[static_cast<std::size_t>(active[i])] = static_cast<std::int64_t>(i);

  std::vector<std::int64_t> rows;
  std::vector<std::int64_t> targets;
  auto lbl = samples.labels.contiguous();
  const auto* data = lbl.data_ptr<std::int64_t>();
  for (std::int64_t i = 0; i < lbl.numel(); ++i) {
    const auto c = data[i];
    if (c < 0 || c >= bank.config().num_classes) continue;
    const auto col = column[static_cast<std::size_t>(c)];
    if (col < 0) continue;
    rows.push_back(i);
    targets.push_back(col);
  }
  if (rows.empty()) return skipped_term(options);
  auto v = samples.features.index_select(0, torch::tensor(rows, torch::kInt64));
  auto protos = bank.active_prototypes().to(v.scalar_type());
  auto logits = torch::matmul(v, protos.t()) / bank.config().temperature;
  auto log_p = torch::log_softmax(logits, 1);
  auto picked = log_p.gather(1, torch::tensor(targets, torch::kInt64).unsqueeze(1));
  return {-picked.mean(), false};
}

LossTerm diversity_reg_from_mean(const torch::Tensor& mean_feature, const PrototypeBank& bank) {
  const auto k_active = bank.fill_count();
  if (k_active < 2) return skipped_term(mean_feature.options());
  auto protos = bank.active_prototypes().to(mean_feature.scalar_type());
  auto logits = torch::matmul(protos, mean_feature.reshape({-1})) / bank.config().temperature;
  auto log_q = torch::log_softmax(logits, 0);
  auto value = (log_q.exp() * log_q).sum() / std::log(static_cast<double>(k_active));
  return {value, false};
}

LossTerm diversity_reg(const torch::Tensor& v, const PrototypeBank& bank) {
  if (v.dim() != 4) throw ShapeError("diversity_reg expects B x P x h x w");
  auto mean = v.mean({0, 2, 3});
  mean = mean / mean.norm().clamp_min(1e-12);
  return diversity_reg_from_mean(mean, bank);
}

}  // namespace confeti::proto
