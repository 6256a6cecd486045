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

// Flat key=value run configuration. Every field is addressable by name from
// a config file or a --set override.

#pragma once

#include "confeti/network.hpp"
#include "confeti/protobank.hpp"
#include "confeti/styler.hpp"
#include "confeti/synthdata.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace confeti {

struct TrainConfig {
  // Benchmark
  std::uint64_t seed = 0;
  int image_size = 64;
  int num_classes = 5;
  int min_shapes = 2;
  int max_shapes = 5;
  std::int64_t n_source = 1000;
  std::int64_t n_target = 1000;
  std::int64_t n_eval = 200;
  double hue_rotation = 60.0;
  double contrast_scale = -0.35;
  double noise_sigma = 0.06;
  double texture_strength = 0.35;

  // Augmentation of mixed images
  double jitter_probability = 0.2;
  double jitter_strength = 0.2;
  double blur_probability = 0.5;
  double blur_sigma_min = 0.15;
  double blur_sigma_max = 1.15;

  // Networks
  int feature_dim = 64;
  int projection_dim = 128;
  int base_width = 16;
  int style_width = 16;
  int patch_dim = 128;
  int num_patches = 64;

  // Self-training
  double beta = 0.999;
  bool ema_warmup = true;

  // Prototypes and contrast
  double gamma = 0.99;
  double t_pcl = 0.1;
  int top_n = 32;
  int pcl_samples = 256;
  double t_nce = 0.07;

  // Loss weights
  double lambda_pcl = 0.1;
  double lambda_cam = 0.1;
  double lambda_reg = 0.05;
  double lambda_style = 1.0;

  // Optimisation
  double lr = 6e-5;
  double weight_decay = 0.01;
  double style_lr = 2e-4;
  double warmup_fraction = 0.05;
  std::int64_t phase1_steps = 3000;
  std::int64_t phase2_steps = 3000;
  int batch_size = 4;
  std::int64_t eval_interval = 250;
  int threads = 1;

  // Ablation switches
  bool use_self_training = true;
  bool use_pcl = true;
  bool use_style = true;
  bool use_two_stage = true;
  bool offline_style = false;

  void validate() const;

  synth::SceneSpec scene_spec() const;
  synth::DomainShift domain_shift() const;
  synth::AugmentParams augment_params() const;
  net::NetworkConfig network_config() const;
  proto::BankConfig bank_config() const;
  style::StyleConfig style_config() const;
};

/// Named flag combinations: source_only, baseline, A, B, C, D, E, full.
/// Only the ablation switches are touched.
void apply_preset(TrainConfig& config, const std::string& name);
const std::vector<std::string>& preset_names();
/// The seven table rows, in table order.
const std::vector<std::string>& ablation_rows();

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

/// Every addressable key, in documentation order. The pseudo-key "preset"
/// is handled by resolve_config and is not part of this list.
const std::vector<ConfigKey>& config_keys();

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const TrainConfig& config, const std::string& key);

/// Parses "key=value" lines ('#' starts a comment, blank lines ignored).
/// Keeps insertion order; throws ConfigError on malformed lines.
std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text);
std::vector<std::pair<std::string, std::string>> read_kv_file(const std::filesystem::path& path);

/// Defaults <- file entries <- overrides. A "preset" entry (from either
/// source, the override wins) is applied before any explicit key.
TrainConfig resolve_config(const std::vector<std::pair<std::string, std::string>>& file_entries,
                           const std::vector<std::pair<std::string, std::string>>& overrides);

/// Full key=value echo of a resolved config (round-trips through
/// resolve_config).
std::string config_to_text(const TrainConfig& config);

/// Help listing: one line per key with its default and meaning.
std::string config_help();

}  // namespace confeti
