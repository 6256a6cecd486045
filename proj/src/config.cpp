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

#include "confeti/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace confeti {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* begin = text.data();
  const auto* end = text.data() + text.size();
  auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("invalid value '" + text + "' for key " + key);
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("invalid boolean '" + text + "' for key " + key);
}

template <typename T>
ConfigKey make_key(std::string name, T TrainConfig::*field, std::string help) {
  ConfigKey key;
  key.name = name;
  key.help = std::move(help);
  key.get = [field](const TrainConfig& c) {
    if constexpr (std::is_same_v<T, bool>) {
      return std::string(c.*field ? "true" : "false");
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(c.*field);
    } else {
      return std::to_string(c.*field);
    }
  };
  key.set = [field, name](TrainConfig& c, const std::string& text) {
    if constexpr (std::is_same_v<T, bool>) {
      c.*field = parse_bool(name, text);
    } else {
      c.*field = parse_number<T>(name, text);
    }
  };
  return key;
}

std::vector<ConfigKey> build_keys() {
  using C = TrainConfig;
  return {
      make_key("seed", &C::seed, "master seed for data, initialisation and sampling"),
      make_key("image_size", &C::image_size, "square image side of the shapes benchmark (pixels)"),
      make_key("num_classes", &C::num_classes, "number of classes K (background + shapes, 2..5)"),
      make_key("min_shapes", &C::min_shapes, "minimum shapes per scene"),
      make_key("max_shapes", &C::max_shapes, "maximum shapes per scene"),
      make_key("n_source", &C::n_source, "labelled source images"),
      make_key("n_target", &C::n_target, "unlabelled target training images"),
      make_key("n_eval", &C::n_eval, "held-out labelled target images for evaluation"),
      make_key("hue_rotation", &C::hue_rotation, "target shift: hue rotation (degrees)"),
      make_key("contrast_scale", &C::contrast_scale, "target shift: relative contrast change (0 = none)"),
      make_key("noise_sigma", &C::noise_sigma, "target shift: additive Gaussian noise sigma"),
      make_key("texture_strength", &C::texture_strength, "target shift: texture overlay blend weight"),
      make_key("jitter_probability", &C::jitter_probability, "mixed-image colour jitter probability"),
      make_key("jitter_strength", &C::jitter_strength, "colour jitter range"),
      make_key("blur_probability", &C::blur_probability, "mixed-image Gaussian blur probability"),
      make_key("blur_sigma_min", &C::blur_sigma_min, "lower bound of the blur sigma"),
      make_key("blur_sigma_max", &C::blur_sigma_max, "upper bound of the blur sigma"),
      make_key("feature_dim", &C::feature_dim, "backbone feature channels D (CAM weight is K x D)"),
      make_key("projection_dim", &C::projection_dim, "projection/prototype dimension P"),
      make_key("base_width", &C::base_width, "first encoder block width of the segmenter"),
      make_key("style_width", &C::style_width, "first block width of generator and discriminator"),
      make_key("patch_dim", &C::patch_dim, "patch projection head output width"),
      make_key("num_patches", &C::num_patches, "sampled patch locations per encoder tap (PatchNCE)"),
      make_key("beta", &C::beta, "teacher EMA momentum beta"),
      make_key("ema_warmup", &C::ema_warmup, "use min(beta, 1 - 1/(t+1)) during the first steps"),
      make_key("gamma", &C::gamma, "prototype EMA momentum gamma"),
      make_key("t_pcl", &C::t_pcl, "temperature T of the pixel-to-prototype likelihood, PCL and diversity term"),
      make_key("top_n", &C::top_n, "highest-CAM pixels per class used for a batch prototype"),
      make_key("pcl_samples", &C::pcl_samples, "sampled pixels N in the prototypical contrastive loss"),
      make_key("t_nce", &C::t_nce, "temperature T of the PatchNCE loss"),
      make_key("lambda_pcl", &C::lambda_pcl, "weight of the prototypical contrastive loss"),
      make_key("lambda_cam", &C::lambda_cam, "weight of the multi-label CAM classification loss"),
      make_key("lambda_reg", &C::lambda_reg, "weight of the diversity regulariser"),
      make_key("lambda_style", &C::lambda_style, "weight of the style terms (GAN + PatchNCE + semantic consistency)"),
      make_key("lr", &C::lr, "segmentation-side learning rate (AdamW)"),
      make_key("weight_decay", &C::weight_decay, "decoupled weight decay, all groups"),
      make_key("style_lr", &C::style_lr, "generator/discriminator learning rate"),
      make_key("warmup_fraction", &C::warmup_fraction, "fraction of steps with linear lr warm-up"),
      make_key("phase1_steps", &C::phase1_steps, "steps of the joint phase (or offline style pre-training)"),
      make_key("phase2_steps", &C::phase2_steps, "steps of the second round / post-offline segmentation"),
      make_key("batch_size", &C::batch_size, "images per domain per step"),
      make_key("eval_interval", &C::eval_interval, "steps between evaluations and metrics rows"),
      make_key("threads", &C::threads, "intra-op threads (1 = bit-reproducible)"),
      make_key("use_self_training", &C::use_self_training, "train on mixed target images with pseudo-labels"),
      make_key("use_pcl", &C::use_pcl, "feature alignment via prototypical contrast"),
      make_key("use_style", &C::use_style, "pixel alignment via the stylizer"),
      make_key("use_two_stage", &C::use_two_stage, "retrain the segmenter from scratch with a frozen stylizer"),
      make_key("offline_style", &C::offline_style, "pre-train the stylizer alone, then freeze it"),
  };
}

}  // namespace

void TrainConfig::validate() const {
  scene_spec().validate();
  domain_shift().validate();
  network_config().validate();
  bank_config().validate();
  style_config().validate();
  if (n_source < 1 || n_target < 1 || n_eval < 1) throw ConfigError("dataset counts must be >= 1");
  if (lambda_pcl < 0 || lambda_cam < 0 || lambda_reg < 0 || lambda_style < 0) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (beta < 0 || beta > 1) throw ConfigError("beta must be in [0, 1]");
  if (!(t_nce > 0)) throw ConfigError("t_nce must be positive");
  if (pcl_samples < 0) throw ConfigError("pcl_samples must be >= 0");
  if (lr < 0 || style_lr < 0 || weight_decay < 0) throw ConfigError("learning rates must be >= 0");
  if (warmup_fraction < 0 || warmup_fraction > 1) throw ConfigError("warmup_fraction must be in [0, 1]");
  if (phase1_steps < 0 || phase2_steps < 0) throw ConfigError("phase step counts must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (jitter_probability < 0 || jitter_probability > 1 || blur_probability < 0 || blur_probability > 1) {
    throw ConfigError("augmentation probabilities must be in [0, 1]");
  }
  if (blur_sigma_min < 0 || blur_sigma_max < blur_sigma_min) throw ConfigError("invalid blur sigma range");
  if (offline_style && !use_style) throw ConfigError("offline_style requires use_style");
}

synth::SceneSpec TrainConfig::scene_spec() const {
  synth::SceneSpec s;
  s.image_size = image_size;
  s.num_classes = num_classes;
  s.min_shapes = min_shapes;
  s.max_shapes = max_shapes;
  s.seed = seed;
  return s;
}

synth::DomainShift TrainConfig::domain_shift() const {
  return {hue_rotation, contrast_scale, noise_sigma, texture_strength};
}

synth::AugmentParams TrainConfig::augment_params() const {
  return {jitter_probability, jitter_strength, blur_probability, blur_sigma_min, blur_sigma_max};
}

net::NetworkConfig TrainConfig::network_config() const {
  net::NetworkConfig n;
  n.num_classes = num_classes;
  n.feature_dim = feature_dim;
  n.projection_dim = projection_dim;
  n.base_width = base_width;
  return n;
}

proto::BankConfig TrainConfig::bank_config() const {
  return {num_classes, projection_dim, gamma, t_pcl, top_n};
}

style::StyleConfig TrainConfig::style_config() const {
  style::StyleConfig s;
  s.base_width = style_width;
  s.patch_dim = patch_dim;
  s.num_patches = num_patches;
  s.nce_temperature = t_nce;
  return s;
}

void apply_preset(TrainConfig& c, const std::string& name) {
  auto flags = [&c](bool st, bool pcl, bool style, bool two_stage, bool offline) {
    c.use_self_training = st;
    c.use_pcl = pcl;
    c.use_style = style;
    c.use_two_stage = two_stage;
    c.offline_style = offline;
  };
  if (name == "source_only") flags(false, false, false, false, false);
  else if (name == "baseline") flags(true, false, false, false, false);
  else if (name == "A") flags(true, false, true, false, true);
  else if (name == "B") flags(true, true, false, false, false);
  else if (name == "C") flags(true, true, true, false, true);
  else if (name == "D") flags(true, false, true, false, false);
  else if (name == "E") flags(true, false, true, true, false);
  else if (name == "full") flags(true, true, true, true, false);
  else throw ConfigError("unknown preset " + name);
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"source_only", "baseline", "A", "B",
                                                 "C",           "D",        "E", "full"};
  return names;
}

const std::vector<std::string>& ablation_rows() {
  static const std::vector<std::string> rows = {"baseline", "A", "B", "C", "D", "E", "full"};
  return rows;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key " + key);
}

std::string get_config_value(const TrainConfig& config, const std::string& key) {
  for (const auto& k : config_keys()) {
    if (k.name == key) return k.get(config);
  }
  throw ConfigError("unknown config key " + key);
}

std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_kv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_kv_text(ss.str());
}

TrainConfig resolve_config(const std::vector<std::pair<std::string, std::string>>& file_entries,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  TrainConfig config;
  std::string preset;
  for (const auto* entries : {&file_entries, &overrides}) {
    for (const auto& [k, v] : *entries) {
      if (k == "preset") preset = v;
    }
  }
  if (!preset.empty()) apply_preset(config, preset);
  for (const auto* entries : {&file_entries, &overrides}) {
    for (const auto& [k, v] : *entries) {
      if (k != "preset") set_config_value(config, k, v);
    }
  }
  config.validate();
  return config;
}

std::string config_to_text(const TrainConfig& config) {
  std::ostringstream os;
  for (const auto& k : config_keys()) os << k.name << "=" << k.get(config) << "\n";
  return os.str();
}

std::string config_help() {
  const TrainConfig defaults;
  std::ostringstream os;
  std::size_t width = 0;
  for (const auto& k : config_keys()) width = std::max(width, k.name.size());
  os << "Config keys (file lines or --set key=value), default in brackets:\n";
  os << "  " << std::string("preset") << std::string(width - 6 + 2, ' ')
     << "[none] flag bundle: source_only, baseline, A, B, C, D, E, full\n";
  for (const auto& k : config_keys()) {
    os << "  " << k.name << std::string(width - k.name.size() + 2, ' ') << "[" << k.get(defaults)
       << "] " << k.help << "\n";
  }
  return os.str();
}

}  // namespace confeti
