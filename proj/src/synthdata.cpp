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

#include "confeti/synthdata.hpp"

#include "confeti/image_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

namespace confeti::synth {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

// Base hue per class, in turns. Background is drawn desaturated.
constexpr std::array<double, kMaxClasses> kClassHue = {0.0, 0.0, 0.33, 0.66, 0.15};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::array<float, 3> hsv_to_rgb_scalar(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  double r = v, g = t, b = p;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

// Hard-edged inside tests evaluated at pixel centres.
struct Shape {
  std::int64_t cls = 0;
  double cx = 0, cy = 0, size = 0, angle = 0, half_width = 0;
  std::array<float, 3> color{};

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    switch (static_cast<ShapeClass>(cls)) {
      case ShapeClass::kCircle:
        return dx * dx + dy * dy <= size * size;
      case ShapeClass::kSquare:
        return std::abs(u) <= 0.85 * size && std::abs(v) <= 0.85 * size;
      case ShapeClass::kTriangle: {
        // Equilateral, circumradius 1.15 * size: three half-plane tests.
        const double r = 1.15 * size;
        for (int k = 0; k < 3; ++k) {
          const double a = angle + 2.0 * kPi * k / 3.0 + kPi;
          if (std::cos(a) * dx + std::sin(a) * dy > 0.5 * r) return false;
        }
        return true;
      }
      case ShapeClass::kStripe:
        return std::abs(u) <= size && std::abs(v) <= half_width;
      case ShapeClass::kBackground:
        break;
    }
    return false;
  }
};

torch::Tensor to_chw(const std::vector<float>& hwc, int h, int w) {
  return torch::from_blob(const_cast<float*>(hwc.data()), {h, w, 3}, torch::kFloat32)
      .permute({2, 0, 1})
      .contiguous()
      .clone();
}

}  // namespace

const char* class_name(std::int64_t class_id) {
  switch (class_id) {
    case 0: return "background";
    case 1: return "circle";
    case 2: return "square";
    case 3: return "triangle";
    case 4: return "stripe";
    default: return "unknown";
  }
}

void SceneSpec::validate() const {
  if (image_size < 16) throw ConfigError("image_size must be at least 16");
  if (num_classes < 2 || num_classes > kMaxClasses) {
    throw ConfigError("num_classes must be in [2, 5]");
  }
  if (min_shapes < 1 || max_shapes < min_shapes) {
    throw ConfigError("shapes_per_image range must satisfy 1 <= min <= max");
  }
}

void DomainShift::validate() const {
  if (!std::isfinite(hue_rotation)) throw ConfigError("hue_rotation must be finite");
  if (contrast_scale <= -1.0 || !std::isfinite(contrast_scale)) {
    throw ConfigError("contrast_scale must be > -1");
  }
  if (additive_noise_sigma < 0.0) throw ConfigError("additive_noise_sigma must be >= 0");
  if (texture_overlay_strength < 0.0 || texture_overlay_strength > 1.0) {
    throw ConfigError("texture_overlay_strength must be in [0, 1]");
  }
}

bool DomainShift::is_identity() const {
  return hue_rotation == 0.0 && contrast_scale == 0.0 && additive_noise_sigma == 0.0 &&
         texture_overlay_strength == 0.0;
}

void ImageBatch::validate() const {
  if (!data.defined() || data.dim() != 4 || data.size(1) != 3) {
    throw ShapeError("ImageBatch must be B x 3 x H x W");
  }
  if (!torch::isfinite(data).all().item<bool>()) throw ShapeError("ImageBatch has non-finite values");
}

void LabelMap::validate(int num_classes) const {
  if (!data.defined() || data.dim() != 3) throw ShapeError("LabelMap must be B x H x W");
  const auto valid = ((data >= 0) & (data < num_classes)) | (data == ignore_index);
  if (!valid.all().item<bool>()) throw ShapeError("LabelMap has values outside [0,K) and ignore");
}

torch::Tensor LabelMap::one_hot(int num_classes) const {
  const auto keep = data != ignore_index;
  const auto safe = torch::where(keep, data, torch::zeros_like(data));
  auto hot = torch::one_hot(safe, num_classes).permute({0, 3, 1, 2}).to(torch::kFloat32);
  return hot * keep.unsqueeze(1).to(torch::kFloat32);
}

std::uint64_t image_seed(std::uint64_t dataset_seed, int domain, std::int64_t index) {
  return splitmix64(splitmix64(dataset_seed ^ (0x51ED2701ULL * (domain + 1))) +
                    static_cast<std::uint64_t>(index));
}

Scene render_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const int n = spec.image_size;
  const double scale = n / 64.0;

  // Background: desaturated base colour plus a soft linear gradient.
  const double bg_hue = uniform(rng, 0.0, 1.0);
  const double bg_sat = uniform(rng, 0.0, 0.15);
  const double bg_val = uniform(rng, 0.35, 0.6);
  const double grad_angle = uniform(rng, 0.0, 2.0 * kPi);
  const double grad_amp = uniform(rng, 0.0, 0.1);
  const auto bg = hsv_to_rgb_scalar(bg_hue, bg_sat, bg_val);

  std::vector<float> img(static_cast<std::size_t>(n) * n * 3);
  std::vector<std::int64_t> lbl(static_cast<std::size_t>(n) * n, 0);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double t = ((x + 0.5) / n - 0.5) * std::cos(grad_angle) +
                       ((y + 0.5) / n - 0.5) * std::sin(grad_angle);
      for (int ch = 0; ch < 3; ++ch) {
        img[(static_cast<std::size_t>(y) * n + x) * 3 + ch] =
            static_cast<float>(bg[ch] + grad_amp * t);
      }
    }
  }

  std::uniform_int_distribution<int> count_dist(spec.min_shapes, spec.max_shapes);
  std::uniform_int_distribution<std::int64_t> class_dist(1, spec.num_classes - 1);
  const int count = count_dist(rng);
  std::vector<Shape> shapes;
  for (int i = 0; i < count; ++i) {
    Shape s;
    s.cls = class_dist(rng);
    s.angle = uniform(rng, 0.0, kPi);
    if (s.cls == static_cast<std::int64_t>(ShapeClass::kStripe)) {
      s.size = uniform(rng, 14.0, 26.0) * scale;
      s.half_width = uniform(rng, 2.0, 3.5) * scale;
    } else {
      s.size = uniform(rng, 6.0, 11.0) * scale;
    }
    const double margin = std::min(s.size, n / 4.0);
    s.cx = uniform(rng, margin, n - margin);
    s.cy = uniform(rng, margin, n - margin);
    const double hue = kClassHue[static_cast<std::size_t>(s.cls)] + uniform(rng, -0.04, 0.04);
    s.color = hsv_to_rgb_scalar(hue, uniform(rng, 0.55, 0.9), uniform(rng, 0.6, 0.95));
    shapes.push_back(s);
  }
  // Stripes are long and thin; paint them first so they do not hide blobs.
  std::stable_sort(shapes.begin(), shapes.end(), [](const Shape& a, const Shape& b) {
    const bool sa = a.cls == static_cast<std::int64_t>(ShapeClass::kStripe);
    const bool sb = b.cls == static_cast<std::int64_t>(ShapeClass::kStripe);
    return sa && !sb;
  });
  for (const auto& s : shapes) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (!s.contains(x + 0.5, y + 0.5)) continue;
        lbl[static_cast<std::size_t>(y) * n + x] = s.cls;
        for (int ch = 0; ch < 3; ++ch) img[(static_cast<std::size_t>(y) * n + x) * 3 + ch] = s.color[ch];
      }
    }
  }

  std::normal_distribution<float> sensor(0.0f, 0.02f);
  for (auto& v : img) v = std::clamp(v + sensor(rng), 0.0f, 1.0f);

  Scene scene;
  scene.image = to_chw(img, n, n);
  scene.label = torch::from_blob(lbl.data(), {n, n}, torch::kInt64).clone();
  return scene;
}

torch::Tensor apply_shift(const torch::Tensor& image, const DomainShift& shift,
                          std::uint64_t noise_seed) {
  shift.validate();
  auto out = image.clone();
  if (shift.hue_rotation != 0.0) {
    auto hsv = rgb_to_hsv(out, 0);
    auto h = hsv.select(0, 0);
    h.add_(shift.hue_rotation / 360.0);
    h.sub_(h.floor());
    out = hsv_to_rgb(hsv, 0);
  }
  if (shift.contrast_scale != 0.0) {
    const auto mean = out.mean();
    out = (out - mean) * (1.0 + shift.contrast_scale) + mean;
  }
  std::mt19937_64 rng(noise_seed);
  if (shift.texture_overlay_strength > 0.0) {
    // Two crossed sinusoidal gratings give a fabric-like grey texture.
    const auto h = out.size(1);
    const auto w = out.size(2);
    const double f1 = uniform(rng, 0.15, 0.35);
    const double f2 = uniform(rng, 0.15, 0.35);
    const double a1 = uniform(rng, 0.0, kPi);
    const double a2 = a1 + kPi / 2.0;
    const double p1 = uniform(rng, 0.0, 2.0 * kPi);
    const double p2 = uniform(rng, 0.0, 2.0 * kPi);
    auto ys = torch::arange(h, torch::kFloat32).unsqueeze(1).expand({h, w});
    auto xs = torch::arange(w, torch::kFloat32).unsqueeze(0).expand({h, w});
    auto g1 = torch::sin((xs * std::cos(a1) + ys * std::sin(a1)) * f1 * 2.0 * kPi + p1);
    auto g2 = torch::sin((xs * std::cos(a2) + ys * std::sin(a2)) * f2 * 2.0 * kPi + p2);
    auto texture = (0.5 + 0.25 * (g1 + g2)).unsqueeze(0);
    const double s = shift.texture_overlay_strength;
    out = out * (1.0 - s) + texture * s;
  }
  if (shift.additive_noise_sigma > 0.0) {
    std::normal_distribution<float> noise(0.0f, static_cast<float>(shift.additive_noise_sigma));
    auto contiguous = out.contiguous();
    auto* p = contiguous.data_ptr<float>();
    for (std::int64_t i = 0; i < contiguous.numel(); ++i) p[i] += noise(rng);
    out = contiguous;
  }
  return out.clamp(0.0, 1.0);
}

DomainPair generate_pair(const SceneSpec& spec, const DomainShift& shift, std::int64_t n_source,
                         std::int64_t n_target) {
  spec.validate();
  shift.validate();
  if (n_source < 1 || n_target < 1) throw ConfigError("dataset counts must be >= 1");

  DomainPair pair;
  pair.spec = spec;
  pair.shift = shift;
  std::vector<torch::Tensor> images;
  std::vector<torch::Tensor> labels;
  for (std::int64_t i = 0; i < n_source; ++i) {
    auto scene = render_scene(spec, image_seed(spec.seed, kSourceDomain, i));
    images.push_back(scene.image);
    labels.push_back(scene.label);
  }
  pair.source.images.data = torch::stack(images);
  pair.source.labels.data = torch::stack(labels);
  pair.target = generate_target(spec, shift, n_target, kTargetDomain);
  return pair;
}

TargetDomain generate_target(const SceneSpec& spec, const DomainShift& shift, std::int64_t count,
                             int domain) {
  spec.validate();
  shift.validate();
  if (count < 1) throw ConfigError("dataset counts must be >= 1");
  std::vector<torch::Tensor> images;
  std::vector<torch::Tensor> labels;
  for (std::int64_t i = 0; i < count; ++i) {
    const auto seed = image_seed(spec.seed, domain, i);
    auto scene = render_scene(spec, seed);
    images.push_back(apply_shift(scene.image, shift, splitmix64(seed ^ 0xC0FFEEULL)));
    labels.push_back(scene.label);
  }
  TargetDomain target;
  target.images.data = torch::stack(images);
  target.labels = EvalOnlyLabels(LabelMap{torch::stack(labels)});
  return target;
}

std::vector<double> class_frequencies(const LabelMap& labels, int num_classes) {
  auto flat = labels.data.flatten();
  flat = flat.masked_select(flat != labels.ignore_index);
  std::vector<double> freq(static_cast<std::size_t>(num_classes), 0.0);
  if (flat.numel() == 0) return freq;
  auto counts = torch::bincount(flat, {}, num_classes).to(torch::kFloat64);
  for (int c = 0; c < num_classes; ++c) {
    freq[static_cast<std::size_t>(c)] = counts[c].item<double>() / static_cast<double>(flat.numel());
  }
  return freq;
}

// ---------------------------------------------------------------------------
// Colour space helpers

torch::Tensor rgb_to_hsv(const torch::Tensor& rgb, std::int64_t dim) {
  auto r = rgb.select(dim, 0);
  auto g = rgb.select(dim, 1);
  auto b = rgb.select(dim, 2);
  auto maxc = torch::max(torch::max(r, g), b);
  auto minc = torch::min(torch::min(r, g), b);
  auto delta = maxc - minc;
  auto v = maxc;
  auto s = torch::where(maxc > 0, delta / maxc.clamp_min(1e-12), torch::zeros_like(maxc));
  auto safe = delta.clamp_min(1e-12);
  auto rc = (maxc - r) / safe;
  auto gc = (maxc - g) / safe;
  auto bc = (maxc - b) / safe;
  auto h = torch::where(maxc == r, bc - gc,
                        torch::where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc));
  h = torch::where(delta > 0, h / 6.0, torch::zeros_like(h));
  h = h - h.floor();
  return torch::stack({h, s, v}, dim);
}

torch::Tensor hsv_to_rgb(const torch::Tensor& hsv, std::int64_t dim) {
  auto h = hsv.select(dim, 0);
  auto s = hsv.select(dim, 1);
  auto v = hsv.select(dim, 2);
  auto hh = (h - h.floor()) * 6.0;
  auto sector = hh.floor().remainder(6.0);
  auto f = hh - hh.floor();
  auto p = v * (1.0 - s);
  auto q = v * (1.0 - s * f);
  auto t = v * (1.0 - s * (1.0 - f));
  auto pick = [&](const std::array<torch::Tensor, 6>& c) {
    auto out = c[5];
    for (int k = 4; k >= 0; --k) out = torch::where(sector == k, c[k], out);
    return out;
  };
  auto r = pick({v, q, p, p, t, v});
  auto g = pick({t, v, v, q, p, p});
  auto b = pick({p, p, t, v, v, q});
  return torch::stack({r, g, b}, dim);
}

// ---------------------------------------------------------------------------
// Augmentation

namespace {

torch::Tensor grayscale(const torch::Tensor& img) {
  return (0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]).unsqueeze(0);
}

torch::Tensor jitter(torch::Tensor img, double s, std::mt19937_64& rng) {
  const double brightness = uniform(rng, 1.0 - s, 1.0 + s);
  const double contrast = uniform(rng, 1.0 - s, 1.0 + s);
  const double saturation = uniform(rng, 1.0 - s, 1.0 + s);
  const double hue = uniform(rng, -s, s) * 0.5;
  img = (img * brightness).clamp(0.0, 1.0);
  const auto mean = grayscale(img).mean();
  img = (mean + (img - mean) * contrast).clamp(0.0, 1.0);
  const auto gray = grayscale(img);
  img = (gray + (img - gray) * saturation).clamp(0.0, 1.0);
  auto hsv = rgb_to_hsv(img, 0);
  auto h = hsv.select(0, 0);
  h.add_(hue);
  h.sub_(h.floor());
  return hsv_to_rgb(hsv, 0).clamp(0.0, 1.0);
}

}  // namespace

torch::Tensor gaussian_blur(const torch::Tensor& image, double sigma) {
  if (sigma <= 0.0) return image;
  const bool batched = image.dim() == 4;
  auto x = batched ? image : image.unsqueeze(0);
  const auto channels = x.size(1);
  const auto limit = std::min(x.size(2), x.size(3)) - 1;
  const auto radius = std::min<std::int64_t>(static_cast<std::int64_t>(std::ceil(3.0 * sigma)), limit);
  auto offsets = torch::arange(-radius, radius + 1, x.options());
  auto kernel = torch::exp(-(offsets * offsets) / (2.0 * sigma * sigma));
  kernel = kernel / kernel.sum();
  namespace F = torch::nn::functional;
  auto kx = kernel.view({1, 1, 1, -1}).repeat({channels, 1, 1, 1});
  auto ky = kernel.view({1, 1, -1, 1}).repeat({channels, 1, 1, 1});
  x = F::pad(x, F::PadFuncOptions({radius, radius, radius, radius}).mode(torch::kReflect));
  x = F::conv2d(x, kx, F::Conv2dFuncOptions().groups(channels));
  x = F::conv2d(x, ky, F::Conv2dFuncOptions().groups(channels));
  return batched ? x : x.squeeze(0);
}

ImageBatch augment(const ImageBatch& batch, const AugmentParams& params, std::mt19937_64& rng) {
  batch.validate();
  std::vector<torch::Tensor> out;
  out.reserve(static_cast<std::size_t>(batch.size()));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::int64_t b = 0; b < batch.size(); ++b) {
    auto img = batch.data[b];
    if (coin(rng) < params.jitter_probability && params.jitter_strength > 0.0) {
      img = jitter(img, params.jitter_strength, rng);
    }
    if (coin(rng) < params.blur_probability && params.blur_sigma_max > 0.0) {
      const double sigma = uniform(rng, params.blur_sigma_min, params.blur_sigma_max);
      img = gaussian_blur(img, sigma).clamp(0.0, 1.0);
    }
    out.push_back(img);
  }
  return ImageBatch{torch::stack(out)};
}

// ---------------------------------------------------------------------------
// ClassMix

MixResult classmix(const ImageBatch& source_image, const LabelMap& source_label,
                   const ImageBatch& target_image, const LabelMap& target_pseudolabel,
                   const std::vector<std::vector<std::int64_t>>& class_subsets) {
  const auto& s = source_image.data;
  const auto& t = target_image.data;
  if (s.sizes() != t.sizes()) throw ShapeError("classmix: source/target image shapes differ");
  if (source_label.data.sizes() != target_pseudolabel.data.sizes()) {
    throw ShapeError("classmix: source/target label shapes differ");
  }
  if (source_label.data.size(0) != s.size(0) || source_label.data.size(1) != s.size(2) ||
      source_label.data.size(2) != s.size(3)) {
    throw ShapeError("classmix: labels do not match image geometry");
  }
  if (static_cast<std::int64_t>(class_subsets.size()) != s.size(0)) {
    throw ShapeError("classmix: need one class subset per batch item");
  }

  std::vector<torch::Tensor> masks;
  for (std::size_t b = 0; b < class_subsets.size(); ++b) {
    auto lbl = source_label.data[static_cast<std::int64_t>(b)];
    auto m = torch::zeros_like(lbl, torch::kBool);
    for (auto c : class_subsets[b]) m |= lbl == c;
    masks.push_back(m);
  }
  MixResult out;
  out.mask = torch::stack(masks);
  out.image.data = torch::where(out.mask.unsqueeze(1), s, t);
  out.label.data = torch::where(out.mask, source_label.data, target_pseudolabel.data);
  out.label.ignore_index = source_label.ignore_index;
  return out;
}

std::vector<std::int64_t> sample_mix_classes(const torch::Tensor& label, std::mt19937_64& rng,
                                             std::int64_t ignore_index) {
  auto present = std::get<0>(torch::_unique(label.flatten(), /*sorted=*/true));
  std::vector<std::int64_t> classes;
  for (std::int64_t i = 0; i < present.numel(); ++i) {
    const auto c = present[i].item<std::int64_t>();
    if (c != ignore_index) classes.push_back(c);
  }
  const auto keep = (classes.size() + 1) / 2;
  std::shuffle(classes.begin(), classes.end(), rng);
  classes.resize(keep);
  std::sort(classes.begin(), classes.end());
  return classes;
}

// ---------------------------------------------------------------------------
// Disk format

namespace {

std::string index_name(std::int64_t i) {
  std::ostringstream os;
  os << std::setw(5) << std::setfill('0') << i << ".png";
  return os.str();
}

std::map<std::string, std::string> read_kv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

void write_dataset(const DomainPair& pair, const fs::path& dir) {
  fs::create_directories(dir);
  const auto n_source = pair.source.images.size();
  const auto n_target = pair.target.images.size();
  for (std::int64_t i = 0; i < n_source; ++i) {
    io::write_rgb_png(dir / "source" / "images" / index_name(i), pair.source.images.data[i]);
    io::write_label_png(dir / "source" / "labels" / index_name(i), pair.source.labels.data[i]);
  }
  const auto& target_labels = pair.target.labels.for_evaluation();
  for (std::int64_t i = 0; i < n_target; ++i) {
    io::write_rgb_png(dir / "target" / "images" / index_name(i), pair.target.images.data[i]);
    io::write_label_png(dir / "target" / "labels_eval_only" / index_name(i), target_labels.data[i]);
  }

  std::ofstream m(dir / "manifest.txt");
  m << std::setprecision(17);
  m << "seed=" << pair.spec.seed << "\n";
  m << "image_size=" << pair.spec.image_size << "\n";
  m << "num_classes=" << pair.spec.num_classes << "\n";
  m << "min_shapes=" << pair.spec.min_shapes << "\n";
  m << "max_shapes=" << pair.spec.max_shapes << "\n";
  m << "n_source=" << n_source << "\n";
  m << "n_target=" << n_target << "\n";
  m << "hue_rotation=" << pair.shift.hue_rotation << "\n";
  m << "contrast_scale=" << pair.shift.contrast_scale << "\n";
  m << "additive_noise_sigma=" << pair.shift.additive_noise_sigma << "\n";
  m << "texture_overlay_strength=" << pair.shift.texture_overlay_strength << "\n";
  m << "ignore_index=" << kIgnoreIndex << "\n";
  m << std::setprecision(6);
  const auto src_freq = class_frequencies(pair.source.labels, pair.spec.num_classes);
  const auto tgt_freq = class_frequencies(target_labels, pair.spec.num_classes);
  for (int c = 0; c < pair.spec.num_classes; ++c) {
    m << "source_freq_" << class_name(c) << "=" << src_freq[static_cast<std::size_t>(c)] << "\n";
  }
  for (int c = 0; c < pair.spec.num_classes; ++c) {
    m << "target_freq_" << class_name(c) << "=" << tgt_freq[static_cast<std::size_t>(c)] << "\n";
  }
}

DomainPair read_dataset(const fs::path& dir) {
  const auto kv = read_kv(dir / "manifest.txt");
  auto get = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("manifest is missing key " + key);
    return it->second;
  };
  DomainPair pair;
  pair.spec.seed = std::stoull(get("seed"));
  pair.spec.image_size = std::stoi(get("image_size"));
  pair.spec.num_classes = std::stoi(get("num_classes"));
  pair.spec.min_shapes = std::stoi(get("min_shapes"));
  pair.spec.max_shapes = std::stoi(get("max_shapes"));
  pair.shift.hue_rotation = std::stod(get("hue_rotation"));
  pair.shift.contrast_scale = std::stod(get("contrast_scale"));
  pair.shift.additive_noise_sigma = std::stod(get("additive_noise_sigma"));
  pair.shift.texture_overlay_strength = std::stod(get("texture_overlay_strength"));
  const auto n_source = std::stoll(get("n_source"));
  const auto n_target = std::stoll(get("n_target"));

  std::vector<torch::Tensor> imgs, lbls;
  for (std::int64_t i = 0; i < n_source; ++i) {
    imgs.push_back(io::read_rgb_png(dir / "source" / "images" / index_name(i)));
    lbls.push_back(io::read_label_png(dir / "source" / "labels" / index_name(i)));
  }
  pair.source.images.data = torch::stack(imgs);
  pair.source.labels.data = torch::stack(lbls);
  imgs.clear();
  lbls.clear();
  for (std::int64_t i = 0; i < n_target; ++i) {
    imgs.push_back(io::read_rgb_png(dir / "target" / "images" / index_name(i)));
    lbls.push_back(io::read_label_png(dir / "target" / "labels_eval_only" / index_name(i)));
  }
  pair.target.images.data = torch::stack(imgs);
  pair.target.labels = EvalOnlyLabels(LabelMap{torch::stack(lbls)});
  pair.source.labels.validate(pair.spec.num_classes);
  return pair;
}

}  // namespace confeti::synth
