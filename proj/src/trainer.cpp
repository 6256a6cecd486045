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

#include "confeti/trainer.hpp"

#include "confeti/image_io.hpp"
#include "confeti/module_utils.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace confeti::train {

namespace fs = std::filesystem;

namespace {

std::string index_name(std::int64_t i) {
  std::ostringstream os;
  os << std::setw(5) << std::setfill('0') << i << ".png";
  return os.str();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

torch::Tensor gather(const torch::Tensor& data, const std::vector<std::int64_t>& idx) {
  return data.index_select(0, torch::tensor(idx, torch::kInt64));
}

void set_lr(torch::optim::AdamW& opt, double lr) {
  for (auto& group : opt.param_groups()) {
    static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
  }
}

std::unique_ptr<torch::optim::AdamW> make_adamw(std::vector<torch::Tensor> params, double lr,
                                                double weight_decay) {
  return std::make_unique<torch::optim::AdamW>(
      std::move(params), torch::optim::AdamWOptions(lr).weight_decay(weight_decay));
}

double warmup_factor(const TrainingState& s) {
  const auto warm = static_cast<std::int64_t>(std::ceil(s.config.warmup_fraction * static_cast<double>(s.phase_length)));
  if (warm <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(s.phase_step + 1) / static_cast<double>(warm));
}

double ema_beta(const TrainingState& s) {
  if (!s.config.ema_warmup) return s.config.beta;
  return std::min(s.config.beta, 1.0 - 1.0 / static_cast<double>(s.phase_step + 1));
}

void check_finite(const TrainingState& s, const StepGraph& g) {
  const LossValues v = loss_values(g);
  bool ok = true;
  for (double x : v.values) ok = ok && std::isfinite(x);
  if (ok) return;
  std::ostringstream os;
  os << "non-finite loss at step " << s.global_step << " (phase " << s.phase << ", phase step "
     << s.phase_step << "):";
  for (std::size_t i = 0; i < kLossNames.size(); ++i) os << " " << kLossNames[i] << "=" << v.values[i];
  os << " bank_fill=" << (s.bank ? s.bank->fill_count() : 0);
  const std::string msg = os.str();
  if (s.diagnostics_dir) {
    fs::create_directories(*s.diagnostics_dir);
    std::ofstream out(*s.diagnostics_dir / "nan_snapshot.txt");
    out << msg << "\n" << config_to_text(s.config);
  }
  throw TrainingError(msg);
}

void write_checkpoints(const fs::path& dir, const TrainConfig& cfg, const net::SegModel& student,
                       const net::SegModel& teacher, const style::StyleModule& style,
                       const proto::PrototypeBank* bank) {
  fs::create_directories(dir);
  save_module(*student, dir / "student.pt");
  save_module(*teacher, dir / "teacher.pt");
  if (style) save_module(*style, dir / "style.pt");
  if (bank) bank->save((dir / "bank.pt").string());
  std::ofstream(dir / "config.cfg") << config_to_text(cfg);
  std::ofstream(dir / "arch.txt") << cfg.network_config().describe() << "\n";
}

}  // namespace

Benchmark make_benchmark(const TrainConfig& config) {
  config.validate();
  Benchmark b;
  const auto spec = config.scene_spec();
  const auto shift = config.domain_shift();
  b.data = synth::generate_pair(spec, shift, config.n_source, config.n_target);
  b.eval = synth::generate_target(spec, shift, config.n_eval, synth::kHeldOutDomain);
  return b;
}

void write_benchmark(const Benchmark& bench, const fs::path& dir) {
  synth::write_dataset(bench.data, dir);
  const auto& labels = bench.eval.labels.for_evaluation();
  const auto n = bench.eval.images.data.size(0);
  for (std::int64_t i = 0; i < n; ++i) {
    io::write_rgb_png(dir / "eval" / "images" / index_name(i), bench.eval.images.data[i]);
    io::write_label_png(dir / "eval" / "labels_eval_only" / index_name(i), labels.data[i]);
  }
  std::ofstream(dir / "eval" / "count.txt") << n << "\n";
}

Benchmark read_benchmark(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.txt")) throw ConfigError("no dataset manifest in " + dir.string());
  Benchmark b;
  b.data = synth::read_dataset(dir);
  std::ifstream in(dir / "eval" / "count.txt");
  std::int64_t n = 0;
  if (!(in >> n) || n < 1) throw ConfigError("dataset has no evaluation split in " + (dir / "eval").string());
  std::vector<torch::Tensor> imgs, lbls;
  for (std::int64_t i = 0; i < n; ++i) {
    imgs.push_back(io::read_rgb_png(dir / "eval" / "images" / index_name(i)));
    lbls.push_back(io::read_label_png(dir / "eval" / "labels_eval_only" / index_name(i)));
  }
  b.eval.images.data = torch::stack(imgs);
  b.eval.labels = synth::EvalOnlyLabels(synth::LabelMap{torch::stack(lbls)});
  return b;
}

EvalResult evaluate(net::SegModel& model, const synth::TargetDomain& eval_set, int num_classes) {
  if (!eval_set.images.data.defined() || eval_set.images.data.size(0) == 0) {
    throw ConfigError("evaluation set is empty");
  }
  auto pred = net::predict(model, eval_set.images.data);
  const auto& gt = eval_set.labels.for_evaluation();
  return evaluate_predictions(pred, gt.data, num_classes, gt.ignore_index);
}

std::vector<std::int64_t> IndexSampler::next(int count, std::mt19937_64& rng) {
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(count));
  while (static_cast<int>(out.size()) < count) {
    if (pos_ >= order_.size()) {
      order_.resize(static_cast<std::size_t>(size_));
      std::iota(order_.begin(), order_.end(), 0);
      std::shuffle(order_.begin(), order_.end(), rng);
      pos_ = 0;
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

bool TrainingState::style_active() const {
  if (!style) return false;
  return style_trainable ? config.lambda_style > 0.0 : true;
}

bool TrainingState::bank_active() const {
  if (!config.use_self_training) return false;
  const bool pcl_side = config.use_pcl && (config.lambda_pcl > 0.0 || config.lambda_reg > 0.0);
  const bool sc_side = style_trainable && style_active();
  return pcl_side || sc_side;
}

style::StyleModule make_style_module(const TrainConfig& config) {
  torch::manual_seed(config.seed + 1);
  return style::StyleModule(config.style_config(), config.projection_dim);
}

TrainingState init_state(const TrainConfig& config, int phase, style::StyleModule style,
                         bool style_trainable, std::int64_t phase_length) {
  config.validate();
  TrainingState s;
  s.config = config;
  s.phase = phase;
  torch::manual_seed(config.seed);
  s.pair = selftrain::TeacherStudentPair::create(config.network_config(), config.beta);
  s.bank = std::make_unique<proto::PrototypeBank>(config.bank_config());
  s.style = style;
  s.style_trainable = style_trainable && static_cast<bool>(style);
  s.phase_length = phase_length;

  s.seg_optimizer = make_adamw(s.pair.student->parameters(), config.lr, config.weight_decay);
  if (s.style) {
    if (s.style_trainable) {
      s.gen_optimizer = make_adamw(s.style->generator_side_parameters(), config.style_lr, config.weight_decay);
      s.disc_optimizer =
          make_adamw(s.style->discriminator->parameters(), config.style_lr, config.weight_decay);
    } else {
      for (auto& p : s.style->parameters()) p.set_requires_grad(false);
    }
  }

  const std::uint64_t base = config.seed + static_cast<std::uint64_t>(phase) * 1000003ULL;
  s.data_rng.seed(mix_seed(base, 0));
  s.mix_rng.seed(mix_seed(base, 1));
  s.aug_rng.seed(mix_seed(base, 2));
  s.sample_rng.seed(mix_seed(base, 3));
  s.source_sampler = std::make_unique<IndexSampler>(config.n_source);
  s.target_sampler = std::make_unique<IndexSampler>(config.n_target);
  return s;
}

void to_double(TrainingState& s) {
  s.dtype = torch::kFloat64;
  s.pair.student->to(torch::kFloat64);
  s.pair.teacher->to(torch::kFloat64);
  s.bank->to(torch::kFloat64);
  if (s.style) s.style->to(torch::kFloat64);
}

Batch prepare_batch(TrainingState& s, const Benchmark& bench) {
  const auto& cfg = s.config;
  Batch b;
  const auto src_idx = s.source_sampler->next(cfg.batch_size, s.data_rng);
  b.source_images = gather(bench.data.source.images.data, src_idx).to(s.dtype);
  b.source_labels.data = gather(bench.data.source.labels.data, src_idx);
  b.source_labels.ignore_index = bench.data.source.labels.ignore_index;
  const auto tgt_idx = s.target_sampler->next(cfg.batch_size, s.data_rng);
  b.target_images = gather(bench.data.target.images.data, tgt_idx).to(s.dtype);
  b.sample_seed = s.sample_rng();

  if (!s.self_training()) return b;

  synth::ImageBatch target{b.target_images};
  b.pseudo = selftrain::pseudo_label(s.pair.teacher, target);

  std::vector<std::vector<std::int64_t>> subsets;
  for (std::int64_t i = 0; i < b.source_labels.data.size(0); ++i) {
    subsets.push_back(synth::sample_mix_classes(b.source_labels.data[i], s.mix_rng, b.source_labels.ignore_index));
  }
  b.mix = synth::classmix(synth::ImageBatch{b.source_images}, b.source_labels, target, b.pseudo.labels, subsets);
  b.mixed_images = synth::augment(b.mix.image, cfg.augment_params(), s.aug_rng).data.to(s.dtype);
  b.has_mix = true;

  if (s.bank_active()) {
    torch::NoGradGuard no_grad;
    auto& teacher = s.pair.teacher;
    auto feats = teacher->segnet->backbone_forward(b.mixed_images);
    auto v = teacher->projection->forward(feats);
    auto cam = teacher->cam_head->cam(feats);
    auto lbl = proto::downsample_labels(b.mix.label.data, feats.size(2), feats.size(3));
    s.bank->update(proto::estimate_prototypes(cam, v, lbl, cfg.top_n, b.mix.label.ignore_index));
  }
  return b;
}

StepGraph compute_losses(TrainingState& s, const Batch& b) {
  const auto& cfg = s.config;
  auto& student = s.pair.student;
  StepGraph g;
  const auto opts = b.source_images.options();

  torch::Tensor stylized = b.source_images;
  if (s.style_active()) {
    if (s.style_trainable) {
      stylized = style::stylize(s.style->generator, b.source_images);
    } else {
      torch::NoGradGuard no_grad;
      stylized = style::stylize(s.style->generator, b.source_images);
    }
  }
  g.stylized = stylized;

  auto out_s = student->forward(stylized.detach());
  g.ce_src = selftrain::ce_loss(out_s.logits, b.source_labels);

  net::SegOutput out_m;
  if (b.has_mix) {
    out_m = student->forward(b.mixed_images);
    g.ce_mix = selftrain::ce_loss(out_m.logits, b.mix.label);
  } else {
    g.ce_mix = skipped_term(opts);
  }

  const bool pcl_on = b.has_mix && cfg.use_pcl && cfg.lambda_pcl > 0.0;
  const bool reg_on = b.has_mix && cfg.use_pcl && cfg.lambda_reg > 0.0;
  const bool cam_on = b.has_mix && s.bank_active() && cfg.lambda_cam > 0.0;

  g.pcl = skipped_term(opts);
  g.reg = skipped_term(opts);
  g.cam = skipped_term(opts);
  if (pcl_on || reg_on || cam_on) {
    const auto h = out_s.features.size(2);
    const auto w = out_s.features.size(3);
    auto lbl = torch::cat({proto::downsample_labels(b.source_labels.data, h, w),
                           proto::downsample_labels(b.mix.label.data, h, w)});
    auto feats = torch::cat({out_s.features, out_m.features});
    if (pcl_on || reg_on) {
      auto v = student->projection->forward(feats);
      if (pcl_on) {
        std::mt19937_64 rng(b.sample_seed);
        auto samples = proto::sample_pixels(v, lbl, cfg.pcl_samples, rng, b.source_labels.ignore_index);
        g.pcl = proto::pcl_loss(samples, *s.bank);
      }
      if (reg_on) g.reg = proto::diversity_reg(v, *s.bank);
    }
    if (cam_on) {
      auto presence = proto::class_presence(torch::cat({b.source_labels.data, b.mix.label.data}),
                                            cfg.num_classes, b.source_labels.ignore_index);
      g.cam.value = proto::cam_bce_loss(student->cam_head->scores(feats), presence.to(opts.dtype()));
      g.cam.skipped = false;
    }
  }

  g.gan_g = skipped_term(opts);
  g.nce = skipped_term(opts);
  g.sc = skipped_term(opts);
  if (s.style_trainable && s.style_active()) {
    auto gan = style::gan_losses(s.style->discriminator, b.target_images, stylized);
    g.gan_g = LossTerm{gan.generator, false};
    g.gan_d = gan.discriminator();
    std::mt19937_64 prng(b.sample_seed ^ 0xA5A5A5A5A5A5A5A5ULL);
    const auto loc = style::sample_tap_locations(s.style, b.source_images.size(2), b.source_images.size(3), prng);
    style::PatchSet patches;
    patches.anchors = style::extract_patches(s.style, stylized, loc);
    patches.positives = style::extract_patches(s.style, b.source_images, loc);
    g.nce = style::patchnce_loss(patches, cfg.t_nce);
    if (b.has_mix) {
      g.sc = style::semantic_consistency_through(student, b.source_images, stylized, *s.bank, s.style->phi);
    }
  }

  auto total = g.ce_src.skipped ? torch::zeros({}, opts) : g.ce_src.value;
  auto add = [&](const LossTerm& t, double weight) {
    if (!t.skipped && weight != 0.0) total = total + weight * t.value;
  };
  add(g.ce_mix, 1.0);
  add(g.pcl, cfg.lambda_pcl);
  add(g.cam, cfg.lambda_cam);
  add(g.reg, cfg.lambda_reg);
  add(g.gan_g, cfg.lambda_style);
  add(g.nce, cfg.lambda_style);
  add(g.sc, cfg.lambda_style);
  g.total = total;
  return g;
}

LossValues loss_values(const StepGraph& g) {
  LossValues v;
  v[kTotal] = g.total.defined() ? g.total.item<double>() : 0.0;
  v[kCeSrc] = g.ce_src.item();
  v[kCeMix] = g.ce_mix.item();
  v[kPcl] = g.pcl.item();
  v[kCam] = g.cam.item();
  v[kReg] = g.reg.item();
  v[kGanG] = g.gan_g.item();
  v[kGanD] = g.gan_d.defined() ? g.gan_d.item<double>() : 0.0;
  v[kNce] = g.nce.item();
  v[kSc] = g.sc.item();
  return v;
}

StepOutcome train_step_phase1(TrainingState& s, const Benchmark& bench) {
  const double factor = warmup_factor(s);
  set_lr(*s.seg_optimizer, s.config.lr * factor);
  if (s.gen_optimizer) set_lr(*s.gen_optimizer, s.config.style_lr * factor);
  if (s.disc_optimizer) set_lr(*s.disc_optimizer, s.config.style_lr * factor);

  Batch batch = prepare_batch(s, bench);
  StepGraph g = compute_losses(s, batch);
  check_finite(s, g);

  s.seg_optimizer->zero_grad();
  if (s.gen_optimizer) s.gen_optimizer->zero_grad();
  if (g.total.requires_grad()) g.total.backward();
  s.seg_optimizer->step();
  if (s.gen_optimizer) s.gen_optimizer->step();
  if (s.disc_optimizer && g.gan_d.defined()) {
    s.disc_optimizer->zero_grad();
    g.gan_d.backward();
    s.disc_optimizer->step();
  }
  selftrain::ema_update(s.pair.teacher, s.pair.student, ema_beta(s));

  StepOutcome out;
  out.losses = loss_values(g);
  out.bank_fill = s.bank->fill_count();
  out.pl_confidence = batch.has_mix ? batch.pseudo.confidence.mean().item<double>() : 0.0;
  ++s.phase_step;
  ++s.global_step;
  return out;
}

StepOutcome style_pretrain_step(TrainingState& s, const Benchmark& bench) {
  if (!s.style || !s.style_trainable) throw TrainingError("style pre-training needs a trainable style module");
  const double factor = warmup_factor(s);
  set_lr(*s.gen_optimizer, s.config.style_lr * factor);
  set_lr(*s.disc_optimizer, s.config.style_lr * factor);

  const auto& cfg = s.config;
  const auto src_idx = s.source_sampler->next(cfg.batch_size, s.data_rng);
  const auto tgt_idx = s.target_sampler->next(cfg.batch_size, s.data_rng);
  auto source = gather(bench.data.source.images.data, src_idx).to(s.dtype);
  auto target = gather(bench.data.target.images.data, tgt_idx).to(s.dtype);
  const auto seed = s.sample_rng();

  StepGraph g;
  const auto opts = source.options();
  auto stylized = style::stylize(s.style->generator, source);
  auto gan = style::gan_losses(s.style->discriminator, target, stylized);
  std::mt19937_64 prng(seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  const auto loc = style::sample_tap_locations(s.style, source.size(2), source.size(3), prng);
  style::PatchSet patches;
  patches.anchors = style::extract_patches(s.style, stylized, loc);
  patches.positives = style::extract_patches(s.style, source, loc);
  g.ce_src = skipped_term(opts);
  g.ce_mix = skipped_term(opts);
  g.pcl = skipped_term(opts);
  g.cam = skipped_term(opts);
  g.reg = skipped_term(opts);
  g.sc = skipped_term(opts);
  g.gan_g = LossTerm{gan.generator, false};
  g.nce = style::patchnce_loss(patches, cfg.t_nce);
  g.gan_d = gan.discriminator();
  g.total = g.gan_g.value;
  if (!g.nce.skipped) g.total = g.total + g.nce.value;
  check_finite(s, g);

  s.gen_optimizer->zero_grad();
  g.total.backward();
  s.gen_optimizer->step();
  s.disc_optimizer->zero_grad();
  g.gan_d.backward();
  s.disc_optimizer->step();

  StepOutcome out;
  out.losses = loss_values(g);
  ++s.phase_step;
  ++s.global_step;
  return out;
}

PhaseResult run_phase(TrainingState& s, const Benchmark& bench, std::int64_t steps, MetricsWriter* writer) {
  PhaseResult r;
  const int k = s.config.num_classes;
  r.best = net::clone_model(s.pair.student);
  r.best_eval = evaluate(s.pair.student, bench.eval, k);
  r.final_eval = r.best_eval;
  LossValues acc;
  double conf = 0.0;
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < steps; ++i) {
    auto out = train_step_phase1(s, bench);
    acc += out.losses;
    conf += out.pl_confidence;
    ++n;
    if ((i + 1) % s.config.eval_interval == 0 || i + 1 == steps) {
      auto eval = evaluate(s.pair.student, bench.eval, k);
      MetricsRow row;
      row.step = s.global_step;
      row.phase = s.phase;
      row.losses = acc.scaled(1.0 / static_cast<double>(n));
      row.miou = eval.miou;
      row.iou = eval.iou;
      row.bank_fill = out.bank_fill;
      row.pl_confidence = conf / static_cast<double>(n);
      if (writer) writer->append(row);
      r.rows.push_back(row);
      if (!r.evaluated || eval.miou > r.best_eval.miou) {
        r.best = net::clone_model(s.pair.student);
        r.best_eval = eval;
      }
      r.final_eval = eval;
      r.evaluated = true;
      acc = LossValues{};
      conf = 0.0;
      n = 0;
    }
  }
  return r;
}

namespace {

std::vector<MetricsRow> run_style_pretraining(TrainingState& s, const Benchmark& bench, std::int64_t steps,
                                              MetricsWriter* writer) {
  std::vector<MetricsRow> rows;
  LossValues acc;
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < steps; ++i) {
    acc += style_pretrain_step(s, bench).losses;
    ++n;
    if ((i + 1) % s.config.eval_interval == 0 || i + 1 == steps) {
      MetricsRow row;
      row.step = s.global_step;
      row.phase = 0;
      row.losses = acc.scaled(1.0 / static_cast<double>(n));
      row.iou.assign(static_cast<std::size_t>(s.config.num_classes), std::numeric_limits<double>::quiet_NaN());
      if (writer) writer->append(row);
      rows.push_back(row);
      acc = LossValues{};
      n = 0;
    }
  }
  return rows;
}

}  // namespace

PhaseResult train_phase2(const TrainConfig& config, const Benchmark& bench, style::StyleModule style,
                         MetricsWriter* writer, std::int64_t global_step_offset) {
  if (!style) throw TrainingError("second round needs a trained style module");
  auto s = init_state(config, 2, style, false, config.phase2_steps);
  s.global_step = global_step_offset;
  return run_phase(s, bench, config.phase2_steps, writer);
}

void save_module(const torch::nn::Module& module, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive;
  module.save(archive);
  archive.save_to(path.string());
}

void load_module(torch::nn::Module& module, const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  module.load(archive);
}

ExperimentResult run_experiment(const TrainConfig& config, const Benchmark& bench,
                                const std::optional<fs::path>& run_dir,
                                const std::optional<fs::path>& style_checkpoint) {
  config.validate();
  torch::set_num_threads(config.threads);
  std::unique_ptr<MetricsWriter> writer;
  if (run_dir) {
    fs::create_directories(*run_dir);
    std::ofstream(*run_dir / "resolved_config.cfg") << config_to_text(config);
    writer = std::make_unique<MetricsWriter>(*run_dir / "metrics.csv", config.num_classes);
  }
  auto diag = run_dir;

  ExperimentResult r;
  PhaseResult final_phase;
  TrainingState last;

  if (style_checkpoint) {
    auto style = make_style_module(config);
    load_module(*style, *style_checkpoint);
    last = init_state(config, 2, style, false, config.phase2_steps);
    last.diagnostics_dir = diag;
    final_phase = run_phase(last, bench, config.phase2_steps, writer.get());
    r.style = style;
  } else if (!config.use_style) {
    last = init_state(config, 1, nullptr, false, config.phase1_steps);
    last.diagnostics_dir = diag;
    final_phase = run_phase(last, bench, config.phase1_steps, writer.get());
  } else if (config.offline_style) {
    auto style = make_style_module(config);
    auto pre = init_state(config, 0, style, true, config.phase1_steps);
    pre.diagnostics_dir = diag;
    auto rows = run_style_pretraining(pre, bench, config.phase1_steps, writer.get());
    r.rows = rows;
    last = init_state(config, 1, style, false, config.phase2_steps);
    last.global_step = pre.global_step;
    last.diagnostics_dir = diag;
    final_phase = run_phase(last, bench, config.phase2_steps, writer.get());
    r.style = style;
  } else {
    auto style = make_style_module(config);
    last = init_state(config, 1, style, true, config.phase1_steps);
    last.diagnostics_dir = diag;
    auto first = run_phase(last, bench, config.phase1_steps, writer.get());
    r.style = style;
    if (run_dir) save_module(*style, *run_dir / "checkpoints" / "style_phase1.pt");
    if (config.use_two_stage) {
      r.rows.insert(r.rows.end(), first.rows.begin(), first.rows.end());
      const auto offset = last.global_step;
      last = init_state(config, 2, style, false, config.phase2_steps);
      last.global_step = offset;
      last.diagnostics_dir = diag;
      final_phase = run_phase(last, bench, config.phase2_steps, writer.get());
    } else {
      final_phase = std::move(first);
    }
  }

  r.rows.insert(r.rows.end(), final_phase.rows.begin(), final_phase.rows.end());
  r.segmenter = final_phase.best;
  r.eval = final_phase.best_eval;
  r.bank = std::move(last.bank);
  if (run_dir) {
    write_checkpoints(*run_dir / "checkpoints", config, r.segmenter, last.pair.teacher, r.style, r.bank.get());
  }
  return r;
}

std::vector<AblationRow> run_ablation_suite(const TrainConfig& base, const Benchmark& bench,
                                            const std::vector<std::string>& names,
                                            const std::optional<fs::path>& out_dir) {
  std::vector<AblationRow> rows;
  for (const auto& name : names) {
    TrainConfig cfg = base;
    apply_preset(cfg, name);
    std::optional<fs::path> run_dir;
    if (out_dir) run_dir = *out_dir / name;
    auto result = run_experiment(cfg, bench, run_dir);
    rows.push_back({name, cfg, result.eval});
  }
  if (out_dir) write_ablation_csv(*out_dir / "ablation.csv", rows, base.num_classes);
  return rows;
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows, int num_classes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "config,self_training,pcl,style,two_stage,offline_style,miou";
  for (int c = 0; c < num_classes; ++c) out << ",iou_" << synth::class_name(c);
  out << "\n" << std::setprecision(17);
  for (const auto& row : rows) {
    const auto& c = row.config;
    out << row.name << "," << c.use_self_training << "," << c.use_pcl << "," << c.use_style << ","
        << c.use_two_stage << "," << c.offline_style << "," << row.eval.miou;
    for (double v : row.eval.iou) out << "," << v;
    out << "\n";
  }
}

std::array<double, 6> channel_statistics(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("expected B x 3 x H x W images");
  auto x = images.to(torch::kFloat64).transpose(0, 1).reshape({3, -1});
  auto mean = x.mean(1);
  auto stdv = x.std(1, /*unbiased=*/false);
  std::array<double, 6> out{};
  for (int c = 0; c < 3; ++c) {
    out[static_cast<std::size_t>(c)] = mean[c].item<double>();
    out[static_cast<std::size_t>(c + 3)] = stdv[c].item<double>();
  }
  return out;
}

double statistic_distance(const std::array<double, 6>& a, const std::array<double, 6>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace confeti::train
