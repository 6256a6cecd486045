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

// Two-phase training schedule: joint self-training + feature alignment +
// stylizer training, then an optional second round that retrains the
// segmenter from scratch behind the frozen stylizer.

#pragma once

#include "confeti/config.hpp"
#include "confeti/metrics.hpp"
#include "confeti/selftrain.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace confeti::train {

/// Source + unlabelled target training data, plus a held-out labelled
/// target split used only for scoring.
struct Benchmark {
  synth::DomainPair data;
  synth::TargetDomain eval;
};

Benchmark make_benchmark(const TrainConfig& config);
/// gen-data layout plus <dir>/eval/{images,labels_eval_only}.
void write_benchmark(const Benchmark& bench, const std::filesystem::path& dir);
Benchmark read_benchmark(const std::filesystem::path& dir);

/// Scores `model` on the held-out split. Throws on an empty split.
EvalResult evaluate(net::SegModel& model, const synth::TargetDomain& eval_set, int num_classes);

/// Epoch-wise shuffled index stream.
class IndexSampler {
 public:
  explicit IndexSampler(std::int64_t size) : size_(size) {}
  std::vector<std::int64_t> next(int count, std::mt19937_64& rng);

 private:
  std::int64_t size_;
  std::vector<std::int64_t> order_;
  std::size_t pos_ = 0;
};

/// Everything one training step mutates. A step is a serial critical
/// section over this struct.
struct TrainingState {
  TrainConfig config;
  int phase = 1;
  selftrain::TeacherStudentPair pair;
  std::unique_ptr<proto::PrototypeBank> bank;
  style::StyleModule style{nullptr};  // null when pixel alignment is off
  bool style_trainable = false;

  std::unique_ptr<torch::optim::AdamW> seg_optimizer;
  std::unique_ptr<torch::optim::AdamW> gen_optimizer;
  std::unique_ptr<torch::optim::AdamW> disc_optimizer;

  std::mt19937_64 data_rng, mix_rng, aug_rng, sample_rng;
  std::unique_ptr<IndexSampler> source_sampler, target_sampler;

  std::int64_t global_step = 0;
  std::int64_t phase_step = 0;
  std::int64_t phase_length = 0;  // for the warm-up schedule
  torch::ScalarType dtype = torch::kFloat32;
  std::optional<std::filesystem::path> diagnostics_dir;

  bool self_training() const { return config.use_self_training; }
  bool style_active() const;
  bool bank_active() const;
};

/// Fresh segmentation side (student, teacher, bank, optimizers). Network
/// initialisation is seeded from config.seed only, so every configuration
/// starts from the same segmenter. `style` may be null.
TrainingState init_state(const TrainConfig& config, int phase, style::StyleModule style,
                         bool style_trainable, std::int64_t phase_length);

/// Stylizer seeded from config.seed (independent of the segmenter).
style::StyleModule make_style_module(const TrainConfig& config);

/// Switch every parameter and data batch to double precision (gradient checks).
void to_double(TrainingState& state);

/// Inputs of one step. Built by prepare_batch, which also performs the
/// teacher-side work: pseudo-labels, ClassMix, augmentation and the
/// prototype-bank update from the mixed image.
struct Batch {
  torch::Tensor source_images;
  synth::LabelMap source_labels;
  torch::Tensor target_images;
  bool has_mix = false;
  selftrain::PseudoLabelBatch pseudo;
  synth::MixResult mix;
  torch::Tensor mixed_images;  // ClassMix output after augmentation
  std::uint64_t sample_seed = 0;
};

Batch prepare_batch(TrainingState& state, const Benchmark& bench);

/// All loss tensors of one step with autograd graphs attached.
struct StepGraph {
  LossTerm ce_src, ce_mix, pcl, cam, reg, gan_g, nce, sc;
  torch::Tensor gan_d;  // discriminator objective, separate graph
  torch::Tensor total;
  torch::Tensor stylized;
};

/// Pure function of the current parameters and the batch.
StepGraph compute_losses(TrainingState& state, const Batch& batch);

/// Scalar values of a graph (total, terms, discriminator objective).
LossValues loss_values(const StepGraph& graph);

struct StepOutcome {
  LossValues losses;
  int bank_fill = 0;
  double pl_confidence = 0.0;
};

/// One joint step: teacher pseudo-labels, ClassMix, stylize, teacher
/// prototype update, student passes, weighted loss, optimizer steps
/// (segmentation, generator, discriminator), EMA. With a frozen stylizer
/// the same routine runs the second round. Throws TrainingError (after
/// writing a diagnostic snapshot when a diagnostics dir is set) on a
/// non-finite loss.
StepOutcome train_step_phase1(TrainingState& state, const Benchmark& bench);

/// Offline stylizer pre-training step (GAN + PatchNCE only).
StepOutcome style_pretrain_step(TrainingState& state, const Benchmark& bench);

struct PhaseResult {
  net::SegModel best{nullptr};
  EvalResult best_eval;
  EvalResult final_eval;
  std::vector<MetricsRow> rows;
  bool evaluated = false;
};

/// Runs `steps` segmentation steps, evaluating every eval_interval steps
/// and after the last one. Keeps the best-mIoU student snapshot (the
/// initial model when steps == 0).
PhaseResult run_phase(TrainingState& state, const Benchmark& bench, std::int64_t steps,
                      MetricsWriter* writer);

/// Second round: re-initialises student, teacher, projection, CAM head and
/// bank, then trains with the given stylizer frozen. Throws TrainingError
/// when `style` is null.
PhaseResult train_phase2(const TrainConfig& config, const Benchmark& bench, style::StyleModule style,
                         MetricsWriter* writer, std::int64_t global_step_offset = 0);

struct ExperimentResult {
  net::SegModel segmenter{nullptr};
  EvalResult eval;
  style::StyleModule style{nullptr};
  std::unique_ptr<proto::PrototypeBank> bank;
  std::vector<MetricsRow> rows;
};

/// Full schedule as selected by the ablation switches. When `run_dir` is
/// set, writes resolved_config.cfg, metrics.csv and checkpoints/.
ExperimentResult run_experiment(const TrainConfig& config, const Benchmark& bench,
                                const std::optional<std::filesystem::path>& run_dir = std::nullopt,
                                const std::optional<std::filesystem::path>& style_checkpoint = std::nullopt);

/// Checkpoint helpers (libtorch archives, one file per module).
void save_module(const torch::nn::Module& module, const std::filesystem::path& path);
void load_module(torch::nn::Module& module, const std::filesystem::path& path);

struct AblationRow {
  std::string name;
  TrainConfig config;
  EvalResult eval;
};

/// Trains each named preset on the same benchmark and seeds.
std::vector<AblationRow> run_ablation_suite(const TrainConfig& base, const Benchmark& bench,
                                            const std::vector<std::string>& names,
                                            const std::optional<std::filesystem::path>& out_dir = std::nullopt);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows,
                        int num_classes);

/// Per-channel means then standard deviations over a B x 3 x H x W batch.
std::array<double, 6> channel_statistics(const torch::Tensor& images);
/// L2 distance between two statistic vectors.
double statistic_distance(const std::array<double, 6>& a, const std::array<double, 6>& b);

}  // namespace confeti::train
