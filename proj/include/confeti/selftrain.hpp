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

// Mean-teacher self-training: EMA teacher maintenance, pseudo-labels and the
// pixel-wise cross-entropy objective.

#pragma once

#include "confeti/network.hpp"
#include "confeti/synthdata.hpp"

namespace confeti::selftrain {

/// Student and teacher share one architecture; the teacher only ever
/// receives EMA writes. Teacher parameters have requires_grad == false.
struct TeacherStudentPair {
  net::SegModel student{nullptr};
  net::SegModel teacher{nullptr};
  double beta = 0.999;

  /// Teacher starts as an exact copy of the student.
  static TeacherStudentPair create(const net::NetworkConfig& config, double beta);
};

/// teacher <- beta * teacher + (1 - beta) * student, over every parameter
/// and buffer. Throws ShapeError when the trees differ.
void ema_update(net::SegModel& teacher, const net::SegModel& student, double beta);
inline void ema_update(TeacherStudentPair& pair) { ema_update(pair.teacher, pair.student, pair.beta); }

struct PseudoLabelBatch {
  synth::LabelMap labels;
  torch::Tensor confidence;  // B x H x W, max softmax probability
};

/// Hard pseudo-labels from logits: argmax over classes, lowest index on
/// ties, plus the winning softmax probability.
PseudoLabelBatch pseudo_label_from_logits(const torch::Tensor& logits);

/// Teacher forward on clean target images, no autograd graph recorded.
PseudoLabelBatch pseudo_label(net::SegModel& teacher, const synth::ImageBatch& target);

/// Mean over non-ignored pixels of -log softmax(logits)[label]. When every
/// pixel is ignored the result is a zero tensor with `skipped` set.
LossTerm ce_loss(const torch::Tensor& logits, const synth::LabelMap& labels);

}  // namespace confeti::selftrain
