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

#include "confeti/selftrain.hpp"

#include "confeti/module_utils.hpp"

namespace confeti::selftrain {

TeacherStudentPair TeacherStudentPair::create(const net::NetworkConfig& config, double beta) {
  if (beta < 0.0 || beta > 1.0) throw ConfigError("EMA momentum beta must be in [0, 1]");
  TeacherStudentPair pair;
  pair.student = net::SegModel(config);
  pair.teacher = net::clone_model(pair.student);
  for (auto& p : pair.teacher->parameters()) p.set_requires_grad(false);
  pair.beta = beta;
  return pair;
}

void ema_update(net::SegModel& teacher, const net::SegModel& student, double beta) {
  if (beta < 0.0 || beta > 1.0) throw ConfigError("EMA momentum beta must be in [0, 1]");
  torch::NoGradGuard no_grad;
  auto t_params = teacher->named_parameters(true);
  auto s_params = student->named_parameters(true);
  if (t_params.size() != s_params.size()) throw ShapeError("teacher/student trees differ");
  auto blend = [beta](torch::Tensor& t, const torch::Tensor& s) {
    // Two separately rounded products, matching beta*t + (1-beta)*s.
    t.mul_(beta);
    t.add_(s * (1.0 - beta));
  };
  for (auto& item : t_params) {
    const auto* s = s_params.find(item.key());
    if (s == nullptr || s->sizes() != item.value().sizes()) {
      throw ShapeError("teacher/student mismatch at " + item.key());
    }
    blend(item.value(), *s);
  }
  auto t_buffers = teacher->named_buffers(true);
  auto s_buffers = student->named_buffers(true);
  for (auto& item : t_buffers) {
    const auto* s = s_buffers.find(item.key());
    if (s == nullptr) throw ShapeError("teacher/student buffer mismatch at " + item.key());
    if (item.value().is_floating_point()) blend(item.value(), *s);
  }
}

PseudoLabelBatch pseudo_label_from_logits(const torch::Tensor& logits) {
  torch::NoGradGuard no_grad;
  // argmax on the logits: softmax is strictly monotone, so this is the
  // argmax of the probabilities without a second rounding step. max()
  // returns the first maximal index, giving the lowest-class tie break.
  auto [top_logit, labels] = logits.max(1);
  auto probs = torch::softmax(logits, 1);
  PseudoLabelBatch out;
  out.labels.data = labels;
  out.confidence = probs.gather(1, labels.unsqueeze(1)).squeeze(1);
  return out;
}

PseudoLabelBatch pseudo_label(net::SegModel& teacher, const synth::ImageBatch& target) {
  torch::NoGradGuard no_grad;
  return pseudo_label_from_logits(teacher->forward(target.data).logits);
}

LossTerm ce_loss(const torch::Tensor& logits, const synth::LabelMap& labels) {
  if (logits.dim() != 4 || labels.data.dim() != 3 || logits.size(0) != labels.data.size(0) ||
      logits.size(2) != labels.data.size(1) || logits.size(3) != labels.data.size(2)) {
    throw ShapeError("ce_loss: logits B x K x H x W and labels B x H x W disagree");
  }
  const auto counted = (labels.data != labels.ignore_index).sum().item<std::int64_t>();
  if (counted == 0) return skipped_term(logits.options());
  namespace F = torch::nn::functional;
  auto value = F::nll_loss(torch::log_softmax(logits, 1), labels.data,
                           F::NLLLossFuncOptions().ignore_index(labels.ignore_index));
  return {value, false};
}

}  // namespace confeti::selftrain
