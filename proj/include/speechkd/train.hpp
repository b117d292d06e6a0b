// Copyright 2026 The speechkd Authors. All Rights Reserved.
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

// Optimizer, learning-rate schedule, the student model with its intent
// head, the training loop and accuracy evaluation.

#ifndef SPEECHKD_TRAIN_HPP_
#define SPEECHKD_TRAIN_HPP_

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "speechkd/data.hpp"
#include "speechkd/distill.hpp"
#include "speechkd/encoder.hpp"
#include "speechkd/ops.hpp"
#include "speechkd/tensor.hpp"

namespace speechkd {

struct NoamSchedule {
  int d_model = 512;
  int warmup_steps = 4000;
  double factor = 1.0;
};

// factor * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5), step >= 1.
double lr_at(long step, const NoamSchedule& sched);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// Moment buffers are kept in parameter precision so a checkpoint holds them
// exactly.
struct AdamState {
  AdamConfig config;
  std::vector<MatrixF> m;
  std::vector<MatrixF> v;
  long step = 0;
};

AdamState adam_init(const std::vector<Param<float>*>& params, const AdamConfig& config = {});

// One bias-corrected Adam update, theta -= lr * m_hat / (sqrt(v_hat) + eps),
// then clears every gradient. A non-finite gradient throws NumericalError
// before any parameter changes.
void adam_step(const std::vector<Param<float>*>& params, AdamState& state, double lr);

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(const std::vector<Param<float>*>& params, double max_norm);

enum class Pooling { kMean, kMax };

// Student encoder, intent layer and distillation heads.
template <typename S>
struct StudentModel {
  EncoderConfig config;
  int num_classes = 0;
  EncoderParams<S> encoder;
  Param<S> intent_w;  // [d_model x K]
  Param<S> intent_b;  // [K]
  DistillHeads<S> heads;

  static StudentModel init(const EncoderConfig& cfg, int num_classes, int num_pairs, int t_dmodel,
                           bool shared_head, std::uint64_t seed) {
    StudentModel m;
    m.config = cfg;
    m.num_classes = num_classes;
    Rng rng(mix_seed(seed, 0x5717D));
    m.encoder = EncoderParams<S>::init(cfg, rng, "encoder");
    m.intent_w = glorot_param<S>("intent.w", cfg.d_model, num_classes, rng);
    m.intent_b = constant_param<S>("intent.b", num_classes, S(0));
    m.heads = DistillHeads<S>::init(num_pairs, cfg.d_model, t_dmodel, shared_head, rng);
    return m;
  }

  std::vector<Param<S>*> all() {
    std::vector<Param<S>*> out = encoder.all();
    out.push_back(&intent_w);
    out.push_back(&intent_b);
    for (Param<S>* p : heads.all()) out.push_back(p);
    return out;
  }
};

template <typename S>
struct StudentOutput {
  Tensor<S> logits;  // [1 x K]
  EncoderOutput<S> encoded;
};

// Encodes one utterance and maps its pooled final hidden rows to logits.
template <typename S>
StudentOutput<S> student_forward(StudentModel<S>& model, const Tensor<S>& x, const std::vector<bool>& mask,
                                 Pooling pooling, Mode mode, Tape<S>* tape) {
  const EncoderWeights<S> w = bind(model.encoder, tape);
  StudentOutput<S> out;
  out.encoded = encode(x, mask, model.config, w, mode, tape);
  const Index valid = out.encoded.taps.valid_len;
  Tensor<S> h = out.encoded.final_hidden;
  if (h.rows() != valid) {
    for (Index t = valid; t < static_cast<Index>(mask.size()); ++t) {
      if (mask[static_cast<std::size_t>(t)]) {
        throw InvalidArgument("student_forward: mask must mark a prefix of the sequence as valid");
      }
    }
    h = slice_rows(h, 0, valid);
  }
  const Tensor<S> pooled = pooling == Pooling::kMean ? mean(h, 0) : max_over_rows(h);
  const Tensor<S> row = reshape(pooled, Shape{1, model.config.d_model});
  out.logits = add_bias(matmul(row, bind_param(model.intent_w, tape)), bind_param(model.intent_b, tape));
  return out;
}

// Index of the largest logit; the first one wins ties.
template <typename S>
int argmax(const Tensor<S>& logits) {
  const auto v = logits.data();
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

struct TrainConfig {
  int epochs = 50;
  int batch_size = 16;
  std::uint64_t seed = 1;
  int warmup_steps = 4000;
  double lr_factor = 1.0;
  double clip_norm = 5.0;
  Pooling pooling = Pooling::kMean;
  AdamConfig adam;

  void collect_errors(std::vector<std::string>& errors) const;
};

// Averages over the utterances seen in one epoch.
struct EpochLog {
  long step = 0;
  int epoch = 0;
  double loss_total = 0.0;
  double loss_intent = 0.0;
  double loss_att = 0.0;
  double loss_hid = 0.0;
  double lr = 0.0;
  double alpha_att = 0.0;
  double alpha_hid = 0.0;
  // Accuracy of the training-mode forward passes made during the epoch.
  double train_accuracy = 0.0;

  std::string to_json() const;
};

struct TrainState {
  StudentModel<float> model;
  AdamState adam;
  long step = 0;
  int epoch = 0;
};

struct NoiseSpec {
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<std::size_t> class_correct;
  std::vector<std::size_t> class_total;

  std::string to_json() const;
};

// Eval-mode accuracy. With noise, each utterance i gets inject_noise with
// seed mix_seed(noise.seed, i).
EvalResult evaluate(StudentModel<float>& model, const Dataset& data, Pooling pooling,
                    const std::optional<NoiseSpec>& noise = std::nullopt);

class Trainer {
 public:
  // Builds a fresh model from `seed`. Throws ConfigError when the dataset or
  // the layer map disagree with the configuration.
  Trainer(const EncoderConfig& student, const EncoderConfig& teacher, const DistillConfig& distill,
          const TrainConfig& train, const Dataset& data);
  // Continues from a saved state.
  Trainer(const EncoderConfig& student, const EncoderConfig& teacher, const DistillConfig& distill,
          const TrainConfig& train, const Dataset& data, TrainState state);

  EpochLog run_epoch();
  std::vector<EpochLog> run(int epochs);

  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }
  const LayerMap& layer_map() const { return map_; }

  // Target for utterance i, aligned to its acoustic length.
  const LayerTaps<float>& teacher_targets(std::size_t i) const { return targets_[i]; }

 private:
  void prepare();

  EncoderConfig student_;
  EncoderConfig teacher_;
  DistillConfig distill_;
  TrainConfig train_;
  const Dataset* data_;
  LayerMap map_;
  TrainState state_;
  std::vector<LayerTaps<float>> targets_;
};

// Checks that dataset, teacher and layer map are usable together.
void validate_training_setup(const EncoderConfig& student, const EncoderConfig& teacher,
                             const DistillConfig& distill, const Dataset& data);

}  // namespace speechkd

#endif  // SPEECHKD_TRAIN_HPP_
