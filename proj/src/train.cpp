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

#include "speechkd/train.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "speechkd/error.hpp"
#include "speechkd/rng.hpp"

namespace speechkd {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::uint64_t kShuffleTag = 0x5F0FF1E;

LayerTaps<float> detached(const LayerTaps<float>& taps) {
  LayerTaps<float> out;
  out.layers = taps.layers;
  out.valid_len = taps.valid_len;
  for (const auto& a : taps.att) out.att.push_back(detach(a));
  for (const auto& h : taps.hid) out.hid.push_back(detach(h));
  return out;
}

std::vector<bool> all_valid(Index n) { return std::vector<bool>(static_cast<std::size_t>(n), true); }

}  // namespace

double lr_at(long step, const NoamSchedule& sched) {
  if (step < 1) throw InvalidArgument("lr_at: step must be >= 1, got " + std::to_string(step));
  if (sched.d_model < 1 || sched.warmup_steps < 1 || !(sched.factor > 0.0)) {
    throw InvalidArgument("lr_at: schedule needs positive d_model, warmup_steps and factor");
  }
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(sched.warmup_steps);
  return sched.factor / std::sqrt(static_cast<double>(sched.d_model)) * std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

AdamState adam_init(const std::vector<Param<float>*>& params, const AdamConfig& config) {
  AdamState state;
  state.config = config;
  for (const Param<float>* p : params) {
    state.m.push_back(MatrixF::Zero(p->value.rows(), p->value.cols()));
    state.v.push_back(MatrixF::Zero(p->value.rows(), p->value.cols()));
  }
  return state;
}

void adam_step(const std::vector<Param<float>*>& params, AdamState& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state holds " + std::to_string(state.m.size()) + " buffers for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param<float>& p = *params[i];
    if (p.grad.size() == 0) continue;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() ||
        state.m[i].rows() != p.value.rows() || state.m[i].cols() != p.value.cols()) {
      throw DimensionError("adam_step: shape mismatch for " + p.name);
    }
    if (!p.grad.allFinite()) throw NumericalError("adam_step: non-finite gradient for " + p.name);
  }

  const AdamConfig& c = state.config;
  const long t = state.step + 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<float>& p = *params[i];
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    float* theta = p.value.data();
    const bool has_grad = p.grad.size() != 0;
    for (Index k = 0; k < p.value.size(); ++k) {
      const double g = has_grad ? p.grad.data()[k] : 0.0;
      const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = lr * (mk / bc1) / (std::sqrt(vk / bc2) + c.eps);
      theta[k] = static_cast<float>(theta[k] - update);
    }
    p.zero_grad();
  }
  state.step = t;
}

double clip_grad_norm(const std::vector<Param<float>*>& params, double max_norm) {
  double sq = 0.0;
  for (const Param<float>* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Param<float>* p : params) p->grad *= factor;
  }
  return norm;
}

void TrainConfig::collect_errors(std::vector<std::string>& errors) const {
  if (epochs < 0) errors.push_back("train.epochs must be >= 0");
  if (batch_size < 1) errors.push_back("train.batch_size must be >= 1");
  if (warmup_steps < 1) errors.push_back("train.warmup_steps must be >= 1");
  if (!(lr_factor > 0.0)) errors.push_back("train.lr_factor must be > 0");
  if (!(clip_norm >= 0.0)) errors.push_back("train.clip_norm must be >= 0 (0 disables clipping)");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) errors.push_back("train.adam.beta1 must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) errors.push_back("train.adam.beta2 must be in [0, 1)");
  if (!(adam.eps > 0.0)) errors.push_back("train.adam.eps must be > 0");
}

std::string EpochLog::to_json() const {
  Json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["loss_total"] = loss_total;
  j["loss_intent"] = loss_intent;
  j["loss_att"] = loss_att;
  j["loss_hid"] = loss_hid;
  j["lr"] = lr;
  j["alpha_att"] = alpha_att;
  j["alpha_hid"] = alpha_hid;
  j["train_accuracy"] = train_accuracy;
  return j.dump();
}

std::string EvalResult::to_json() const {
  Json j;
  j["accuracy"] = accuracy;
  j["correct"] = correct;
  j["total"] = total;
  j["class_correct"] = class_correct;
  j["class_total"] = class_total;
  return j.dump();
}

EvalResult evaluate(StudentModel<float>& model, const Dataset& data, Pooling pooling,
                    const std::optional<NoiseSpec>& noise) {
  if (data.utterances.empty()) throw InvalidArgument("evaluate: empty dataset");
  if (data.acoustic_dim != model.config.d_input) {
    throw ConfigError("evaluate: dataset acoustic_dim " + std::to_string(data.acoustic_dim) +
                      " does not match the model input width " + std::to_string(model.config.d_input));
  }
  if (data.num_classes != model.num_classes) {
    throw ConfigError("evaluate: dataset has " + std::to_string(data.num_classes) + " classes, model has " +
                      std::to_string(model.num_classes));
  }
  EvalResult r;
  r.class_correct.assign(static_cast<std::size_t>(model.num_classes), 0);
  r.class_total.assign(static_cast<std::size_t>(model.num_classes), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Utterance& u = data.utterances[i];
    MatrixF x = noise ? inject_noise(u.acoustic, noise->snr_db, mix_seed(noise->seed, i)) : u.acoustic;
    const Index len = x.rows();
    const auto out = student_forward<float>(model, Tensor<float>::constant(std::move(x)), all_valid(len), pooling,
                                            Mode::kEval, nullptr);
    const bool hit = argmax(out.logits) == u.label;
    r.correct += hit ? 1 : 0;
    r.class_correct[static_cast<std::size_t>(u.label)] += hit ? 1 : 0;
    r.class_total[static_cast<std::size_t>(u.label)] += 1;
  }
  r.total = data.size();
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

void validate_training_setup(const EncoderConfig& student, const EncoderConfig& teacher,
                             const DistillConfig& distill, const Dataset& data) {
  std::vector<std::string> errors;
  student.collect_errors("student.", errors);
  teacher.collect_errors("teacher.", errors);
  distill.collect_errors(errors);
  if (distill.s_dmodel != student.d_model) errors.push_back("distill.s_dmodel must equal student.d_model");
  if (distill.t_dmodel != teacher.d_model) errors.push_back("distill.t_dmodel must equal teacher.d_model");
  if (data.acoustic_dim != student.d_input) {
    errors.push_back("dataset acoustic_dim " + std::to_string(data.acoustic_dim) + " differs from student.d_input " +
                     std::to_string(student.d_input));
  }
  LayerMap map = distill.layer_map;
  if (errors.empty()) {
    try {
      if (map.empty()) map = layer_map_uniform(teacher.n_layers, student.n_layers);
      validate_layer_map(map, teacher.n_layers, student.n_layers);
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  }
  const bool needs_taps = distill.alpha2 > 0.0 || distill.alpha3 > 0.0;
  if (needs_taps && errors.empty()) {
    const TeacherMeta& meta = data.teacher;
    if (meta.layers.empty() || data.utterances.front().teacher.empty()) {
      errors.push_back("dataset " + data.name + " carries no teacher taps but distillation weights are nonzero");
    } else {
      if (meta.n_layers != teacher.n_layers) {
        errors.push_back("dataset teacher has " + std::to_string(meta.n_layers) + " layers, config says " +
                         std::to_string(teacher.n_layers));
      }
      if (meta.d_model != teacher.d_model) {
        errors.push_back("dataset teacher width " + std::to_string(meta.d_model) + " differs from teacher.d_model " +
                         std::to_string(teacher.d_model));
      }
      for (const LayerPair& p : map) {
        if (std::find(meta.layers.begin(), meta.layers.end(), p.teacher) == meta.layers.end()) {
          errors.push_back("dataset lacks taps for mapped teacher layer " + std::to_string(p.teacher));
        }
      }
    }
  }
  for (const Utterance& u : data.utterances) {
    if (u.acoustic.rows() > student.max_len) {
      errors.push_back("utterance " + u.id + " has " + std::to_string(u.acoustic.rows()) +
                       " frames, above student.max_len " + std::to_string(student.max_len));
    }
  }
  if (!errors.empty()) {
    std::string msg = "training setup is invalid:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

Trainer::Trainer(const EncoderConfig& student, const EncoderConfig& teacher, const DistillConfig& distill,
                 const TrainConfig& train, const Dataset& data)
    : student_(student), teacher_(teacher), distill_(distill), train_(train), data_(&data) {
  prepare();
  state_.model = StudentModel<float>::init(student_, data.num_classes, static_cast<int>(map_.size()),
                                           teacher_.d_model, distill_.shared_head, train_.seed);
  state_.adam = adam_init(state_.model.all(), train_.adam);
}

Trainer::Trainer(const EncoderConfig& student, const EncoderConfig& teacher, const DistillConfig& distill,
                 const TrainConfig& train, const Dataset& data, TrainState state)
    : student_(student), teacher_(teacher), distill_(distill), train_(train), data_(&data),
      state_(std::move(state)) {
  prepare();
  if (!(state_.model.config == student_) || state_.model.num_classes != data.num_classes) {
    throw ConfigError("trainer: saved model does not match the student config or dataset classes");
  }
  if (state_.adam.m.size() != state_.model.all().size()) {
    throw ConfigError("trainer: optimizer state does not match the model");
  }
}

void Trainer::prepare() {
  std::vector<std::string> errors;
  train_.collect_errors(errors);
  if (!errors.empty()) {
    std::string msg = "training setup is invalid:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  validate_training_setup(student_, teacher_, distill_, *data_);
  map_ = distill_.layer_map.empty() ? layer_map_uniform(teacher_.n_layers, student_.n_layers) : distill_.layer_map;

  targets_.clear();
  const bool needs_taps = distill_.alpha2 > 0.0 || distill_.alpha3 > 0.0;
  const bool have_taps = !data_->teacher.layers.empty() && !data_->utterances.front().teacher.empty();
  if (!needs_taps && !have_taps) return;
  for (const Utterance& u : data_->utterances) {
    LayerTaps<float> t;
    t.valid_len = u.acoustic.rows();
    for (const LayerPair& p : map_) {
      const auto it = std::find(u.teacher.layers.begin(), u.teacher.layers.end(), p.teacher);
      if (it == u.teacher.layers.end()) {
        throw ConfigError("utterance " + u.id + ": missing teacher layer " + std::to_string(p.teacher));
      }
      const auto k = static_cast<std::size_t>(it - u.teacher.layers.begin());
      t.layers.push_back(p.teacher);
      t.att.push_back(Tensor<float>::constant(align_attention(u.teacher.att[k], t.valid_len, distill_.resample)));
      t.hid.push_back(Tensor<float>::constant(align_hidden(u.teacher.hid[k], t.valid_len, distill_.resample)));
    }
    targets_.push_back(std::move(t));
  }
}

EpochLog Trainer::run_epoch() {
  const int epoch = state_.epoch + 1;
  const std::vector<Batch> batches =
      make_batches(*data_, static_cast<std::size_t>(train_.batch_size), mix_seed(train_.seed, kShuffleTag, epoch), true);
  StudentModel<float>& model = state_.model;
  const std::vector<Param<float>*> params = model.all();
  const NoamSchedule sched{student_.d_model, train_.warmup_steps, train_.lr_factor};
  const bool use_att = distill_.alpha2 > 0.0;
  const bool use_hid = distill_.alpha3 > 0.0;
  const bool have_targets = !targets_.empty();

  EpochLog log;
  log.epoch = epoch;
  log.alpha_att = distill_.alpha2;
  log.alpha_hid = distill_.alpha3;
  std::size_t seen = 0, correct = 0;
  for (const Batch& batch : batches) {
    const long step = state_.step + 1;
    const double weight = 1.0 / static_cast<double>(batch.size());
    for (Param<float>* p : params) p->zero_grad();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::size_t idx = batch.indices[b];
      const Utterance& u = data_->utterances[idx];
      Tape<float> tape(mix_seed(train_.seed, static_cast<std::uint64_t>(step), b));
      const auto out = student_forward<float>(model, Tensor<float>::constant(u.acoustic), all_valid(u.acoustic.rows()),
                                              train_.pooling, Mode::kTrain, &tape);
      const Tensor<float> li = loss_intent(out.logits, u.label, distill_.label_smoothing);
      Tensor<float> la = Tensor<float>::scalar(0.0f), lh = Tensor<float>::scalar(0.0f);
      if (have_targets) {
        const LayerTaps<float>& target = targets_[idx];
        const LayerTaps<float>& taps = out.encoded.taps;
        la = use_att ? loss_att(taps, target, map_, distill_.resample)
                     : loss_att(detached(taps), target, map_, distill_.resample);
        lh = use_hid ? loss_hid(taps, target, map_, model.heads, &tape, distill_.resample)
                     : loss_hid(detached(taps), target, map_, model.heads, nullptr, distill_.resample);
      }
      const Tensor<float> total = loss_total(li, la, lh, distill_);
      tape.backward(total);
      tape.accumulate_param_grads(weight);

      log.loss_total += total.item();
      log.loss_intent += li.item();
      log.loss_att += la.item();
      log.loss_hid += lh.item();
      correct += argmax(out.logits) == u.label ? 1 : 0;
      ++seen;
    }
    clip_grad_norm(params, train_.clip_norm);
    log.lr = lr_at(step, sched);
    adam_step(params, state_.adam, log.lr);
    state_.step = step;
  }
  state_.epoch = epoch;
  const double n = static_cast<double>(seen);
  log.step = state_.step;
  log.loss_total /= n;
  log.loss_intent /= n;
  log.loss_att /= n;
  log.loss_hid /= n;
  log.train_accuracy = static_cast<double>(correct) / n;
  return log;
}

std::vector<EpochLog> Trainer::run(int epochs) {
  std::vector<EpochLog> logs;
  for (int e = 0; e < epochs; ++e) logs.push_back(run_epoch());
  return logs;
}

}  // namespace speechkd
