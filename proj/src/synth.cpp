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

#include <cmath>
#include <cstdio>
#include <string>

#include "speechkd/data.hpp"
#include "speechkd/distill.hpp"
#include "speechkd/encoder.hpp"
#include "speechkd/error.hpp"
#include "speechkd/rng.hpp"

namespace speechkd {

namespace {

MatrixD normal_matrix(Index rows, Index cols, double scale, Rng& rng) {
  MatrixD m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Quantities shared by every utterance of a seed: token prototypes, the
// token-to-acoustic map and the speaker subspace.
struct World {
  std::vector<MatrixD> keywords;  // per class: [keywords_per_class x d_token]
  MatrixD fillers;                // [filler_vocab x d_token]
  MatrixD projection;             // [d_token x acoustic_dim]
  MatrixD speaker_basis;          // [speaker_rank x acoustic_dim]
};

World make_world(const SynthConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, 0x301D));
  const Index d = cfg.teacher.d_input;
  World w;
  for (int c = 0; c < cfg.num_classes; ++c) {
    w.keywords.push_back(normal_matrix(cfg.keywords_per_class, d, cfg.keyword_gain, rng));
  }
  w.fillers = normal_matrix(cfg.filler_vocab, d, 1.0, rng);
  w.projection = normal_matrix(d, cfg.acoustic_dim, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  w.speaker_basis = normal_matrix(cfg.speaker_rank, cfg.acoustic_dim,
                                  1.0 / std::sqrt(static_cast<double>(cfg.speaker_rank)), rng);
  return w;
}

void check_config(const SynthConfig& cfg) {
  std::vector<std::string> errors;
  if (cfg.num_classes < 2) errors.push_back("classes must be >= 2");
  if (cfg.n_train < 1 || cfg.n_test < 0) errors.push_back("need n_train >= 1 and n_test >= 0");
  if (cfg.min_tokens < 1 || cfg.max_tokens < cfg.min_tokens) errors.push_back("bad token length range");
  if (cfg.min_frames < 1 || cfg.max_frames < cfg.min_frames) errors.push_back("bad frame length range");
  if (cfg.max_frames < cfg.min_tokens) errors.push_back("max_frames must be >= min_tokens");
  if (cfg.max_tokens > cfg.teacher.max_len) errors.push_back("max_tokens exceeds the teacher max_len");
  if (cfg.acoustic_dim < 1) errors.push_back("acoustic_dim must be positive");
  if (cfg.filler_vocab < 1 || cfg.keywords_per_class < 1) errors.push_back("vocabulary sizes must be positive");
  if (cfg.speaker_rank < 1) errors.push_back("speaker_rank must be positive");
  cfg.teacher.collect_errors("teacher.", errors);
  if (!errors.empty()) {
    std::string msg = "synthesis config is invalid:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

std::vector<int> stored_layers(const SynthConfig& cfg) {
  if (!cfg.teacher_layers.empty()) return cfg.teacher_layers;
  std::vector<int> layers;
  for (const LayerPair& p : layer_map_uniform(cfg.teacher.n_layers, cfg.student_layers)) layers.push_back(p.teacher);
  return layers;
}

Dataset make_split(const SynthConfig& cfg, const World& world, const FrozenTeacher<float>& teacher,
                   const std::vector<int>& layers, const std::string& split, std::uint64_t tag, int n) {
  Dataset data;
  data.name = "synthetic-seed" + std::to_string(cfg.seed) + "-" + split;
  data.num_classes = cfg.num_classes;
  data.acoustic_dim = cfg.acoustic_dim;
  data.teacher = {cfg.teacher.n_layers, cfg.teacher.d_model, layers};

  // Balanced labels in a seeded order.
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % cfg.num_classes;
  Rng order(mix_seed(cfg.seed, tag, 0xDEC));
  for (std::size_t i = labels.size(); i > 1; --i) {
    std::swap(labels[i - 1], labels[static_cast<std::size_t>(order.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  }

  const Index d = cfg.teacher.d_input;
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(cfg.seed, tag, static_cast<std::uint64_t>(i) + 1));
    Utterance u;
    char id[32];
    std::snprintf(id, sizeof id, "%s-%05d", split.c_str(), i);
    u.id = id;
    u.label = labels[static_cast<std::size_t>(i)];

    const auto lt = static_cast<Index>(rng.uniform_int(cfg.min_tokens, cfg.max_tokens));
    const auto ls = static_cast<Index>(rng.uniform_int(std::max<Index>(cfg.min_frames, lt), cfg.max_frames));
    const Index keyword_at = static_cast<Index>(rng.uniform_int(0, lt - 1));

    MatrixD tokens(lt, d);
    for (Index t = 0; t < lt; ++t) {
      if (t == keyword_at) {
        const auto k = rng.uniform_int(0, cfg.keywords_per_class - 1);
        tokens.row(t) = world.keywords[static_cast<std::size_t>(u.label)].row(k);
        u.transcript += "kw" + std::to_string(u.label) + "_" + std::to_string(k);
      } else {
        const auto f = rng.uniform_int(0, cfg.filler_vocab - 1);
        tokens.row(t) = world.fillers.row(f);
        u.transcript += "w" + std::to_string(f);
      }
      if (t + 1 < lt) u.transcript += " ";
    }
    tokens += normal_matrix(lt, d, cfg.token_noise, rng);

    const MatrixF token_f = tokens.cast<float>();
    const LayerTaps<float> taps = teacher.taps(token_f, std::vector<bool>(static_cast<std::size_t>(lt), true), layers);
    u.teacher.layers = layers;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      u.teacher.att.push_back(taps.att[k].matrix());
      u.teacher.hid.push_back(taps.hid[k].matrix());
    }

    const MatrixD upsampled = interpolation_matrix<double>(ls, lt) * tokens;
    const MatrixD speaker = normal_matrix(1, cfg.speaker_rank, cfg.speaker_scale, rng) * world.speaker_basis;
    MatrixD acoustic = upsampled * world.projection;
    acoustic.rowwise() += speaker.row(0);
    acoustic += normal_matrix(ls, cfg.acoustic_dim, cfg.frame_noise, rng);
    u.acoustic = acoustic.cast<float>();
    data.utterances.push_back(std::move(u));
  }
  return data;
}

}  // namespace

SyntheticSplits synthesize_dataset(const SynthConfig& cfg) {
  check_config(cfg);
  const std::vector<int> layers = stored_layers(cfg);
  const World world = make_world(cfg);
  const FrozenTeacher<float> teacher(cfg.teacher, cfg.seed);
  SyntheticSplits out;
  out.train = make_split(cfg, world, teacher, layers, "train", 0x7A1, cfg.n_train);
  if (cfg.n_test > 0) out.test = make_split(cfg, world, teacher, layers, "test", 0x7E5, cfg.n_test);
  return out;
}

void write_synthetic(const std::filesystem::path& out, const SyntheticSplits& splits) {
  save_dataset(out / "train", splits.train);
  if (!splits.test.utterances.empty()) save_dataset(out / "test", splits.test);
}

}  // namespace speechkd
