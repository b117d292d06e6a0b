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

// JSON run configuration. Every key is optional and falls back to the
// defaults of the corresponding struct; unknown keys are errors.
//
//   {
//     "seed": 1,
//     "output_dir": "runs/std",
//     "student": {"n_layers": 4, "d_model": 512, "n_heads": 8, "d_ff": 2048,
//                 "d_input": 256, "dropout": 0.1, "max_len": 1024},
//     "teacher": {... same keys ...},
//     "distill": {"alpha1": 0.625, "alpha2": 0.125, "alpha3": 0.25,
//                 "layer_map": [[3, 1], [6, 2], [9, 3], [12, 4]],
//                 "resample": "bilinear" | "truncate_pad",
//                 "label_smoothing": 0.1, "shared_head": false},
//     "train": {"epochs": 50, "batch_size": 16, "warmup_steps": 4000,
//               "lr_factor": 1.0, "clip_norm": 5.0, "pooling": "mean" | "max",
//               "adam": {"beta1": 0.9, "beta2": 0.98, "eps": 1e-9}},
//     "data": {"train": "data/train", "test": "data/test"}
//   }
//
// Relative paths resolve against the directory holding the config file.

#ifndef SPEECHKD_CONFIG_HPP_
#define SPEECHKD_CONFIG_HPP_

#include <filesystem>
#include <string>

#include "speechkd/distill.hpp"
#include "speechkd/encoder.hpp"
#include "speechkd/train.hpp"

namespace speechkd {

struct RunConfig {
  EncoderConfig student = EncoderConfig::student();
  EncoderConfig teacher = EncoderConfig::teacher();
  DistillConfig distill;
  TrainConfig train;
  std::filesystem::path train_data;
  std::filesystem::path test_data;
  std::filesystem::path output_dir = "runs/default";

  std::uint64_t seed() const { return train.seed; }
};

// Parses JSON text. Throws ConfigError listing every problem found.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// The fully resolved configuration, every field written out.
std::string run_config_json(const RunConfig& cfg);

// Cross-field checks (head divisibility, layer map, projection widths).
void validate_run_config(const RunConfig& cfg);

enum class TrainMode { kStd, kStdHidden, kBaseline };

TrainMode parse_train_mode(const std::string& name);
std::string train_mode_name(TrainMode mode);

// std keeps the configured weights, std-hidden zeroes alpha2 and baseline
// zeroes alpha2 and alpha3.
RunConfig apply_mode(RunConfig cfg, TrainMode mode);

}  // namespace speechkd

#endif  // SPEECHKD_CONFIG_HPP_
