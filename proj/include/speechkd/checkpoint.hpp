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

// Checkpoint directories:
//   <dir>/manifest.json           resolved run config, step, epoch, file list
//   <dir>/tensors/<name>.stdt     parameters
//   <dir>/tensors/adam.m.<name>.stdt, adam.v.<name>.stdt

#ifndef SPEECHKD_CHECKPOINT_HPP_
#define SPEECHKD_CHECKPOINT_HPP_

#include <filesystem>

#include "speechkd/config.hpp"
#include "speechkd/train.hpp"

namespace speechkd {

struct Checkpoint {
  RunConfig config;
  TrainState state;
};

void save_checkpoint(const std::filesystem::path& dir, const RunConfig& config, const TrainState& state);
// Throws ConfigError for a manifest that disagrees with its tensors.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace speechkd

#endif  // SPEECHKD_CHECKPOINT_HPP_
