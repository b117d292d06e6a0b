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

// Accuracy under injected noise over a grid of SNR levels and noise seeds.

#ifndef SPEECHKD_SWEEP_HPP_
#define SPEECHKD_SWEEP_HPP_

#include <string>
#include <vector>

#include "speechkd/data.hpp"
#include "speechkd/train.hpp"

namespace speechkd {

inline const std::vector<double>& default_snrs() {
  static const std::vector<double> kSnrs = {15.0, 10.0, 5.0, 0.0};
  return kSnrs;
}

struct SweepRow {
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

// One row per (snr, seed) with seeds 1..n_seeds, SNR-major. Each cell equals
// evaluate(model, data, pooling, NoiseSpec{snr, seed}).
std::vector<SweepRow> run_sweep(StudentModel<float>& model, const Dataset& data, Pooling pooling,
                                const std::vector<double>& snrs, int n_seeds);

// "snr_db,seed,accuracy" followed by one line per row.
std::string sweep_csv(const std::vector<SweepRow>& rows);

// Parses "15,10,5,0".
std::vector<double> parse_snr_list(const std::string& text);

double median(std::vector<double> values);

}  // namespace speechkd

#endif  // SPEECHKD_SWEEP_HPP_
