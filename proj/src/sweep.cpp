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

#include "speechkd/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "speechkd/error.hpp"

namespace speechkd {

std::vector<SweepRow> run_sweep(StudentModel<float>& model, const Dataset& data, Pooling pooling,
                                const std::vector<double>& snrs, int n_seeds) {
  if (snrs.empty()) throw ConfigError("sweep: SNR list is empty");
  if (n_seeds < 1) throw ConfigError("sweep: need at least one seed");
  std::vector<SweepRow> rows;
  for (double snr : snrs) {
    for (int s = 1; s <= n_seeds; ++s) {
      const auto seed = static_cast<std::uint64_t>(s);
      rows.push_back({snr, seed, evaluate(model, data, pooling, NoiseSpec{snr, seed}).accuracy});
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "snr_db,seed,accuracy\n";
  char line[96];
  for (const SweepRow& r : rows) {
    std::snprintf(line, sizeof line, "%g,%llu,%.6f\n", r.snr_db, static_cast<unsigned long long>(r.seed), r.accuracy);
    out << line;
  }
  return out.str();
}

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !std::isfinite(v)) throw ConfigError("sweep: bad SNR value \"" + item + "\"");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("sweep: SNR list is empty");
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace speechkd
