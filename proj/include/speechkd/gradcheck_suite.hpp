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

// The full finite-difference suite: every primitive on three shapes, a
// 2-layer mini-encoder, the attention, hidden and intent losses, and the
// complete student objective. All checks run in double precision.

#ifndef SPEECHKD_GRADCHECK_SUITE_HPP_
#define SPEECHKD_GRADCHECK_SUITE_HPP_

#include <string>
#include <vector>

#include "speechkd/grad_check.hpp"

namespace speechkd {

struct SuiteCheck {
  std::string name;
  GradCheckReport report;
};

struct SuiteResult {
  std::vector<SuiteCheck> checks;
  bool passed = true;
  double seconds = 0.0;
};

// With inject_bug, relu is replaced by a copy whose adjoint is off by a
// factor, which the suite must flag.
SuiteResult run_gradcheck_suite(bool inject_bug = false);

}  // namespace speechkd

#endif  // SPEECHKD_GRADCHECK_SUITE_HPP_
