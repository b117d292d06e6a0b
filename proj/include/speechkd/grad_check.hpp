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

// Central finite-difference verification of tape adjoints.

#ifndef SPEECHKD_GRAD_CHECK_HPP_
#define SPEECHKD_GRAD_CHECK_HPP_

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "speechkd/ops.hpp"
#include "speechkd/tensor.hpp"

namespace speechkd {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double tol = 0.0;
  bool passed = true;
  std::string worst_param;
  Index worst_index = -1;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double h = 1e-3;
  double tol = 1e-4;
  // Denominator floor, relative to the largest analytic gradient magnitude,
  // so entries that are zero up to rounding do not dominate the report.
  double relative_floor = 1e-3;
};

// A function evaluated on a fresh tape; it binds whatever parameters it needs
// through Tape::variable and returns a scalar.
template <typename S>
using TapeFunction = std::function<Tensor<S>(Tape<S>&)>;

// Compares the tape gradient of f with respect to every element of `params`
// against central differences (f(x+h) - f(x-h)) / 2h. Per element the error is
// |analytic - numeric| / max(|analytic|, |numeric|, floor); the check passes
// iff the maximum is <= tol.
template <typename S>
GradCheckReport grad_check_params(const TapeFunction<S>& f, const std::vector<Param<S>*>& params,
                                  const GradCheckOptions& opt = {}) {
  if (!(opt.h >= 1e-4 && opt.h <= 1e-2)) {
    throw InvalidArgument("grad_check: step h must lie in [1e-4, 1e-2]");
  }
  auto evaluate = [&f]() {
    Tape<S> tape;
    const Tensor<S> out = f(tape);
    if (out.size() != 1) throw DimensionError("grad_check: function must return a scalar");
    return static_cast<double>(out.item());
  };

  for (Param<S>* p : params) p->zero_grad();
  {
    Tape<S> tape;
    const Tensor<S> out = f(tape);
    if (out.size() != 1) throw DimensionError("grad_check: function must return a scalar");
    const S first = out.item();
    const S second = static_cast<S>(evaluate());
    if (std::memcmp(&first, &second, sizeof(S)) != 0) {
      throw NumericalError("grad_check: function is not deterministic");
    }
    tape.backward(out);
    tape.accumulate_param_grads();
  }

  double scale = 0.0;
  for (const Param<S>* p : params) scale = std::max(scale, p->grad.cwiseAbs().maxCoeff());
  const double floor = std::max(opt.relative_floor * scale, 1e-12);

  GradCheckReport report;
  report.tol = opt.tol;
  for (Param<S>* p : params) {
    for (Index i = 0; i < p->value.size(); ++i) {
      const S saved = p->value.data()[i];
      p->value.data()[i] = saved + static_cast<S>(opt.h);
      const double up = evaluate();
      p->value.data()[i] = saved - static_cast<S>(opt.h);
      const double down = evaluate();
      p->value.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.h);
      const double analytic = p->grad.data()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double err = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p->name;
        report.worst_index = i;
      }
    }
  }
  report.passed = report.max_rel_error <= opt.tol;
  return report;
}

// Single-input form: f receives x as a gradient-carrying leaf.
template <typename S>
GradCheckReport grad_check(const std::function<Tensor<S>(const Tensor<S>&)>& f,
                           const Tensor<S>& x, const GradCheckOptions& opt = {}) {
  Param<S> px("x", x.shape());
  px.value = x.matrix();
  const TapeFunction<S> bound = [&](Tape<S>& tape) { return f(tape.variable(px)); };
  return grad_check_params<S>(bound, {&px}, opt);
}

}  // namespace speechkd

#endif  // SPEECHKD_GRAD_CHECK_HPP_
