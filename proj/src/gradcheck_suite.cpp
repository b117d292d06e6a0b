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

#include "speechkd/gradcheck_suite.hpp"

#include <chrono>

#include "speechkd/distill.hpp"
#include "speechkd/encoder.hpp"
#include "speechkd/ops.hpp"
#include "speechkd/rng.hpp"
#include "speechkd/train.hpp"

namespace speechkd {

namespace {

using TD = Tensor<double>;

MatrixD normal(Index r, Index c, Rng& rng) {
  MatrixD m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

MatrixD stochastic(Index r, Index c, Rng& rng) {
  MatrixD m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = 0.05 + rng.uniform();
  for (Index i = 0; i < r; ++i) m.row(i) /= m.row(i).sum();
  return m;
}

TD probe(const TD& out, std::uint64_t seed) {
  Rng rng(seed);
  const auto [r, c] = matrix_dims(out.shape());
  return sum(mul(out, TD::constant(out.shape(), normal(r, c, rng))));
}

TD buggy_relu(const TD& x) {
  RowMatrix<double> v = x.matrix().cwiseMax(0.0);
  if (x.tape() == nullptr) return TD::constant(x.shape(), std::move(v));
  auto xn = x.node();
  return x.tape()->record("relu", x.shape(), std::move(v), [xn](const RowMatrix<double>& g) {
    xn->accumulate(0.5 * (xn->value.array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

struct Suite {
  SuiteResult result;
  Rng rng{20260};
  std::uint64_t probe_seed = 5000;

  void add(std::string name, const GradCheckReport& r) {
    result.passed = result.passed && r.passed;
    result.checks.push_back({std::move(name), r});
  }

  template <typename Op>
  void unary(const std::string& name, Op op, Index r, Index c, GradCheckOptions opt = {}) {
    Param<double> x("x", Shape{r, c});
    x.value = normal(r, c, rng);
    const std::uint64_t ps = ++probe_seed;
    add(name + " " + shape_str(x.shape),
        grad_check_params<double>([&](Tape<double>& t) { return probe(op(t.variable(x)), ps); }, {&x}, opt));
  }

  template <typename Op>
  void binary(const std::string& name, Op op, Shape sa, Shape sb) {
    Param<double> a("a", sa), b("b", sb);
    a.value = normal(a.value.rows(), a.value.cols(), rng);
    b.value = normal(b.value.rows(), b.value.cols(), rng);
    const std::uint64_t ps = ++probe_seed;
    add(name + " " + shape_str(sa) + "," + shape_str(sb),
        grad_check_params<double>([&](Tape<double>& t) { return probe(op(t.variable(a), t.variable(b)), ps); },
                                  {&a, &b}));
  }

  void primitives(bool inject_bug) {
    struct Dims {
      Index r, c;
    };
    for (const Dims s : {Dims{1, 4}, Dims{3, 5}, Dims{6, 2}}) {
      const Shape sh{s.r, s.c};
      binary("add", [](const TD& a, const TD& b) { return speechkd::add(a, b); }, sh, sh);
      binary("sub", [](const TD& a, const TD& b) { return sub(a, b); }, sh, sh);
      binary("mul", [](const TD& a, const TD& b) { return mul(a, b); }, sh, sh);
      binary("matmul", [](const TD& a, const TD& b) { return matmul(a, b); }, sh, Shape{s.c, 3});
      binary("add_bias", [](const TD& a, const TD& b) { return add_bias(a, b); }, sh, Shape{s.c});
      binary("concat0", [](const TD& a, const TD& b) { return concat<double>({a, b}, 0); }, sh, Shape{2, s.c});
      binary("concat1", [](const TD& a, const TD& b) { return concat<double>({a, b}, 1); }, sh, Shape{s.r, 2});
      binary("mse", [](const TD& a, const TD& b) { return mse(a, b); }, sh, sh);

      unary("scale", [](const TD& x) { return scale(x, -1.7); }, s.r, s.c);
      if (inject_bug) {
        unary("relu (injected adjoint bug)", buggy_relu, s.r, s.c);
      } else {
        unary("relu", [](const TD& x) { return relu(x); }, s.r, s.c);
      }
      unary("transpose", [](const TD& x) { return transpose(x); }, s.r, s.c);
      unary("reshape", [s](const TD& x) { return reshape(x, Shape{s.c, s.r}); }, s.r, s.c);
      unary("mean0", [](const TD& x) { return mean(x, 0); }, s.r, s.c);
      unary("mean1", [](const TD& x) { return mean(x, 1); }, s.r, s.c);
      unary("max_over_rows", [](const TD& x) { return max_over_rows(x); }, s.r, s.c);
      unary("sum", [](const TD& x) { return sum(x); }, s.r, s.c);
      unary("mean_all", [](const TD& x) { return mean_all(x); }, s.r, s.c);
      unary("slice_rows", [s](const TD& x) { return slice_rows(x, s.r / 2, s.r - s.r / 2); }, s.r, s.c);
      unary("slice_cols", [s](const TD& x) { return slice_cols(x, 1, s.c - 1); }, s.r, s.c);
      unary("log_softmax", [](const TD& x) { return log_softmax(x); }, s.r, s.c);
      unary("dropout", [](const TD& x) { return dropout(x, 0.3, 17, 2); }, s.r, s.c);

      BoolMatrix mask(s.r, s.c);
      for (Index i = 0; i < s.r; ++i) {
        for (Index j = 0; j < s.c; ++j) mask(i, j) = (i + j) % 3 != 1;
        mask(i, i % s.c) = true;
      }
      unary("softmax_masked", [&mask](const TD& x) { return softmax_masked(x, mask); }, s.r, s.c);

      const Index d = s.c + 1;
      Param<double> x("x", Shape{s.r, d}), gamma("gamma", Shape{d}), beta("beta", Shape{d});
      x.value = normal(s.r, d, rng);
      gamma.value = normal(1, d, rng);
      beta.value = normal(1, d, rng);
      const std::uint64_t ps = ++probe_seed;
      add("layer_norm " + shape_str(x.shape),
          grad_check_params<double>(
              [&](Tape<double>& t) {
                return probe(layer_norm(t.variable(x), t.variable(gamma), t.variable(beta)), ps);
              },
              {&x, &gamma, &beta}, {.h = 1e-4}));
    }
  }

  void mini_encoder() {
    const EncoderConfig cfg{2, 8, 2, 16, 6, 0.0, 16};
    EncoderParams<double> params = EncoderParams<double>::init(cfg, rng, "mini");
    Param<double> x("x", Shape{5, 6});
    x.value = normal(5, 6, rng);
    const std::vector<bool> mask{true, true, true, true, false};
    std::vector<Param<double>*> all = params.all();
    all.push_back(&x);
    const std::uint64_t ps = ++probe_seed;
    add("encoder 2x[d=8,h=2] L=5",
        grad_check_params<double>(
            [&](Tape<double>& t) {
              const auto out = encode(t.variable(x), mask, cfg, bind(params, &t), Mode::kEval, &t);
              return speechkd::add(speechkd::add(probe(out.final_hidden, ps), probe(out.taps.att_of(1), ps + 1)),
                                   probe(out.taps.hid_of(2), ps + 2));
            },
            all, {.h = 1e-4}));
  }

  void losses() {
    // Attention loss, student 8x8 against a 6x6 teacher resampled to 8.
    const LayerMap one{{1, 1}};
    Param<double> s_att("student.att", Shape{8, 8});
    s_att.value = stochastic(8, 8, rng);
    const LayerTaps<double> t_att = constant_taps<double>({1}, {stochastic(6, 6, rng)}, {normal(6, 5, rng)}, 6);
    add("loss_att 8x8",
        grad_check_params<double>(
            [&](Tape<double>& t) {
              LayerTaps<double> s;
              s.layers = {1};
              s.valid_len = 8;
              s.att = {t.variable(s_att)};
              s.hid = {TD::constant(MatrixD::Zero(8, 3))};
              return loss_att(s, t_att, one);
            },
            {&s_att}));

    // Hidden loss with W_H: 1 pair, L=4, width 3 -> 5.
    Param<double> s_hid("student.hid", Shape{4, 3});
    s_hid.value = normal(4, 3, rng);
    DistillHeads<double> heads = DistillHeads<double>::init(1, 3, 5, false, rng);
    const LayerTaps<double> t_hid = constant_taps<double>({1}, {stochastic(6, 6, rng)}, {normal(6, 5, rng)}, 6);
    add("loss_hid W_H 3->5 L=4",
        grad_check_params<double>(
            [&](Tape<double>& t) {
              LayerTaps<double> s;
              s.layers = {1};
              s.valid_len = 4;
              s.att = {TD::constant(MatrixD::Zero(4, 4))};
              s.hid = {t.variable(s_hid)};
              return loss_hid(s, t_hid, one, heads, &t);
            },
            {&s_hid, &heads.weights[0]}));

    Param<double> logits("logits", Shape{1, 5});
    logits.value = normal(1, 5, rng);
    add("loss_intent eps=0.1",
        grad_check_params<double>([&](Tape<double>& t) { return loss_intent(t.variable(logits), 2, 0.1); },
                                  {&logits}));
  }

  void student_objective() {
    const EncoderConfig cfg{2, 8, 2, 16, 6, 0.0, 16};
    const int t_width = 6;
    const LayerMap map = layer_map_uniform(4, 2);
    StudentModel<double> model = StudentModel<double>::init(cfg, 3, 2, t_width, false, 77);
    const MatrixD x = normal(5, 6, rng);
    const LayerTaps<double> teacher = constant_taps<double>(
        {2, 4}, {stochastic(5, 5, rng), stochastic(5, 5, rng)}, {normal(5, t_width, rng), normal(5, t_width, rng)}, 5);
    const DistillConfig dc;
    add("student objective (intent + att + hid)",
        grad_check_params<double>(
            [&](Tape<double>& t) {
              const auto out = student_forward<double>(model, TD::constant(x), std::vector<bool>(5, true),
                                                       Pooling::kMean, Mode::kEval, &t);
              return loss_total(loss_intent(out.logits, 1, 0.1), loss_att(out.encoded.taps, teacher, map),
                                loss_hid(out.encoded.taps, teacher, map, model.heads, &t), dc);
            },
            model.all(), {.h = 1e-4}));
  }
};

}  // namespace

SuiteResult run_gradcheck_suite(bool inject_bug) {
  const auto start = std::chrono::steady_clock::now();
  Suite suite;
  suite.primitives(inject_bug);
  suite.mini_encoder();
  suite.losses();
  suite.student_objective();
  suite.result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return suite.result;
}

}  // namespace speechkd
