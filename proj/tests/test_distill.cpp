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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "speechkd/distill.hpp"
#include "speechkd/error.hpp"
#include "speechkd/grad_check.hpp"
#include "test_util.hpp"

using namespace speechkd;
using speechkd::testing::random_matrix;
using speechkd::testing::random_stochastic;
using TD = Tensor<double>;

namespace {

// Bilinear sample of `a` at fractional coordinates, written out directly.
double sample(const MatrixD& a, double u, double v) {
  const auto i0 = static_cast<Index>(std::floor(u)), j0 = static_cast<Index>(std::floor(v));
  const Index i1 = std::min(i0 + 1, a.rows() - 1), j1 = std::min(j0 + 1, a.cols() - 1);
  const double fu = u - static_cast<double>(i0), fv = v - static_cast<double>(j0);
  return (1 - fu) * (1 - fv) * a(i0, j0) + (1 - fu) * fv * a(i0, j1) + fu * (1 - fv) * a(i1, j0) + fu * fv * a(i1, j1);
}

MatrixD brute_resample(const MatrixD& a, Index n) {
  MatrixD out(n, n);
  const double step = n > 1 ? static_cast<double>(a.rows() - 1) / static_cast<double>(n - 1) : 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) out(i, j) = sample(a, static_cast<double>(i) * step, static_cast<double>(j) * step);
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

LayerTaps<double> taps_of(std::vector<int> layers, std::vector<MatrixD> att, std::vector<MatrixD> hid, Index len) {
  return constant_taps<double>(layers, att, hid, len);
}

}  // namespace

TEST_CASE("uniform layer map") {
  const LayerMap expected{{3, 1}, {6, 2}, {9, 3}, {12, 4}};
  CHECK(layer_map_uniform(12, 4) == expected);
  CHECK(layer_map_uniform(12, 6) == LayerMap{{2, 1}, {4, 2}, {6, 3}, {8, 4}, {10, 5}, {12, 6}});
  CHECK(layer_map_uniform(4, 4) == LayerMap{{1, 1}, {2, 2}, {3, 3}, {4, 4}});
  CHECK_THROWS_AS(layer_map_uniform(12, 5), ConfigError);
  try {
    layer_map_uniform(12, 5);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("not divisible") != std::string::npos);
  }
  CHECK_THROWS_AS(layer_map_uniform(3, 4), ConfigError);
  CHECK_NOTHROW(validate_layer_map(expected, 12, 4));
  CHECK_THROWS_AS(validate_layer_map({{3, 1}, {6, 2}, {13, 3}, {12, 4}}, 12, 4), ConfigError);
  CHECK_THROWS_AS(validate_layer_map({{3, 1}, {6, 2}}, 12, 4), ConfigError);
}

TEST_CASE("interpolation matrix is corner aligned") {
  const RowMatrix<double> r = interpolation_matrix<double>(3, 2);
  CHECK(r(0, 0) == 1.0);
  CHECK(r(1, 0) == doctest::Approx(0.5));
  CHECK(r(1, 1) == doctest::Approx(0.5));
  CHECK(r(2, 1) == 1.0);
  CHECK(interpolation_matrix<double>(1, 4)(0, 0) == 1.0);
  MatrixD col(3, 1);
  col << 0, 6, 12;
  const MatrixD down = resample_hidden(col, 2);
  CHECK(down(0, 0) == 0.0);
  CHECK(down(1, 0) == doctest::Approx(12.0));
}

TEST_CASE("attention resampling hand example") {
  MatrixD a(3, 3);
  a << 0.5, 0.3, 0.2, 0.1, 0.8, 0.1, 0.2, 0.2, 0.6;
  const MatrixD r = resample_attention(a, 2);
  CHECK(r(0, 0) == doctest::Approx(5.0 / 7.0));
  CHECK(r(0, 1) == doctest::Approx(2.0 / 7.0));
  CHECK(r(1, 0) == doctest::Approx(0.25));
  CHECK(r(1, 1) == doctest::Approx(0.75));
  CHECK(resample_attention(a, 3) == a);
}

TEST_CASE("attention resampling matches a direct bilinear oracle and stays row-stochastic") {
  Rng rng(3);
  for (const auto& [lt, ls] : {std::pair<Index, Index>{6, 20}, {12, 9}, {7, 7}, {9, 60}, {5, 1}}) {
    const MatrixD a = random_stochastic(lt, lt, rng);
    const MatrixD r = resample_attention(a, ls);
    CHECK((r - brute_resample(a, ls)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
    CHECK(r.minCoeff() >= 0.0);
  }
}

TEST_CASE("truncate-pad alignment") {
  MatrixD a = MatrixD::Constant(3, 3, 1.0 / 3.0);
  const MatrixD longer = truncate_pad_attention(a, 5);
  CHECK(longer.topLeftCorner(3, 3) == a);
  CHECK(longer.bottomRows(2).isZero());
  CHECK(truncate_pad_attention(a, 2) == a.topLeftCorner(2, 2));
  MatrixD h = MatrixD::Ones(3, 4);
  CHECK(truncate_pad_hidden(h, 5).bottomRows(2).isZero());
  CHECK(align_hidden(h, 2, ResampleMode::kTruncatePad).rows() == 2);
}

TEST_CASE("attention loss constant example") {
  const auto s = taps_of({1}, {MatrixD::Constant(2, 2, 0.5)}, {MatrixD::Zero(2, 3)}, 2);
  MatrixD t(2, 2);
  t << 0.75, 0.25, 0.25, 0.75;
  const auto teacher = taps_of({3}, {t}, {MatrixD::Zero(2, 3)}, 2);
  CHECK(loss_att(s, teacher, {{3, 1}}).item() == doctest::Approx(0.0625).epsilon(1e-12));
}

TEST_CASE("losses vanish when student taps equal aligned teacher taps") {
  Rng rng(5);
  const Index lt = 7, ls = 11, d = 6;
  std::vector<MatrixD> t_att, t_hid, s_att, s_hid;
  for (int k = 0; k < 2; ++k) {
    t_att.push_back(random_stochastic(lt, lt, rng));
    t_hid.push_back(random_matrix(lt, d, rng));
    s_att.push_back(resample_attention(t_att.back(), ls));
    s_hid.push_back(resample_hidden(t_hid.back(), ls));
  }
  const LayerMap map{{2, 1}, {4, 2}};
  const auto teacher = taps_of({2, 4}, t_att, t_hid, lt);
  const auto student = taps_of({1, 2}, s_att, s_hid, ls);
  DistillHeads<double> heads = DistillHeads<double>::init(2, d, d, false, rng);
  for (auto& w : heads.weights) w.value.setIdentity();
  CHECK(loss_att(student, teacher, map).item() < 1e-20);
  CHECK(loss_hid(student, teacher, map, heads, nullptr).item() < 1e-20);

  // Perturbing one student entry makes both strictly positive.
  s_att[0](1, 2) += 0.1;
  s_hid[1](3, 4) += 0.1;
  const auto moved = taps_of({1, 2}, s_att, s_hid, ls);
  CHECK(loss_att(moved, teacher, map).item() > 0.0);
  CHECK(loss_hid(moved, teacher, map, heads, nullptr).item() > 0.0);
}

TEST_CASE("losses compare only the valid region") {
  Rng rng(8);
  MatrixD att = MatrixD::Zero(6, 6), hid = MatrixD::Zero(6, 4);
  att.topLeftCorner(4, 4) = random_stochastic(4, 4, rng);
  hid.topRows(4) = random_matrix(4, 4, rng);
  const auto teacher = taps_of({1}, {att.topLeftCorner(4, 4)}, {hid.topRows(4)}, 4);
  MatrixD junk_att = att, junk_hid = hid;
  junk_att.bottomRows(2).setConstant(9.0);
  junk_hid.bottomRows(2).setConstant(-9.0);
  const auto student = taps_of({1}, {junk_att}, {junk_hid}, 4);
  DistillHeads<double> heads = DistillHeads<double>::init(1, 4, 4, false, rng);
  heads.weights[0].value.setIdentity();
  CHECK(loss_att(student, teacher, {{1, 1}}).item() < 1e-20);
  CHECK(loss_hid(student, teacher, {{1, 1}}, heads, nullptr).item() < 1e-20);
}

TEST_CASE("loss_total weighting") {
  DistillConfig cfg;
  CHECK(cfg.alpha1 == 0.625);
  CHECK(cfg.alpha2 == 0.125);
  CHECK(cfg.alpha3 == 0.250);
  CHECK(cfg.label_smoothing == 0.1);
  const TD total = loss_total(TD::scalar(2.0), TD::scalar(4.0), TD::scalar(8.0), cfg);
  CHECK(std::abs(total.item() - 3.75) < 1e-12);
  cfg.alpha1 = 1.0;
  cfg.alpha2 = cfg.alpha3 = 0.0;
  CHECK(loss_total(TD::scalar(2.0), TD::scalar(4.0), TD::scalar(8.0), cfg).item() == 2.0);
  cfg.alpha1 = 0.0;
  CHECK(loss_total(TD::scalar(0.0), TD::scalar(0.0), TD::scalar(0.0), cfg).item() == 0.0);
}

TEST_CASE("label-smoothed cross-entropy") {
  for (int k : {2, 5, 8, 31}) {
    const TD uniform = TD::constant(RowMatrix<double>::Constant(1, k, 0.7));
    CHECK(std::abs(loss_intent(uniform, k - 1, 0.1).item() - std::log(static_cast<double>(k))) < 1e-12);
  }
  RowMatrix<double> z(1, 3);
  z << 2.0, 1.0, 0.0;
  CHECK(loss_intent(TD::constant(z), 0, 0.1).item() == doctest::Approx(0.5576059644443802).epsilon(1e-12));
  CHECK(loss_intent(TD::constant(z), 0, 0.0).item() == doctest::Approx(0.40760596444438013).epsilon(1e-12));
  RowMatrix<double> z4(1, 4);
  z4 << 1.5, -0.5, 0.25, 2.0;
  CHECK(loss_intent(TD::constant(z4), 3, 0.1).item() == doctest::Approx(0.7801937286397914).epsilon(1e-12));
  CHECK_THROWS_AS(loss_intent(TD::constant(z), 3, 0.1), InvalidArgument);
  CHECK_THROWS_AS(loss_intent(TD::constant(z), -1, 0.1), InvalidArgument);
  CHECK_THROWS_AS(loss_intent(TD::constant(z), 0, 1.0), InvalidArgument);
}

TEST_CASE("gradient checks for the three losses") {
  Rng rng(13);
  const GradCheckOptions opt{.h = 1e-3, .tol = 1e-4};
  const LayerMap one{{1, 1}};

  Param<double> s_att("s_att", Shape{8, 8});
  s_att.value = random_stochastic(8, 8, rng);
  const auto t1 = taps_of({1}, {random_stochastic(8, 8, rng)}, {random_matrix(8, 3, rng)}, 8);
  const auto att_report = grad_check_params<double>(
      [&](Tape<double>& tape) {
        LayerTaps<double> s;
        s.layers = {1};
        s.valid_len = 8;
        s.att = {tape.variable(s_att)};
        s.hid = {TD::constant(MatrixD::Zero(8, 3))};
        return loss_att(s, t1, one);
      },
      {&s_att}, opt);
  CHECK(att_report.passed);

  Param<double> s_hid("s_hid", Shape{4, 3});
  s_hid.value = random_matrix(4, 3, rng);
  DistillHeads<double> heads = DistillHeads<double>::init(1, 3, 5, false, rng);
  const auto t2 = taps_of({1}, {random_stochastic(4, 4, rng)}, {random_matrix(4, 5, rng)}, 4);
  const auto hid_report = grad_check_params<double>(
      [&](Tape<double>& tape) {
        LayerTaps<double> s;
        s.layers = {1};
        s.valid_len = 4;
        s.att = {TD::constant(MatrixD::Zero(4, 4))};
        s.hid = {tape.variable(s_hid)};
        return loss_hid(s, t2, one, heads, &tape);
      },
      {&s_hid, &heads.weights[0]}, opt);
  CHECK(hid_report.passed);

  Param<double> logits("logits", Shape{1, 6});
  logits.value = random_matrix(1, 6, rng);
  const auto ce_report = grad_check_params<double>(
      [&](Tape<double>& tape) { return loss_intent(tape.variable(logits), 4, 0.1); }, {&logits}, opt);
  CHECK(ce_report.passed);
}

TEST_CASE("total-loss gradient is linear in the weights and teacher taps get none") {
  Rng rng(17);
  Param<double> s_att("s_att", Shape{5, 5}), s_hid("s_hid", Shape{5, 3}), logits("logits", Shape{1, 4});
  s_att.value = random_stochastic(5, 5, rng);
  s_hid.value = random_matrix(5, 3, rng);
  logits.value = random_matrix(1, 4, rng);
  DistillHeads<double> heads = DistillHeads<double>::init(1, 3, 4, false, rng);
  const MatrixD t_att_value = random_stochastic(7, 7, rng);
  const MatrixD t_hid_value = random_matrix(7, 4, rng);
  bool teacher_got_grad = false;
  std::vector<Param<double>*> params{&s_att, &s_hid, &logits, &heads.weights[0]};

  auto grads = [&](double a1, double a2, double a3) {
    for (auto* p : params) p->zero_grad();
    Tape<double> tape;
    LayerTaps<double> s;
    s.layers = {1};
    s.valid_len = 5;
    s.att = {tape.variable(s_att)};
    s.hid = {tape.variable(s_hid)};
    LayerTaps<double> t;
    t.layers = {1};
    t.valid_len = 7;
    t.att = {tape.leaf(t_att_value)};
    t.hid = {tape.leaf(t_hid_value)};
    DistillConfig cfg;
    cfg.alpha1 = a1;
    cfg.alpha2 = a2;
    cfg.alpha3 = a3;
    const TD total = loss_total(loss_intent(tape.variable(logits), 2, 0.1), loss_att(s, t, {{1, 1}}),
                                loss_hid(s, t, {{1, 1}}, heads, &tape), cfg);
    tape.backward(total);
    tape.accumulate_param_grads();
    teacher_got_grad = teacher_got_grad || t.att[0].has_grad() || t.hid[0].has_grad();
    std::vector<MatrixD> g;
    for (auto* p : params) g.push_back(p->grad);
    return std::make_pair(total.item(), g);
  };

  const auto [full, g] = grads(0.625, 0.125, 0.25);
  const auto [i_val, gi] = grads(1, 0, 0);
  const auto [a_val, ga] = grads(0, 1, 0);
  const auto [h_val, gh] = grads(0, 0, 1);
  CHECK(std::abs(full - (0.625 * i_val + 0.125 * a_val + 0.25 * h_val)) < 1e-12);
  for (std::size_t k = 0; k < g.size(); ++k) {
    CHECK((g[k] - (0.625 * gi[k] + 0.125 * ga[k] + 0.25 * gh[k])).cwiseAbs().maxCoeff() < 1e-6);
  }
  const auto [scaled, gs] = grads(3 * 0.625, 3 * 0.125, 3 * 0.25);
  CHECK(std::abs(scaled - 3 * full) < 1e-12);
  for (std::size_t k = 0; k < g.size(); ++k) CHECK((gs[k] - 3 * g[k]).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_FALSE(teacher_got_grad);
}

TEST_CASE("distillation heads") {
  Rng rng(1);
  auto per_pair = DistillHeads<float>::init(4, 512, 768, false, rng);
  CHECK(per_pair.weights.size() == 4);
  CHECK(per_pair.weights[2].name == "distill.w_h3");
  CHECK(per_pair.weights[0].shape == Shape{512, 768});
  auto shared = DistillHeads<float>::init(4, 8, 12, true, rng);
  CHECK(shared.weights.size() == 1);
  CHECK(&shared.for_pair(3) == &shared.for_pair(0));
}

TEST_CASE("loss errors name the missing layer") {
  const auto s = taps_of({1}, {MatrixD::Identity(2, 2)}, {MatrixD::Zero(2, 3)}, 2);
  const auto t = taps_of({3}, {MatrixD::Identity(2, 2)}, {MatrixD::Zero(2, 3)}, 2);
  try {
    loss_att(s, t, {{6, 1}});
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("teacher layer 6") != std::string::npos);
  }
  CHECK_THROWS_AS(loss_att(s, t, {}), InvalidArgument);
}
