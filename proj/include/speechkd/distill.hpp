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

// Layer-by-layer teacher-to-student distillation: block layer mapping,
// attention MSE on head-averaged maps, projected hidden-state MSE, the
// label-smoothed intent loss, and their weighted total.

#ifndef SPEECHKD_DISTILL_HPP_
#define SPEECHKD_DISTILL_HPP_

#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "speechkd/encoder.hpp"
#include "speechkd/ops.hpp"
#include "speechkd/rng.hpp"
#include "speechkd/tensor.hpp"

namespace speechkd {

// 1-based teacher and student layer indices.
struct LayerPair {
  int teacher = 0;
  int student = 0;
  bool operator==(const LayerPair&) const = default;
};
using LayerMap = std::vector<LayerPair>;

// Teacher layers are grouped into n_student blocks of n_teacher / n_student;
// the last layer of each block feeds the matching student layer.
inline LayerMap layer_map_uniform(int n_teacher, int n_student) {
  if (n_student < 1 || n_teacher < n_student) {
    throw ConfigError("layer map: need n_teacher >= n_student >= 1, got " +
                      std::to_string(n_teacher) + " and " + std::to_string(n_student));
  }
  if (n_teacher % n_student != 0) {
    throw ConfigError("layer map: teacher depth " + std::to_string(n_teacher) + " is not divisible by student depth " +
                      std::to_string(n_student) + "; give an explicit layer_map");
  }
  const int block = n_teacher / n_student;
  LayerMap map;
  for (int i = 1; i <= n_student; ++i) map.push_back({block * i, i});
  return map;
}

// Student indices must be exactly 1..n_student and both coordinates strictly
// increasing.
inline void validate_layer_map(const LayerMap& map, int n_teacher, int n_student) {
  if (static_cast<int>(map.size()) != n_student) {
    throw ConfigError("layer map: expected " + std::to_string(n_student) + " pairs, got " +
                      std::to_string(map.size()));
  }
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i].student != static_cast<int>(i) + 1) {
      throw ConfigError("layer map: student layers must be 1.." + std::to_string(n_student) + " in order");
    }
    if (map[i].teacher < 1 || map[i].teacher > n_teacher) {
      throw ConfigError("layer map: teacher layer " + std::to_string(map[i].teacher) + " outside 1.." +
                        std::to_string(n_teacher));
    }
    if (i > 0 && map[i].teacher <= map[i - 1].teacher) {
      throw ConfigError("layer map: teacher layers must be strictly increasing");
    }
  }
}

enum class ResampleMode { kBilinear, kTruncatePad };

struct DistillConfig {
  double alpha1 = 0.625;  // intent
  double alpha2 = 0.125;  // attention
  double alpha3 = 0.250;  // hidden
  LayerMap layer_map;     // empty: layer_map_uniform(teacher layers, student layers)
  ResampleMode resample = ResampleMode::kBilinear;
  double label_smoothing = 0.1;
  int s_dmodel = 512;
  int t_dmodel = 768;
  bool shared_head = false;

  void collect_errors(std::vector<std::string>& errors) const {
    if (!(alpha1 >= 0.0 && alpha2 >= 0.0 && alpha3 >= 0.0)) errors.push_back("distill: alphas must be non-negative");
    if (!(label_smoothing >= 0.0 && label_smoothing < 0.5)) {
      errors.push_back("distill: label_smoothing must be in [0, 0.5)");
    }
    if (s_dmodel < 1 || t_dmodel < 1) errors.push_back("distill: hidden widths must be positive");
  }
};

// Corner-aligned linear interpolation matrix R [out x in]: output sample i
// reads source coordinate i * (in - 1) / (out - 1).
template <typename S>
RowMatrix<S> interpolation_matrix(Index out, Index in) {
  if (out < 1 || in < 1) throw InvalidArgument("resample: lengths must be positive");
  RowMatrix<S> r = RowMatrix<S>::Zero(out, in);
  for (Index i = 0; i < out; ++i) {
    const double u = out == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
    const Index lo = std::min(static_cast<Index>(std::floor(u)), in - 1);
    const Index hi = std::min(lo + 1, in - 1);
    const double frac = u - static_cast<double>(lo);
    r(i, lo) += static_cast<S>(1.0 - frac);
    if (hi != lo) r(i, hi) += static_cast<S>(frac);
  }
  return r;
}

// Bilinear resampling of an L_t x L_t attention map onto l_s x l_s, then each
// row renormalized to sum to one.
template <typename Derived>
RowMatrix<typename Derived::Scalar> resample_attention(const Eigen::MatrixBase<Derived>& att, Index l_s) {
  using S = typename Derived::Scalar;
  if (att.rows() != att.cols()) throw DimensionError("resample_attention: map must be square");
  if (!att.allFinite()) throw NumericalError("resample_attention: non-finite input");
  if (att.rows() == l_s) return att;
  const RowMatrix<S> r = interpolation_matrix<S>(l_s, att.rows());
  RowMatrix<S> out = r * att * r.transpose();
  for (Index i = 0; i < out.rows(); ++i) {
    const S total = out.row(i).sum();
    if (total > S(0)) out.row(i) /= total;
  }
  return out;
}

// Per-dimension linear interpolation along time, corner-aligned.
template <typename Derived>
RowMatrix<typename Derived::Scalar> resample_hidden(const Eigen::MatrixBase<Derived>& hid, Index l_s) {
  using S = typename Derived::Scalar;
  if (!hid.allFinite()) throw NumericalError("resample_hidden: non-finite input");
  if (hid.rows() == l_s) return hid;
  return interpolation_matrix<S>(l_s, hid.rows()) * hid;
}

// Truncate-or-zero-pad alternatives for ablation.
template <typename Derived>
RowMatrix<typename Derived::Scalar> truncate_pad_attention(const Eigen::MatrixBase<Derived>& att, Index l_s) {
  using S = typename Derived::Scalar;
  RowMatrix<S> out = RowMatrix<S>::Zero(l_s, l_s);
  const Index n = std::min(l_s, att.rows());
  out.topLeftCorner(n, n) = att.topLeftCorner(n, n);
  return out;
}

template <typename Derived>
RowMatrix<typename Derived::Scalar> truncate_pad_hidden(const Eigen::MatrixBase<Derived>& hid, Index l_s) {
  using S = typename Derived::Scalar;
  RowMatrix<S> out = RowMatrix<S>::Zero(l_s, hid.cols());
  const Index n = std::min(l_s, hid.rows());
  out.topRows(n) = hid.topRows(n);
  return out;
}

template <typename Derived>
RowMatrix<typename Derived::Scalar> align_attention(const Eigen::MatrixBase<Derived>& att, Index l_s,
                                                    ResampleMode mode) {
  return mode == ResampleMode::kBilinear ? resample_attention(att, l_s) : truncate_pad_attention(att, l_s);
}

template <typename Derived>
RowMatrix<typename Derived::Scalar> align_hidden(const Eigen::MatrixBase<Derived>& hid, Index l_s,
                                                 ResampleMode mode) {
  return mode == ResampleMode::kBilinear ? resample_hidden(hid, l_s) : truncate_pad_hidden(hid, l_s);
}

// Learnable student-to-teacher width projections W_H, one per mapped pair or
// a single shared one.
template <typename S>
struct DistillHeads {
  std::vector<Param<S>> weights;
  bool shared = false;

  static DistillHeads init(int num_pairs, int s_dmodel, int t_dmodel, bool shared, Rng& rng) {
    DistillHeads h;
    h.shared = shared;
    const int n = shared ? 1 : num_pairs;
    for (int i = 0; i < n; ++i) {
      h.weights.push_back(glorot_param<S>("distill.w_h" + std::to_string(i + 1), s_dmodel, t_dmodel, rng));
    }
    return h;
  }

  Param<S>& for_pair(std::size_t i) { return weights[shared ? 0 : i]; }

  std::vector<Param<S>*> all() {
    std::vector<Param<S>*> out;
    for (auto& w : weights) out.push_back(&w);
    return out;
  }
};

namespace detail {

template <typename S>
Tensor<S> valid_block(const Tensor<S>& t, Index n, bool square) {
  Tensor<S> rows = t.rows() == n ? t : slice_rows(t, 0, n);
  if (square && rows.cols() != n) rows = slice_cols(rows, 0, n);
  return rows;
}

inline void require_pairs(const LayerMap& map) {
  if (map.empty()) throw InvalidArgument("distill: empty layer map");
}

}  // namespace detail

// Mean over mapped pairs of MSE(S_att, aligned T_att) on the valid
// l_s x l_s region. Teacher taps contribute values only.
template <typename S>
Tensor<S> loss_att(const LayerTaps<S>& student, const LayerTaps<S>& teacher, const LayerMap& map,
                   ResampleMode mode = ResampleMode::kBilinear) {
  detail::require_pairs(map);
  const Index ls = student.valid_len, lt = teacher.valid_len;
  Tensor<S> total;
  for (const LayerPair& pair : map) {
    if (!student.has(pair.student)) {
      throw InvalidArgument("loss_att: student layer " + std::to_string(pair.student) + " missing from taps");
    }
    if (!teacher.has(pair.teacher)) {
      throw InvalidArgument("loss_att: teacher layer " + std::to_string(pair.teacher) + " missing from taps");
    }
    const Tensor<S> s_att = detail::valid_block(student.att_of(pair.student), ls, true);
    const RowMatrix<S> t_valid = teacher.att_of(pair.teacher).matrix().topLeftCorner(lt, lt);
    const Tensor<S> target = Tensor<S>::constant(align_attention(t_valid, ls, mode));
    const Tensor<S> term = mse(s_att, target);
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, S(1) / static_cast<S>(map.size()));
}

// Mean over mapped pairs of MSE(S_hid W_H, aligned T_hid) on valid rows.
// Pass a tape to train W_H; without one the heads enter as constants.
template <typename S>
Tensor<S> loss_hid(const LayerTaps<S>& student, const LayerTaps<S>& teacher, const LayerMap& map,
                   DistillHeads<S>& heads, std::type_identity_t<Tape<S>>* tape,
                   ResampleMode mode = ResampleMode::kBilinear) {
  detail::require_pairs(map);
  const Index ls = student.valid_len, lt = teacher.valid_len;
  Tensor<S> total;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const LayerPair& pair = map[i];
    if (!student.has(pair.student)) {
      throw InvalidArgument("loss_hid: student layer " + std::to_string(pair.student) + " missing from taps");
    }
    if (!teacher.has(pair.teacher)) {
      throw InvalidArgument("loss_hid: teacher layer " + std::to_string(pair.teacher) + " missing from taps");
    }
    const Tensor<S> s_hid = detail::valid_block(student.hid_of(pair.student), ls, false);
    const Tensor<S>& t_hid = teacher.hid_of(pair.teacher);
    Param<S>& w = heads.for_pair(i);
    if (w.value.rows() != s_hid.cols() || w.value.cols() != t_hid.cols()) {
      throw DimensionError("loss_hid: W_H " + shape_str(w.shape) + " cannot map width " +
                           std::to_string(s_hid.cols()) + " to " + std::to_string(t_hid.cols()));
    }
    const RowMatrix<S> t_valid = t_hid.matrix().topRows(lt);
    const Tensor<S> target = Tensor<S>::constant(align_hidden(t_valid, ls, mode));
    const Tensor<S> term = mse(matmul(s_hid, bind_param(w, tape)), target);
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, S(1) / static_cast<S>(map.size()));
}

// Cross-entropy of log-softmax(logits) against the smoothed target
// q[y] = 1 - eps, q[j != y] = eps / (K - 1).
template <typename S>
Tensor<S> loss_intent(const Tensor<S>& logits, int y, double smoothing) {
  const Index classes = logits.size();
  if (classes < 2) throw InvalidArgument("loss_intent: need at least 2 classes");
  if (y < 0 || y >= classes) {
    throw InvalidArgument("loss_intent: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(classes) + ")");
  }
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw InvalidArgument("loss_intent: smoothing must be in [0, 1)");
  const Tensor<S> row = logits.rank() == 2 ? logits : reshape(logits, Shape{1, classes});
  RowMatrix<S> q = RowMatrix<S>::Constant(1, classes, static_cast<S>(smoothing / static_cast<double>(classes - 1)));
  q(0, y) = static_cast<S>(1.0 - smoothing);
  return scale(sum(mul(log_softmax(row), Tensor<S>::constant(std::move(q)))), S(-1));
}

template <typename S>
Tensor<S> loss_total(const Tensor<S>& l_intent, const Tensor<S>& l_att, const Tensor<S>& l_hid,
                     const DistillConfig& cfg) {
  return add(add(scale(l_intent, static_cast<S>(cfg.alpha1)), scale(l_att, static_cast<S>(cfg.alpha2))),
             scale(l_hid, static_cast<S>(cfg.alpha3)));
}

// Teacher taps from stored matrices, as constants.
template <typename S>
LayerTaps<S> constant_taps(const std::vector<int>& layers, const std::vector<RowMatrix<S>>& att,
                           const std::vector<RowMatrix<S>>& hid, Index valid_len) {
  LayerTaps<S> taps;
  taps.layers = layers;
  taps.valid_len = valid_len;
  for (const auto& a : att) taps.att.push_back(Tensor<S>::constant(a));
  for (const auto& h : hid) taps.hid.push_back(Tensor<S>::constant(h));
  return taps;
}

}  // namespace speechkd

#endif  // SPEECHKD_DISTILL_HPP_
