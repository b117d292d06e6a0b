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

// Post-norm transformer encoder shared by the student and the frozen teacher.
// Each layer is MHA -> add & norm -> FFN(relu) -> add & norm. Every layer
// exposes its head-averaged attention and its output sequence as taps.

#ifndef SPEECHKD_ENCODER_HPP_
#define SPEECHKD_ENCODER_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "speechkd/ops.hpp"
#include "speechkd/rng.hpp"
#include "speechkd/tensor.hpp"

namespace speechkd {

struct EncoderConfig {
  int n_layers = 4;
  int d_model = 512;
  int n_heads = 8;
  int d_ff = 2048;
  int d_input = 256;
  double dropout_p = 0.1;
  int max_len = 1024;

  static EncoderConfig student() { return {}; }
  static EncoderConfig teacher() { return {12, 768, 12, 3072, 768, 0.1, 512}; }

  int d_head() const { return d_model / n_heads; }

  // Appends one message per violated constraint.
  void collect_errors(const std::string& prefix, std::vector<std::string>& errors) const {
    auto positive = [&](int v, const char* name) {
      if (v < 1) errors.push_back(prefix + name + " must be positive");
    };
    positive(n_layers, "n_layers");
    positive(d_model, "d_model");
    positive(n_heads, "n_heads");
    positive(d_ff, "d_ff");
    positive(d_input, "d_input");
    positive(max_len, "max_len");
    if (n_heads > 0 && d_model % n_heads != 0) {
      errors.push_back(prefix + "d_model (" + std::to_string(d_model) +
                       ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    }
    if (d_model < 2) errors.push_back(prefix + "d_model must be at least 2 for layer norm");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) errors.push_back(prefix + "dropout must be in [0, 1)");
  }
  void validate() const {
    std::vector<std::string> errors;
    collect_errors("", errors);
    if (!errors.empty()) throw ConfigError("encoder config: " + errors.front());
  }
  bool operator==(const EncoderConfig&) const = default;
};

enum class Mode { kTrain, kEval };

template <typename S>
struct EncoderLayerParams {
  Param<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Param<S> norm1_gain, norm1_shift;
  Param<S> ff1_w, ff1_b, ff2_w, ff2_b;
  Param<S> norm2_gain, norm2_shift;

  std::vector<Param<S>*> all() {
    return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &norm1_gain, &norm1_shift,
            &ff1_w, &ff1_b, &ff2_w, &ff2_b, &norm2_gain, &norm2_shift};
  }
  std::vector<const Param<S>*> all() const {
    return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &norm1_gain, &norm1_shift,
            &ff1_w, &ff1_b, &ff2_w, &ff2_b, &norm2_gain, &norm2_shift};
  }
};

// Glorot-uniform matrix: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename S>
Param<S> glorot_param(std::string name, Index fan_in, Index fan_out, Rng& rng) {
  Param<S> p(std::move(name), Shape{fan_in, fan_out});
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<S>(rng.uniform(-a, a));
  return p;
}

template <typename S>
Param<S> constant_param(std::string name, Index n, S v) {
  Param<S> p(std::move(name), Shape{n});
  p.value.setConstant(v);
  return p;
}

template <typename S>
struct EncoderParams {
  Param<S> input_w, input_b;
  std::vector<EncoderLayerParams<S>> layers;

  static EncoderParams init(const EncoderConfig& cfg, Rng& rng, const std::string& prefix = "encoder") {
    cfg.validate();
    EncoderParams p;
    const Index d = cfg.d_model, ff = cfg.d_ff;
    p.input_w = glorot_param<S>(prefix + ".input.w", cfg.d_input, d, rng);
    p.input_b = constant_param<S>(prefix + ".input.b", d, S(0));
    for (int l = 0; l < cfg.n_layers; ++l) {
      const std::string n = prefix + ".layer" + std::to_string(l + 1) + ".";
      EncoderLayerParams<S> L;
      L.wq = glorot_param<S>(n + "attn.wq", d, d, rng);
      L.bq = constant_param<S>(n + "attn.bq", d, S(0));
      L.wk = glorot_param<S>(n + "attn.wk", d, d, rng);
      L.bk = constant_param<S>(n + "attn.bk", d, S(0));
      L.wv = glorot_param<S>(n + "attn.wv", d, d, rng);
      L.bv = constant_param<S>(n + "attn.bv", d, S(0));
      L.wo = glorot_param<S>(n + "attn.wo", d, d, rng);
      L.bo = constant_param<S>(n + "attn.bo", d, S(0));
      L.norm1_gain = constant_param<S>(n + "norm1.gain", d, S(1));
      L.norm1_shift = constant_param<S>(n + "norm1.shift", d, S(0));
      L.ff1_w = glorot_param<S>(n + "ffn.w1", d, ff, rng);
      L.ff1_b = constant_param<S>(n + "ffn.b1", ff, S(0));
      L.ff2_w = glorot_param<S>(n + "ffn.w2", ff, d, rng);
      L.ff2_b = constant_param<S>(n + "ffn.b2", d, S(0));
      L.norm2_gain = constant_param<S>(n + "norm2.gain", d, S(1));
      L.norm2_shift = constant_param<S>(n + "norm2.shift", d, S(0));
      p.layers.push_back(std::move(L));
    }
    return p;
  }

  std::vector<Param<S>*> all() {
    std::vector<Param<S>*> out{&input_w, &input_b};
    for (auto& l : layers) {
      for (auto* q : l.all()) out.push_back(q);
    }
    return out;
  }

  template <typename T>
  EncoderParams<T> cast() const {
    EncoderParams<T> out;
    out.input_w = input_w.template cast<T>();
    out.input_b = input_b.template cast<T>();
    for (const auto& l : layers) {
      EncoderLayerParams<T> c;
      auto dst = c.all();
      auto from = l.all();
      for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = from[i]->template cast<T>();
      out.layers.push_back(std::move(c));
    }
    return out;
  }
};

// Parameters as tensors: tape variables while training, shared constants
// otherwise (bind once and reuse across utterances).
template <typename S>
struct LayerWeights {
  Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<S> norm1_gain, norm1_shift;
  Tensor<S> ff1_w, ff1_b, ff2_w, ff2_b;
  Tensor<S> norm2_gain, norm2_shift;
};

template <typename S>
struct EncoderWeights {
  Tensor<S> input_w, input_b;
  std::vector<LayerWeights<S>> layers;
};

template <typename S>
Tensor<S> bind_param(Param<S>& p, Tape<S>* tape) {
  return tape != nullptr ? tape->variable(p) : Tensor<S>::constant(p.shape, p.value);
}

template <typename S>
EncoderWeights<S> bind(EncoderParams<S>& p, Tape<S>* tape) {
  EncoderWeights<S> w;
  w.input_w = bind_param(p.input_w, tape);
  w.input_b = bind_param(p.input_b, tape);
  for (auto& l : p.layers) {
    LayerWeights<S> b;
    b.wq = bind_param(l.wq, tape);
    b.bq = bind_param(l.bq, tape);
    b.wk = bind_param(l.wk, tape);
    b.bk = bind_param(l.bk, tape);
    b.wv = bind_param(l.wv, tape);
    b.bv = bind_param(l.bv, tape);
    b.wo = bind_param(l.wo, tape);
    b.bo = bind_param(l.bo, tape);
    b.norm1_gain = bind_param(l.norm1_gain, tape);
    b.norm1_shift = bind_param(l.norm1_shift, tape);
    b.ff1_w = bind_param(l.ff1_w, tape);
    b.ff1_b = bind_param(l.ff1_b, tape);
    b.ff2_w = bind_param(l.ff2_w, tape);
    b.ff2_b = bind_param(l.ff2_b, tape);
    b.norm2_gain = bind_param(l.norm2_gain, tape);
    b.norm2_shift = bind_param(l.norm2_shift, tape);
    w.layers.push_back(std::move(b));
  }
  return w;
}

// Per-layer head-averaged attention [L x L] and output sequence [L x d].
// Entries are in layer order; `layers` holds their 1-based indices.
template <typename S>
struct LayerTaps {
  std::vector<int> layers;
  std::vector<Tensor<S>> att;
  std::vector<Tensor<S>> hid;
  Index valid_len = 0;

  bool has(int layer) const { return find(layer) >= 0; }
  const Tensor<S>& att_of(int layer) const { return att[checked(layer)]; }
  const Tensor<S>& hid_of(int layer) const { return hid[checked(layer)]; }

 private:
  std::ptrdiff_t find(int layer) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i] == layer) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
  }
  std::size_t checked(int layer) const {
    const auto i = find(layer);
    if (i < 0) throw InvalidArgument("taps: layer " + std::to_string(layer) + " is not present");
    return static_cast<std::size_t>(i);
  }
};

template <typename S>
struct EncoderOutput {
  Tensor<S> final_hidden;
  LayerTaps<S> taps;
};

// Sinusoidal encoding: even columns sin(t / 10000^(2i/d)), odd columns cos.
template <typename S>
RowMatrix<S> positional_encoding(Index length, Index d_model) {
  RowMatrix<S> pe(length, d_model);
  for (Index t = 0; t < length; ++t) {
    for (Index j = 0; j < d_model; ++j) {
      const double rate = std::pow(10000.0, -static_cast<double>(j - j % 2) / static_cast<double>(d_model));
      const double angle = static_cast<double>(t) * rate;
      pe(t, j) = static_cast<S>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

namespace detail {

template <typename S>
Tensor<S> maybe_dropout(const Tensor<S>& x, const EncoderConfig& cfg, Mode mode, Tape<S>* tape) {
  if (mode != Mode::kTrain || cfg.dropout_p == 0.0) return x;
  return dropout(x, cfg.dropout_p, tape->seed(), tape->next_stream());
}

inline void check_mode(Mode mode, const void* tape) {
  if (mode == Mode::kTrain && tape == nullptr) {
    throw InvalidArgument("encoder: train mode needs a tape to seed dropout");
  }
}

}  // namespace detail

// Affine map to d_model, plus positional encoding, then dropout.
template <typename S>
Tensor<S> input_project(const Tensor<S>& embeddings, const EncoderConfig& cfg,
                        const EncoderWeights<S>& w, Mode mode, Tape<S>* tape = nullptr) {
  detail::check_mode(mode, tape);
  detail::require_rank2(embeddings, "input_project");
  const Index length = embeddings.rows();
  if (embeddings.cols() != cfg.d_input) {
    throw DimensionError("input_project: expected width " + std::to_string(cfg.d_input) +
                         ", got " + shape_str(embeddings.shape()));
  }
  if (length < 1) throw InvalidArgument("input_project: empty sequence");
  if (length > cfg.max_len) {
    throw InvalidArgument("input_project: length " + std::to_string(length) +
                          " exceeds max_len " + std::to_string(cfg.max_len));
  }
  const Tensor<S> pe = Tensor<S>::constant(positional_encoding<S>(length, cfg.d_model));
  const Tensor<S> projected = add(add_bias(matmul(embeddings, w.input_w), w.input_b), pe);
  return detail::maybe_dropout(projected, cfg, mode, tape);
}

// Runs the full encoder. `mask[t]` marks valid positions; keys at invalid
// positions are excluded from every attention row, and invalid rows and
// columns of the attention taps are zero, as are invalid rows of the hidden
// taps. Train mode requires `tape` (it seeds dropout).
template <typename S>
EncoderOutput<S> encode(const Tensor<S>& x, const std::vector<bool>& mask, const EncoderConfig& cfg,
                        const EncoderWeights<S>& w, Mode mode, Tape<S>* tape = nullptr) {
  detail::check_mode(mode, tape);
  const Index length = x.rows();
  if (static_cast<Index>(mask.size()) != length) {
    throw DimensionError("encode: mask length " + std::to_string(mask.size()) +
                         " does not match sequence length " + std::to_string(length));
  }
  if (static_cast<int>(w.layers.size()) != cfg.n_layers) {
    throw DimensionError("encode: weights have " + std::to_string(w.layers.size()) +
                         " layers, config expects " + std::to_string(cfg.n_layers));
  }
  Index valid = 0;
  for (bool m : mask) valid += m ? 1 : 0;
  if (valid == 0) throw InvalidArgument("encode: mask has no valid position");
  const bool padded = valid != length;

  BoolMatrix key_mask(length, length);
  RowMatrix<S> pair_mask(length, length), row_mask(length, cfg.d_model);
  for (Index i = 0; i < length; ++i) {
    for (Index j = 0; j < length; ++j) {
      key_mask(i, j) = mask[static_cast<std::size_t>(j)];
      pair_mask(i, j) = (mask[static_cast<std::size_t>(i)] && mask[static_cast<std::size_t>(j)]) ? S(1) : S(0);
    }
    row_mask.row(i).setConstant(mask[static_cast<std::size_t>(i)] ? S(1) : S(0));
  }
  const Tensor<S> pair_mask_t = Tensor<S>::constant(std::move(pair_mask));
  const Tensor<S> row_mask_t = Tensor<S>::constant(std::move(row_mask));

  EncoderOutput<S> out;
  out.taps.valid_len = valid;
  Tensor<S> h = input_project(x, cfg, w, mode, tape);
  const Index dk = cfg.d_head();
  const S inv_sqrt_dk = S(1) / std::sqrt(static_cast<S>(dk));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights<S>& lw = w.layers[static_cast<std::size_t>(l)];
    try {
      const Tensor<S> q = add_bias(matmul(h, lw.wq), lw.bq);
      const Tensor<S> k = add_bias(matmul(h, lw.wk), lw.bk);
      const Tensor<S> v = add_bias(matmul(h, lw.wv), lw.bv);
      std::vector<Tensor<S>> heads;
      Tensor<S> att_total;
      for (int hd = 0; hd < cfg.n_heads; ++hd) {
        const Index off = hd * dk;
        const Tensor<S> scores =
            scale(matmul(slice_cols(q, off, dk), transpose(slice_cols(k, off, dk))), inv_sqrt_dk);
        const Tensor<S> att = softmax_masked(scores, key_mask);
        heads.push_back(matmul(att, slice_cols(v, off, dk)));
        att_total = att_total.defined() ? add(att_total, att) : att;
      }
      Tensor<S> att_mean = cfg.n_heads == 1 ? att_total : scale(att_total, S(1) / static_cast<S>(cfg.n_heads));
      const Tensor<S> merged = cfg.n_heads == 1 ? heads.front() : concat(heads, 1);
      const Tensor<S> attn_out =
          detail::maybe_dropout(add_bias(matmul(merged, lw.wo), lw.bo), cfg, mode, tape);
      const Tensor<S> h1 = layer_norm(add(h, attn_out), lw.norm1_gain, lw.norm1_shift);
      const Tensor<S> inner = relu(add_bias(matmul(h1, lw.ff1_w), lw.ff1_b));
      const Tensor<S> ffn_out =
          detail::maybe_dropout(add_bias(matmul(inner, lw.ff2_w), lw.ff2_b), cfg, mode, tape);
      h = layer_norm(add(h1, ffn_out), lw.norm2_gain, lw.norm2_shift);

      out.taps.layers.push_back(l + 1);
      out.taps.att.push_back(padded ? mul(att_mean, pair_mask_t) : att_mean);
      out.taps.hid.push_back(padded ? mul(h, row_mask_t) : h);
    } catch (const NumericalError& e) {
      throw NumericalError("encoder layer " + std::to_string(l + 1) + ": " + e.what());
    }
  }
  out.final_hidden = h;
  return out;
}

template <typename S>
EncoderOutput<S> encode(const Tensor<S>& x, const EncoderConfig& cfg, const EncoderWeights<S>& w,
                        Mode mode, Tape<S>* tape = nullptr) {
  return encode(x, std::vector<bool>(static_cast<std::size_t>(x.rows()), true), cfg, w, mode, tape);
}

// Encoder with parameters drawn once from a seeded Glorot initialization and
// never updated. Taps are returned as constants.
template <typename S>
class FrozenTeacher {
 public:
  FrozenTeacher(EncoderConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    Rng rng(mix_seed(seed, 0x7EAC4E5ULL));
    params_ = EncoderParams<S>::init(cfg_, rng, "teacher");
    weights_ = bind<S>(params_, nullptr);
  }

  const EncoderConfig& config() const { return cfg_; }

  // `layers` selects which 1-based layers to return; empty means all.
  LayerTaps<S> taps(const RowMatrix<S>& token_embeddings, const std::vector<bool>& mask,
                    const std::vector<int>& layers = {}) const {
    for (int l : layers) {
      if (l < 1 || l > cfg_.n_layers) {
        throw InvalidArgument("teacher: layer " + std::to_string(l) + " outside 1.." +
                              std::to_string(cfg_.n_layers));
      }
    }
    const auto full = encode(Tensor<S>::constant(token_embeddings), mask, cfg_, weights_, Mode::kEval);
    if (layers.empty()) return full.taps;
    LayerTaps<S> picked;
    picked.valid_len = full.taps.valid_len;
    for (int l : layers) {
      picked.layers.push_back(l);
      picked.att.push_back(full.taps.att_of(l));
      picked.hid.push_back(full.taps.hid_of(l));
    }
    return picked;
  }

 private:
  EncoderConfig cfg_;
  EncoderParams<S> params_;
  EncoderWeights<S> weights_;
};

template <typename S>
LayerTaps<S> frozen_teacher_taps(const RowMatrix<S>& token_embeddings, const std::vector<bool>& mask,
                                 const EncoderConfig& cfg, std::uint64_t seed,
                                 const std::vector<int>& layers = {}) {
  return FrozenTeacher<S>(cfg, seed).taps(token_embeddings, mask, layers);
}

}  // namespace speechkd

#endif  // SPEECHKD_ENCODER_HPP_
