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

// Datasets on disk and in memory.
//
// Layout of a dataset directory:
//   <dataset>/manifest.json
//   <dataset>/tensors/*.stdt
//
// Tensor files (.stdt), all integers little-endian:
//   bytes 0..3   magic "STDT"
//   u16          version (1)
//   u8           dtype (0 = float32)
//   u8           ndim
//   ndim x u32   dims
//   payload      product(dims) float32 values, row-major

#ifndef SPEECHKD_DATA_HPP_
#define SPEECHKD_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "speechkd/encoder.hpp"
#include "speechkd/tensor.hpp"

namespace speechkd {

inline constexpr std::uint16_t kTensorFileVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 0;

std::vector<std::uint8_t> encode_tensor(const Shape& shape, std::span<const float> data);
Tensor<float> decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor<float>& tensor);
void write_tensor(const std::filesystem::path& path, const MatrixF& matrix);
Tensor<float> read_tensor(const std::filesystem::path& path);
// Reads a rank-2 tensor file, failing unless it has the expected shape.
MatrixF read_matrix(const std::filesystem::path& path, Index rows, Index cols);

// Teacher activations for one utterance at the stored (mapped) layers.
struct TeacherTapSet {
  std::vector<int> layers;
  std::vector<MatrixF> att;  // [L_t x L_t] head-averaged
  std::vector<MatrixF> hid;  // [L_t x d_teacher]
  Index length() const { return att.empty() ? 0 : att.front().rows(); }
  bool empty() const { return layers.empty(); }
};

struct Utterance {
  std::string id;
  int label = 0;
  MatrixF acoustic;  // [L_s x acoustic_dim]
  TeacherTapSet teacher;
  std::string transcript;
};

struct TeacherMeta {
  int n_layers = 0;
  int d_model = 0;
  std::vector<int> layers;
};

struct Dataset {
  std::string name;
  int num_classes = 0;
  int acoustic_dim = 256;
  TeacherMeta teacher;
  std::vector<Utterance> utterances;

  std::size_t size() const { return utterances.size(); }
};

// Throws ConfigError listing every inconsistency found.
void validate_dataset(const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

// A padded group of utterances. `acoustic` stacks B blocks of max_len rows;
// block b holds utterance b in its first lengths[b] rows and zeros after.
struct Batch {
  std::vector<std::size_t> indices;  // positions in the source dataset
  std::vector<int> labels;
  std::vector<Index> lengths;
  Index max_len = 0;
  MatrixF acoustic;  // [(B * max_len) x acoustic_dim]
  BoolMatrix mask;   // [B x max_len], true exactly for t < lengths[b]

  // Teacher taps zero-padded to the batch's longest teacher sequence;
  // teacher_att[k][b] is layer teacher_layers[k] of utterance b.
  std::vector<int> teacher_layers;
  std::vector<Index> teacher_lengths;
  Index teacher_max_len = 0;
  std::vector<std::vector<MatrixF>> teacher_att;
  std::vector<std::vector<MatrixF>> teacher_hid;

  std::size_t size() const { return indices.size(); }
  auto sequence(std::size_t b) const {
    return acoustic.block(static_cast<Index>(b) * max_len, 0, lengths[b], acoustic.cols());
  }
};

// One epoch's batches. With shuffle, the order is a seeded permutation.
std::vector<Batch> make_batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                                bool shuffle);

// Adds seeded Gaussian noise scaled so that 10 log10(P_signal / P_noise)
// equals snr_db, with power the mean square over all elements.
MatrixF inject_noise(const MatrixF& acoustic, double snr_db, std::uint64_t seed);
double measured_snr_db(const MatrixF& clean, const MatrixF& noisy);

struct SynthConfig {
  std::uint64_t seed = 1;
  int num_classes = 8;
  int n_train = 512;
  int n_test = 128;
  EncoderConfig teacher = EncoderConfig::teacher();
  // Teacher layers to store; empty means the uniform map onto student_layers.
  std::vector<int> teacher_layers;
  int student_layers = 4;
  int min_tokens = 6, max_tokens = 12;
  int min_frames = 20, max_frames = 60;
  int acoustic_dim = 256;

  // Generator shape. Each class owns `keywords_per_class` salient token
  // prototypes; the rest of an utterance is drawn from a shared filler
  // vocabulary. Acoustic frames are a fixed linear map of the time-upsampled
  // token sequence plus a per-utterance speaker offset and frame noise.
  int filler_vocab = 24;
  int keywords_per_class = 2;
  double keyword_gain = 1.5;
  double token_noise = 0.3;
  int speaker_rank = 8;
  double speaker_scale = 2.0;
  double frame_noise = 2.0;
};

struct SyntheticSplits {
  Dataset train;
  Dataset test;
};

SyntheticSplits synthesize_dataset(const SynthConfig& cfg);
// Writes <out>/train and <out>/test.
void write_synthetic(const std::filesystem::path& out, const SyntheticSplits& splits);

}  // namespace speechkd

#endif  // SPEECHKD_DATA_HPP_
