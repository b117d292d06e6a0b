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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <set>

#include "speechkd/data.hpp"
#include "speechkd/error.hpp"
#include "test_util.hpp"

using namespace speechkd;
using speechkd::testing::random_matrix;
using speechkd::testing::random_stochastic;
using speechkd::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// A small dataset with taps for two teacher layers.
Dataset tiny_dataset(int n, Rng& rng) {
  Dataset d;
  d.name = "tiny";
  d.num_classes = 3;
  d.acoustic_dim = 5;
  d.teacher = {4, 6, {2, 4}};
  for (int i = 0; i < n; ++i) {
    Utterance u;
    u.id = "u" + std::to_string(i);
    u.label = i % 3;
    u.acoustic = random_matrix<float>(3 + i % 4, 5, rng);
    u.teacher.layers = {2, 4};
    const Index lt = 2 + i % 3;
    for (int k = 0; k < 2; ++k) {
      u.teacher.att.push_back(random_stochastic<float>(lt, lt, rng));
      u.teacher.hid.push_back(random_matrix<float>(lt, 6, rng));
    }
    u.transcript = "w" + std::to_string(i);
    d.utterances.push_back(std::move(u));
  }
  return d;
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("tensor file byte layout") {
  const std::vector<float> values{1.0f, -2.0f, 0.5f, 0.0f, 3.0f, 1.0f};
  const std::vector<std::uint8_t> bytes = encode_tensor(Shape{2, 3}, values);
  const std::vector<std::uint8_t> header{'S', 'T', 'D', 'T', 1, 0, 0, 2, 2, 0, 0, 0, 3, 0, 0, 0};
  REQUIRE(bytes.size() == header.size() + 24);
  CHECK(std::equal(header.begin(), header.end(), bytes.begin()));
  // 1.0f = 0x3f800000 and -2.0f = 0xc0000000, little endian.
  CHECK(std::vector<std::uint8_t>(bytes.begin() + 16, bytes.begin() + 24) ==
        std::vector<std::uint8_t>{0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0});
}

TEST_CASE("tensor file round trips are bit exact") {
  const fs::path dir = scratch_dir("tensor_rt");
  Rng rng(1);
  MatrixF m = random_matrix<float>(7, 256, rng);
  m(0, 0) = -0.0f;
  m(1, 1) = std::numeric_limits<float>::denorm_min();
  write_tensor(dir / "a.stdt", m);
  const Tensor<float> back = read_tensor(dir / "a.stdt");
  CHECK(back.shape() == Shape{7, 256});
  CHECK(std::memcmp(back.matrix().data(), m.data(), sizeof(float) * 7 * 256) == 0);
  write_tensor(dir / "b.stdt", back);
  CHECK(file_bytes(dir / "a.stdt") == file_bytes(dir / "b.stdt"));

  const Tensor<float> scalar = decode_tensor(encode_tensor(Shape{}, std::vector<float>{2.5f}));
  CHECK(scalar.shape().empty());
  CHECK(scalar.item() == 2.5f);
  write_tensor(dir / "s.stdt", scalar);
  CHECK(file_bytes(dir / "s.stdt").size() == 12);
  CHECK(read_tensor(dir / "s.stdt").shape().empty());

  CHECK(read_matrix(dir / "a.stdt", 7, 256) == m);
  CHECK_THROWS_AS(read_matrix(dir / "a.stdt", 7, 255), ConfigError);
}

TEST_CASE("tensor file rejections are distinct") {
  std::vector<std::uint8_t> good = encode_tensor(Shape{2, 2}, std::vector<float>{1, 2, 3, 4});
  auto with = [&](std::size_t at, std::uint8_t v) {
    auto b = good;
    b[at] = v;
    return b;
  };
  std::vector<std::uint8_t> xxxx = good;
  std::fill_n(xxxx.begin(), 4, 'X');
  CHECK_THROWS_AS(decode_tensor(xxxx), BadMagicError);
  CHECK_THROWS_AS(decode_tensor(with(4, 2)), VersionError);
  CHECK_THROWS_AS(decode_tensor(with(6, 1)), FormatError);
  CHECK_THROWS_AS(decode_tensor(std::span(good).first(good.size() - 1)), TruncatedFileError);
  CHECK_THROWS_AS(decode_tensor(std::span(good).first(10)), TruncatedFileError);
  CHECK_THROWS_AS(decode_tensor(std::span(good).first(2)), TruncatedFileError);
  auto longer = good;
  longer.push_back(0);
  CHECK_THROWS_AS(decode_tensor(longer), FormatError);
  // Two dims of 2^32-1 overflow the element count.
  std::vector<std::uint8_t> huge{'S', 'T', 'D', 'T', 1, 0, 0, 3, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff,
                                 0xff, 0xff, 0xff, 0xff};
  CHECK_THROWS_AS(decode_tensor(huge), ShapeOverflowError);
  CHECK_THROWS_AS(encode_tensor(Shape{Index{1} << 33}, std::vector<float>{}), ShapeOverflowError);

  const fs::path dir = scratch_dir("tensor_bad");
  put_bytes(dir / "x.stdt", xxxx);
  const std::string msg = error_text([&] { read_tensor(dir / "x.stdt"); });
  CHECK(msg.find("x.stdt") != std::string::npos);
  CHECK(msg.find("magic") != std::string::npos);
}

TEST_CASE("dataset manifest round trip") {
  const fs::path dir = scratch_dir("dataset_rt");
  Rng rng(2);
  const Dataset d = tiny_dataset(6, rng);
  save_dataset(dir / "ds", d);
  CHECK(fs::exists(dir / "ds" / "manifest.json"));
  CHECK(fs::exists(dir / "ds" / "tensors" / "u3.acoustic.stdt"));
  CHECK(fs::exists(dir / "ds" / "tensors" / "u3.t4.hid.stdt"));
  const Dataset back = load_dataset(dir / "ds");
  CHECK(back.name == "tiny");
  CHECK(back.num_classes == 3);
  CHECK(back.teacher.layers == std::vector<int>{2, 4});
  REQUIRE(back.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.utterances[i].id == d.utterances[i].id);
    CHECK(back.utterances[i].label == d.utterances[i].label);
    CHECK(back.utterances[i].acoustic == d.utterances[i].acoustic);
    CHECK(back.utterances[i].teacher.att[1] == d.utterances[i].teacher.att[1]);
    CHECK(back.utterances[i].teacher.hid[0] == d.utterances[i].teacher.hid[0]);
    CHECK(back.utterances[i].transcript == d.utterances[i].transcript);
  }
  save_dataset(dir / "again", back);
  CHECK(file_bytes(dir / "ds" / "manifest.json") == file_bytes(dir / "again" / "manifest.json"));
  CHECK(file_bytes(dir / "ds" / "tensors" / "u5.t2.att.stdt") ==
        file_bytes(dir / "again" / "tensors" / "u5.t2.att.stdt"));
}

TEST_CASE("dataset validation names the offending utterance") {
  Rng rng(3);
  Dataset d = tiny_dataset(6, rng);
  CHECK_NOTHROW(validate_dataset(d));

  Dataset bad_label = d;
  bad_label.utterances[2].label = 3;
  std::string msg = error_text([&] { validate_dataset(bad_label); });
  CHECK(msg.find("u2") != std::string::npos);

  Dataset bad_shape = d;
  bad_shape.utterances[4].acoustic = MatrixF::Ones(3, 4);
  msg = error_text([&] { validate_dataset(bad_shape); });
  CHECK(msg.find("u4") != std::string::npos);

  Dataset gap = d;
  for (auto& u : gap.utterances) {
    if (u.label == 1) u.label = 2;
  }
  CHECK_THROWS_AS(validate_dataset(gap), ConfigError);

  Dataset two = d;
  two.utterances[0].label = 5;
  two.utterances[1].id = "u0";
  two.utterances[3].teacher.hid[0](0, 0) = std::nanf("");
  msg = error_text([&] { validate_dataset(two); });
  CHECK(msg.find("label") != std::string::npos);
  CHECK(msg.find("duplicate") != std::string::npos);
  CHECK(msg.find("u3") != std::string::npos);

  const fs::path dir = scratch_dir("dataset_bad");
  save_dataset(dir / "ds", d);
  write_tensor(dir / "ds" / "tensors" / "u1.acoustic.stdt", MatrixF::Ones(2, 7));
  msg = error_text([&] { load_dataset(dir / "ds"); });
  CHECK(msg.find("u1") != std::string::npos);
  fs::remove(dir / "ds" / "tensors" / "u2.t2.att.stdt");
  CHECK_THROWS_AS(load_dataset(dir / "ds"), Error);
}

TEST_CASE("batches pad with zeros and partition the dataset") {
  Rng rng(4);
  const Dataset d = tiny_dataset(10, rng);
  const auto one = make_batches(d, 16, 1, true);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 10);

  const auto batches = make_batches(d, 4, 9, true);
  CHECK(batches.size() == 3);
  std::multiset<int> labels;
  std::set<std::size_t> seen;
  for (const Batch& b : batches) {
    for (std::size_t i = 0; i < b.size(); ++i) {
      labels.insert(b.labels[i]);
      seen.insert(b.indices[i]);
      const Utterance& u = d.utterances[b.indices[i]];
      CHECK(b.lengths[i] == u.acoustic.rows());
      CHECK(b.sequence(i) == u.acoustic);
      const auto row = static_cast<Index>(i);
      for (Index t = 0; t < b.max_len; ++t) {
        CHECK(b.mask(row, t) == (t < b.lengths[i]));
        if (t >= b.lengths[i]) CHECK(b.acoustic.row(row * b.max_len + t).isZero());
      }
      const Index lt = b.teacher_lengths[i];
      const MatrixF& att = b.teacher_att[1][i];
      CHECK(att.rows() == b.teacher_max_len);
      CHECK(att.topLeftCorner(lt, lt) == u.teacher.att[1]);
      CHECK(att.bottomRows(b.teacher_max_len - lt).isZero());
      CHECK(att.rightCols(b.teacher_max_len - lt).isZero());
      CHECK(b.teacher_hid[0][i].bottomRows(b.teacher_max_len - lt).isZero());
    }
  }
  std::multiset<int> expected;
  for (const auto& u : d.utterances) expected.insert(u.label);
  CHECK(labels == expected);
  CHECK(seen.size() == 10);

  auto order = [](const std::vector<Batch>& bs) {
    std::vector<std::size_t> o;
    for (const Batch& b : bs) o.insert(o.end(), b.indices.begin(), b.indices.end());
    return o;
  };
  CHECK(order(make_batches(d, 4, 9, true)) == order(batches));
  CHECK(order(make_batches(d, 4, 10, true)) != order(batches));
  const auto plain = order(make_batches(d, 4, 9, false));
  CHECK(std::is_sorted(plain.begin(), plain.end()));

  CHECK_THROWS_AS(make_batches(d, 0, 1, true), InvalidArgument);
  Dataset broken = d;
  broken.utterances[7].acoustic = MatrixF::Ones(3, 2);
  const std::string msg = error_text([&] { make_batches(broken, 4, 1, true); });
  CHECK(msg.find("u7") != std::string::npos);
}

TEST_CASE("noise injection hits the requested SNR") {
  Rng rng(5);
  const MatrixF x = random_matrix<float>(20, 256, rng);
  const double p = x.cast<double>().squaredNorm() / static_cast<double>(x.size());

  const MatrixF zero_db = inject_noise(x, 0.0, 1);
  const double pn = (zero_db - x).cast<double>().squaredNorm() / static_cast<double>(x.size());
  CHECK(std::abs(pn / p - 1.0) < 1e-3);

  const MatrixF unit = x / static_cast<float>(std::sqrt(p));
  const MatrixF twenty = inject_noise(unit, 20.0, 2);
  const double rms = std::sqrt((twenty - unit).cast<double>().squaredNorm() / static_cast<double>(x.size()));
  CHECK(std::abs(rms - 0.1) < 1e-4);

  for (double snr : {15.0, 10.0, 5.0, 0.0, -3.0, 30.0}) {
    CHECK(std::abs(measured_snr_db(x, inject_noise(x, snr, 7)) - snr) < 0.01);
  }
  CHECK(inject_noise(x, 5.0, 3) == inject_noise(x, 5.0, 3));
  CHECK(inject_noise(x, 5.0, 3) != inject_noise(x, 5.0, 4));
  CHECK_THROWS_AS(inject_noise(MatrixF::Zero(4, 4), 10.0, 1), InvalidArgument);
  CHECK_THROWS_AS(inject_noise(x, std::nan(""), 1), InvalidArgument);
}

TEST_CASE("synthetic data is a pure function of its seed") {
  SynthConfig cfg;
  cfg.teacher = {2, 16, 2, 32, 16, 0.0, 16};
  cfg.student_layers = 2;
  cfg.num_classes = 4;
  cfg.n_train = 24;
  cfg.n_test = 8;
  cfg.acoustic_dim = 12;
  const SyntheticSplits a = synthesize_dataset(cfg);
  CHECK(a.train.teacher.layers == std::vector<int>{1, 2});
  std::map<int, int> counts;
  for (const Utterance& u : a.train.utterances) {
    ++counts[u.label];
    CHECK(u.acoustic.cols() == 12);
    CHECK(u.acoustic.rows() >= 20);
    CHECK(u.acoustic.rows() <= 60);
    CHECK(u.teacher.length() >= 6);
    CHECK(u.teacher.length() <= 12);
    CHECK(u.acoustic.rows() >= u.teacher.length());
    CHECK((u.teacher.att[0].rowwise().sum().array() - 1.0f).abs().maxCoeff() < 1e-5f);
  }
  CHECK(counts == std::map<int, int>{{0, 6}, {1, 6}, {2, 6}, {3, 6}});
  CHECK_NOTHROW(validate_dataset(a.train));

  const fs::path dir = scratch_dir("synth");
  write_synthetic(dir / "a", a);
  write_synthetic(dir / "b", synthesize_dataset(cfg));
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path twin = dir / "b" / fs::relative(entry.path(), dir / "a");
    CHECK(file_bytes(entry.path()) == file_bytes(twin));
  }
  cfg.seed = 2;
  CHECK(synthesize_dataset(cfg).train.utterances[0].acoustic != a.train.utterances[0].acoustic);

  cfg.num_classes = 1;
  CHECK_THROWS_AS(synthesize_dataset(cfg), ConfigError);
}

namespace {

// Ridge regression (lambda = 1) from mean-pooled acoustic frames to +-1
// one-hot targets. Reference counts come from a float64 numpy fit on the
// files the synth command writes for the same seeds.
int linear_probe_correct(const SyntheticSplits& s) {
  const auto pooled = [](const Dataset& d) {
    const Eigen::Index dim = d.utterances.front().acoustic.cols();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(d.utterances.size()), dim + 1);
    for (std::size_t i = 0; i < d.utterances.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      x.row(r).head(dim) = d.utterances[i].acoustic.cast<double>().colwise().mean();
      x(r, dim) = 1.0;
    }
    return x;
  };
  const int k = s.train.num_classes;
  const Eigen::MatrixXd x = pooled(s.train);
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(x.rows(), k, -1.0);
  for (std::size_t i = 0; i < s.train.utterances.size(); ++i) {
    y(static_cast<Eigen::Index>(i), s.train.utterances[i].label) = 1.0;
  }
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += 1.0;
  const Eigen::MatrixXd w = gram.ldlt().solve(x.transpose() * y);
  const Eigen::MatrixXd scores = pooled(s.test) * w;
  int correct = 0;
  for (std::size_t i = 0; i < s.test.utterances.size(); ++i) {
    Eigen::Index best = 0;
    scores.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    correct += best == s.test.utterances[i].label;
  }
  return correct;
}

}  // namespace

TEST_CASE("default synthetic task is learnable but not linearly trivial") {
  const std::map<std::uint64_t, int> expected{{1, 102}, {2, 99}, {3, 101}};
  for (const auto& [seed, count] : expected) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.teacher = {4, 16, 2, 32, 96, 0.0, 16};
    const SyntheticSplits s = synthesize_dataset(cfg);
    REQUIRE(s.test.utterances.size() == 128);
    const int correct = linear_probe_correct(s);
    CAPTURE(seed);
    CHECK(correct == count);
    const double acc = correct / 128.0;
    CHECK(acc > 1.0 / cfg.num_classes);
    CHECK(acc < 0.9);
  }
}
