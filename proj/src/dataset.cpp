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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "speechkd/data.hpp"
#include "speechkd/error.hpp"
#include "speechkd/rng.hpp"

namespace speechkd {

namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kFormat = "speechkd-dataset";
constexpr int kManifestVersion = 1;

std::string join_errors(const std::string& head, const std::vector<std::string>& errors) {
  std::ostringstream out;
  out << head << " (" << errors.size() << (errors.size() == 1 ? " problem" : " problems") << ")";
  for (const auto& e : errors) out << "\n  - " << e;
  return out.str();
}

std::string shape_of(const MatrixF& m) { return shape_str(Shape{m.rows(), m.cols()}); }

// Tensor paths are relative to the dataset directory.
std::string acoustic_path(const std::string& id) { return "tensors/" + id + ".acoustic.stdt"; }
std::string tap_path(const std::string& id, int layer, const char* kind) {
  return "tensors/" + id + ".t" + std::to_string(layer) + "." + kind + ".stdt";
}

template <typename T>
T require(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + ": key \"" + key + "\" has the wrong type");
  }
}

void check_utterance(const Dataset& data, const Utterance& u, std::vector<std::string>& errors) {
  const std::string who = "utterance " + u.id;
  if (u.label < 0 || u.label >= data.num_classes) {
    errors.push_back(who + ": label " + std::to_string(u.label) + " outside [0, " +
                     std::to_string(data.num_classes) + ")");
  }
  if (u.acoustic.rows() < 1 || u.acoustic.cols() != data.acoustic_dim) {
    errors.push_back(who + ": acoustic shape " + shape_of(u.acoustic) + ", expected [Lx" +
                     std::to_string(data.acoustic_dim) + "] with L >= 1");
  } else if (!u.acoustic.allFinite()) {
    errors.push_back(who + ": acoustic features contain NaN or Inf");
  }
  if (u.teacher.empty()) return;
  if (u.teacher.layers != data.teacher.layers) {
    errors.push_back(who + ": teacher layers differ from the dataset's teacher metadata");
    return;
  }
  if (u.teacher.att.size() != u.teacher.layers.size() || u.teacher.hid.size() != u.teacher.layers.size()) {
    errors.push_back(who + ": teacher tap count does not match its layer list");
    return;
  }
  const Index lt = u.teacher.length();
  for (std::size_t k = 0; k < u.teacher.layers.size(); ++k) {
    const int layer = u.teacher.layers[k];
    const MatrixF& att = u.teacher.att[k];
    const MatrixF& hid = u.teacher.hid[k];
    if (att.rows() < 1 || att.rows() != lt || att.cols() != lt) {
      errors.push_back(who + ": teacher layer " + std::to_string(layer) + " attention shape " + shape_of(att) +
                       ", expected [" + std::to_string(lt) + "x" + std::to_string(lt) + "]");
    }
    if (hid.rows() != lt || hid.cols() != data.teacher.d_model) {
      errors.push_back(who + ": teacher layer " + std::to_string(layer) + " hidden shape " + shape_of(hid) +
                       ", expected [" + std::to_string(lt) + "x" + std::to_string(data.teacher.d_model) + "]");
    }
    if (!att.allFinite() || !hid.allFinite()) {
      errors.push_back(who + ": teacher layer " + std::to_string(layer) + " contains NaN or Inf");
    }
  }
}

}  // namespace

void validate_dataset(const Dataset& data) {
  std::vector<std::string> errors;
  if (data.num_classes < 2) errors.push_back("num_classes must be >= 2, got " + std::to_string(data.num_classes));
  if (data.acoustic_dim < 1) errors.push_back("acoustic_dim must be positive");
  if (data.utterances.empty()) errors.push_back("dataset has no utterances");

  const TeacherMeta& t = data.teacher;
  if (!t.layers.empty()) {
    if (t.n_layers < 1 || t.d_model < 1) errors.push_back("teacher metadata needs positive n_layers and d_model");
    for (std::size_t k = 0; k < t.layers.size(); ++k) {
      if (t.layers[k] < 1 || t.layers[k] > t.n_layers) {
        errors.push_back("teacher layer " + std::to_string(t.layers[k]) + " outside 1.." + std::to_string(t.n_layers));
      }
      if (k > 0 && t.layers[k] <= t.layers[k - 1]) errors.push_back("teacher layers must be strictly increasing");
    }
  }

  std::set<std::string> ids;
  std::set<int> labels;
  std::size_t with_taps = 0;
  for (const Utterance& u : data.utterances) {
    if (u.id.empty()) errors.push_back("utterance with empty id");
    if (!ids.insert(u.id).second) errors.push_back("duplicate utterance id " + u.id);
    labels.insert(u.label);
    with_taps += u.teacher.empty() ? 0 : 1;
    check_utterance(data, u, errors);
  }
  if (with_taps != 0 && with_taps != data.utterances.size()) {
    errors.push_back("teacher taps present for " + std::to_string(with_taps) + " of " +
                     std::to_string(data.utterances.size()) + " utterances; need all or none");
  }
  if (!labels.empty() && (*labels.begin() != 0 || *labels.rbegin() != static_cast<int>(labels.size()) - 1)) {
    errors.push_back("labels do not cover a contiguous range starting at 0");
  }
  if (!errors.empty()) throw ConfigError(join_errors("dataset " + data.name + " is invalid", errors));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const std::filesystem::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("cannot open " + manifest_path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(manifest_path.string() + ": " + e.what());
  }
  const std::string where = manifest_path.string();
  if (require<std::string>(j, "format", where) != kFormat) throw ConfigError(where + ": not a speechkd dataset");
  if (require<int>(j, "version", where) != kManifestVersion) throw ConfigError(where + ": unsupported version");

  Dataset data;
  data.name = require<std::string>(j, "name", where);
  data.num_classes = require<int>(j, "num_classes", where);
  data.acoustic_dim = require<int>(j, "acoustic_dim", where);
  if (j.contains("teacher")) {
    const Json& t = j.at("teacher");
    data.teacher.n_layers = require<int>(t, "n_layers", where + " teacher");
    data.teacher.d_model = require<int>(t, "d_model", where + " teacher");
    data.teacher.layers = require<std::vector<int>>(t, "layers", where + " teacher");
  }

  const Json& list = j.at("utterances");
  for (const Json& ju : list) {
    Utterance u;
    u.id = require<std::string>(ju, "id", where + " utterance");
    const std::string who = "utterance " + u.id;
    u.label = require<int>(ju, "label", who);
    const Index frames = require<Index>(ju, "frames", who);
    try {
      u.acoustic = read_matrix(dir / require<std::string>(ju, "acoustic", who), frames, data.acoustic_dim);
      if (ju.contains("teacher")) {
        const Json& jt = ju.at("teacher");
        const Index tokens = require<Index>(ju, "tokens", who);
        for (int layer : data.teacher.layers) {
          const std::string key = std::to_string(layer);
          if (!jt.contains(key)) throw ConfigError("teacher layer " + key + " missing");
          u.teacher.layers.push_back(layer);
          u.teacher.att.push_back(read_matrix(dir / require<std::string>(jt.at(key), "att", who), tokens, tokens));
          u.teacher.hid.push_back(
              read_matrix(dir / require<std::string>(jt.at(key), "hid", who), tokens, data.teacher.d_model));
        }
      }
    } catch (const Error& e) {
      throw ConfigError(who + ": " + e.what());
    }
    if (ju.contains("transcript")) u.transcript = ju.at("transcript").get<std::string>();
    data.utterances.push_back(std::move(u));
  }
  validate_dataset(data);
  return data;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  validate_dataset(data);
  std::filesystem::create_directories(dir / "tensors");
  Json j;
  j["format"] = kFormat;
  j["version"] = kManifestVersion;
  j["name"] = data.name;
  j["num_classes"] = data.num_classes;
  j["acoustic_dim"] = data.acoustic_dim;
  j["teacher"] = {{"n_layers", data.teacher.n_layers},
                  {"d_model", data.teacher.d_model},
                  {"layers", data.teacher.layers}};
  Json list = Json::array();
  for (const Utterance& u : data.utterances) {
    Json ju;
    ju["id"] = u.id;
    ju["label"] = u.label;
    ju["frames"] = u.acoustic.rows();
    ju["acoustic"] = acoustic_path(u.id);
    write_tensor(dir / acoustic_path(u.id), u.acoustic);
    if (!u.teacher.empty()) {
      ju["tokens"] = u.teacher.length();
      Json jt = Json::object();
      for (std::size_t k = 0; k < u.teacher.layers.size(); ++k) {
        const int layer = u.teacher.layers[k];
        jt[std::to_string(layer)] = {{"att", tap_path(u.id, layer, "att")}, {"hid", tap_path(u.id, layer, "hid")}};
        write_tensor(dir / tap_path(u.id, layer, "att"), u.teacher.att[k]);
        write_tensor(dir / tap_path(u.id, layer, "hid"), u.teacher.hid[k]);
      }
      ju["teacher"] = std::move(jt);
    }
    if (!u.transcript.empty()) ju["transcript"] = u.transcript;
    list.push_back(std::move(ju));
  }
  j["utterances"] = std::move(list);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << "\n";
}

std::vector<Batch> make_batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed, bool shuffle) {
  if (batch_size == 0) throw InvalidArgument("make_batches: batch_size must be positive");
  if (data.utterances.empty()) throw InvalidArgument("make_batches: empty dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
  }

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
    b.teacher_layers = data.teacher.layers;
    for (std::size_t idx : b.indices) {
      const Utterance& u = data.utterances[idx];
      if (u.acoustic.cols() != data.acoustic_dim || u.acoustic.rows() < 1) {
        throw ConfigError("utterance " + u.id + ": acoustic shape " + shape_of(u.acoustic) +
                          " does not match the manifest width " + std::to_string(data.acoustic_dim));
      }
      if (!u.teacher.empty() && u.teacher.layers != data.teacher.layers) {
        throw ConfigError("utterance " + u.id + ": teacher layers do not match the manifest");
      }
      b.labels.push_back(u.label);
      b.lengths.push_back(u.acoustic.rows());
      b.teacher_lengths.push_back(u.teacher.length());
      b.max_len = std::max(b.max_len, u.acoustic.rows());
      b.teacher_max_len = std::max(b.teacher_max_len, u.teacher.length());
    }
    const Index n = static_cast<Index>(b.size());
    b.acoustic = MatrixF::Zero(n * b.max_len, data.acoustic_dim);
    b.mask = BoolMatrix::Constant(n, b.max_len, false);
    const std::size_t taps = b.teacher_max_len > 0 ? b.teacher_layers.size() : 0;
    b.teacher_att.assign(taps, {});
    b.teacher_hid.assign(taps, {});
    for (Index i = 0; i < n; ++i) {
      const Utterance& u = data.utterances[b.indices[static_cast<std::size_t>(i)]];
      const Index len = u.acoustic.rows();
      b.acoustic.block(i * b.max_len, 0, len, data.acoustic_dim) = u.acoustic;
      b.mask.row(i).head(len).setConstant(true);
      for (std::size_t k = 0; k < taps; ++k) {
        MatrixF att = MatrixF::Zero(b.teacher_max_len, b.teacher_max_len);
        MatrixF hid = MatrixF::Zero(b.teacher_max_len, data.teacher.d_model);
        const Index lt = u.teacher.length();
        if (lt > 0) {
          att.topLeftCorner(lt, lt) = u.teacher.att[k];
          hid.topRows(lt) = u.teacher.hid[k];
        }
        b.teacher_att[k].push_back(std::move(att));
        b.teacher_hid[k].push_back(std::move(hid));
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

MatrixF inject_noise(const MatrixF& acoustic, double snr_db, std::uint64_t seed) {
  if (!std::isfinite(snr_db)) throw InvalidArgument("inject_noise: SNR must be finite");
  if (acoustic.size() == 0) throw InvalidArgument("inject_noise: empty input");
  const double signal_power = acoustic.cast<double>().squaredNorm() / static_cast<double>(acoustic.size());
  if (!(signal_power > 0.0)) throw InvalidArgument("inject_noise: input has zero power");

  Rng rng(seed);
  MatrixD noise(acoustic.rows(), acoustic.cols());
  for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
  const double drawn_power = noise.squaredNorm() / static_cast<double>(noise.size());
  const double target_power = signal_power / std::pow(10.0, snr_db / 10.0);
  noise *= std::sqrt(target_power / drawn_power);
  return (acoustic.cast<double>() + noise).cast<float>();
}

double measured_snr_db(const MatrixF& clean, const MatrixF& noisy) {
  if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols()) {
    throw DimensionError("measured_snr_db: shapes " + shape_of(clean) + " and " + shape_of(noisy) + " differ");
  }
  const double ps = clean.cast<double>().squaredNorm();
  const double pn = (noisy.cast<double>() - clean.cast<double>()).squaredNorm();
  if (!(pn > 0.0)) throw InvalidArgument("measured_snr_db: no noise present");
  return 10.0 * std::log10(ps / pn);
}

}  // namespace speechkd
