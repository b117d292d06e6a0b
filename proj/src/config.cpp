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

#include "speechkd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "speechkd/error.hpp"

namespace speechkd {

namespace {

using Json = nlohmann::ordered_json;

// Reads typed fields out of one JSON object, recording problems instead of
// throwing so a single pass reports all of them.
class Section {
 public:
  Section(const Json* j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (j_ != nullptr && !j_->is_object()) {
      errors_.push_back(path_ + ": expected an object");
      j_ = nullptr;
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    known_.insert(key);
    if (j_ == nullptr || !j_->contains(key)) return;
    const Json& v = j_->at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("bool");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("int");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
            throw std::invalid_argument("unsigned");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("string");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      errors_.push_back(path_ + "." + key + ": wrong type (" + std::string(v.type_name()) + ")");
    }
  }

  bool has(const char* key) const { return j_ != nullptr && j_->contains(key); }

  const Json* child(const char* key) {
    known_.insert(key);
    return has(key) ? &j_->at(key) : nullptr;
  }

  void reject_unknown() {
    if (j_ == nullptr) return;
    for (const auto& [k, v] : j_->items()) {
      if (!known_.count(k)) errors_.push_back(path_ + ": unknown key \"" + k + "\"");
    }
  }

  const std::string& path() const { return path_; }

 private:
  const Json* j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> known_;
};

void read_encoder(Section s, EncoderConfig& cfg) {
  s.get("n_layers", cfg.n_layers);
  s.get("d_model", cfg.d_model);
  s.get("n_heads", cfg.n_heads);
  s.get("d_ff", cfg.d_ff);
  s.get("d_input", cfg.d_input);
  s.get("dropout", cfg.dropout_p);
  s.get("max_len", cfg.max_len);
  s.reject_unknown();
}

Json encoder_json(const EncoderConfig& c) {
  return Json{{"n_layers", c.n_layers}, {"d_model", c.d_model}, {"n_heads", c.n_heads}, {"d_ff", c.d_ff},
              {"d_input", c.d_input},   {"dropout", c.dropout_p}, {"max_len", c.max_len}};
}

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  const std::filesystem::path path(p);
  if (path.empty() || path.is_absolute() || base.empty()) return path;
  return (base / path).lexically_normal();
}

[[noreturn]] void fail(const std::string& head, const std::vector<std::string>& errors) {
  std::ostringstream out;
  out << head << " (" << errors.size() << (errors.size() == 1 ? " problem" : " problems") << "):";
  for (const auto& e : errors) out << "\n  - " << e;
  throw ConfigError(out.str());
}

void collect_cross_errors(const RunConfig& cfg, std::vector<std::string>& errors) {
  cfg.student.collect_errors("student.", errors);
  cfg.teacher.collect_errors("teacher.", errors);
  cfg.distill.collect_errors(errors);
  cfg.train.collect_errors(errors);
  if (cfg.distill.s_dmodel != cfg.student.d_model) {
    errors.push_back("distill.s_dmodel (" + std::to_string(cfg.distill.s_dmodel) + ") must equal student.d_model (" +
                     std::to_string(cfg.student.d_model) + ")");
  }
  if (cfg.distill.t_dmodel != cfg.teacher.d_model) {
    errors.push_back("distill.t_dmodel (" + std::to_string(cfg.distill.t_dmodel) + ") must equal teacher.d_model (" +
                     std::to_string(cfg.teacher.d_model) + ")");
  }
  if (cfg.student.n_layers >= 1 && cfg.teacher.n_layers >= 1) {
    try {
      if (cfg.distill.layer_map.empty()) {
        layer_map_uniform(cfg.teacher.n_layers, cfg.student.n_layers);
      } else {
        validate_layer_map(cfg.distill.layer_map, cfg.teacher.n_layers, cfg.student.n_layers);
      }
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  std::vector<std::string> errors;
  RunConfig cfg;
  Section root(&j, "config", errors);
  root.get("seed", cfg.train.seed);
  std::string out_dir = cfg.output_dir.string();
  root.get("output_dir", out_dir);
  cfg.output_dir = resolve(out_dir, base_dir);

  read_encoder(Section(root.child("student"), "student", errors), cfg.student);
  read_encoder(Section(root.child("teacher"), "teacher", errors), cfg.teacher);

  {
    Section d(root.child("distill"), "distill", errors);
    d.get("alpha1", cfg.distill.alpha1);
    d.get("alpha2", cfg.distill.alpha2);
    d.get("alpha3", cfg.distill.alpha3);
    d.get("label_smoothing", cfg.distill.label_smoothing);
    d.get("shared_head", cfg.distill.shared_head);
    cfg.distill.s_dmodel = cfg.student.d_model;
    cfg.distill.t_dmodel = cfg.teacher.d_model;
    d.get("s_dmodel", cfg.distill.s_dmodel);
    d.get("t_dmodel", cfg.distill.t_dmodel);
    std::string resample = "bilinear";
    d.get("resample", resample);
    if (resample == "bilinear") {
      cfg.distill.resample = ResampleMode::kBilinear;
    } else if (resample == "truncate_pad") {
      cfg.distill.resample = ResampleMode::kTruncatePad;
    } else {
      errors.push_back("distill.resample: expected \"bilinear\" or \"truncate_pad\", got \"" + resample + "\"");
    }
    if (const Json* map = d.child("layer_map")) {
      bool ok = map->is_array();
      for (const Json& pair : ok ? *map : Json::array()) {
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() || !pair[1].is_number_integer()) {
          ok = false;
          break;
        }
        cfg.distill.layer_map.push_back({pair[0].get<int>(), pair[1].get<int>()});
      }
      if (!ok) errors.push_back("distill.layer_map: expected [[teacher, student], ...] integer pairs");
    }
    d.reject_unknown();
  }

  {
    Section t(root.child("train"), "train", errors);
    t.get("epochs", cfg.train.epochs);
    t.get("batch_size", cfg.train.batch_size);
    t.get("warmup_steps", cfg.train.warmup_steps);
    t.get("lr_factor", cfg.train.lr_factor);
    t.get("clip_norm", cfg.train.clip_norm);
    std::string pooling = "mean";
    t.get("pooling", pooling);
    if (pooling == "mean") {
      cfg.train.pooling = Pooling::kMean;
    } else if (pooling == "max") {
      cfg.train.pooling = Pooling::kMax;
    } else {
      errors.push_back("train.pooling: expected \"mean\" or \"max\", got \"" + pooling + "\"");
    }
    Section a(t.child("adam"), "train.adam", errors);
    a.get("beta1", cfg.train.adam.beta1);
    a.get("beta2", cfg.train.adam.beta2);
    a.get("eps", cfg.train.adam.eps);
    a.reject_unknown();
    t.reject_unknown();
  }

  {
    Section d(root.child("data"), "data", errors);
    std::string train, test;
    d.get("train", train);
    d.get("test", test);
    cfg.train_data = resolve(train, base_dir);
    cfg.test_data = resolve(test, base_dir);
    d.reject_unknown();
  }
  root.reject_unknown();

  if (errors.empty()) collect_cross_errors(cfg, errors);
  if (!errors.empty()) fail("invalid run config", errors);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.parent_path());
}

std::string run_config_json(const RunConfig& cfg) {
  Json map = Json::array();
  for (const LayerPair& p : cfg.distill.layer_map) map.push_back({p.teacher, p.student});
  Json j;
  j["seed"] = cfg.train.seed;
  j["output_dir"] = cfg.output_dir.string();
  j["student"] = encoder_json(cfg.student);
  j["teacher"] = encoder_json(cfg.teacher);
  j["distill"] = {{"alpha1", cfg.distill.alpha1},
                  {"alpha2", cfg.distill.alpha2},
                  {"alpha3", cfg.distill.alpha3},
                  {"layer_map", map},
                  {"resample", cfg.distill.resample == ResampleMode::kBilinear ? "bilinear" : "truncate_pad"},
                  {"label_smoothing", cfg.distill.label_smoothing},
                  {"s_dmodel", cfg.distill.s_dmodel},
                  {"t_dmodel", cfg.distill.t_dmodel},
                  {"shared_head", cfg.distill.shared_head}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"warmup_steps", cfg.train.warmup_steps},
                {"lr_factor", cfg.train.lr_factor},
                {"clip_norm", cfg.train.clip_norm},
                {"pooling", cfg.train.pooling == Pooling::kMean ? "mean" : "max"},
                {"adam", {{"beta1", cfg.train.adam.beta1}, {"beta2", cfg.train.adam.beta2}, {"eps", cfg.train.adam.eps}}}};
  j["data"] = {{"train", cfg.train_data.string()}, {"test", cfg.test_data.string()}};
  return j.dump(2);
}

void validate_run_config(const RunConfig& cfg) {
  std::vector<std::string> errors;
  collect_cross_errors(cfg, errors);
  if (!errors.empty()) fail("invalid run config", errors);
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "std") return TrainMode::kStd;
  if (name == "std-hidden") return TrainMode::kStdHidden;
  if (name == "baseline") return TrainMode::kBaseline;
  throw ConfigError("unknown mode \"" + name + "\"; expected std, std-hidden or baseline");
}

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kStd: return "std";
    case TrainMode::kStdHidden: return "std-hidden";
    case TrainMode::kBaseline: return "baseline";
  }
  return "std";
}

RunConfig apply_mode(RunConfig cfg, TrainMode mode) {
  if (mode == TrainMode::kStdHidden || mode == TrainMode::kBaseline) cfg.distill.alpha2 = 0.0;
  if (mode == TrainMode::kBaseline) cfg.distill.alpha3 = 0.0;
  return cfg;
}

}  // namespace speechkd
