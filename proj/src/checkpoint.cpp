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

#include "speechkd/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "speechkd/data.hpp"
#include "speechkd/error.hpp"

namespace speechkd {

namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kFormat = "speechkd-checkpoint";
constexpr int kVersion = 1;

std::string file_for(const std::string& prefix, const std::string& name) { return "tensors/" + prefix + name + ".stdt"; }

int num_pairs(const RunConfig& cfg) {
  return static_cast<int>(cfg.distill.layer_map.empty()
                              ? layer_map_uniform(cfg.teacher.n_layers, cfg.student.n_layers).size()
                              : cfg.distill.layer_map.size());
}

MatrixF read_as(const std::filesystem::path& path, const Shape& shape, const std::string& name) {
  const Tensor<float> t = read_tensor(path);
  if (t.shape() != shape) {
    throw ConfigError("checkpoint: " + name + " has shape " + shape_str(t.shape()) + ", expected " + shape_str(shape));
  }
  return t.matrix();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const RunConfig& config, const TrainState& state) {
  TrainState copy = state;
  const std::vector<Param<float>*> params = copy.model.all();
  if (copy.adam.m.size() != params.size() || copy.adam.v.size() != params.size()) {
    throw InvalidArgument("save_checkpoint: optimizer state does not match the model");
  }
  std::filesystem::create_directories(dir / "tensors");

  Json files = Json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param<float>& p = *params[i];
    write_tensor(dir / file_for("", p.name), Tensor<float>::constant(p.shape, p.value));
    write_tensor(dir / file_for("adam.m.", p.name), Tensor<float>::constant(p.shape, copy.adam.m[i]));
    write_tensor(dir / file_for("adam.v.", p.name), Tensor<float>::constant(p.shape, copy.adam.v[i]));
    Json shape = Json::array();
    for (Index d : p.shape) shape.push_back(d);
    files.push_back({{"name", p.name}, {"shape", shape}});
  }

  Json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["config"] = Json::parse(run_config_json(config));
  j["num_classes"] = copy.model.num_classes;
  j["step"] = copy.step;
  j["epoch"] = copy.epoch;
  j["adam_step"] = copy.adam.step;
  j["params"] = std::move(files);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const std::filesystem::path manifest = dir / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw ConfigError("cannot open checkpoint manifest " + manifest.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(manifest.string() + ": " + e.what());
  }
  if (j.value("format", "") != kFormat || j.value("version", 0) != kVersion) {
    throw ConfigError(manifest.string() + ": not a speechkd checkpoint (version " + std::to_string(kVersion) + ")");
  }

  Checkpoint ck;
  try {
    ck.config = parse_run_config(j.at("config").dump());
    const int classes = j.at("num_classes").get<int>();
    if (classes < 2) throw ConfigError("checkpoint: num_classes must be >= 2");
    ck.state.model = StudentModel<float>::init(ck.config.student, classes, num_pairs(ck.config),
                                               ck.config.teacher.d_model, ck.config.distill.shared_head, 0);
    ck.state.step = j.at("step").get<long>();
    ck.state.epoch = j.at("epoch").get<int>();
    ck.state.adam = adam_init(ck.state.model.all(), ck.config.train.adam);
    ck.state.adam.step = j.at("adam_step").get<long>();

    const std::vector<Param<float>*> params = ck.state.model.all();
    const Json& listed = j.at("params");
    if (listed.size() != params.size()) {
      throw ConfigError("checkpoint: lists " + std::to_string(listed.size()) + " parameters, model has " +
                        std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<float>& p = *params[i];
      if (listed[i].at("name").get<std::string>() != p.name) {
        throw ConfigError("checkpoint: parameter " + std::to_string(i) + " is " + listed[i].at("name").get<std::string>() +
                          ", expected " + p.name);
      }
      p.value = read_as(dir / file_for("", p.name), p.shape, p.name);
      ck.state.adam.m[i] = read_as(dir / file_for("adam.m.", p.name), p.shape, "adam.m." + p.name);
      ck.state.adam.v[i] = read_as(dir / file_for("adam.v.", p.name), p.shape, "adam.v." + p.name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(manifest.string() + ": " + e.what());
  }
  return ck;
}

}  // namespace speechkd
