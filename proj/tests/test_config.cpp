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

#include <fstream>

#include "speechkd/config.hpp"
#include "speechkd/error.hpp"
#include "test_util.hpp"

using namespace speechkd;

namespace {

std::string failure(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

bool mentions(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("empty config yields the documented defaults") {
  const RunConfig c = parse_run_config("{}");
  CHECK(c.student == EncoderConfig::student());
  CHECK(c.teacher == EncoderConfig::teacher());
  CHECK(c.distill.alpha1 == 0.625);
  CHECK(c.distill.alpha2 == 0.125);
  CHECK(c.distill.alpha3 == 0.25);
  CHECK(c.distill.s_dmodel == 512);
  CHECK(c.distill.t_dmodel == 768);
  CHECK(c.distill.layer_map.empty());
  CHECK(c.train.epochs == 50);
  CHECK(c.train.batch_size == 16);
  CHECK(c.train.warmup_steps == 4000);
  CHECK(c.train.clip_norm == 5.0);
  CHECK(c.train.adam.beta2 == 0.98);
  CHECK(c.seed() == 1);
}

TEST_CASE("all sections parse") {
  const RunConfig c = parse_run_config(R"({
    "seed": 7,
    "output_dir": "out",
    "student": {"n_layers": 2, "d_model": 32, "n_heads": 4, "d_ff": 64, "d_input": 20, "dropout": 0.2, "max_len": 128},
    "teacher": {"n_layers": 6, "d_model": 48, "n_heads": 6, "d_ff": 96, "d_input": 48, "max_len": 32},
    "distill": {"alpha1": 1, "alpha2": 0.5, "alpha3": 0, "layer_map": [[3, 1], [6, 2]], "resample": "truncate_pad",
                "label_smoothing": 0.05, "shared_head": true},
    "train": {"epochs": 3, "batch_size": 4, "warmup_steps": 10, "lr_factor": 2.0, "clip_norm": 1.5, "pooling": "max",
              "adam": {"beta1": 0.8, "beta2": 0.9, "eps": 1e-6}},
    "data": {"train": "d/train", "test": "/abs/test"}
  })", "/base");
  CHECK(c.seed() == 7);
  CHECK(c.output_dir == "/base/out");
  CHECK(c.student.d_input == 20);
  CHECK(c.student.dropout_p == 0.2);
  CHECK(c.teacher.n_layers == 6);
  CHECK(c.distill.s_dmodel == 32);
  CHECK(c.distill.t_dmodel == 48);
  CHECK(c.distill.layer_map == LayerMap{{3, 1}, {6, 2}});
  CHECK(c.distill.resample == ResampleMode::kTruncatePad);
  CHECK(c.distill.shared_head);
  CHECK(c.train.pooling == Pooling::kMax);
  CHECK(c.train.adam.eps == 1e-6);
  CHECK(c.train_data == "/base/d/train");
  CHECK(c.test_data == "/abs/test");

  const RunConfig again = parse_run_config(run_config_json(c));
  CHECK(run_config_json(again) == run_config_json(c));
}

TEST_CASE("every problem is reported at once") {
  const std::string msg = failure(R"({
    "studnet": {},
    "student": {"n_heads": 7, "dropuot": 0.1},
    "distill": {"alpha2": -1, "resample": "cubic"},
    "train": {"batch_size": "four", "adam": {"beta3": 1}}
  })");
  CHECK(mentions(msg, "5 problems"));
  CHECK(mentions(msg, "unknown key \"studnet\""));
  CHECK(mentions(msg, "unknown key \"dropuot\""));
  CHECK(mentions(msg, "cubic"));
  CHECK(mentions(msg, "train.batch_size: wrong type"));
  CHECK(mentions(msg, "unknown key \"beta3\""));

  // Range checks run once the structure is sound.
  const std::string ranges = failure(R"({"student": {"n_heads": 7}, "distill": {"alpha2": -1}, "train": {"epochs": -1}})");
  CHECK(mentions(ranges, "divisible by n_heads"));
  CHECK(mentions(ranges, "alphas"));
  CHECK(mentions(ranges, "train.epochs"));
}

TEST_CASE("cross-field checks") {
  CHECK(mentions(failure(R"({"distill": {"s_dmodel": 256}})"), "s_dmodel"));
  CHECK(mentions(failure(R"({"student": {"n_layers": 5}})"), "not divisible"));
  CHECK(mentions(failure(R"({"distill": {"layer_map": [[13, 1], [6, 2], [9, 3], [12, 4]]}})"), "13"));
  CHECK(mentions(failure(R"({"distill": {"layer_map": [[3, 1], "x"]}})"), "integer pairs"));
  CHECK(mentions(failure("{not json"), "not valid JSON"));
  CHECK(mentions(failure("[1, 2]"), "expected an object"));
  CHECK_NOTHROW(parse_run_config(R"({"student": {"n_layers": 6}})"));
}

TEST_CASE("training modes") {
  CHECK(parse_train_mode("std") == TrainMode::kStd);
  CHECK(parse_train_mode("std-hidden") == TrainMode::kStdHidden);
  CHECK(parse_train_mode("baseline") == TrainMode::kBaseline);
  CHECK_THROWS_AS(parse_train_mode("STD"), ConfigError);
  CHECK(train_mode_name(TrainMode::kStdHidden) == "std-hidden");

  const RunConfig base = parse_run_config("{}");
  const RunConfig s = apply_mode(base, TrainMode::kStd);
  CHECK(s.distill.alpha2 == 0.125);
  CHECK(s.distill.alpha3 == 0.25);
  const RunConfig h = apply_mode(base, TrainMode::kStdHidden);
  CHECK(h.distill.alpha2 == 0.0);
  CHECK(h.distill.alpha3 == 0.25);
  const RunConfig b = apply_mode(base, TrainMode::kBaseline);
  CHECK(b.distill.alpha2 == 0.0);
  CHECK(b.distill.alpha3 == 0.0);
  CHECK(b.distill.alpha1 == 0.625);
}

TEST_CASE("config files resolve paths against their directory") {
  const auto dir = speechkd::testing::scratch_dir("config_file");
  {
    std::ofstream out(dir / "run.json");
    out << R"({"data": {"train": "../data/train"}, "output_dir": "runs/a"})";
  }
  const RunConfig c = load_run_config(dir / "run.json");
  CHECK(c.train_data == (dir.parent_path() / "data" / "train"));
  CHECK(c.output_dir == dir / "runs" / "a");
  CHECK_THROWS_AS(load_run_config(dir / "absent.json"), ConfigError);
}
