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

// speechkd command-line entry point.
//
//   speechkd synth     --out DIR [--seed N --classes K --train-n N --test-n N --config FILE --force]
//   speechkd train     --config FILE [--mode std|std-hidden|baseline --seed N --out DIR]
//   speechkd eval      --checkpoint DIR --dataset DIR [--snr DB --seed N]
//   speechkd sweep     --checkpoint DIR --dataset DIR [--snrs 15,10,5,0 --seeds 5 --out FILE]
//   speechkd gradcheck [--inject-bug --verbose]
//
// Exit status: 0 success, 1 validation error, 2 runtime or numerical error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "speechkd/checkpoint.hpp"
#include "speechkd/config.hpp"
#include "speechkd/data.hpp"
#include "speechkd/error.hpp"
#include "speechkd/gradcheck_suite.hpp"
#include "speechkd/sweep.hpp"
#include "speechkd/train.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace speechkd;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

bool non_empty_dir(const fs::path& p) { return fs::exists(p) && !fs::is_empty(p); }

struct SynthArgs {
  std::uint64_t seed = 1;
  int classes = 8;
  int train_n = 512;
  int test_n = 128;
  std::string out;
  std::string config;
  bool force = false;
};

int cmd_synth(const SynthArgs& a) {
  SynthConfig cfg;
  cfg.seed = a.seed;
  cfg.num_classes = a.classes;
  cfg.n_train = a.train_n;
  cfg.n_test = a.test_n;
  if (!a.config.empty()) {
    const RunConfig run = load_run_config(a.config);
    cfg.teacher = run.teacher;
    cfg.student_layers = run.student.n_layers;
    cfg.acoustic_dim = run.student.d_input;
    if (!run.distill.layer_map.empty()) {
      for (const LayerPair& p : run.distill.layer_map) cfg.teacher_layers.push_back(p.teacher);
    }
  }
  const fs::path out(a.out);
  if (non_empty_dir(out)) {
    if (!a.force) throw ConfigError("output directory " + out.string() + " is not empty (use --force)");
    fs::remove_all(out);
  }
  write_synthetic(out, synthesize_dataset(cfg));
  Json j{{"out", out.string()}, {"seed", a.seed}, {"classes", a.classes}, {"train", a.train_n}, {"test", a.test_n}};
  std::cout << j.dump() << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string mode = "std";
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = apply_mode(load_run_config(a.config), parse_train_mode(a.mode));
  if (a.seed) cfg.train.seed = *a.seed;
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (cfg.train_data.empty()) throw ConfigError("config: data.train is required for training");
  const Dataset train = load_dataset(cfg.train_data);
  std::optional<Dataset> test;
  if (!cfg.test_data.empty()) test = load_dataset(cfg.test_data);

  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "config.json", run_config_json(cfg) + "\n");

  const auto start = std::chrono::steady_clock::now();
  Trainer trainer(cfg.student, cfg.teacher, cfg.distill, cfg.train, train);
  std::ofstream log(cfg.output_dir / "train_log.jsonl", std::ios::trunc);
  for (int e = 0; e < cfg.train.epochs; ++e) {
    log << trainer.run_epoch().to_json() << "\n";
    log.flush();
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  save_checkpoint(cfg.output_dir / "checkpoint", cfg, trainer.state());

  Json result;
  result["mode"] = a.mode;
  result["seed"] = cfg.train.seed;
  result["epochs"] = trainer.state().epoch;
  result["steps"] = trainer.state().step;
  result["train_accuracy"] = evaluate(trainer.state().model, train, cfg.train.pooling).accuracy;
  if (test) {
    const EvalResult r = evaluate(trainer.state().model, *test, cfg.train.pooling);
    result["test_accuracy"] = r.accuracy;
    result["test"] = Json::parse(r.to_json());
  }
  result["train_seconds"] = seconds;
  write_text(cfg.output_dir / "result.json", result.dump(2) + "\n");
  std::cout << result.dump() << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::optional<double> snr;
  std::uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  const Dataset data = load_dataset(a.dataset);
  std::optional<NoiseSpec> noise;
  if (a.snr) noise = NoiseSpec{*a.snr, a.seed};
  const EvalResult r = evaluate(ck.state.model, data, ck.config.train.pooling, noise);
  Json j = Json::parse(r.to_json());
  j["dataset"] = data.name;
  j["snr_db"] = a.snr ? Json(*a.snr) : Json(nullptr);
  j["noise_seed"] = a.snr ? Json(a.seed) : Json(nullptr);
  std::cout << j.dump() << "\n";
  return 0;
}

struct SweepArgs {
  std::string checkpoint;
  std::string dataset;
  std::string snrs = "15,10,5,0";
  int seeds = 5;
  std::string out;
};

int cmd_sweep(const SweepArgs& a) {
  const std::vector<double> snrs = parse_snr_list(a.snrs);
  Checkpoint ck = load_checkpoint(a.checkpoint);
  const Dataset data = load_dataset(a.dataset);
  const std::string csv = sweep_csv(run_sweep(ck.state.model, data, ck.config.train.pooling, snrs, a.seeds));
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    write_text(a.out, csv);
  }
  return 0;
}

int cmd_gradcheck(bool inject_bug, bool verbose) {
  const SuiteResult r = run_gradcheck_suite(inject_bug);
  std::size_t failed = 0;
  for (const SuiteCheck& c : r.checks) {
    if (!c.report.passed) ++failed;
    if (verbose || !c.report.passed) {
      std::printf("%-4s %-44s max_rel_err=%.3e tol=%.0e checked=%zu\n", c.report.passed ? "ok" : "FAIL",
                  c.name.c_str(), c.report.max_rel_error, c.report.tol, c.report.checked);
    }
  }
  std::printf("gradcheck: %zu checks, %zu failed, %.2f s\n", r.checks.size(), failed, r.seconds);
  return r.passed ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech transformer distillation toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset with teacher taps");
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--classes", synth.classes, "Number of intents");
  s->add_option("--train-n", synth.train_n, "Training utterances");
  s->add_option("--test-n", synth.test_n, "Test utterances");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--config", synth.config, "Run config supplying teacher and student shapes");
  s->add_flag("--force", synth.force, "Replace a non-empty output directory");

  TrainArgs train;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Train a student");
  t->add_option("--config", train.config, "Run config (JSON)")->required();
  t->add_option("--mode", train.mode, "std, std-hidden or baseline")
      ->check(CLI::IsMember({"std", "std-hidden", "baseline"}));
  auto* seed_opt = t->add_option("--seed", train_seed, "Override the config seed");
  t->add_option("--out", train.out, "Override the output directory");

  EvalArgs eval;
  double eval_snr = 0.0;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  e->add_option("--dataset", eval.dataset, "Dataset directory")->required();
  auto* snr_opt = e->add_option("--snr", eval_snr, "Inject noise at this SNR (dB)");
  e->add_option("--seed", eval.seed, "Noise seed");

  SweepArgs sweep;
  auto* w = app.add_subcommand("sweep", "Accuracy over SNR levels and noise seeds (CSV)");
  w->add_option("--checkpoint", sweep.checkpoint, "Checkpoint directory")->required();
  w->add_option("--dataset", sweep.dataset, "Dataset directory")->required();
  w->add_option("--snrs", sweep.snrs, "Comma-separated SNR levels (dB)");
  w->add_option("--seeds", sweep.seeds, "Noise seeds per level");
  w->add_option("--out", sweep.out, "CSV output file (default stdout)");

  bool inject_bug = false, verbose = false;
  auto* g = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  g->add_flag("--inject-bug", inject_bug, "Corrupt one adjoint (negative control)");
  g->add_flag("--verbose", verbose, "Print every check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*t) {
      if (*seed_opt) train.seed = train_seed;
      return cmd_train(train);
    }
    if (*e) {
      if (*snr_opt) eval.snr = eval_snr;
      return cmd_eval(eval);
    }
    if (*w) return cmd_sweep(sweep);
    if (*g) return cmd_gradcheck(inject_bug, verbose);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
