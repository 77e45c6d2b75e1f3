// Copyright 2026 The sgpolicy Authors
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

#include "cli.h"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sgpolicy/demogen.h"
#include "sgpolicy/runtime.h"
#include "sgpolicy/trainer.h"

namespace sgpolicy {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string Trim(std::string_view s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

TaskSpec TaskFromName(const std::string& name, bool unreachable_handle) {
  const auto parsed = ParseTaskName(name);
  if (!parsed) throw UsageError("unknown task '" + name + "'");
  TaskOptions options;
  options.unreachable_handle = unreachable_handle;
  return MakeTask(*parsed, options);
}

// Effective values of every option of a subcommand, as a JSON object.
json EffectiveConfig(const CLI::App* cmd) {
  json out = json::object();
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    std::string value;
    if (opt->count() > 0) {
      value = opt->as<std::string>();
    } else {
      value = opt->get_default_str();
    }
    out[name] = value;
  }
  out["format_version"] = kFormatVersion;
  return out;
}

struct CollectArgs {
  std::string task;
  int episodes = 30;
  uint64_t seed = 0;
  std::string out;
  double noise_std = PlannerConfig{}.noise_std;
};

struct TrainArgs {
  std::string data;
  std::string out;
  TrainConfig train;
  PolicyConfig policy;
  bool no_subgoal = false;
  int eval_every = 0;
  int eval_episodes = 5;
  int checkpoint_every = 0;
  std::string metrics;
  bool resume = false;
};

struct RunArgs {
  std::string model;
  std::string task;
  int episodes = 20;
  uint64_t seed = 1000;
  RuntimeConfig runtime;
  bool unreachable_handle = false;
  std::string report;
  std::string trace_dir;
  std::string out;
};

struct AuditArgs {
  std::string data;
  std::string trace;
};

int CmdCollect(const CollectArgs& a, const CLI::App* cmd) {
  if (a.episodes < 1) throw UsageError("--episodes must be >= 1");
  const TaskSpec task = TaskFromName(a.task, false);
  PlannerConfig planner;
  planner.noise_std = a.noise_std;
  const DatasetManifest m =
      CollectDataset(task, a.episodes, a.seed, a.out, planner);
  json cfg = EffectiveConfig(cmd);
  WriteFile(fs::path(a.out) / "collect_config.json", cfg.dump(2) + "\n");
  std::cout << "collected " << m.episode_count << " episodes of "
            << TaskNameString(task.name) << " (" << m.attempted
            << " attempted) into " << a.out << "\n";
  return kExitOk;
}

void RunEvalHook(const Checkpoint& ckpt, int epoch, int episodes,
                 std::ostream& log) {
  const auto name = ParseTaskName(ckpt.task);
  if (!name) return;
  const EvalReport r =
      Evaluate(ckpt, MakeTask(*name), episodes, RuntimeConfig{}, 1000);
  json line = {{"epoch", epoch},
               {"eval_success_rate", r.success_rate},
               {"eval_episodes", episodes}};
  log << line.dump() << "\n" << std::flush;
  std::cout << "epoch " << epoch << " eval success " << r.success_rate
            << "\n";
}

int CmdTrain(TrainArgs a, const CLI::App* cmd) {
  a.train.ablate_subgoal = a.no_subgoal;
  a.train.Validate();
  a.policy.Validate();
  const Dataset dataset = LoadDataset(a.data);
  const std::string metrics_path =
      a.metrics.empty() ? a.out + ".metrics.jsonl" : a.metrics;

  Checkpoint ckpt;
  if (a.resume && fs::exists(a.out)) {
    ckpt = LoadCheckpoint(a.out);
    if (ckpt.dataset_digest != DatasetDigest(dataset.manifest)) {
      throw LoadError("checkpoint was trained on a different dataset");
    }
    ckpt.train.epochs = a.train.epochs;
  } else {
    ckpt = InitCheckpoint(dataset, a.train, a.policy);
  }
  const PolicyConfig& pc = ckpt.policy.config();
  const std::vector<TrainSample> samples =
      MakeSamples(dataset.episodes, pc.history, pc.horizon, pc.text_dim);

  if (fs::path(metrics_path).has_parent_path()) {
    fs::create_directories(fs::path(metrics_path).parent_path());
  }
  std::ofstream log(metrics_path, ckpt.epoch > 0 ? std::ios::app
                                                 : std::ios::trunc);
  if (!log) throw Error("cannot write " + metrics_path);
  if (ckpt.epoch == 0) {
    json header = {{"format_version", kFormatVersion},
                   {"config", json::parse(ConfigJson(pc, ckpt.train))},
                   {"cli", EffectiveConfig(cmd)},
                   {"samples", samples.size()}};
    log << header.dump() << "\n";
  }

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    log << MetricsLine(r) << "\n" << std::flush;
    if ((r.epoch + 1) % 50 == 0 || r.epoch + 1 == ckpt.train.epochs) {
      std::printf("epoch %d  l_action %.5f  l_completion %.5f  lambda %.4f\n",
                  r.epoch + 1, r.loss.l_action, r.loss.l_completion,
                  r.loss.lambda);
      std::fflush(stdout);
    }
  };
  hooks.checkpoint_every = a.checkpoint_every;
  hooks.checkpoint_path = a.out;
  if (a.eval_every > 0) {
    hooks.eval_every = a.eval_every;
    hooks.on_eval = [&](int epoch, const Checkpoint& c) {
      RunEvalHook(c, epoch, a.eval_episodes, log);
    };
  }
  ContinueTraining(ckpt, samples, hooks);
  SaveCheckpoint(a.out, ckpt);
  std::cout << "wrote " << a.out << " (" << ckpt.epoch << " epochs, "
            << samples.size() << " samples)\n";
  return kExitOk;
}

json TraceSummary(const EpisodeTrace& t) {
  return {{"env_seed", t.env_seed},     {"success", t.success},
          {"steps", t.steps},           {"advances", t.advances},
          {"stall", t.stall},           {"stall_subgoal", t.stall_subgoal},
          {"error", t.error}};
}

int CmdEval(const RunArgs& a, const CLI::App* cmd) {
  if (a.episodes < 1) throw UsageError("--episodes must be >= 1");
  const Checkpoint ckpt = LoadCheckpoint(a.model);
  const TaskSpec task =
      TaskFromName(a.task.empty() ? ckpt.task : a.task, a.unreachable_handle);
  a.runtime.Validate(ckpt.policy.config().horizon);
  const EvalReport r = Evaluate(ckpt, task, a.episodes, a.runtime, a.seed);

  const std::string mode = a.runtime.oracle_completion ? "oracle" : "predicted";
  std::printf("task %s  mode %s  threshold %g\n",
              std::string(TaskNameString(task.name)).c_str(), mode.c_str(),
              a.runtime.tau);
  std::printf("success_rate %.4f (%d/%d)  mean_steps %.2f  stalls %d\n",
              r.success_rate, r.successes, r.episodes, r.mean_steps, r.stalls);
  for (const auto& [idx, count] : r.failure_histogram) {
    const std::string what = idx < task.num_subgoals()
                                 ? task.subgoals[idx].description
                                 : std::string("(final check)");
    std::printf("  failed at subgoal %d \"%s\": %d\n", idx, what.c_str(),
                count);
  }

  json hist = json::object();
  for (const auto& [idx, count] : r.failure_histogram) {
    hist[std::to_string(idx)] = count;
  }
  const json summary = {{"format_version", kFormatVersion},
                        {"task", TaskNameString(task.name)},
                        {"mode", mode},
                        {"threshold", a.runtime.tau},
                        {"episodes", r.episodes},
                        {"successes", r.successes},
                        {"success_rate", r.success_rate},
                        {"mean_steps", r.mean_steps},
                        {"stalls", r.stalls},
                        {"failure_histogram", hist},
                        {"config", EffectiveConfig(cmd)}};
  if (!a.report.empty()) {
    std::string text;
    for (const auto& t : r.traces) text += TraceSummary(t).dump() + "\n";
    text += summary.dump() + "\n";
    WriteFile(a.report, text);
  }
  if (!a.trace_dir.empty()) {
    for (const auto& t : r.traces) {
      EmitTrace(t, fs::path(a.trace_dir) /
                       ("trace_" + std::to_string(t.env_seed) + ".jsonl"));
    }
  }
  return kExitOk;
}

int CmdTrace(const RunArgs& a) {
  const Checkpoint ckpt = LoadCheckpoint(a.model);
  const TaskSpec task =
      TaskFromName(a.task.empty() ? ckpt.task : a.task, a.unreachable_handle);
  const EpisodeTrace t = RunEpisode(ckpt, task, a.runtime, a.seed);
  EmitTrace(t, a.out);
  std::printf("success %s  steps %d  advances %zu  stall %s\n",
              t.success ? "true" : "false", t.steps, t.advances.size(),
              t.stall ? "true" : "false");
  if (t.stall) {
    std::printf("stalled at subgoal %d \"%s\" (step %d)\n", t.stall_subgoal,
                task.subgoals[t.stall_subgoal].description.c_str(),
                t.stall_step);
  }
  if (!t.error.empty()) {
    std::fprintf(stderr, "aborted: %s\n", t.error.c_str());
    return kExitDomainError;
  }
  return kExitOk;
}

int CmdAudit(const AuditArgs& a) {
  if (a.data.empty() == a.trace.empty()) {
    throw UsageError("give exactly one of --data or --trace");
  }
  std::vector<Violation> v;
  if (!a.data.empty()) {
    v = AuditDataset(a.data);
  } else {
    const EpisodeTrace t = ReadTrace(a.trace);
    const auto name = ParseTaskName(t.task);
    if (!name) throw LoadError("trace names unknown task '" + t.task + "'");
    v = AuditTrace(t, MakeTask(*name).num_subgoals(), a.trace);
  }
  for (const auto& x : v) {
    std::printf("FAIL %s: %s\n", x.location.c_str(), x.message.c_str());
  }
  std::printf("%s (%zu violations)\n", v.empty() ? "PASS" : "FAIL", v.size());
  return v.empty() ? kExitOk : kExitDomainError;
}

// value of --config in argv, if any
std::string FindConfigPath(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) {
      return std::string(arg.substr(9));
    }
  }
  return "";
}

}  // namespace

std::map<std::string, std::string> ParseConfigText(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = Trim(line);
    if (body.empty()) continue;
    const size_t eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) +
                       ": expected key = value");
    }
    std::string key = Trim(body.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key.empty()) {
      throw UsageError("config line " + std::to_string(line_no) +
                       ": empty key");
    }
    out[key] = Trim(body.substr(eq + 1));
  }
  return out;
}

int RunCli(int argc, char** argv) {
  CLI::App app{"Subgoal-conditioned diffusion policy toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::string config_path;
  app.add_option("--config", config_path,
                 "key = value file; command-line flags override it");

  CollectArgs ca;
  CLI::App* collect = app.add_subcommand("collect", "collect scripted demos");
  collect->add_option("--task", ca.task, "pick_place | slide_push | "
                                         "drawer_open_place")
      ->required();
  collect->add_option("--episodes", ca.episodes, "successful episodes to keep");
  collect->add_option("--seed", ca.seed, "first episode seed");
  collect->add_option("--out", ca.out, "dataset directory")->required();
  collect->add_option("--noise-std", ca.noise_std, "planner motion noise");

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "train a policy");
  train->add_option("--data", ta.data, "dataset directory")->required();
  train->add_option("--out", ta.out, "checkpoint path")->required();
  train->add_option("--epochs", ta.train.epochs);
  train->add_option("--seed", ta.train.seed);
  train->add_option("--batch-size", ta.train.batch_size);
  train->add_option("--lr", ta.train.learning_rate);
  train->add_option("--lambda-max", ta.train.lambda_max);
  train->add_option("--focal-beta", ta.train.focal.beta);
  train->add_option("--focal-gamma", ta.train.focal.gamma);
  train->add_flag("--no-subgoal-conditioning", ta.no_subgoal,
                  "drop the subgoal embedding from the action branch");
  train->add_option("--diffusion-steps", ta.policy.diffusion_steps);
  train->add_option("--beta-start", ta.policy.beta_start);
  train->add_option("--beta-end", ta.policy.beta_end);
  train->add_option("--eval-every", ta.eval_every,
                    "evaluate every N epochs (0 = never)");
  train->add_option("--eval-episodes", ta.eval_episodes);
  train->add_option("--checkpoint-every", ta.checkpoint_every);
  train->add_option("--metrics", ta.metrics,
                    "metrics log (default <out>.metrics.jsonl)");
  train->add_flag("--resume", ta.resume, "continue from --out if it exists");

  RunArgs ea;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--model", ea.model, "checkpoint path")->required();
  eval->add_option("--task", ea.task, "defaults to the checkpoint's task");
  eval->add_option("--episodes", ea.episodes);
  eval->add_option("--seed", ea.seed, "first environment seed");
  eval->add_flag("--oracle-completion", ea.runtime.oracle_completion,
                 "advance on the ground-truth checker");
  eval->add_option("--threshold", ea.runtime.tau, "completion threshold");
  eval->add_option("--execute-horizon", ea.runtime.execute_horizon);
  eval->add_option("--subgoal-timeout", ea.runtime.subgoal_timeout);
  eval->add_option("--sample-seed", ea.runtime.rng_seed);
  eval->add_flag("--unreachable-handle", ea.unreachable_handle,
                 "forced-failure drawer variant");
  eval->add_option("--report", ea.report, "JSON-lines report file");
  eval->add_option("--trace-dir", ea.trace_dir, "write one trace per episode");

  RunArgs ra;
  ra.seed = 0;
  CLI::App* trace = app.add_subcommand("trace", "trace one episode");
  trace->add_option("--model", ra.model, "checkpoint path")->required();
  trace->add_option("--task", ra.task, "defaults to the checkpoint's task");
  trace->add_option("--episode-seed", ra.seed);
  trace->add_option("--out", ra.out, "trace file")->required();
  trace->add_flag("--oracle-completion", ra.runtime.oracle_completion);
  trace->add_option("--threshold", ra.runtime.tau);
  trace->add_option("--execute-horizon", ra.runtime.execute_horizon);
  trace->add_option("--subgoal-timeout", ra.runtime.subgoal_timeout);
  trace->add_option("--sample-seed", ra.runtime.rng_seed);
  trace->add_flag("--unreachable-handle", ra.unreachable_handle);

  AuditArgs aa;
  CLI::App* audit = app.add_subcommand("audit", "check dataset or trace");
  audit->add_option("--data", aa.data, "dataset directory");
  audit->add_option("--trace", aa.trace, "trace file");

  try {
    const std::string path = FindConfigPath(argc, argv);
    if (!path.empty()) {
      std::map<std::string, std::string> values;
      try {
        values = ParseConfigText(ReadFile(path));
      } catch (const LoadError& e) {
        throw UsageError(e.what());
      }
      std::set<std::string> used;
      for (CLI::App* cmd : {collect, train, eval, trace, audit}) {
        for (CLI::Option* opt : cmd->get_options()) {
          auto it = values.find(opt->get_single_name());
          if (it == values.end()) continue;
          opt->default_val(it->second);
          opt->required(false);
          used.insert(it->first);
        }
      }
      for (const auto& [k, v] : values) {
        if (!used.count(k)) throw UsageError("unknown config key '" + k + "'");
      }
    }
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsageError;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsageError;
  } catch (const CLI::Error& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsageError;
  }

  try {
    if (collect->parsed()) return CmdCollect(ca, collect);
    if (train->parsed()) return CmdTrain(ta, train);
    if (eval->parsed()) return CmdEval(ea, eval);
    if (trace->parsed()) return CmdTrace(ra);
    return CmdAudit(aa);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsageError;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsageError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDomainError;
  }
}

}  // namespace sgpolicy
