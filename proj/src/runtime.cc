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

#include "sgpolicy/runtime.h"

#include <cmath>
#include <sstream>

#include "json.hpp"

namespace sgpolicy {

using nlohmann::json;

void RuntimeConfig::Validate(int horizon) const {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  if (execute_horizon < 1 || execute_horizon > horizon) {
    throw ConfigError("execute horizon must lie in [1, " +
                      std::to_string(horizon) + "]");
  }
  if (subgoal_timeout < 1) throw ConfigError("subgoal timeout must be >= 1");
}

std::string RuntimeConfig::Json() const {
  return json{{"tau", tau},
              {"execute_horizon", execute_horizon},
              {"subgoal_timeout", subgoal_timeout},
              {"oracle_completion", oracle_completion},
              {"rng_seed", rng_seed}}
      .dump();
}

void CheckCompatible(const Checkpoint& ckpt, const TaskSpec& task) {
  std::vector<std::string> subgoals;
  for (const auto& s : task.subgoals) subgoals.push_back(s.description);
  if (ckpt.task_description != task.description || ckpt.subgoals != subgoals) {
    throw LoadError("checkpoint was trained on '" + ckpt.task_description +
                    "', not on '" + task.description + "'");
  }
}

EpisodeTrace RunEpisode(const Checkpoint& ckpt, const TaskSpec& task,
                        const RuntimeConfig& config, uint64_t env_seed) {
  CheckCompatible(ckpt, task);
  const SubgoalPolicy& policy = ckpt.policy;
  const PolicyConfig& pc = policy.config();
  config.Validate(pc.horizon);
  const int n = task.num_subgoals();

  EpisodeTrace trace;
  trace.oracle = config.oracle_completion;
  trace.task = std::string(TaskNameString(task.name));
  trace.env_seed = env_seed;
  trace.config_json = config.Json();
  trace.durations.assign(n, 0);

  WorldState state = ResetState(task, env_seed);
  ExecutorState exec;
  std::deque<Eigen::Vector3d> proprio;
  const uint64_t sample_stream = DeriveSeed(config.rng_seed, env_seed);

  for (int t = 0; t < task.max_steps && !exec.finished; ++t) {
    const int idx = exec.active_subgoal_index;
    const Subgoal& sg = task.subgoals[idx];
    const Observation obs = Observe(task, state, idx, env_seed);
    if (proprio.empty()) {
      proprio.assign(pc.history, obs.proprio);
    } else {
      proprio.pop_front();
      proprio.push_back(obs.proprio);
    }
    Matrix window(pc.history, pc.proprio_dim);
    for (int i = 0; i < pc.history; ++i) window.row(i) = proprio[i].transpose();
    const auto [c_action, c_head] = policy.BuildConditioning(
        window, obs.cloud, task.description, sg.description,
        pc.ablate_subgoal);

    if (exec.pending_actions.empty()) {
      ActionChunk chunk;
      try {
        chunk = policy.Sample(c_action.concat,
                              DeriveSeed(sample_stream, static_cast<uint64_t>(t)));
      } catch (const NumericError& e) {
        trace.error = e.what();
        break;
      }
      for (int i = 0; i < config.execute_horizon; ++i) {
        exec.pending_actions.push_back(DecodeAction(chunk.row(i)));
      }
    }
    const EnvAction action = exec.pending_actions.front();
    exec.pending_actions.pop_front();
    if (!std::isfinite(action.dx) || !std::isfinite(action.dy)) {
      trace.error = "non-finite action at step " + std::to_string(t);
      break;
    }

    const double p = policy.Completion(c_head);
    state = StepState(task, state, action);
    const bool checker = CheckSubgoal(task, idx, state);

    StepRecord rec;
    rec.t = t;
    rec.subgoal_index = idx;
    rec.subgoal_text = sg.description;
    rec.p = p;
    rec.action = action;
    rec.gripper_xy = state.gripper;
    rec.grip_closed = state.grip_closed;
    rec.checker = checker;
    trace.records.push_back(rec);
    ++trace.durations[idx];
    ++exec.steps_in_subgoal;

    const bool advance = config.oracle_completion ? checker : p < config.tau;
    if (advance) {
      trace.advances.push_back(t);
      ++exec.active_subgoal_index;
      exec.steps_in_subgoal = 0;
      exec.pending_actions.clear();
      exec.finished = exec.active_subgoal_index == n;
    } else if (exec.steps_in_subgoal >= config.subgoal_timeout) {
      trace.stall = true;
      trace.stall_subgoal = idx;
      trace.stall_step = t;
      break;
    }
  }
  trace.steps = static_cast<int>(trace.records.size());
  trace.success =
      trace.error.empty() && exec.finished && CheckSuccess(task, state);
  return trace;
}

EvalReport Evaluate(const Checkpoint& ckpt, const TaskSpec& task,
                    int n_episodes, const RuntimeConfig& config,
                    uint64_t base_seed) {
  if (n_episodes < 1) throw InputError("episode count must be >= 1");
  EvalReport report;
  report.episodes = n_episodes;
  double steps = 0.0;
  for (int i = 0; i < n_episodes; ++i) {
    EpisodeTrace trace =
        RunEpisode(ckpt, task, config, base_seed + static_cast<uint64_t>(i));
    steps += trace.steps;
    if (trace.success) {
      ++report.successes;
    } else {
      ++report.failure_histogram[static_cast<int>(trace.advances.size())];
    }
    if (trace.stall) ++report.stalls;
    report.traces.push_back(std::move(trace));
  }
  report.success_rate =
      static_cast<double>(report.successes) / static_cast<double>(n_episodes);
  report.mean_steps = steps / n_episodes;
  return report;
}

std::vector<int> ThresholdAdvanceTimes(const Matrix& scores, double tau) {
  std::vector<int> out;
  int idx = 0;
  for (int t = 0; t < scores.rows() && idx < scores.cols(); ++t) {
    if (scores(t, idx) < tau) {
      out.push_back(t);
      ++idx;
    }
  }
  return out;
}

// ------------------------------------------------------------------ traces

std::string SerializeTrace(const EpisodeTrace& trace) {
  std::string out;
  for (const auto& r : trace.records) {
    const json line = {
        {"t", r.t},
        {"subgoal_index", r.subgoal_index},
        {"subgoal_text", r.subgoal_text},
        {"p", r.p},
        {"action",
         {r.action.dx, r.action.dy, std::string(GripCommandName(r.action.grip))}},
        {"gripper_xy", {r.gripper_xy.x(), r.gripper_xy.y()}},
        {"grip_closed", r.grip_closed},
        {"checker", r.checker}};
    out += line.dump();
    out += '\n';
  }
  json config = json::parse(trace.config_json);
  const json terminal = {{"terminal", true},
                         {"success", trace.success},
                         {"steps", trace.steps},
                         {"advances", trace.advances},
                         {"durations", trace.durations},
                         {"stall", trace.stall},
                         {"stall_subgoal", trace.stall_subgoal},
                         {"stall_step", trace.stall_step},
                         {"mode", trace.oracle ? "oracle" : "predicted"},
                         {"task", trace.task},
                         {"env_seed", trace.env_seed},
                         {"error", trace.error},
                         {"format_version", kFormatVersion},
                         {"config", config}};
  out += terminal.dump();
  out += '\n';
  return out;
}

void EmitTrace(const EpisodeTrace& trace, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  WriteFile(path, SerializeTrace(trace));
}

EpisodeTrace ParseTrace(std::string_view text) {
  EpisodeTrace trace;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool terminal_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (terminal_seen) {
      throw LoadError("trace line " + std::to_string(line_no) +
                      ": record after the terminal line");
    }
    try {
      const json j = json::parse(line);
      if (j.value("terminal", false)) {
        if (j.at("format_version").get<int>() != kFormatVersion) {
          throw LoadError("unsupported trace format_version");
        }
        trace.success = j.at("success").get<bool>();
        trace.steps = j.at("steps").get<int>();
        trace.advances = j.at("advances").get<std::vector<int>>();
        trace.durations = j.at("durations").get<std::vector<int>>();
        trace.stall = j.at("stall").get<bool>();
        trace.stall_subgoal = j.at("stall_subgoal").get<int>();
        trace.stall_step = j.at("stall_step").get<int>();
        trace.oracle = j.at("mode").get<std::string>() == "oracle";
        trace.task = j.at("task").get<std::string>();
        trace.env_seed = j.at("env_seed").get<uint64_t>();
        trace.error = j.at("error").get<std::string>();
        trace.config_json = j.at("config").dump();
        terminal_seen = true;
        continue;
      }
      StepRecord r;
      r.t = j.at("t").get<int>();
      r.subgoal_index = j.at("subgoal_index").get<int>();
      r.subgoal_text = j.at("subgoal_text").get<std::string>();
      r.p = j.at("p").get<double>();
      const auto& a = j.at("action");
      r.action.dx = a.at(0).get<double>();
      r.action.dy = a.at(1).get<double>();
      const auto grip = ParseGripCommand(a.at(2).get<std::string>());
      if (!grip) throw LoadError("unknown grip command");
      r.action.grip = *grip;
      r.gripper_xy = Vec2(j.at("gripper_xy").at(0).get<double>(),
                          j.at("gripper_xy").at(1).get<double>());
      r.grip_closed = j.at("grip_closed").get<bool>();
      r.checker = j.at("checker").get<bool>();
      trace.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw LoadError("trace line " + std::to_string(line_no) + ": " +
                      e.what());
    } catch (const LoadError& e) {
      throw LoadError("trace line " + std::to_string(line_no) + ": " +
                      e.what());
    }
  }
  if (!terminal_seen) throw LoadError("trace has no terminal line");
  return trace;
}

EpisodeTrace ReadTrace(const std::filesystem::path& path) {
  return ParseTrace(ReadFile(path));
}

std::vector<Violation> AuditTrace(const EpisodeTrace& trace, int num_subgoals,
                                  std::string_view where) {
  std::vector<Violation> out;
  auto fail = [&](int t, std::string msg) {
    std::string loc(where);
    if (t >= 0) loc += ":t=" + std::to_string(t);
    out.push_back({loc, std::move(msg)});
  };
  if (trace.steps != static_cast<int>(trace.records.size())) {
    fail(-1, "step count " + std::to_string(trace.steps) + " but " +
                 std::to_string(trace.records.size()) + " records");
  }
  size_t next_advance = 0;
  int expected = 0;
  for (size_t i = 0; i < trace.records.size(); ++i) {
    const StepRecord& r = trace.records[i];
    if (r.t != static_cast<int>(i)) fail(r.t, "step index out of order");
    if (r.subgoal_index < expected) {
      fail(r.t, "subgoal index decreased to " +
                    std::to_string(r.subgoal_index));
    } else if (r.subgoal_index > expected) {
      fail(r.t, "subgoal index jumped to " + std::to_string(r.subgoal_index) +
                    " without an advance");
    }
    if (r.subgoal_index < 0 || r.subgoal_index >= num_subgoals) {
      fail(r.t, "subgoal index out of range");
    }
    if (!(r.p >= 0.0 && r.p <= 1.0)) fail(r.t, "p outside [0, 1]");
    const bool advanced = next_advance < trace.advances.size() &&
                          trace.advances[next_advance] == r.t;
    if (trace.oracle && advanced != r.checker) {
      fail(r.t, advanced ? "oracle advance without checker firing"
                         : "checker fired without oracle advance");
    }
    if (advanced) {
      ++next_advance;
      ++expected;
    }
    expected = std::max(expected, r.subgoal_index);
  }
  if (next_advance != trace.advances.size()) {
    fail(-1, "advance events do not match step records");
  }
  if (static_cast<int>(trace.advances.size()) > num_subgoals) {
    fail(-1, "more advances than subgoals");
  }
  if (trace.success &&
      static_cast<int>(trace.advances.size()) != num_subgoals) {
    fail(-1, "successful trace without one advance per subgoal");
  }
  if (trace.stall) {
    if (trace.stall_subgoal != static_cast<int>(trace.advances.size())) {
      fail(-1, "stall subgoal does not match the frozen index");
    }
    for (int a : trace.advances) {
      if (a > trace.stall_step) fail(a, "advance after the stall step");
    }
  }
  return out;
}

}  // namespace sgpolicy
