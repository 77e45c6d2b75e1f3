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

// Closed-loop execution of a trained policy over a subgoal sequence.
//
// Trace file (JSON lines), one record per environment step:
//   {"t":..,"subgoal_index":..,"subgoal_text":..,"p":..,
//    "action":[dx,dy,"open"|"close"|"hold"],"gripper_xy":[x,y],
//    "grip_closed":..,"checker":..}
// followed by one terminal record:
//   {"terminal":true,"success":..,"steps":..,"advances":[t,..],
//    "durations":[..],"stall":..,"stall_subgoal":..,"stall_step":..,
//    "mode":"predicted"|"oracle","task":..,"env_seed":..,"error":..,
//    "format_version":1,"config":{..}}
// "checker" is the ground-truth predicate of the active subgoal evaluated
// after the step's action.

#ifndef SGPOLICY_RUNTIME_H_
#define SGPOLICY_RUNTIME_H_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sgpolicy/demogen.h"
#include "sgpolicy/trainer.h"

namespace sgpolicy {

struct RuntimeConfig {
  double tau = 0.2;
  int execute_horizon = 4;  // H_e
  int subgoal_timeout = 100;
  bool oracle_completion = false;
  uint64_t rng_seed = 0;

  // horizon is the policy's H_a
  void Validate(int horizon) const;
  std::string Json() const;
};

struct ExecutorState {
  int active_subgoal_index = 0;
  std::deque<EnvAction> pending_actions;
  int steps_in_subgoal = 0;
  bool finished = false;
};

struct StepRecord {
  int t = 0;
  int subgoal_index = 0;
  std::string subgoal_text;
  double p = 1.0;
  EnvAction action;
  Vec2 gripper_xy = Vec2::Zero();
  bool grip_closed = false;
  bool checker = false;
};

struct EpisodeTrace {
  std::vector<StepRecord> records;
  bool success = false;
  int steps = 0;
  std::vector<int> advances;   // step t whose action completed the subgoal
  std::vector<int> durations;  // steps spent per subgoal, in order
  bool stall = false;
  int stall_subgoal = -1;
  int stall_step = -1;
  bool oracle = false;
  std::string task;
  uint64_t env_seed = 0;
  std::string error;  // set when the episode was aborted
  std::string config_json = "{}";
};

// Throws LoadError when the checkpoint was trained on a different task.
void CheckCompatible(const Checkpoint& ckpt, const TaskSpec& task);

EpisodeTrace RunEpisode(const Checkpoint& ckpt, const TaskSpec& task,
                        const RuntimeConfig& config, uint64_t env_seed);

struct EvalReport {
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_steps = 0.0;
  int stalls = 0;
  // active subgoal index at failure -> count; index n_subgoals means every
  // subgoal advanced but the final state is not a success
  std::map<int, int> failure_histogram;
  std::vector<EpisodeTrace> traces;
};

EvalReport Evaluate(const Checkpoint& ckpt, const TaskSpec& task,
                    int n_episodes, const RuntimeConfig& config,
                    uint64_t base_seed);

// Advance steps of the threshold rule on recorded scores, where
// scores(t, i) is the completion probability for subgoal i at step t.
std::vector<int> ThresholdAdvanceTimes(const Matrix& scores, double tau);

std::string SerializeTrace(const EpisodeTrace& trace);
void EmitTrace(const EpisodeTrace& trace, const std::filesystem::path& path);
EpisodeTrace ParseTrace(std::string_view text);
EpisodeTrace ReadTrace(const std::filesystem::path& path);

// Monotonic subgoal index, one increment per advance, advance/record
// consistency, oracle-mode agreement with the checker, no advance after a
// stall. Empty means the trace passed.
std::vector<Violation> AuditTrace(const EpisodeTrace& trace,
                                  int num_subgoals, std::string_view where);

}  // namespace sgpolicy

#endif  // SGPOLICY_RUNTIME_H_
