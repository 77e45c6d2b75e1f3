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

// Scripted subgoal execution, completion labelling and dataset storage.
//
// Dataset directory layout:
//   manifest.json          format_version, task, subgoal strings, seeds,
//                          per-file frame counts and FNV-1a digests
//   episode_<seed>.jsonl   one frame per line:
//     {"proprio":[x,y,closed],"cloud":[[x,y,z],...],
//      "action":[dx,dy,"open"|"close"|"hold"],"subgoal_index":i,"label":y}
// Reals are written with 17 significant digits.

#ifndef SGPOLICY_DEMOGEN_H_
#define SGPOLICY_DEMOGEN_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sgpolicy/simenv.h"

namespace sgpolicy {

// label 0 marks the final frame of a subgoal segment, 1 ongoing execution
struct Frame {
  Observation observation;
  EnvAction action;
  int subgoal_index = 0;
  int label = 1;
};

struct Trajectory {
  std::vector<Frame> frames;
  std::string task_description;
  std::vector<std::string> subgoals;
  uint64_t seed = 0;
  bool success = false;
  std::string failure;  // empty on success

  std::vector<int> Labels() const;
  std::vector<int> SubgoalIndices() const;
};

struct PlannerConfig {
  double noise_std = 0.005;
  int stuck_steps = 20;
};

// Greedy waypoint action for the active subgoal with seeded exploration
// noise on motion commands. The result is already clipped to kMaxStep.
EnvAction PlanSubgoalAction(const TaskSpec& task, int index,
                            const WorldState& state, Rng& rng,
                            const PlannerConfig& config = {});

Trajectory CollectEpisode(const TaskSpec& task, uint64_t seed,
                          const PlannerConfig& config = {});

// [3, 2] -> [1, 1, 0, 1, 0]
std::vector<int> LabelsFromSegments(const std::vector<int>& segment_lengths);

struct Violation {
  std::string location;  // file and/or frame
  std::string message;
};

// Checks the 1..1 0 1..1 0 .. 1 0 pattern, one zero per subgoal, and that
// the subgoal index advances by exactly one right after each zero.
std::vector<Violation> AuditLabelSequence(const std::vector<int>& labels,
                                          const std::vector<int>& indices,
                                          int num_subgoals,
                                          std::string_view where);

struct EpisodeFile {
  std::string name;
  std::string digest;
  uint64_t seed = 0;
  int frames = 0;
};

struct DatasetManifest {
  int format_version = kFormatVersion;
  std::string task;
  std::string task_description;
  std::vector<std::string> subgoals;
  int episode_count = 0;
  int attempted = 0;
  uint64_t base_seed = 0;
  std::vector<EpisodeFile> files;
  PlannerConfig planner;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Trajectory> episodes;
};

// Keeps successful episodes from seeds base_seed, base_seed + 1, ... until
// n_success are stored. Aborts when 50 * n_success seeds do not suffice.
DatasetManifest CollectDataset(const TaskSpec& task, int n_success,
                               uint64_t base_seed,
                               const std::filesystem::path& out_dir,
                               const PlannerConfig& config = {});

std::string SerializeEpisode(const Trajectory& trajectory);

// throws LoadError on malformed lines
Trajectory ParseEpisode(std::string_view text, const DatasetManifest& manifest,
                        uint64_t seed);

// Throws LoadError when the manifest is unreadable or a digest differs.
Dataset LoadDataset(const std::filesystem::path& dir);

// Every violation found in a dataset directory; empty means the audit passed.
std::vector<Violation> AuditDataset(const std::filesystem::path& dir);

std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, std::string_view bytes);

}  // namespace sgpolicy

#endif  // SGPOLICY_DEMOGEN_H_
