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

// Joint optimisation of the denoiser, encoder and completion head.
//
// Checkpoint container (little-endian):
//   char[8]  magic "SGPCKPT\0"
//   u32      format_version
//   u64      length of the JSON header, then the header bytes
//            (policy/train config, schedule digest, epoch, metric history)
//   u64      tensor count, then per tensor:
//            u32 name length, name, u64 rows, u64 cols, rows*cols f64
//            in row-major order
//   u64      FNV-1a digest of every preceding byte
// Optimizer moments are stored as tensors named "opt.m/<param>" and
// "opt.v/<param>".

#ifndef SGPOLICY_TRAINER_H_
#define SGPOLICY_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sgpolicy/demogen.h"
#include "sgpolicy/policy.h"

namespace sgpolicy {

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  int epochs = 500;
  int batch_size = 64;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  uint64_t seed = 0;
  bool ablate_subgoal = false;
  double lambda_max = 0.1;
  FocalConfig focal;

  void Validate() const;
};

// Encodes an environment action as [dx / kMaxStep, dy / kMaxStep, grip]
// with grip open = -1, hold = 0, close = +1.
Eigen::RowVector3d EncodeAction(const EnvAction& action);
// inverse of EncodeAction; grip uses thresholds at +-0.5
EnvAction DecodeAction(const Eigen::Ref<const Eigen::RowVectorXd>& row);

struct TrainSample {
  Matrix proprio_window;  // history x proprio_dim, oldest first
  PointCloud cloud;
  std::string task;
  std::string subgoal;
  Vector task_embed;
  Vector subgoal_embed;
  ActionChunk a0;  // horizon x action_dim
  bool padded = false;
  int label = 1;
};

// One sample per frame: the proprio window is left-padded with the first
// frame, the chunk right-padded with the final action.
std::vector<TrainSample> MakeSamples(const std::vector<Trajectory>& episodes,
                                     int history, int horizon, int text_dim);

struct OptimizerState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  int64_t step = 0;
};

// one optimizer step from the accumulated gradients
void ApplyUpdate(ParamSet& params, OptimizerState& state,
                 const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  LossReport loss;
};

// Mean losses over the epoch's batches. Shuffling, timesteps and noise come
// from a generator keyed by (config.seed, epoch).
LossReport TrainEpoch(SubgoalPolicy& policy, OptimizerState& optimizer,
                      const std::vector<TrainSample>& samples,
                      const TrainConfig& config, int epoch);

struct Checkpoint {
  SubgoalPolicy policy;
  TrainConfig train;
  OptimizerState optimizer;
  int epoch = 0;  // completed epochs
  std::vector<EpochRecord> history;
  std::string task;
  std::string task_description;
  std::vector<std::string> subgoals;
  std::string dataset_digest;
};

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
std::string SerializeCheckpoint(const Checkpoint& ckpt);
// throws LoadError on corruption, version or schedule-digest mismatch
Checkpoint LoadCheckpoint(const std::filesystem::path& path);
Checkpoint DeserializeCheckpoint(const std::string& bytes);

struct TrainHooks {
  // called after each completed epoch
  std::function<void(const EpochRecord&)> on_epoch;
  int eval_every = 0;
  std::function<void(int epoch, const Checkpoint&)> on_eval;
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_path;
};

Checkpoint InitCheckpoint(const Dataset& dataset, const TrainConfig& config,
                          PolicyConfig policy_config);

// Runs the remaining epochs of `ckpt` (0 .. config.epochs).
void ContinueTraining(Checkpoint& ckpt, const std::vector<TrainSample>& samples,
                      const TrainHooks& hooks = {});

Checkpoint Train(const Dataset& dataset, const TrainConfig& config,
                 const PolicyConfig& policy_config = {},
                 const TrainHooks& hooks = {});

Checkpoint Train(const std::filesystem::path& dataset_dir,
                 const TrainConfig& config,
                 const PolicyConfig& policy_config = {},
                 const TrainHooks& hooks = {});

// digest of the dataset manifest's file digests, in order
std::string DatasetDigest(const DatasetManifest& manifest);

// {"epoch":..,"l_action":..,"l_completion":..,"lambda":..,"l_total":..}
std::string MetricsLine(const EpochRecord& record);

std::string ConfigJson(const PolicyConfig& policy, const TrainConfig& train);

}  // namespace sgpolicy

#endif  // SGPOLICY_TRAINER_H_
