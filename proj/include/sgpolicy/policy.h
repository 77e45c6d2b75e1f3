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

// The subgoal-conditioned diffusion policy: conditioning vector assembly,
// FiLM-conditioned noise predictor, the linear completion head and the joint
// training objective.

#ifndef SGPOLICY_POLICY_H_
#define SGPOLICY_POLICY_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sgpolicy/diffusion.h"
#include "sgpolicy/netcore.h"

namespace sgpolicy {

struct PolicyConfig {
  int proprio_dim = 3;
  int history = 2;      // H_o
  int horizon = 8;      // H_a
  int action_dim = 3;   // dx, dy (in units of kMaxStep), grip in [-1, 1]
  int text_dim = 32;
  int time_dim = 32;
  std::vector<int> point_widths = {64, 128};
  std::vector<int> denoiser_hidden = {256, 256};
  int diffusion_steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  // zero the subgoal embedding in the action branch (the head keeps it)
  bool ablate_subgoal = false;
  uint64_t init_seed = 0;

  int PointFeatureWidth() const { return point_widths.back(); }
  int ProprioWidth() const { return history * proprio_dim; }
  int ConditioningWidth() const {
    return ProprioWidth() + PointFeatureWidth() + 2 * text_dim;
  }
  int ChunkWidth() const { return horizon * action_dim; }
  void Validate() const;
};

// c = [proprio history | point feature | task embedding | subgoal embedding]
struct ConditioningVector {
  Vector proprio_history;
  Vector pc_feature;
  Vector task_embed;
  Vector subgoal_embed;
  Vector concat;

  static ConditioningVector Assemble(Vector proprio_history, Vector pc_feature,
                                     Vector task_embed, Vector subgoal_embed);
};

struct CompletionHead {
  Vector weight;
  double bias = 0.0;
};

// overflow-safe logistic function
double Sigmoid(double z);

// p = sigmoid(W . c + b): probability that the subgoal is still ongoing
double CompletionProbability(const CompletionHead& head, const Vector& c);

struct FocalConfig {
  double beta = 0.25;
  double gamma = 2.0;

  void Validate() const;
};

struct FocalResult {
  double loss = 0.0;
  double grad_logit = 0.0;  // d loss / d logit, through the sigmoid
};

// L = -beta (1-p)^gamma y log p - (1-beta) p^gamma (1-y) log(1-p), with p
// clamped to [1e-12, 1 - 1e-12].
FocalResult FocalLoss(const FocalConfig& config, double p, int y);
FocalResult FocalLossFromLogit(const FocalConfig& config, double logit, int y);

struct LossReport {
  double l_action = 0.0;
  double l_completion = 0.0;
  double lambda = 0.0;
  double l_total = 0.0;
};

LossReport TotalLoss(double l_action, double l_completion, double lambda);

// Linear ramp from 0 at epoch 0 to lambda_max at ceil(total/2), then flat.
double LambdaSchedule(int epoch, int total_epochs, double lambda_max = 0.1);

// One training minibatch, columns are samples. Chunks are flattened
// row-major (action t occupies entries [t * action_dim, (t+1) * action_dim)).
struct PolicyBatch {
  std::vector<const PointCloud*> clouds;
  Matrix proprio;        // history * proprio_dim x B
  Matrix task_embed;     // text_dim x B
  Matrix subgoal_embed;  // text_dim x B
  Matrix actions;        // chunk width x B, clean a0
  Matrix noise;          // chunk width x B
  std::vector<int> timesteps;
  std::vector<int> labels;

  int size() const { return static_cast<int>(clouds.size()); }
};

// Extra gradients exposed for inspection by tests.
struct ObjectiveProbe {
  Matrix action_grad_subgoal;  // d L_action / d subgoal embedding
  Matrix head_grad_subgoal;    // d (lambda L_completion) / d subgoal embedding
  Matrix point_feature_grad;   // total gradient reaching the encoder output
};

class SubgoalPolicy {
 public:
  SubgoalPolicy() = default;
  explicit SubgoalPolicy(PolicyConfig config);

  const PolicyConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const PointCloudEncoder& encoder() const { return encoder_; }

  // Returns (c_action, c_head). proprio_history is history x proprio_dim,
  // oldest row first.
  std::pair<ConditioningVector, ConditioningVector> BuildConditioning(
      const Matrix& proprio_history, const PointCloud& cloud,
      std::string_view task, std::string_view subgoal, bool ablate) const;

  CompletionHead Head() const;
  double Completion(const ConditioningVector& c_head) const;

  ActionChunk PredictNoise(const ActionChunk& a_k, int k,
                           const Vector& c_action) const;

  // Reverse-diffusion sample of an H_a x action_dim chunk.
  ActionChunk Sample(const Vector& c_action, uint64_t seed) const;

  // L_total on a batch. With accumulate_grads, parameter gradients are
  // added to params().grad.
  LossReport Objective(const PolicyBatch& batch, double lambda,
                       const FocalConfig& focal, bool accumulate_grads,
                       ObjectiveProbe* probe = nullptr);

  // parameter set and config must agree; used by checkpoint loading
  void SetParams(ParamSet params);

 private:
  Matrix TrunkInput(const Matrix& noised, const std::vector<int>& ks) const;

  PolicyConfig config_;
  ParamSet params_;
  NoiseSchedule schedule_;
  PointCloudEncoder encoder_;
  Mlp denoiser_;
  size_t head_weight_ = 0;
  size_t head_bias_ = 0;
  Matrix time_table_;  // time_dim x K, column k-1 embeds step k
};

Vector FlattenChunk(const ActionChunk& chunk);
ActionChunk UnflattenChunk(const Vector& flat, int horizon, int action_dim);

}  // namespace sgpolicy

#endif  // SGPOLICY_POLICY_H_
