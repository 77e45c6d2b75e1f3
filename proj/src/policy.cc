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

#include "sgpolicy/policy.h"

#include <algorithm>
#include <cmath>

namespace sgpolicy {

void PolicyConfig::Validate() const {
  if (proprio_dim <= 0 || history <= 0 || horizon <= 0 || action_dim <= 0 ||
      text_dim <= 0 || time_dim <= 0) {
    throw ConfigError("policy dimensions must be positive");
  }
  if (point_widths.empty() || denoiser_hidden.empty()) {
    throw ConfigError("encoder and denoiser need at least one layer");
  }
  if (diffusion_steps < 1) throw ConfigError("need at least one diffusion step");
}

ConditioningVector ConditioningVector::Assemble(Vector proprio_history,
                                                Vector pc_feature,
                                                Vector task_embed,
                                                Vector subgoal_embed) {
  ConditioningVector c;
  c.concat.resize(proprio_history.size() + pc_feature.size() +
                  task_embed.size() + subgoal_embed.size());
  c.concat << proprio_history, pc_feature, task_embed, subgoal_embed;
  c.proprio_history = std::move(proprio_history);
  c.pc_feature = std::move(pc_feature);
  c.task_embed = std::move(task_embed);
  c.subgoal_embed = std::move(subgoal_embed);
  return c;
}

double Sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double CompletionProbability(const CompletionHead& head, const Vector& c) {
  if (head.weight.size() != c.size()) {
    throw ConfigError("completion head width " +
                      std::to_string(head.weight.size()) +
                      " does not match conditioning width " +
                      std::to_string(c.size()));
  }
  return Sigmoid(head.weight.dot(c) + head.bias);
}

void FocalConfig::Validate() const {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("focal beta not in (0,1)");
  if (!(gamma >= 0.0)) throw ConfigError("focal gamma must be >= 0");
}

FocalResult FocalLoss(const FocalConfig& config, double p, int y) {
  if (y != 0 && y != 1) throw InputError("completion label must be 0 or 1");
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  const double b = config.beta;
  const double g = config.gamma;
  FocalResult r;
  if (y == 1) {
    const double log_p = std::log(p);
    const double w = std::pow(1.0 - p, g);
    r.loss = -b * w * log_p;
    r.grad_logit = b * w * (g * p * log_p - (1.0 - p));
  } else {
    const double log_q = std::log1p(-p);
    const double w = std::pow(p, g);
    r.loss = -(1.0 - b) * w * log_q;
    r.grad_logit = -(1.0 - b) * w * (g * (1.0 - p) * log_q - p);
  }
  return r;
}

FocalResult FocalLossFromLogit(const FocalConfig& config, double logit,
                               int y) {
  return FocalLoss(config, Sigmoid(logit), y);
}

LossReport TotalLoss(double l_action, double l_completion, double lambda) {
  if (!(lambda >= 0.0)) throw InputError("lambda must be non-negative");
  LossReport r;
  r.l_action = l_action;
  r.l_completion = l_completion;
  r.lambda = lambda;
  r.l_total = l_action + lambda * l_completion;
  return r;
}

double LambdaSchedule(int epoch, int total_epochs, double lambda_max) {
  if (total_epochs < 1) throw ConfigError("total_epochs must be >= 1");
  if (epoch < 0 || epoch > total_epochs) {
    throw InputError("epoch outside [0, total_epochs]");
  }
  const int ramp_end = (total_epochs + 1) / 2;
  if (epoch >= ramp_end) return lambda_max;
  return lambda_max * static_cast<double>(epoch) / ramp_end;
}

Vector FlattenChunk(const ActionChunk& chunk) {
  Vector v(chunk.size());
  for (int t = 0; t < chunk.rows(); ++t) {
    for (int a = 0; a < chunk.cols(); ++a) v[t * chunk.cols() + a] = chunk(t, a);
  }
  return v;
}

ActionChunk UnflattenChunk(const Vector& flat, int horizon, int action_dim) {
  if (flat.size() != horizon * action_dim) {
    throw ConfigError("flattened chunk has the wrong length");
  }
  ActionChunk m(horizon, action_dim);
  for (int t = 0; t < horizon; ++t) {
    for (int a = 0; a < action_dim; ++a) m(t, a) = flat[t * action_dim + a];
  }
  return m;
}

// ------------------------------------------------------------ SubgoalPolicy

SubgoalPolicy::SubgoalPolicy(PolicyConfig config) : config_(std::move(config)) {
  config_.Validate();
  schedule_ = BuildSchedule(config_.diffusion_steps, config_.beta_start,
                            config_.beta_end);
  Rng rng(config_.init_seed);
  encoder_ = PointCloudEncoder(config_.point_widths, "encoder", params_, rng);

  MlpSpec spec;
  spec.input_width = config_.ChunkWidth() + config_.time_dim;
  spec.layer_widths = config_.denoiser_hidden;
  spec.layer_widths.push_back(config_.ChunkWidth());
  spec.activations.assign(config_.denoiser_hidden.size(), Activation::kRelu);
  spec.activations.push_back(Activation::kIdentity);
  for (int l = 0; l < static_cast<int>(config_.denoiser_hidden.size()); ++l) {
    spec.film_layers.insert(l);
  }
  spec.film_width = config_.ConditioningWidth();
  denoiser_ = Mlp(std::move(spec), "denoiser", params_, rng);

  head_weight_ =
      params_.Add("head.w", Matrix::Zero(1, config_.ConditioningWidth()));
  head_bias_ = params_.Add("head.b", Matrix::Zero(1, 1));

  time_table_.resize(config_.time_dim, config_.diffusion_steps);
  for (int k = 1; k <= config_.diffusion_steps; ++k) {
    time_table_.col(k - 1) = TimestepEmbedding(k, config_.time_dim);
  }
}

void SubgoalPolicy::SetParams(ParamSet params) {
  if (params.size() != params_.size()) {
    throw LoadError("parameter count does not match the policy config");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const Param& a = params[i];
    const Param& b = params_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() ||
        a.value.cols() != b.value.cols()) {
      throw LoadError("parameter " + a.name + " does not match " + b.name);
    }
  }
  params_ = std::move(params);
}

std::pair<ConditioningVector, ConditioningVector>
SubgoalPolicy::BuildConditioning(const Matrix& proprio_history,
                                 const PointCloud& cloud, std::string_view task,
                                 std::string_view subgoal, bool ablate) const {
  if (proprio_history.rows() != config_.history ||
      proprio_history.cols() != config_.proprio_dim) {
    throw ConfigError("proprioceptive history must be " +
                      std::to_string(config_.history) + " x " +
                      std::to_string(config_.proprio_dim));
  }
  if (cloud.size() < 1) throw InputError("point cloud is empty");
  Vector proprio = FlattenChunk(proprio_history);
  Vector feature = EncodePointCloud(params_, encoder_, cloud);
  Vector task_embed = EmbedText(task, config_.text_dim).vector;
  Vector subgoal_embed = EmbedText(subgoal, config_.text_dim).vector;
  ConditioningVector head = ConditioningVector::Assemble(
      proprio, feature, task_embed, subgoal_embed);
  if (!ablate) return {head, head};
  ConditioningVector action = ConditioningVector::Assemble(
      std::move(proprio), std::move(feature), std::move(task_embed),
      Vector::Zero(config_.text_dim));
  return {std::move(action), std::move(head)};
}

CompletionHead SubgoalPolicy::Head() const {
  CompletionHead h;
  h.weight = params_[head_weight_].value.row(0).transpose();
  h.bias = params_[head_bias_].value(0, 0);
  return h;
}

double SubgoalPolicy::Completion(const ConditioningVector& c_head) const {
  return CompletionProbability(Head(), c_head.concat);
}

Matrix SubgoalPolicy::TrunkInput(const Matrix& noised,
                                 const std::vector<int>& ks) const {
  Matrix x(config_.ChunkWidth() + config_.time_dim, noised.cols());
  x.topRows(config_.ChunkWidth()) = noised;
  for (int j = 0; j < noised.cols(); ++j) {
    x.col(j).tail(config_.time_dim) = time_table_.col(ks[j] - 1);
  }
  return x;
}

ActionChunk SubgoalPolicy::PredictNoise(const ActionChunk& a_k, int k,
                                        const Vector& c_action) const {
  if (k < 1 || k > config_.diffusion_steps) {
    throw InputError("diffusion step out of range");
  }
  const Matrix x = TrunkInput(FlattenChunk(a_k), {k});
  const Matrix film = c_action;
  const Matrix eps = denoiser_.Forward(params_, x, &film, nullptr);
  return UnflattenChunk(eps.col(0), config_.horizon, config_.action_dim);
}

ActionChunk SubgoalPolicy::Sample(const Vector& c_action,
                                  uint64_t seed) const {
  Denoiser fn = [this](const ActionChunk& a_k, int k, const Vector& c) {
    return PredictNoise(a_k, k, c);
  };
  return SampleActions(schedule_, fn, c_action, seed, config_.horizon,
                       config_.action_dim);
}

LossReport SubgoalPolicy::Objective(const PolicyBatch& batch, double lambda,
                                    const FocalConfig& focal,
                                    bool accumulate_grads,
                                    ObjectiveProbe* probe) {
  const int n = batch.size();
  if (n == 0) throw InputError("empty batch");
  const int chunk = config_.ChunkWidth();
  const int pw = config_.ProprioWidth();
  const int fw = config_.PointFeatureWidth();
  const int tw = config_.text_dim;
  if (batch.proprio.rows() != pw || batch.actions.rows() != chunk ||
      batch.noise.rows() != chunk || batch.task_embed.rows() != tw ||
      batch.subgoal_embed.rows() != tw ||
      static_cast<int>(batch.timesteps.size()) != n ||
      static_cast<int>(batch.labels.size()) != n) {
    throw ConfigError("batch shapes do not match the policy config");
  }

  PointEncoderCache enc_cache;
  const Matrix feature = encoder_.Forward(
      params_, batch.clouds, accumulate_grads ? &enc_cache : nullptr);

  const int cw = config_.ConditioningWidth();
  Matrix c_head(cw, n);
  c_head << batch.proprio, feature, batch.task_embed, batch.subgoal_embed;
  Matrix c_action = c_head;
  if (config_.ablate_subgoal) c_action.bottomRows(tw).setZero();

  Matrix noised(chunk, n);
  for (int j = 0; j < n; ++j) {
    const double ab = schedule_.AlphaBarAt(batch.timesteps[j]);
    noised.col(j) = std::sqrt(ab) * batch.actions.col(j) +
                    std::sqrt(1.0 - ab) * batch.noise.col(j);
  }
  MlpCache trunk_cache;
  const Matrix eps_pred =
      denoiser_.Forward(params_, TrunkInput(noised, batch.timesteps), &c_action,
                        accumulate_grads ? &trunk_cache : nullptr);
  const MseResult mse = ActionLoss(batch.noise, eps_pred);

  const Matrix logits =
      (params_[head_weight_].value * c_head).array() +
      params_[head_bias_].value(0, 0);
  double l_completion = 0.0;
  Matrix d_logit(1, n);
  for (int j = 0; j < n; ++j) {
    const FocalResult fr = FocalLossFromLogit(focal, logits(0, j),
                                              batch.labels[j]);
    l_completion += fr.loss;
    d_logit(0, j) = lambda * fr.grad_logit / n;
  }
  l_completion /= n;
  const LossReport report = TotalLoss(mse.loss, l_completion, lambda);
  if (!std::isfinite(report.l_total)) {
    throw NumericError("non-finite training loss");
  }
  if (!accumulate_grads) return report;

  const MlpGrads trunk_grads =
      denoiser_.Backward(params_, trunk_cache, mse.grad);
  Matrix d_c_action = trunk_grads.film;
  if (config_.ablate_subgoal) d_c_action.bottomRows(tw).setZero();

  params_[head_weight_].grad.noalias() += d_logit * c_head.transpose();
  params_[head_bias_].grad(0, 0) += d_logit.sum();
  const Matrix d_c_head = params_[head_weight_].value.transpose() * d_logit;

  const Matrix d_feature =
      d_c_action.middleRows(pw, fw) + d_c_head.middleRows(pw, fw);
  encoder_.Backward(params_, enc_cache, d_feature);

  if (probe != nullptr) {
    probe->action_grad_subgoal = d_c_action.bottomRows(tw);
    probe->head_grad_subgoal = d_c_head.bottomRows(tw);
    probe->point_feature_grad = d_feature;
  }
  return report;
}

}  // namespace sgpolicy
