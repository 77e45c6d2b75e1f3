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

// DDPM machinery: linear-beta noise schedule, forward noising, the
// epsilon-prediction loss and the ancestral reverse sampler.

#ifndef SGPOLICY_DIFFUSION_H_
#define SGPOLICY_DIFFUSION_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "sgpolicy/netcore.h"

namespace sgpolicy {

// H_a x action_dim
using ActionChunk = Matrix;

// Timestep-indexed quantities are stored 0-based: alpha[k - 1] is alpha_k.
struct NoiseSchedule {
  int num_steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;

  double AlphaAt(int k) const { return alpha[k - 1]; }
  double AlphaBarAt(int k) const { return alpha_bar[k - 1]; }
  double SigmaAt(int k) const { return sigma[k - 1]; }

  // digest over the bit patterns of alpha, alpha_bar and sigma
  uint64_t Digest() const;
};

// beta linear in k from beta_start to beta_end; sigma is the posterior
// standard deviation, with sigma_1 = 0.
NoiseSchedule BuildSchedule(int num_steps, double beta_start, double beta_end);

// sqrt(alpha_bar_k) a0 + sqrt(1 - alpha_bar_k) noise
ActionChunk ForwardNoise(const NoiseSchedule& schedule, const ActionChunk& a0,
                         int k, const ActionChunk& noise);

// a0 estimate implied by a noised chunk and a noise prediction
ActionChunk EstimateClean(const NoiseSchedule& schedule, const ActionChunk& ak,
                          int k, const ActionChunk& epsilon_pred);

struct MseResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d prediction
};

// mean over all entries of (pred - truth)^2
MseResult ActionLoss(const Matrix& epsilon_true, const Matrix& epsilon_pred);

struct DenoisingStep {
  int k = 0;
  ActionChunk a_k;
  ActionChunk z;  // ignored at k = 1
  ActionChunk epsilon_pred;
};

// a_{k-1} = (a_k - (1 - alpha_k) / sqrt(1 - alpha_bar_k) eps) / sqrt(alpha_k)
//           + sigma_k z
ActionChunk ReverseStep(const NoiseSchedule& schedule,
                        const DenoisingStep& step);

// epsilon prediction for (a_k, k, c)
using Denoiser = std::function<ActionChunk(const ActionChunk& a_k, int k,
                                           const Vector& conditioning)>;

// Draws a_K ~ N(0, I) and applies K reverse steps. Pure in its arguments.
ActionChunk SampleActions(const NoiseSchedule& schedule,
                          const Denoiser& denoiser, const Vector& conditioning,
                          uint64_t rng_seed, int horizon, int action_dim);

// sinusoidal features [sin(k w_i), cos(k w_i)] with geometric frequencies
Vector TimestepEmbedding(int k, int dim);

}  // namespace sgpolicy

#endif  // SGPOLICY_DIFFUSION_H_
