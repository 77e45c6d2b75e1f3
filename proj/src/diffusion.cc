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

#include "sgpolicy/diffusion.h"

#include <cmath>
#include <string>

namespace sgpolicy {

uint64_t NoiseSchedule::Digest() const {
  uint64_t h = kFnvOffset;
  for (const auto* v : {&alpha, &alpha_bar, &sigma}) {
    h = Fnv1a(std::string_view(reinterpret_cast<const char*>(v->data()),
                               sizeof(double) * v->size()),
              h);
  }
  return h;
}

NoiseSchedule BuildSchedule(int num_steps, double beta_start,
                            double beta_end) {
  if (num_steps < 1) throw ConfigError("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("schedule requires 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.num_steps = num_steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.beta.resize(num_steps);
  s.alpha.resize(num_steps);
  s.alpha_bar.resize(num_steps);
  s.sigma.resize(num_steps);
  for (int i = 0; i < num_steps; ++i) {
    const double t =
        num_steps == 1 ? 0.0 : static_cast<double>(i) / (num_steps - 1);
    s.beta[i] = beta_start + t * (beta_end - beta_start);
    s.alpha[i] = 1.0 - s.beta[i];
    s.alpha_bar[i] = i == 0 ? s.alpha[i] : s.alpha_bar[i - 1] * s.alpha[i];
  }
  s.sigma[0] = 0.0;
  for (int i = 1; i < num_steps; ++i) {
    s.sigma[i] = std::sqrt(s.beta[i] * (1.0 - s.alpha_bar[i - 1]) /
                           (1.0 - s.alpha_bar[i]));
  }
  return s;
}

namespace {

void CheckStep(const NoiseSchedule& schedule, int k) {
  if (k < 1 || k > schedule.num_steps) {
    throw InputError("diffusion step " + std::to_string(k) +
                     " outside 1.." + std::to_string(schedule.num_steps));
  }
}

}  // namespace

ActionChunk ForwardNoise(const NoiseSchedule& schedule, const ActionChunk& a0,
                         int k, const ActionChunk& noise) {
  CheckStep(schedule, k);
  if (noise.rows() != a0.rows() || noise.cols() != a0.cols()) {
    throw InputError("noise shape does not match the action chunk");
  }
  const double ab = schedule.AlphaBarAt(k);
  return std::sqrt(ab) * a0 + std::sqrt(1.0 - ab) * noise;
}

ActionChunk EstimateClean(const NoiseSchedule& schedule, const ActionChunk& ak,
                          int k, const ActionChunk& epsilon_pred) {
  CheckStep(schedule, k);
  const double ab = schedule.AlphaBarAt(k);
  return std::sqrt(1.0 / ab) * (ak - std::sqrt(1.0 - ab) * epsilon_pred);
}

MseResult ActionLoss(const Matrix& epsilon_true, const Matrix& epsilon_pred) {
  if (epsilon_true.rows() != epsilon_pred.rows() ||
      epsilon_true.cols() != epsilon_pred.cols()) {
    throw InputError("action loss operands differ in shape");
  }
  const double count = static_cast<double>(epsilon_true.size());
  MseResult r;
  const Matrix diff = epsilon_pred - epsilon_true;
  r.loss = diff.squaredNorm() / count;
  r.grad = (2.0 / count) * diff;
  return r;
}

ActionChunk ReverseStep(const NoiseSchedule& schedule,
                        const DenoisingStep& step) {
  CheckStep(schedule, step.k);
  if (step.epsilon_pred.rows() != step.a_k.rows() ||
      step.epsilon_pred.cols() != step.a_k.cols()) {
    throw InputError("noise prediction shape does not match a_k");
  }
  const double alpha = schedule.AlphaAt(step.k);
  const double ab = schedule.AlphaBarAt(step.k);
  if (!(ab < 1.0)) {
    throw ConfigError("alpha_bar equals 1 at step " + std::to_string(step.k));
  }
  const double coef = (1.0 - alpha) / std::sqrt(1.0 - ab);
  ActionChunk out = (step.a_k - coef * step.epsilon_pred) / std::sqrt(alpha);
  const double sigma = schedule.SigmaAt(step.k);
  if (step.k > 1 && sigma != 0.0) {
    if (step.z.rows() != step.a_k.rows() || step.z.cols() != step.a_k.cols()) {
      throw InputError("noise draw shape does not match a_k");
    }
    out += sigma * step.z;
  }
  return out;
}

ActionChunk SampleActions(const NoiseSchedule& schedule,
                          const Denoiser& denoiser, const Vector& conditioning,
                          uint64_t rng_seed, int horizon, int action_dim) {
  Rng rng(rng_seed);
  auto gaussian = [&]() {
    ActionChunk m(horizon, action_dim);
    for (int r = 0; r < horizon; ++r) {
      for (int c = 0; c < action_dim; ++c) m(r, c) = rng.Normal();
    }
    return m;
  };
  DenoisingStep step;
  step.a_k = gaussian();
  for (int k = schedule.num_steps; k >= 1; --k) {
    step.k = k;
    step.epsilon_pred = denoiser(step.a_k, k, conditioning);
    if (!step.epsilon_pred.allFinite()) {
      throw NumericError("non-finite noise prediction at diffusion step " +
                         std::to_string(k));
    }
    if (k > 1) {
      step.z = gaussian();
    } else {
      step.z = ActionChunk::Zero(horizon, action_dim);
    }
    step.a_k = ReverseStep(schedule, step);
  }
  return step.a_k;
}

Vector TimestepEmbedding(int k, int dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw ConfigError("timestep embedding width must be even and >= 2");
  }
  const int half = dim / 2;
  Vector v(dim);
  for (int i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    v[i] = std::sin(k * freq);
    v[half + i] = std::cos(k * freq);
  }
  return v;
}

}  // namespace sgpolicy
