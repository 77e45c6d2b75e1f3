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

// Shared helpers for the unit and acceptance suites.

#ifndef SGPOLICY_TESTS_SUPPORT_FIXTURES_H_
#define SGPOLICY_TESTS_SUPPORT_FIXTURES_H_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "sgpolicy/policy.h"

namespace sgpolicy::testing {

// A scaled-down but structurally complete policy.
inline PolicyConfig SmallPolicyConfig(uint64_t seed = 3) {
  PolicyConfig c;
  c.history = 2;
  c.horizon = 4;
  c.text_dim = 8;
  c.time_dim = 8;
  c.point_widths = {12, 16};
  c.denoiser_hidden = {24, 24};
  c.diffusion_steps = 10;
  c.init_seed = seed;
  return c;
}

inline PointCloud RandomCloud(int n, Rng& rng) {
  PointCloud pc;
  pc.points.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    pc.points(i, 0) = rng.Uniform(-0.5, 0.5);
    pc.points(i, 1) = rng.Uniform(-0.5, 0.5);
    pc.points(i, 2) = 0.0;
  }
  return pc;
}

inline Matrix RandomMatrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = scale * rng.Normal();
  }
  return m;
}

// Batch whose clouds live in `storage`; storage must outlive the batch.
inline PolicyBatch RandomBatch(const PolicyConfig& c, int n, Rng& rng,
                               std::vector<PointCloud>& storage) {
  storage.clear();
  for (int j = 0; j < n; ++j) storage.push_back(RandomCloud(9, rng));
  PolicyBatch b;
  for (const auto& pc : storage) b.clouds.push_back(&pc);
  b.proprio = RandomMatrix(c.ProprioWidth(), n, rng, 0.5);
  b.task_embed = RandomMatrix(c.text_dim, n, rng, 0.3);
  b.subgoal_embed = RandomMatrix(c.text_dim, n, rng, 0.3);
  b.actions = RandomMatrix(c.ChunkWidth(), n, rng, 0.5);
  b.noise = RandomMatrix(c.ChunkWidth(), n, rng);
  for (int j = 0; j < n; ++j) {
    b.timesteps.push_back(1 + static_cast<int>(rng.Below(c.diffusion_steps)));
    b.labels.push_back(j % 3 == 0 ? 0 : 1);
  }
  return b;
}

// Moves every parameter off its structured initial value (zero FiLM and
// head weights) so gradient checks probe a generic point.
inline void Perturb(ParamSet& params, Rng& rng, double scale = 0.1) {
  for (auto& p : params.params()) {
    p.value += RandomMatrix(static_cast<int>(p.value.rows()),
                            static_cast<int>(p.value.cols()), rng, scale);
  }
}

struct GradProbe {
  std::string name;
  int row = 0;
  int col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

inline double RelativeError(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline std::string ParamGroup(const std::string& name) {
  if (name.rfind("encoder.", 0) == 0) return "encoder";
  if (name.rfind("head.", 0) == 0) return "head";
  if (name.find(".film_") != std::string::npos) return "film";
  return "denoiser";
}

// Central differences of L_total against the analytic gradient for
// `per_group` random entries of each parameter group.
inline std::vector<GradProbe> GradientCheck(uint64_t seed, int per_group,
                                            double step = 1e-5,
                                            bool ablate = false) {
  PolicyConfig config = SmallPolicyConfig(seed);
  config.ablate_subgoal = ablate;
  SubgoalPolicy policy(config);
  Rng rng(DeriveSeed(seed, 17));
  Perturb(policy.params(), rng);
  std::vector<PointCloud> storage;
  const PolicyBatch batch = RandomBatch(config, 5, rng, storage);
  const FocalConfig focal;
  const double lambda = 0.7;

  policy.params().ZeroGrad();
  policy.Objective(batch, lambda, focal, true);
  ParamSet analytic = policy.params();

  std::vector<std::string> groups = {"encoder", "film", "denoiser", "head"};
  std::vector<GradProbe> out;
  for (const auto& group : groups) {
    std::vector<std::pair<size_t, int>> pool;  // (param, flat index)
    for (size_t i = 0; i < analytic.size(); ++i) {
      if (ParamGroup(analytic[i].name) != group) continue;
      for (int e = 0; e < analytic[i].value.size(); ++e) pool.push_back({i, e});
    }
    for (int n = 0; n < per_group && !pool.empty(); ++n) {
      const size_t pick = rng.Below(pool.size());
      const auto [pi, e] = pool[pick];
      pool.erase(pool.begin() + static_cast<long>(pick));
      Param& p = policy.params()[pi];
      const int r = e % static_cast<int>(p.value.rows());
      const int c = e / static_cast<int>(p.value.rows());
      const double orig = p.value(r, c);
      p.value(r, c) = orig + step;
      const double up = policy.Objective(batch, lambda, focal, false).l_total;
      p.value(r, c) = orig - step;
      const double down = policy.Objective(batch, lambda, focal, false).l_total;
      p.value(r, c) = orig;
      GradProbe g;
      g.name = p.name;
      g.row = r;
      g.col = c;
      g.analytic = analytic[pi].grad(r, c);
      g.numeric = (up - down) / (2.0 * step);
      g.rel_error = RelativeError(g.analytic, g.numeric);
      out.push_back(g);
    }
  }
  return out;
}

// Mann-Whitney estimate of P(score of a positive > score of a negative),
// ties counted as one half. Positives are frames with label 0, scored by
// 1 - p.
inline double PairwiseAuc(const std::vector<double>& p,
                          const std::vector<int>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (labels[i] != 0) continue;
    for (size_t j = 0; j < p.size(); ++j) {
      if (labels[j] != 1) continue;
      pairs += 1.0;
      if (p[i] < p[j]) wins += 1.0;
      else if (p[i] == p[j]) wins += 0.5;
    }
  }
  return pairs > 0.0 ? wins / pairs : 0.5;
}

inline std::filesystem::path TempDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sgpolicy_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sgpolicy::testing

#endif  // SGPOLICY_TESTS_SUPPORT_FIXTURES_H_
