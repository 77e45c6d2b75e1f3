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


#include <cmath>

#include "doctest.h"
#include "sgpolicy/policy.h"
#include "support/fixtures.h"

namespace sgpolicy {
namespace {

using testing::RandomBatch;
using testing::RandomCloud;
using testing::SmallPolicyConfig;

double NaiveFocal(double beta, double gamma, double p, int y) {
  return -beta * std::pow(1 - p, gamma) * y * std::log(p) -
         (1 - beta) * std::pow(p, gamma) * (1 - y) * std::log(1 - p);
}

TEST_CASE("focal loss reference values") {
  const FocalConfig f;
  CHECK(std::abs(FocalLoss(f, 0.5, 1).loss - 0.25 * 0.25 * std::log(2.0)) <
        1e-12);
  CHECK(std::abs(FocalLoss(f, 0.5, 1).loss - 0.043322) < 5e-7);
  CHECK(std::abs(FocalLoss(f, 0.9, 0).loss - 0.75 * 0.81 * std::log(10.0)) <
        1e-12);
  CHECK(std::abs(FocalLoss(f, 0.9, 0).loss - 1.39882) < 5e-6);
}

TEST_CASE("focal loss reduces to weighted cross-entropy at gamma 0") {
  FocalConfig f;
  f.gamma = 0.0;
  for (double p : {0.05, 0.3, 0.77}) {
    CHECK(std::abs(FocalLoss(f, p, 1).loss + 0.25 * std::log(p)) < 1e-12);
    CHECK(std::abs(FocalLoss(f, p, 0).loss + 0.75 * std::log(1 - p)) < 1e-12);
  }
}

TEST_CASE("focal loss matches the naive formula and its logit gradient") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    FocalConfig f;
    f.beta = rng.Uniform(0.05, 0.95);
    f.gamma = rng.Uniform(0.0, 4.0);
    const double z = rng.Uniform(-6.0, 6.0);
    const int y = static_cast<int>(rng.Below(2));
    const double p = 1.0 / (1.0 + std::exp(-z));
    const FocalResult r = FocalLossFromLogit(f, z, y);
    CHECK(std::abs(r.loss - NaiveFocal(f.beta, f.gamma, p, y)) < 1e-12);
    const double h = 1e-6;
    const double numeric = (FocalLossFromLogit(f, z + h, y).loss -
                            FocalLossFromLogit(f, z - h, y).loss) /
                           (2 * h);
    CHECK(testing::RelativeError(r.grad_logit, numeric) < 1e-6);
  }
}

TEST_CASE("focal loss validates labels and config") {
  CHECK_THROWS_AS(FocalLoss(FocalConfig{}, 0.5, 2), InputError);
  FocalConfig bad;
  bad.beta = 1.0;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  bad = FocalConfig{};
  bad.gamma = -1.0;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  CHECK(std::isfinite(FocalLoss(FocalConfig{}, 0.0, 1).loss));
  CHECK(std::isfinite(FocalLoss(FocalConfig{}, 1.0, 0).loss));
}

TEST_CASE("sigmoid head") {
  CHECK(Sigmoid(0.0) == 0.5);
  CHECK(Sigmoid(800.0) == 1.0);
  CHECK(Sigmoid(-800.0) >= 0.0);
  CHECK(std::isfinite(Sigmoid(-800.0)));
  for (double z : {-3.0, -0.2, 0.7, 5.0}) {
    CHECK(std::abs(Sigmoid(z) - 1.0 / (1.0 + std::exp(-z))) < 1e-15);
    CHECK(std::abs(Sigmoid(z) + Sigmoid(-z) - 1.0) < 1e-15);
  }
  CompletionHead head;
  head.weight = Vector::LinSpaced(4, -1.0, 1.0);
  head.bias = 0.3;
  Vector c(4);
  c << 0.5, -2.0, 1.0, 0.25;
  const double z = -1.0 * 0.5 + (-1.0 / 3) * -2.0 + (1.0 / 3) * 1.0 + 0.25 + 0.3;
  CHECK(std::abs(CompletionProbability(head, c) - 1.0 / (1.0 + std::exp(-z))) <
        1e-12);
  CHECK_THROWS_AS(CompletionProbability(head, Vector::Zero(3)), ConfigError);
}

TEST_CASE("total loss is linear in lambda") {
  const LossReport a = TotalLoss(0.8, 0.3, 0.0);
  CHECK(a.l_total == 0.8);
  for (double lambda : {0.01, 0.1, 2.5}) {
    const LossReport r = TotalLoss(0.8, 0.3, lambda);
    CHECK(std::abs(r.l_total - (0.8 + lambda * 0.3)) < 1e-12);
  }
  const double l1 = TotalLoss(0.8, 0.3, 0.1).l_total;
  const double l2 = TotalLoss(0.8, 0.3, 0.2).l_total;
  const double l3 = TotalLoss(0.8, 0.3, 0.3).l_total;
  CHECK(std::abs((l3 - l2) - (l2 - l1)) < 1e-12);
  CHECK_THROWS_AS(TotalLoss(1.0, 1.0, -0.1), InputError);
}

TEST_CASE("lambda schedule ramps from 0 to lambda_max then stays flat") {
  for (int total : {1, 2, 9, 10, 500}) {
    CHECK(LambdaSchedule(0, total) == 0.0);
    const int half = (total + 1) / 2;
    CHECK(LambdaSchedule(half, total) == 0.1);
    if (total > 1) CHECK(LambdaSchedule(total - 1, total) == 0.1);
    double prev = -1.0;
    for (int e = 0; e < total; ++e) {
      const double l = LambdaSchedule(e, total);
      CHECK(l >= prev);
      CHECK(l <= 0.1);
      prev = l;
    }
  }
  CHECK(std::abs(LambdaSchedule(125, 500) - 0.05) < 1e-15);
  CHECK_THROWS_AS(LambdaSchedule(5, 0), ConfigError);
  CHECK_THROWS_AS(LambdaSchedule(-1, 10), InputError);
}

TEST_CASE("conditioning vector layout") {
  SubgoalPolicy policy(SmallPolicyConfig());
  const PolicyConfig& c = policy.config();
  Rng rng(2);
  Matrix hist = testing::RandomMatrix(c.history, c.proprio_dim, rng);
  const PointCloud pc = RandomCloud(10, rng);
  const auto [act, head] =
      policy.BuildConditioning(hist, pc, "task text", "subgoal text", false);
  CHECK(head.concat.size() == c.ConditioningWidth());
  CHECK((head.concat.head(c.ProprioWidth()) - FlattenChunk(hist)).norm() == 0.0);
  CHECK(head.concat(1) == hist(0, 1));
  CHECK(head.concat(c.proprio_dim) == hist(1, 0));
  CHECK((head.concat.segment(c.ProprioWidth(), c.PointFeatureWidth()) -
         EncodePointCloud(policy.params(), policy.encoder(), pc))
            .norm() == 0.0);
  CHECK((head.concat.tail(c.text_dim) - EmbedText("subgoal text", c.text_dim).vector)
            .norm() == 0.0);
  CHECK((act.concat - head.concat).norm() == 0.0);

  const auto [act2, head2] =
      policy.BuildConditioning(hist, pc, "task text", "subgoal text", true);
  CHECK(act2.concat.tail(c.text_dim).norm() == 0.0);
  CHECK((head2.concat - head.concat).norm() == 0.0);
  CHECK_THROWS_AS(policy.BuildConditioning(Matrix::Zero(1, 3), pc, "a", "b", false),
                  ConfigError);
  CHECK_THROWS_AS(policy.BuildConditioning(hist, pc, "a", "", false), InputError);
}

TEST_CASE("chunks flatten row-major and round-trip") {
  ActionChunk a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  const Vector f = FlattenChunk(a);
  CHECK(f(3) == 4.0);
  CHECK((UnflattenChunk(f, 2, 3) - a).norm() == 0.0);
  CHECK_THROWS_AS(UnflattenChunk(f, 4, 3), ConfigError);
}

TEST_CASE("objective equals the sum of its closed-form parts") {
  PolicyConfig c = SmallPolicyConfig();
  SubgoalPolicy policy(c);
  Rng rng(3);
  testing::Perturb(policy.params(), rng);
  std::vector<PointCloud> storage;
  const PolicyBatch batch = RandomBatch(c, 4, rng, storage);
  const LossReport r = policy.Objective(batch, 0.3, FocalConfig{}, false);

  double mse = 0.0, focal = 0.0;
  for (int j = 0; j < 4; ++j) {
    const ActionChunk a0 = UnflattenChunk(batch.actions.col(j), c.horizon, c.action_dim);
    const ActionChunk eps = UnflattenChunk(batch.noise.col(j), c.horizon, c.action_dim);
    const ActionChunk ak = ForwardNoise(policy.schedule(), a0, batch.timesteps[j], eps);
    Matrix hist(c.history, c.proprio_dim);
    for (int i = 0; i < c.history; ++i) {
      for (int d = 0; d < c.proprio_dim; ++d) {
        hist(i, d) = batch.proprio(i * c.proprio_dim + d, j);
      }
    }
    ConditioningVector cv = ConditioningVector::Assemble(
        FlattenChunk(hist), EncodePointCloud(policy.params(), policy.encoder(), *batch.clouds[j]),
        batch.task_embed.col(j), batch.subgoal_embed.col(j));
    const ActionChunk pred = policy.PredictNoise(ak, batch.timesteps[j], cv.concat);
    mse += (pred - eps).squaredNorm();
    const double p = policy.Completion(cv);
    focal += NaiveFocal(0.25, 2.0, p, batch.labels[j]);
  }
  mse /= 4.0 * c.ChunkWidth();
  focal /= 4.0;
  CHECK(std::abs(r.l_action - mse) < 1e-12);
  CHECK(std::abs(r.l_completion - focal) < 1e-12);
  CHECK(std::abs(r.l_total - (mse + 0.3 * focal)) < 1e-12);
}

TEST_CASE("composed gradients match central differences") {
  const auto probes = testing::GradientCheck(5, 10);
  CHECK(probes.size() == 40);
  for (const auto& g : probes) {
    INFO(g.name, "(", g.row, ",", g.col, ") analytic ", g.analytic,
         " numeric ", g.numeric);
    CHECK(g.rel_error <= 1e-4);
  }
}

TEST_CASE("ablation removes the subgoal from the action branch only") {
  PolicyConfig c = SmallPolicyConfig();
  c.ablate_subgoal = true;
  SubgoalPolicy policy(c);
  Rng rng(4);
  testing::Perturb(policy.params(), rng);
  std::vector<PointCloud> storage;
  PolicyBatch batch = RandomBatch(c, 4, rng, storage);
  ObjectiveProbe probe;
  policy.params().ZeroGrad();
  const LossReport base = policy.Objective(batch, 0.5, FocalConfig{}, true, &probe);
  CHECK(probe.action_grad_subgoal.norm() == 0.0);
  CHECK(probe.head_grad_subgoal.norm() > 0.0);

  // the action loss does not depend on the subgoal embedding at all
  batch.subgoal_embed.setRandom();
  const LossReport moved = policy.Objective(batch, 0.5, FocalConfig{}, false);
  CHECK(moved.l_action == base.l_action);
  CHECK(moved.l_completion != base.l_completion);

  const auto probes = testing::GradientCheck(6, 8, 1e-5, true);
  for (const auto& g : probes) CHECK(g.rel_error <= 1e-4);
}

TEST_CASE("full model routes action gradients into the subgoal embedding") {
  PolicyConfig c = SmallPolicyConfig();
  SubgoalPolicy policy(c);
  Rng rng(7);
  testing::Perturb(policy.params(), rng);
  std::vector<PointCloud> storage;
  const PolicyBatch batch = RandomBatch(c, 3, rng, storage);
  ObjectiveProbe probe;
  policy.Objective(batch, 0.1, FocalConfig{}, true, &probe);
  CHECK(probe.action_grad_subgoal.norm() > 0.0);
  CHECK(probe.point_feature_grad.rows() == c.PointFeatureWidth());
}

TEST_CASE("fresh policy predicts p = 0.5 and samples deterministically") {
  SubgoalPolicy policy(SmallPolicyConfig());
  const Vector cv = Vector::Constant(policy.config().ConditioningWidth(), 0.3);
  ConditioningVector c;
  c.concat = cv;
  CHECK(policy.Completion(c) == 0.5);
  const ActionChunk a = policy.Sample(cv, 9);
  CHECK(a.rows() == policy.config().horizon);
  CHECK((a - policy.Sample(cv, 9)).norm() == 0.0);
  CHECK(SubgoalPolicy(SmallPolicyConfig(3)).params().Digest() ==
        SubgoalPolicy(SmallPolicyConfig(3)).params().Digest());
  CHECK(SubgoalPolicy(SmallPolicyConfig(3)).params().Digest() !=
        SubgoalPolicy(SmallPolicyConfig(4)).params().Digest());
}

TEST_CASE("set params rejects mismatched shapes") {
  SubgoalPolicy a(SmallPolicyConfig());
  PolicyConfig other = SmallPolicyConfig();
  other.denoiser_hidden = {24, 20};
  SubgoalPolicy b(other);
  CHECK_THROWS_AS(a.SetParams(b.params()), LoadError);
  CHECK_NOTHROW(a.SetParams(SubgoalPolicy(SmallPolicyConfig(9)).params()));
}

}  // namespace
}  // namespace sgpolicy
