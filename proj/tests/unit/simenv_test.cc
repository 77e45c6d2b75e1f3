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
#include "sgpolicy/demogen.h"
#include "sgpolicy/simenv.h"

namespace sgpolicy {
namespace {

const TaskName kTasks[] = {TaskName::kPickPlace, TaskName::kSlidePush,
                           TaskName::kDrawerOpenPlace};

EnvAction Act(double dx, double dy, GripCommand g = GripCommand::kHold) {
  EnvAction a;
  a.dx = dx;
  a.dy = dy;
  a.grip = g;
  return a;
}

// Walks the gripper to `target` with maximal steps.
WorldState WalkTo(const TaskSpec& task, WorldState s, const Vec2& target) {
  for (int i = 0; i < 200 && (s.gripper - target).norm() > 1e-12; ++i) {
    Vec2 d = target - s.gripper;
    const double m = d.cwiseAbs().maxCoeff();
    if (m > kMaxStep) d *= kMaxStep / m;
    s = StepState(task, s, Act(d.x(), d.y()));
  }
  return s;
}

TEST_CASE("task library") {
  const auto lib = TaskLibrary();
  REQUIRE(lib.size() == 3);
  CHECK(lib[0].num_subgoals() == 4);
  CHECK(lib[1].num_subgoals() == 3);
  CHECK(lib[2].num_subgoals() == 7);
  CHECK(lib[0].subgoals[0].description == "grasp the rubbish");
  for (TaskName t : kTasks) {
    CHECK(ParseTaskName(TaskNameString(t)) == t);
  }
  CHECK_FALSE(ParseTaskName("fly").has_value());
  for (GripCommand g : {GripCommand::kOpen, GripCommand::kClose, GripCommand::kHold}) {
    CHECK(ParseGripCommand(GripCommandName(g)) == g);
  }
}

TEST_CASE("1000 reset seeds give valid, unsolved scenes") {
  for (TaskName name : kTasks) {
    const TaskSpec task = MakeTask(name);
    for (uint64_t seed = 0; seed < 1000; ++seed) {
      const WorldState s = ResetState(task, seed);
      std::string why;
      CHECK_MESSAGE(StateIsValid(s, &why), why);
      CHECK_FALSE(CheckSuccess(task, s));
      if (name != TaskName::kSlidePush) CHECK_FALSE(CheckSubgoal(task, 0, s));
      CHECK(s.step_count == 0);
    }
  }
}

TEST_CASE("reset is deterministic in the seed") {
  for (TaskName name : kTasks) {
    const TaskSpec task = MakeTask(name);
    const WorldState a = ResetState(task, 11);
    const WorldState b = ResetState(task, 11);
    const WorldState c = ResetState(task, 12);
    CHECK(a.gripper == b.gripper);
    CHECK(a.objects[0].center == b.objects[0].center);
    CHECK(a.objects[0].center != c.objects[0].center);
  }
}

TEST_CASE("motions are clipped per axis and to the workspace") {
  const TaskSpec task = MakeTask(TaskName::kPickPlace);
  WorldState s = ResetState(task, 3);
  const Vec2 g0 = s.gripper;
  s = StepState(task, s, Act(1.0, -0.01));
  CHECK(std::abs(s.gripper.x() - std::min(1.0, g0.x() + kMaxStep)) < 1e-15);
  CHECK(std::abs(s.gripper.y() - (g0.y() - 0.01)) < 1e-15);
  CHECK(s.step_count == 1);
  for (int i = 0; i < 40; ++i) s = StepState(task, s, Act(-1.0, -1.0));
  CHECK(s.gripper == Vec2(0.0, 0.0));
}

TEST_CASE("grasp attaches within radius and open releases") {
  const TaskSpec task = MakeTask(TaskName::kPickPlace);
  WorldState s = ResetState(task, 5);
  const Vec2 rubbish = s.objects[0].center;
  s = WalkTo(task, s, rubbish + Vec2(kGraspRadius + 0.005, 0.0));
  WorldState miss = StepState(task, s, Act(0, 0, GripCommand::kClose));
  CHECK(miss.grip_closed);
  CHECK(miss.Held() == nullptr);
  s = WalkTo(task, s, rubbish + Vec2(kGraspRadius - 0.005, 0.0));
  s = StepState(task, s, Act(0, 0, GripCommand::kClose));
  REQUIRE(s.Held() != nullptr);
  CHECK(CheckSubgoal(task, 0, s));
  s = StepState(task, s, Act(0.03, 0.02));
  CHECK((s.objects[0].center - s.gripper).norm() == 0.0);
  s = StepState(task, s, Act(0, 0, GripCommand::kOpen));
  CHECK(s.Held() == nullptr);
  CHECK_FALSE(s.grip_closed);
  const Vec2 dropped = s.objects[0].center;
  s = StepState(task, s, Act(0.05, 0.0));
  CHECK(s.objects[0].center == dropped);
}

TEST_CASE("drawer kinematics follow the handle along the axis") {
  const TaskSpec task = MakeTask(TaskName::kDrawerOpenPlace);
  WorldState s = ResetState(task, 8);
  const Vec2 closed = s.drawer->handle_closed;
  const Vec2 axis = s.drawer->axis;
  const double travel = s.drawer->travel;
  s = WalkTo(task, s, closed + Vec2(0.01, 0.0));
  s = StepState(task, s, Act(0, 0, GripCommand::kClose));
  REQUIRE(s.drawer->handle_held);
  CHECK(s.gripper == closed);
  double pulled = 0.0;
  Rng rng(1);
  for (int i = 0; i < 12; ++i) {
    const double dx = rng.Uniform(-0.05, 0.05);
    const double dy = rng.Uniform(-0.05, 0.02);
    s = StepState(task, s, Act(dx, dy));
    pulled = std::clamp(pulled + (dx * axis.x() + dy * axis.y()), 0.0, travel);
    const double extent = pulled / travel;
    CHECK(std::abs(s.drawer->extent - extent) < 1e-12);
    CHECK((s.gripper - (closed + extent * travel * axis)).norm() < 1e-12);
  }
  for (int i = 0; i < 10; ++i) s = StepState(task, s, Act(axis.x(), axis.y()));
  CHECK(s.drawer->extent == 1.0);
  CHECK(CheckSubgoal(task, 2, s));
  s = StepState(task, s, Act(0, 0, GripCommand::kOpen));
  CHECK(CheckSubgoal(task, 3, s));
  const double extent = s.drawer->extent;
  s = StepState(task, s, Act(-axis.x(), -axis.y()));
  CHECK(s.drawer->extent == extent);
}

TEST_CASE("keep-out disc blocks the handle") {
  TaskOptions opt;
  opt.unreachable_handle = true;
  const TaskSpec task = MakeTask(TaskName::kDrawerOpenPlace, opt);
  for (uint64_t seed = 0; seed < 50; ++seed) {
    WorldState s = ResetState(task, seed);
    for (int i = 0; i < 60; ++i) {
      Vec2 d = s.drawer->Handle() - s.gripper;
      const double m = d.cwiseAbs().maxCoeff();
      if (m > kMaxStep) d *= kMaxStep / m;
      s = StepState(task, s, Act(d.x(), d.y(), GripCommand::kClose));
      CHECK((s.gripper - s.drawer->Handle()).norm() >=
            s.drawer->handle_keepout - 1e-12);
    }
    CHECK_FALSE(s.drawer->handle_held);
    CHECK_FALSE(CheckSubgoal(task, 0, s));
  }
}

TEST_CASE("pushing moves the block without interpenetration") {
  const TaskSpec task = MakeTask(TaskName::kSlidePush);
  WorldState s = ResetState(task, 2);
  const Object block = *s.Find(ObjectId::kBlock);
  s.gripper = block.center - Vec2(block.radius + kGripperRadius + 0.01, 0.0);
  const Vec2 before = block.center;
  for (int i = 0; i < 3; ++i) s = StepState(task, s, Act(0.05, 0.0));
  const Object* after = s.Find(ObjectId::kBlock);
  CHECK(after->center.x() > before.x() + 0.08);
  CHECK(std::abs(after->center.y() - before.y()) < 1e-12);
  CHECK((after->center - s.gripper).norm() >=
        after->radius + kGripperRadius - 1e-12);
  CHECK_FALSE(after->held);
  s = StepState(task, s, Act(0, 0, GripCommand::kClose));
  CHECK(s.Held() == nullptr);
}

TEST_CASE("random-action fuzz keeps every invariant") {
  Rng rng(99);
  long steps = 0;
  for (TaskName name : kTasks) {
    for (int variant = 0; variant < 2; ++variant) {
      TaskOptions opt;
      opt.unreachable_handle = variant == 1;
      if (opt.unreachable_handle && name != TaskName::kDrawerOpenPlace) continue;
      const TaskSpec task = MakeTask(name, opt);
      for (uint64_t seed = 0; steps < 100000 && seed < 400; ++seed) {
        WorldState s = ResetState(task, seed);
        for (int t = 0; t < 100; ++t) {
          const int g = static_cast<int>(rng.Below(3));
          const EnvAction a =
              Act(rng.Uniform(-0.08, 0.08), rng.Uniform(-0.08, 0.08),
                  g == 0 ? GripCommand::kOpen
                         : g == 1 ? GripCommand::kClose : GripCommand::kHold);
          const WorldState next = StepState(task, s, a);
          std::string why;
          REQUIRE_MESSAGE(StateIsValid(next, &why), why);
          CHECK(next.step_count == s.step_count + 1);
          if (a.grip == GripCommand::kOpen) CHECK(next.Held() == nullptr);
          for (const auto& o : next.objects) {
            if (o.pushable) {
              CHECK((o.center - next.gripper).norm() >=
                    o.radius + kGripperRadius - 1e-9);
            }
          }
          s = next;
          ++steps;
        }
      }
    }
  }
  CHECK(steps >= 100000);
}

TEST_CASE("observations are gripper-relative and seeded") {
  const TaskSpec task = MakeTask(TaskName::kPickPlace);
  const WorldState s = ResetState(task, 4);
  const Observation a = Observe(task, s, 0, 4);
  const Observation b = Observe(task, s, 0, 4);
  REQUIRE(a.cloud.size() == kCloudPoints);
  CHECK((a.cloud.points - b.cloud.points).norm() == 0.0);
  CHECK(a.proprio == Eigen::Vector3d(s.gripper.x(), s.gripper.y(), 0.0));
  CHECK(a.subgoal_description == "grasp the rubbish");
  CHECK(a.task_description == task.description);
  const Vec2 rel = s.objects[0].center - s.gripper;
  for (int i = 0; i < a.cloud.size(); ++i) {
    const Vec2 p(a.cloud.points(i, 0), a.cloud.points(i, 1));
    CHECK((p - rel).norm() <= s.objects[0].radius + 4 * kCloudJitter);
    CHECK(a.cloud.points(i, 2) == 0.0);
  }
  CHECK((Observe(task, s, 1, 4).cloud.points - a.cloud.points).norm() > 0.0);
  CHECK_THROWS_AS(Observe(task, s, 4, 4), InputError);
  CHECK_THROWS_AS(CheckSubgoal(task, -1, s), InputError);
  const Env env = Reset(task, 4);
  CHECK((env.observation.cloud.points - a.cloud.points).norm() == 0.0);
}

TEST_CASE("scripted rollouts satisfy every checker in order") {
  for (TaskName name : kTasks) {
    const TaskSpec task = MakeTask(name);
    int solved = 0;
    for (uint64_t seed = 0; seed < 50; ++seed) {
      const Trajectory t = CollectEpisode(task, seed);
      if (t.success) ++solved;
    }
    CHECK(solved >= 45);
  }
}

}  // namespace
}  // namespace sgpolicy
