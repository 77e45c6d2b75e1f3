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

// Planar kinematic manipulation environment. The workspace is the unit
// square; the gripper moves by clipped displacements, attaches objects or the
// drawer handle when closed within grasp range, and pushes slide blocks on
// contact. Tasks are sequences of subgoals with ground-truth checkers.

#ifndef SGPOLICY_SIMENV_H_
#define SGPOLICY_SIMENV_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sgpolicy/netcore.h"

namespace sgpolicy {

using Vec2 = Eigen::Vector2d;

inline constexpr double kMaxStep = 0.05;
inline constexpr double kGraspRadius = 0.03;
inline constexpr double kGripperRadius = 0.02;
inline constexpr double kReachTolerance = 0.04;
inline constexpr double kDrawerOpenExtent = 0.8;
inline constexpr int kCloudPoints = 64;
inline constexpr double kCloudJitter = 0.002;

struct Rect {
  Vec2 lo = Vec2::Zero();
  Vec2 hi = Vec2::Zero();

  Vec2 Center() const { return 0.5 * (lo + hi); }
  bool Contains(const Vec2& p) const {
    return p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() &&
           p.y() <= hi.y();
  }
};

enum class ObjectId { kRubbish, kBlock, kItem };

struct Object {
  ObjectId id = ObjectId::kRubbish;
  Vec2 center = Vec2::Zero();
  double radius = 0.02;
  bool held = false;
  bool graspable = true;
  bool pushable = false;
};

// The drawer slides along `axis` out of a fixed cabinet. At extent e the
// handle sits at handle_closed + e * travel * axis.
struct Drawer {
  Rect cabinet;
  Vec2 handle_closed = Vec2::Zero();
  Vec2 axis = Vec2(0.0, -1.0);
  double travel = 0.25;
  double width = 0.16;
  double extent = 0.0;
  bool handle_held = false;
  // gripper may not enter this disc around the handle; 0 disables
  double handle_keepout = 0.0;

  Vec2 Handle() const { return handle_closed + extent * travel * axis; }
  // part of the drawer body pulled out of the cabinet
  Rect Exposed() const;
  // release point for items placed in the drawer
  Vec2 DropPoint() const { return Exposed().Center(); }
};

enum class TaskName { kPickPlace, kSlidePush, kDrawerOpenPlace };

std::string_view TaskNameString(TaskName name);
std::optional<TaskName> ParseTaskName(std::string_view name);

struct WorldState {
  Vec2 gripper = Vec2::Zero();
  bool grip_closed = false;
  std::vector<Object> objects;
  std::optional<Drawer> drawer;
  std::optional<Rect> bin;
  std::optional<Rect> target_zone;
  Vec2 home = Vec2(0.5, 0.8);
  int step_count = 0;

  const Object* Find(ObjectId id) const;
  Object* Find(ObjectId id);
  const Object* Held() const;
};

enum class GripCommand { kOpen, kClose, kHold };

std::string_view GripCommandName(GripCommand g);
std::optional<GripCommand> ParseGripCommand(std::string_view s);

struct EnvAction {
  double dx = 0.0;
  double dy = 0.0;
  GripCommand grip = GripCommand::kHold;
};

// What the current subgoal asks for; drives the checker, the scripted
// planner and the affordance target.
enum class SubgoalKind {
  kCloseGripper,   // close the gripper in place
  kReachObject,    // gripper within grasp range of the target
  kGraspObject,    // target object attached
  kGraspHandle,    // drawer handle attached
  kReachHome,      // holding the object, gripper at the home pose
  kReachBin,       // holding the object, gripper above the bin centre
  kReleaseInBin,   // object released inside the bin, gripper open
  kReachPrePush,   // gripper behind the block w.r.t. the target zone
  kPushToTarget,   // block centre inside the target zone
  kPullDrawer,     // drawer extent >= kDrawerOpenExtent
  kReleaseHandle,  // handle released with the drawer open
  kReachDrawer,    // holding the item above the drawer drop point
  kReleaseInDrawer,
};

// Source of the per-subgoal affordance point cloud.
enum class AffordanceTarget {
  kRubbish,
  kBlock,
  kItem,
  kHandle,
  kHome,
  kBinOpening,
  kPrePushPose,
  kTargetZone,
  kCabinet,
  kDrawerOpening,
};

struct Subgoal {
  std::string description;
  SubgoalKind kind;
  AffordanceTarget target;
};

struct TaskOptions {
  // forced-failure variant: the handle sits inside a keep-out disc
  bool unreachable_handle = false;
};

struct TaskSpec {
  TaskName name = TaskName::kPickPlace;
  std::string description;
  std::vector<Subgoal> subgoals;
  int max_steps = 120;
  TaskOptions options;

  int num_subgoals() const { return static_cast<int>(subgoals.size()); }
};

TaskSpec MakeTask(TaskName name, TaskOptions options = {});
std::vector<TaskSpec> TaskLibrary();

struct Observation {
  Eigen::Vector3d proprio = Eigen::Vector3d::Zero();  // x, y, closed
  PointCloud cloud;
  std::string task_description;
  std::string subgoal_description;
};

struct Env {
  WorldState state;
  Observation observation;
};

// Samples a feasible initial scene; deterministic in (task, seed).
WorldState ResetState(const TaskSpec& task, uint64_t seed);
Env Reset(const TaskSpec& task, uint64_t seed);

// Applies one action; invalid motions are clipped, never rejected.
WorldState StepState(const TaskSpec& task, const WorldState& state,
                     const EnvAction& action);

// Observation for the given active subgoal. The cloud has kCloudPoints
// boundary samples of the subgoal's affordance target, jittered and
// expressed relative to the gripper; its draws are keyed by
// (episode seed, step_count, subgoal_index).
Observation Observe(const TaskSpec& task, const WorldState& state,
                    int subgoal_index, uint64_t episode_seed);

bool CheckSubgoal(const TaskSpec& task, int index, const WorldState& state);
bool CheckSuccess(const TaskSpec& task, const WorldState& state);

// world position the affordance target is centred on
Vec2 TargetPoint(const WorldState& state, AffordanceTarget target);

// gripper pose from which a straight push moves the block to the zone centre
Vec2 PrePushPose(const WorldState& state);

// workspace bounds, held-object co-location and keep-out invariants
bool StateIsValid(const WorldState& state, std::string* why = nullptr);

}  // namespace sgpolicy

#endif  // SGPOLICY_SIMENV_H_
