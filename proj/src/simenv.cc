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

#include "sgpolicy/simenv.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sgpolicy {

namespace {

constexpr int kMaxResetTries = 1000;
constexpr double kCabinetWidth = 0.2;
constexpr double kCabinetDepth = 0.22;
constexpr double kHandleOffset = 0.015;
constexpr double kHandleHalfWidth = 0.03;
constexpr double kHandleHalfDepth = 0.005;
constexpr double kMarkerRadius = 0.02;
constexpr double kOpeningRadius = 0.03;
constexpr double kPrePushGap = 0.02;
constexpr double kContactSubstep = 0.005;
constexpr double kHandleKeepout = 0.12;

Vec2 Clamp01(const Vec2& p, double margin = 0.0) {
  return Vec2(std::clamp(p.x(), margin, 1.0 - margin),
              std::clamp(p.y(), margin, 1.0 - margin));
}

double ClipStep(double v) {
  if (!std::isfinite(v)) return 0.0;
  return std::clamp(v, -kMaxStep, kMaxStep);
}

Rect Square(const Vec2& center, double half) {
  return Rect{center - Vec2(half, half), center + Vec2(half, half)};
}

// dx/dy share one draw so the cloud is reproducible from its seed
void AddJitter(Rng& rng, Vec2& p) {
  p.x() += kCloudJitter * rng.Normal();
  p.y() += kCloudJitter * rng.Normal();
}

Vec2 SampleCircle(Rng& rng, const Vec2& center, double radius) {
  const double theta = 2.0 * M_PI * rng.Uniform();
  return center + radius * Vec2(std::cos(theta), std::sin(theta));
}

Vec2 SampleRectBoundary(Rng& rng, const Rect& r) {
  const double w = r.hi.x() - r.lo.x();
  const double h = r.hi.y() - r.lo.y();
  double s = rng.Uniform() * 2.0 * (w + h);
  if (s < w) return Vec2(r.lo.x() + s, r.lo.y());
  s -= w;
  if (s < h) return Vec2(r.hi.x(), r.lo.y() + s);
  s -= h;
  if (s < w) return Vec2(r.hi.x() - s, r.hi.y());
  s -= w;
  return Vec2(r.lo.x(), r.hi.y() - s);
}

std::optional<ObjectId> ObjectFor(AffordanceTarget target) {
  switch (target) {
    case AffordanceTarget::kRubbish:
      return ObjectId::kRubbish;
    case AffordanceTarget::kBlock:
      return ObjectId::kBlock;
    case AffordanceTarget::kItem:
      return ObjectId::kItem;
    default:
      return std::nullopt;
  }
}

bool ObjectIn(const WorldState& s, ObjectId id, const Rect& region) {
  const Object* o = s.Find(id);
  return o != nullptr && !o->held && region.Contains(o->center);
}

bool DrawerOpen(const WorldState& s) {
  return s.drawer && s.drawer->extent >= kDrawerOpenExtent;
}

}  // namespace

Rect Drawer::Exposed() const {
  const double front = cabinet.lo.y();
  const double cx = cabinet.Center().x();
  return Rect{Vec2(cx - 0.5 * width, front - extent * travel),
              Vec2(cx + 0.5 * width, front)};
}

std::string_view TaskNameString(TaskName name) {
  switch (name) {
    case TaskName::kPickPlace:
      return "pick_place";
    case TaskName::kSlidePush:
      return "slide_push";
    case TaskName::kDrawerOpenPlace:
      return "drawer_open_place";
  }
  return "unknown";
}

std::optional<TaskName> ParseTaskName(std::string_view name) {
  for (TaskName t : {TaskName::kPickPlace, TaskName::kSlidePush,
                     TaskName::kDrawerOpenPlace}) {
    if (TaskNameString(t) == name) return t;
  }
  return std::nullopt;
}

std::string_view GripCommandName(GripCommand g) {
  switch (g) {
    case GripCommand::kOpen:
      return "open";
    case GripCommand::kClose:
      return "close";
    case GripCommand::kHold:
      return "hold";
  }
  return "hold";
}

std::optional<GripCommand> ParseGripCommand(std::string_view s) {
  for (GripCommand g :
       {GripCommand::kOpen, GripCommand::kClose, GripCommand::kHold}) {
    if (GripCommandName(g) == s) return g;
  }
  return std::nullopt;
}

const Object* WorldState::Find(ObjectId id) const {
  for (const auto& o : objects) {
    if (o.id == id) return &o;
  }
  return nullptr;
}

Object* WorldState::Find(ObjectId id) {
  for (auto& o : objects) {
    if (o.id == id) return &o;
  }
  return nullptr;
}

const Object* WorldState::Held() const {
  for (const auto& o : objects) {
    if (o.held) return &o;
  }
  return nullptr;
}

// ------------------------------------------------------------ task library

TaskSpec MakeTask(TaskName name, TaskOptions options) {
  TaskSpec t;
  t.name = name;
  t.options = options;
  using K = SubgoalKind;
  using A = AffordanceTarget;
  switch (name) {
    case TaskName::kPickPlace:
      t.description = "put the rubbish in the bin";
      t.subgoals = {
          {"grasp the rubbish", K::kGraspObject, A::kRubbish},
          {"reset to the default position", K::kReachHome, A::kHome},
          {"move the rubbish above the bin", K::kReachBin, A::kBinOpening},
          {"open the gripper", K::kReleaseInBin, A::kBinOpening},
      };
      t.max_steps = 120;
      break;
    case TaskName::kSlidePush:
      t.description = "slide the block to the target";
      t.subgoals = {
          {"close the gripper", K::kCloseGripper, A::kBlock},
          {"move behind the block", K::kReachPrePush, A::kPrePushPose},
          {"push the block to the target", K::kPushToTarget, A::kTargetZone},
      };
      t.max_steps = 120;
      break;
    case TaskName::kDrawerOpenPlace:
      t.description = "put the item in the drawer";
      t.subgoals = {
          {"move the gripper to the drawer handle", K::kReachObject,
           A::kHandle},
          {"grasp the handle of the drawer", K::kGraspHandle, A::kHandle},
          {"pull the drawer open", K::kPullDrawer, A::kCabinet},
          {"release the handle", K::kReleaseHandle, A::kHandle},
          {"grasp the item", K::kGraspObject, A::kItem},
          {"move the item above the drawer", K::kReachDrawer,
           A::kDrawerOpening},
          {"open the gripper", K::kReleaseInDrawer, A::kDrawerOpening},
      };
      t.max_steps = 300;
      break;
  }
  return t;
}

std::vector<TaskSpec> TaskLibrary() {
  return {MakeTask(TaskName::kPickPlace), MakeTask(TaskName::kSlidePush),
          MakeTask(TaskName::kDrawerOpenPlace)};
}

// ------------------------------------------------------------------- reset

namespace {

std::optional<WorldState> SamplePickPlace(Rng& rng) {
  WorldState s;
  const bool mirror = rng.Uniform() < 0.5;
  auto side = [&](double x) { return mirror ? 1.0 - x : x; };
  Object rubbish;
  rubbish.id = ObjectId::kRubbish;
  rubbish.radius = 0.02;
  rubbish.center = Vec2(side(rng.Uniform(0.1, 0.4)), rng.Uniform(0.1, 0.5));
  const Vec2 bin_center(side(rng.Uniform(0.62, 0.85)), rng.Uniform(0.15, 0.45));
  s.bin = Square(bin_center, 0.07);
  s.gripper = Vec2(rng.Uniform(0.15, 0.85), rng.Uniform(0.15, 0.85));
  s.objects.push_back(rubbish);
  if (s.bin->Contains(rubbish.center)) return std::nullopt;
  if ((rubbish.center - bin_center).norm() < 0.15) return std::nullopt;
  if ((s.gripper - rubbish.center).norm() < 0.08) return std::nullopt;
  return s;
}

std::optional<WorldState> SampleSlidePush(Rng& rng) {
  WorldState s;
  Object block;
  block.id = ObjectId::kBlock;
  block.radius = 0.03;
  block.graspable = false;
  block.pushable = true;
  block.center = Vec2(rng.Uniform(0.25, 0.75), rng.Uniform(0.25, 0.75));
  const double dist = rng.Uniform(0.25, 0.4);
  const double theta = 2.0 * M_PI * rng.Uniform();
  const Vec2 zone_center =
      block.center + dist * Vec2(std::cos(theta), std::sin(theta));
  s.target_zone = Square(zone_center, 0.06);
  s.gripper = Vec2(rng.Uniform(0.1, 0.9), rng.Uniform(0.1, 0.9));
  s.objects.push_back(block);
  if (s.target_zone->lo.minCoeff() < 0.05 || s.target_zone->hi.maxCoeff() > 0.95)
    return std::nullopt;
  const Vec2 pre = PrePushPose(s);
  if (pre.minCoeff() < 0.05 || pre.maxCoeff() > 0.95) return std::nullopt;
  if ((s.gripper - block.center).norm() < 0.12) return std::nullopt;
  return s;
}

std::optional<WorldState> SampleDrawer(Rng& rng, const TaskOptions& options) {
  WorldState s;
  Drawer d;
  const double cx = rng.Uniform(0.3, 0.7);
  const double front = rng.Uniform(0.6, 0.68);
  d.cabinet = Rect{Vec2(cx - 0.5 * kCabinetWidth, front),
                   Vec2(cx + 0.5 * kCabinetWidth, front + kCabinetDepth)};
  d.handle_closed = Vec2(cx, front - kHandleOffset);
  d.handle_keepout = options.unreachable_handle ? kHandleKeepout : 0.0;
  s.drawer = d;
  Object item;
  item.id = ObjectId::kItem;
  item.radius = 0.02;
  item.center = Vec2(rng.Uniform(0.1, 0.9), rng.Uniform(0.08, 0.25));
  s.objects.push_back(item);
  s.gripper = Vec2(rng.Uniform(0.1, 0.9), rng.Uniform(0.1, 0.55));
  if ((s.gripper - d.handle_closed).norm() < 0.15) return std::nullopt;
  if ((s.gripper - item.center).norm() < 0.08) return std::nullopt;
  // item must stay clear of the fully opened drawer footprint
  Drawer open = d;
  open.extent = 1.0;
  const Rect footprint = open.Exposed();
  if (Rect{footprint.lo - Vec2(0.05, 0.05), footprint.hi + Vec2(0.05, 0.05)}
          .Contains(item.center))
    return std::nullopt;
  return s;
}

}  // namespace

WorldState ResetState(const TaskSpec& task, uint64_t seed) {
  Rng rng(DeriveSeed(seed, 0x5eed));
  for (int attempt = 0; attempt < kMaxResetTries; ++attempt) {
    std::optional<WorldState> s;
    switch (task.name) {
      case TaskName::kPickPlace:
        s = SamplePickPlace(rng);
        break;
      case TaskName::kSlidePush:
        s = SampleSlidePush(rng);
        break;
      case TaskName::kDrawerOpenPlace:
        s = SampleDrawer(rng, task.options);
        break;
    }
    if (s && StateIsValid(*s)) return *s;
  }
  throw Error("could not sample a feasible scene for seed " +
              std::to_string(seed));
}

Env Reset(const TaskSpec& task, uint64_t seed) {
  Env env;
  env.state = ResetState(task, seed);
  env.observation = Observe(task, env.state, 0, seed);
  return env;
}

// -------------------------------------------------------------------- step

WorldState StepState(const TaskSpec& task, const WorldState& state,
                     const EnvAction& action) {
  (void)task;
  WorldState s = state;
  const Vec2 delta(ClipStep(action.dx), ClipStep(action.dy));

  if (s.drawer && s.drawer->handle_held) {
    Drawer& d = *s.drawer;
    const double along = delta.dot(d.axis);
    d.extent = std::clamp(d.extent + along / d.travel, 0.0, 1.0);
    s.gripper = d.Handle();
  } else {
    const Vec2 start = s.gripper;
    Vec2 end = Clamp01(start + delta);
    if (s.drawer && s.drawer->handle_keepout > 0.0) {
      const Vec2 handle = s.drawer->Handle();
      Vec2 off = end - handle;
      const double r = s.drawer->handle_keepout;
      if (off.norm() < r) {
        if (off.norm() == 0.0) off = -s.drawer->axis;
        end = Clamp01(handle + r * off.normalized());
      }
    }
    // swept contact so a full step cannot tunnel into a pushable object
    const Vec2 motion = end - start;
    const int substeps =
        std::max(1, static_cast<int>(std::ceil(motion.norm() / kContactSubstep)));
    for (int i = 1; i <= substeps; ++i) {
      const Vec2 p = start + motion * (static_cast<double>(i) / substeps);
      for (auto& o : s.objects) {
        if (o.held || !o.pushable) continue;
        const double contact = o.radius + kGripperRadius;
        Vec2 off = o.center - p;
        if (off.norm() < contact) {
          if (off.norm() == 0.0) {
            off = motion.norm() > 0.0 ? motion : Vec2(1.0, 0.0);
          }
          o.center = Clamp01(p + contact * off.normalized(), o.radius);
        }
      }
    }
    s.gripper = end;
  }

  for (auto& o : s.objects) {
    if (o.held) o.center = s.gripper;
  }

  switch (action.grip) {
    case GripCommand::kHold:
      break;
    case GripCommand::kOpen:
      s.grip_closed = false;
      for (auto& o : s.objects) o.held = false;
      if (s.drawer) s.drawer->handle_held = false;
      break;
    case GripCommand::kClose: {
      s.grip_closed = true;
      const bool busy =
          s.Held() != nullptr || (s.drawer && s.drawer->handle_held);
      if (busy) break;
      double best = kGraspRadius;
      Object* best_obj = nullptr;
      bool handle = false;
      for (auto& o : s.objects) {
        if (!o.graspable) continue;
        const double d = (o.center - s.gripper).norm();
        if (d <= best) {
          best = d;
          best_obj = &o;
        }
      }
      if (s.drawer && (s.drawer->Handle() - s.gripper).norm() <= best) {
        handle = true;
      }
      if (handle) {
        s.drawer->handle_held = true;
        s.gripper = s.drawer->Handle();
      } else if (best_obj != nullptr) {
        best_obj->held = true;
        best_obj->center = s.gripper;
      }
      break;
    }
  }
  ++s.step_count;
  return s;
}

// ------------------------------------------------------------- observation

Vec2 PrePushPose(const WorldState& state) {
  const Object* block = state.Find(ObjectId::kBlock);
  if (block == nullptr || !state.target_zone) return state.gripper;
  Vec2 u = state.target_zone->Center() - block->center;
  if (u.norm() == 0.0) u = Vec2(1.0, 0.0);
  u.normalize();
  return block->center - (block->radius + kGripperRadius + kPrePushGap) * u;
}

Vec2 TargetPoint(const WorldState& state, AffordanceTarget target) {
  if (auto id = ObjectFor(target)) {
    const Object* o = state.Find(*id);
    return o != nullptr ? o->center : state.gripper;
  }
  switch (target) {
    case AffordanceTarget::kHandle:
      return state.drawer ? state.drawer->Handle() : state.gripper;
    case AffordanceTarget::kHome:
      return state.home;
    case AffordanceTarget::kBinOpening:
      return state.bin ? state.bin->Center() : state.gripper;
    case AffordanceTarget::kPrePushPose:
      return PrePushPose(state);
    case AffordanceTarget::kTargetZone:
      return state.target_zone ? state.target_zone->Center() : state.gripper;
    case AffordanceTarget::kCabinet:
      return state.drawer ? state.drawer->cabinet.Center() : state.gripper;
    case AffordanceTarget::kDrawerOpening:
      return state.drawer ? state.drawer->DropPoint() : state.gripper;
    default:
      return state.gripper;
  }
}

Observation Observe(const TaskSpec& task, const WorldState& state,
                    int subgoal_index, uint64_t episode_seed) {
  if (subgoal_index < 0 || subgoal_index >= task.num_subgoals()) {
    throw InputError("subgoal index " + std::to_string(subgoal_index) +
                     " out of range");
  }
  const Subgoal& sg = task.subgoals[subgoal_index];
  Observation obs;
  obs.proprio =
      Eigen::Vector3d(state.gripper.x(), state.gripper.y(),
                      state.grip_closed ? 1.0 : 0.0);
  obs.task_description = task.description;
  obs.subgoal_description = sg.description;

  Rng rng(DeriveSeed(
      DeriveSeed(episode_seed, static_cast<uint64_t>(state.step_count)),
      static_cast<uint64_t>(subgoal_index)));
  obs.cloud.points.resize(kCloudPoints, 3);
  const Vec2 center = TargetPoint(state, sg.target);
  for (int i = 0; i < kCloudPoints; ++i) {
    Vec2 p = center;
    switch (sg.target) {
      case AffordanceTarget::kRubbish:
      case AffordanceTarget::kBlock:
      case AffordanceTarget::kItem: {
        const Object* o = state.Find(*ObjectFor(sg.target));
        p = SampleCircle(rng, center, o != nullptr ? o->radius : kMarkerRadius);
        break;
      }
      case AffordanceTarget::kHandle:
        p = SampleRectBoundary(
            rng, Rect{center - Vec2(kHandleHalfWidth, kHandleHalfDepth),
                      center + Vec2(kHandleHalfWidth, kHandleHalfDepth)});
        break;
      case AffordanceTarget::kHome:
      case AffordanceTarget::kPrePushPose:
        p = SampleCircle(rng, center, kMarkerRadius);
        break;
      case AffordanceTarget::kBinOpening:
      case AffordanceTarget::kDrawerOpening:
        p = SampleCircle(rng, center, kOpeningRadius);
        break;
      case AffordanceTarget::kTargetZone:
        p = SampleRectBoundary(rng, *state.target_zone);
        break;
      case AffordanceTarget::kCabinet:
        p = SampleRectBoundary(rng, state.drawer->cabinet);
        break;
    }
    AddJitter(rng, p);
    const Vec2 rel = p - state.gripper;
    obs.cloud.points.row(i) << rel.x(), rel.y(), 0.0;
  }
  return obs;
}

// ---------------------------------------------------------------- checkers

bool CheckSubgoal(const TaskSpec& task, int index, const WorldState& s) {
  if (index < 0 || index >= task.num_subgoals()) {
    throw InputError("subgoal index " + std::to_string(index) +
                     " out of range for task " +
                     std::string(TaskNameString(task.name)));
  }
  const Subgoal& sg = task.subgoals[index];
  const Object* held = s.Held();
  auto near = [&](const Vec2& p, double tol) {
    return (s.gripper - p).norm() <= tol;
  };
  switch (sg.kind) {
    case SubgoalKind::kCloseGripper:
      return s.grip_closed;
    case SubgoalKind::kReachObject:
      return near(TargetPoint(s, sg.target), kGraspRadius);
    case SubgoalKind::kGraspObject: {
      const Object* o = s.Find(*ObjectFor(sg.target));
      return o != nullptr && o->held;
    }
    case SubgoalKind::kGraspHandle:
      return s.drawer && s.drawer->handle_held;
    case SubgoalKind::kReachHome:
      return held != nullptr && near(s.home, kReachTolerance);
    case SubgoalKind::kReachBin:
      return s.bin && near(s.bin->Center(), kReachTolerance);
    case SubgoalKind::kReleaseInBin:
      return held == nullptr && !s.grip_closed && s.bin &&
             ObjectIn(s, ObjectId::kRubbish, *s.bin);
    case SubgoalKind::kReachPrePush:
      return near(PrePushPose(s), kReachTolerance);
    case SubgoalKind::kPushToTarget:
      return s.target_zone && ObjectIn(s, ObjectId::kBlock, *s.target_zone);
    case SubgoalKind::kPullDrawer:
      return DrawerOpen(s);
    case SubgoalKind::kReleaseHandle:
      return DrawerOpen(s) && !s.drawer->handle_held && !s.grip_closed;
    case SubgoalKind::kReachDrawer:
      return s.drawer && near(s.drawer->DropPoint(), kReachTolerance);
    case SubgoalKind::kReleaseInDrawer:
      return held == nullptr && !s.grip_closed && DrawerOpen(s) &&
             ObjectIn(s, ObjectId::kItem, s.drawer->Exposed());
  }
  return false;
}

bool CheckSuccess(const TaskSpec& task, const WorldState& s) {
  switch (task.name) {
    case TaskName::kPickPlace:
      return s.Held() == nullptr && !s.grip_closed && s.bin &&
             ObjectIn(s, ObjectId::kRubbish, *s.bin);
    case TaskName::kSlidePush:
      return s.target_zone && ObjectIn(s, ObjectId::kBlock, *s.target_zone);
    case TaskName::kDrawerOpenPlace:
      return s.Held() == nullptr && !s.grip_closed && DrawerOpen(s) &&
             ObjectIn(s, ObjectId::kItem, s.drawer->Exposed());
  }
  return false;
}

bool StateIsValid(const WorldState& s, std::string* why) {
  auto fail = [&](const char* msg) {
    if (why != nullptr) *why = msg;
    return false;
  };
  auto inside = [](const Vec2& p) {
    return p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0;
  };
  if (!s.gripper.allFinite() || !inside(s.gripper)) {
    return fail("gripper outside the workspace");
  }
  int held = 0;
  for (const auto& o : s.objects) {
    if (!o.center.allFinite() || !inside(o.center)) {
      return fail("object outside the workspace");
    }
    if (o.held) {
      ++held;
      if ((o.center - s.gripper).norm() > 1e-12) {
        return fail("held object is not at the gripper");
      }
    }
  }
  if (held > 1) return fail("more than one object held");
  if (s.drawer) {
    const Drawer& d = *s.drawer;
    if (d.extent < 0.0 || d.extent > 1.0) return fail("drawer extent invalid");
    if (!inside(d.Handle())) return fail("handle outside the workspace");
    if (d.handle_held) {
      if (held > 0) return fail("handle and object held together");
      if ((d.Handle() - s.gripper).norm() > 1e-12) {
        return fail("held handle is not at the gripper");
      }
    }
    if (d.handle_keepout > 0.0 &&
        (s.gripper - d.Handle()).norm() < d.handle_keepout - 1e-12) {
      return fail("gripper inside the handle keep-out zone");
    }
  }
  return true;
}

}  // namespace sgpolicy
