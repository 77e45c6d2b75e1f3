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

#include "sgpolicy/demogen.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace sgpolicy {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<int> Trajectory::Labels() const {
  std::vector<int> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.label);
  return out;
}

std::vector<int> Trajectory::SubgoalIndices() const {
  std::vector<int> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.subgoal_index);
  return out;
}

// ----------------------------------------------------------------- planner

namespace {

constexpr double kPushStep = 0.03;
constexpr double kPushRealign = 0.012;

// scale so that the larger axis is at most kMaxStep; keeps direction
Vec2 Toward(const Vec2& from, const Vec2& to) {
  Vec2 d = to - from;
  const double m = d.cwiseAbs().maxCoeff();
  if (m > kMaxStep) d *= kMaxStep / m;
  return d;
}

EnvAction Move(const Vec2& d, Rng& rng, const PlannerConfig& config) {
  EnvAction a;
  a.dx = std::clamp(d.x() + config.noise_std * rng.Normal(), -kMaxStep,
                    kMaxStep);
  a.dy = std::clamp(d.y() + config.noise_std * rng.Normal(), -kMaxStep,
                    kMaxStep);
  a.grip = GripCommand::kHold;
  return a;
}

EnvAction Grip(GripCommand g) {
  EnvAction a;
  a.grip = g;
  return a;
}

// Next waypoint toward `target` that keeps clear of the pushable block:
// aim at the tangent point of an orbit through the pre-push pose, then
// follow the orbit.
Vec2 AroundBlock(const WorldState& state, const Vec2& target) {
  const Object* block = state.Find(ObjectId::kBlock);
  const Vec2& g = state.gripper;
  if (block == nullptr) return target;
  const Vec2 c = block->center;
  const double orbit = (PrePushPose(state) - c).norm();
  const double clearance = block->radius + kGripperRadius + 0.005;
  const Vec2 seg = target - g;
  const double len2 = seg.squaredNorm();
  const double s =
      len2 > 0.0 ? std::clamp((c - g).dot(seg) / len2, 0.0, 1.0) : 0.0;
  if ((g + s * seg - c).norm() >= clearance) return target;

  const Vec2 rel = g - c;
  const double dist = rel.norm();
  const double ang_g = std::atan2(rel.y(), rel.x());
  const Vec2 rt = target - c;
  double diff = std::atan2(rt.y(), rt.x()) - ang_g;
  diff = std::remainder(diff, 2.0 * M_PI);
  const double sign = diff >= 0.0 ? 1.0 : -1.0;
  double ang;
  if (dist > orbit + 0.01) {
    ang = ang_g + sign * std::acos(orbit / dist);
  } else {
    ang = ang_g + sign * std::min(std::abs(diff), 0.9 * kMaxStep / orbit);
  }
  return c + orbit * Vec2(std::cos(ang), std::sin(ang));
}

bool SameState(const WorldState& a, const WorldState& b) {
  if (a.gripper != b.gripper || a.grip_closed != b.grip_closed) return false;
  for (size_t i = 0; i < a.objects.size(); ++i) {
    if (a.objects[i].center != b.objects[i].center ||
        a.objects[i].held != b.objects[i].held)
      return false;
  }
  if (a.drawer) {
    if (a.drawer->extent != b.drawer->extent ||
        a.drawer->handle_held != b.drawer->handle_held)
      return false;
  }
  return true;
}

}  // namespace

EnvAction PlanSubgoalAction(const TaskSpec& task, int index,
                            const WorldState& state, Rng& rng,
                            const PlannerConfig& config) {
  if (index < 0 || index >= task.num_subgoals()) {
    throw InputError("subgoal index out of range");
  }
  const Subgoal& sg = task.subgoals[index];
  const Vec2& g = state.gripper;
  switch (sg.kind) {
    case SubgoalKind::kCloseGripper:
      return Grip(GripCommand::kClose);
    case SubgoalKind::kGraspObject:
    case SubgoalKind::kGraspHandle: {
      const Vec2 target = TargetPoint(state, sg.target);
      if ((target - g).norm() <= kGraspRadius) {
        return Grip(GripCommand::kClose);
      }
      return Move(Toward(g, target), rng, config);
    }
    case SubgoalKind::kReachPrePush:
      return Move(Toward(g, AroundBlock(state, PrePushPose(state))), rng,
                  config);
    case SubgoalKind::kReachObject:
    case SubgoalKind::kReachHome:
    case SubgoalKind::kReachBin:
    case SubgoalKind::kReachDrawer:
      return Move(Toward(g, TargetPoint(state, sg.target)), rng, config);
    case SubgoalKind::kReleaseInBin:
    case SubgoalKind::kReleaseHandle:
    case SubgoalKind::kReleaseInDrawer:
      return Grip(GripCommand::kOpen);
    case SubgoalKind::kPullDrawer:
      return Move(kMaxStep * state.drawer->axis, rng, config);
    case SubgoalKind::kPushToTarget: {
      const Object* block = state.Find(ObjectId::kBlock);
      Vec2 u = state.target_zone->Center() - block->center;
      if (u.norm() == 0.0) u = Vec2(1.0, 0.0);
      u.normalize();
      const Vec2 contact =
          block->center - (block->radius + kGripperRadius) * u;
      const Vec2 off = g - contact;
      const Vec2 lateral = off - off.dot(u) * u;
      if (lateral.norm() > kPushRealign || off.dot(u) > 0.005) {
        return Move(Toward(g, AroundBlock(state, PrePushPose(state))), rng,
                    config);
      }
      return Move(Toward(Vec2::Zero(), kPushStep * u - lateral), rng, config);
    }
  }
  return Grip(GripCommand::kHold);
}

Trajectory CollectEpisode(const TaskSpec& task, uint64_t seed,
                          const PlannerConfig& config) {
  Trajectory traj;
  traj.task_description = task.description;
  for (const auto& sg : task.subgoals) traj.subgoals.push_back(sg.description);
  traj.seed = seed;

  WorldState state = ResetState(task, seed);
  Rng rng(DeriveSeed(seed, 0x91a4));
  int index = 0;
  int stuck = 0;
  const int n = task.num_subgoals();
  while (index < n && state.step_count < task.max_steps) {
    Frame frame;
    frame.observation = Observe(task, state, index, seed);
    frame.action = PlanSubgoalAction(task, index, state, rng, config);
    frame.subgoal_index = index;
    WorldState next = StepState(task, state, frame.action);
    stuck = SameState(state, next) ? stuck + 1 : 0;
    state = std::move(next);
    if (CheckSubgoal(task, index, state)) {
      frame.label = 0;
      ++index;
    }
    traj.frames.push_back(std::move(frame));
    if (stuck >= config.stuck_steps) {
      traj.failure = "planner stuck in subgoal " + std::to_string(index);
      break;
    }
  }
  if (index < n && traj.failure.empty()) {
    traj.failure = "max_steps exceeded in subgoal " + std::to_string(index);
  }
  traj.success = index == n && CheckSuccess(task, state);
  if (!traj.success && traj.failure.empty()) {
    traj.failure = "success check failed";
  }
  return traj;
}

std::vector<int> LabelsFromSegments(const std::vector<int>& segment_lengths) {
  std::vector<int> labels;
  for (int len : segment_lengths) {
    if (len < 1) throw InputError("segments need at least one frame");
    labels.insert(labels.end(), len - 1, 1);
    labels.push_back(0);
  }
  return labels;
}

std::vector<Violation> AuditLabelSequence(const std::vector<int>& labels,
                                          const std::vector<int>& indices,
                                          int num_subgoals,
                                          std::string_view where) {
  std::vector<Violation> out;
  auto at = [&](size_t i) {
    return std::string(where) + ":frame " + std::to_string(i);
  };
  if (labels.size() != indices.size()) {
    out.push_back({std::string(where), "label and index counts differ"});
    return out;
  }
  if (labels.empty()) {
    out.push_back({std::string(where), "episode has no frames"});
    return out;
  }
  int zeros = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      out.push_back({at(i), "label " + std::to_string(labels[i]) +
                                " is not 0 or 1"});
      continue;
    }
    if (labels[i] == 0) ++zeros;
    const int expected = i == 0 ? 0
                         : labels[i - 1] == 0 ? indices[i - 1] + 1
                                              : indices[i - 1];
    if (indices[i] != expected) {
      out.push_back({at(i), "subgoal index " + std::to_string(indices[i]) +
                                ", expected " + std::to_string(expected)});
    }
  }
  if (labels.back() != 0) {
    out.push_back({at(labels.size() - 1), "final frame is not labelled 0"});
  }
  if (zeros != num_subgoals) {
    out.push_back({std::string(where),
                   std::to_string(zeros) + " completion labels for " +
                       std::to_string(num_subgoals) + " subgoals"});
  }
  return out;
}

// --------------------------------------------------------------------- I/O

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

std::string SerializeEpisode(const Trajectory& trajectory) {
  std::string s;
  for (const auto& f : trajectory.frames) {
    const auto& p = f.observation.proprio;
    s += "{\"proprio\":[" + FormatDouble(p[0]) + "," + FormatDouble(p[1]) +
         "," + FormatDouble(p[2]) + "],\"cloud\":[";
    const auto& pts = f.observation.cloud.points;
    for (int i = 0; i < pts.rows(); ++i) {
      if (i > 0) s += ",";
      s += "[" + FormatDouble(pts(i, 0)) + "," + FormatDouble(pts(i, 1)) +
           "," + FormatDouble(pts(i, 2)) + "]";
    }
    s += "],\"action\":[" + FormatDouble(f.action.dx) + "," +
         FormatDouble(f.action.dy) + ",\"" +
         std::string(GripCommandName(f.action.grip)) +
         "\"],\"subgoal_index\":" + std::to_string(f.subgoal_index) +
         ",\"label\":" + std::to_string(f.label) + "}\n";
  }
  return s;
}

Trajectory ParseEpisode(std::string_view text, const DatasetManifest& manifest,
                        uint64_t seed) {
  Trajectory t;
  t.task_description = manifest.task_description;
  t.subgoals = manifest.subgoals;
  t.seed = seed;
  t.success = true;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      Frame f;
      const auto& p = j.at("proprio");
      f.observation.proprio =
          Eigen::Vector3d(p.at(0).get<double>(), p.at(1).get<double>(),
                          p.at(2).get<double>());
      const auto& cloud = j.at("cloud");
      f.observation.cloud.points.resize(static_cast<int>(cloud.size()), 3);
      for (size_t i = 0; i < cloud.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
          f.observation.cloud.points(static_cast<int>(i), c) =
              cloud.at(i).at(c).get<double>();
        }
      }
      const auto& a = j.at("action");
      f.action.dx = a.at(0).get<double>();
      f.action.dy = a.at(1).get<double>();
      const auto grip = ParseGripCommand(a.at(2).get<std::string>());
      if (!grip) throw LoadError("unknown grip command");
      f.action.grip = *grip;
      f.subgoal_index = j.at("subgoal_index").get<int>();
      f.label = j.at("label").get<int>();
      if (f.subgoal_index < 0 ||
          f.subgoal_index >= static_cast<int>(manifest.subgoals.size())) {
        throw LoadError("subgoal index out of range");
      }
      f.observation.task_description = manifest.task_description;
      f.observation.subgoal_description = manifest.subgoals[f.subgoal_index];
      t.frames.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw LoadError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const LoadError& e) {
      throw LoadError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return t;
}

namespace {

json ManifestToJson(const DatasetManifest& m) {
  json files = json::array();
  json seeds = json::array();
  json counts = json::array();
  for (const auto& f : m.files) {
    files.push_back({{"name", f.name},
                     {"digest", f.digest},
                     {"seed", f.seed},
                     {"frames", f.frames}});
    seeds.push_back(f.seed);
    counts.push_back(f.frames);
  }
  return {{"format_version", m.format_version},
          {"task", m.task},
          {"task_description", m.task_description},
          {"subgoals", m.subgoals},
          {"episode_count", m.episode_count},
          {"attempted", m.attempted},
          {"base_seed", m.base_seed},
          {"seeds", seeds},
          {"frame_counts", counts},
          {"files", files},
          {"config",
           {{"planner_noise_std", m.planner.noise_std},
            {"stuck_steps", m.planner.stuck_steps},
            {"cloud_points", kCloudPoints},
            {"cloud_jitter", kCloudJitter},
            {"max_step", kMaxStep},
            {"grasp_radius", kGraspRadius}}}};
}

DatasetManifest ManifestFromJson(const json& j) {
  DatasetManifest m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != kFormatVersion) {
    throw LoadError("unsupported dataset format_version " +
                    std::to_string(m.format_version));
  }
  m.task = j.at("task").get<std::string>();
  m.task_description = j.at("task_description").get<std::string>();
  m.subgoals = j.at("subgoals").get<std::vector<std::string>>();
  m.episode_count = j.at("episode_count").get<int>();
  m.attempted = j.at("attempted").get<int>();
  m.base_seed = j.at("base_seed").get<uint64_t>();
  for (const auto& f : j.at("files")) {
    m.files.push_back({f.at("name").get<std::string>(),
                       f.at("digest").get<std::string>(),
                       f.at("seed").get<uint64_t>(), f.at("frames").get<int>()});
  }
  const auto& cfg = j.at("config");
  m.planner.noise_std = cfg.at("planner_noise_std").get<double>();
  m.planner.stuck_steps = cfg.at("stuck_steps").get<int>();
  return m;
}

DatasetManifest ReadManifest(const fs::path& dir) {
  try {
    return ManifestFromJson(json::parse(ReadFile(dir / "manifest.json")));
  } catch (const json::exception& e) {
    throw LoadError("malformed manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace

DatasetManifest CollectDataset(const TaskSpec& task, int n_success,
                               uint64_t base_seed, const fs::path& out_dir,
                               const PlannerConfig& config) {
  if (n_success < 1) throw InputError("need at least one episode");
  fs::create_directories(out_dir);
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    const std::string name = entry.path().filename().string();
    if (name == "manifest.json" ||
        (name.rfind("episode_", 0) == 0 && entry.path().extension() == ".jsonl"))
      fs::remove(entry.path());
  }

  DatasetManifest m;
  m.task = std::string(TaskNameString(task.name));
  m.task_description = task.description;
  for (const auto& sg : task.subgoals) m.subgoals.push_back(sg.description);
  m.base_seed = base_seed;
  m.planner = config;
  const int budget = 50 * n_success;
  uint64_t seed = base_seed;
  while (m.episode_count < n_success) {
    if (m.attempted >= budget) {
      throw Error("planner kept " + std::to_string(m.episode_count) + " of " +
                  std::to_string(m.attempted) +
                  " episodes; seed budget exhausted");
    }
    Trajectory t = CollectEpisode(task, seed, config);
    ++m.attempted;
    if (t.success) {
      const std::string text = SerializeEpisode(t);
      EpisodeFile f;
      f.name = "episode_" + std::to_string(seed) + ".jsonl";
      f.digest = HexDigest(Fnv1a(text));
      f.seed = seed;
      f.frames = static_cast<int>(t.frames.size());
      WriteFile(out_dir / f.name, text);
      m.files.push_back(f);
      ++m.episode_count;
    }
    ++seed;
  }
  if (m.episode_count * 10 < m.attempted) {
    throw Error("planner success rate below 10% (" +
                std::to_string(m.episode_count) + "/" +
                std::to_string(m.attempted) + ")");
  }
  WriteFile(out_dir / "manifest.json", ManifestToJson(m).dump(2) + "\n");
  return m;
}

Dataset LoadDataset(const fs::path& dir) {
  Dataset d;
  d.manifest = ReadManifest(dir);
  if (static_cast<int>(d.manifest.files.size()) != d.manifest.episode_count) {
    throw LoadError("manifest episode_count does not match its file list");
  }
  for (const auto& f : d.manifest.files) {
    const std::string text = ReadFile(dir / f.name);
    if (HexDigest(Fnv1a(text)) != f.digest) {
      throw LoadError("digest mismatch for " + f.name);
    }
    Trajectory t = ParseEpisode(text, d.manifest, f.seed);
    if (static_cast<int>(t.frames.size()) != f.frames) {
      throw LoadError("frame count mismatch for " + f.name);
    }
    d.episodes.push_back(std::move(t));
  }
  return d;
}

std::vector<Violation> AuditDataset(const fs::path& dir) {
  std::vector<Violation> out;
  DatasetManifest m;
  try {
    m = ReadManifest(dir);
  } catch (const Error& e) {
    out.push_back({dir.string(), e.what()});
    return out;
  }
  if (static_cast<int>(m.files.size()) != m.episode_count) {
    out.push_back({"manifest.json", "episode_count does not match file list"});
  }
  const int n = static_cast<int>(m.subgoals.size());
  for (const auto& f : m.files) {
    std::string text;
    try {
      text = ReadFile(dir / f.name);
    } catch (const Error& e) {
      out.push_back({f.name, e.what()});
      continue;
    }
    if (HexDigest(Fnv1a(text)) != f.digest) {
      out.push_back({f.name, "digest mismatch"});
    }
    Trajectory t;
    try {
      t = ParseEpisode(text, m, f.seed);
    } catch (const Error& e) {
      out.push_back({f.name, e.what()});
      continue;
    }
    if (static_cast<int>(t.frames.size()) != f.frames) {
      out.push_back({f.name, "frame count differs from manifest"});
    }
    for (auto& v : AuditLabelSequence(t.Labels(), t.SubgoalIndices(), n,
                                      f.name)) {
      out.push_back(std::move(v));
    }
  }
  return out;
}

}  // namespace sgpolicy
