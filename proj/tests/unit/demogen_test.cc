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


#include <filesystem>

#include "doctest.h"
#include "sgpolicy/demogen.h"
#include "support/fixtures.h"

namespace sgpolicy {
namespace {

namespace fs = std::filesystem;

const TaskName kTasks[] = {TaskName::kPickPlace, TaskName::kSlidePush,
                           TaskName::kDrawerOpenPlace};

TEST_CASE("labels from segments") {
  CHECK(LabelsFromSegments({3, 2}) == std::vector<int>{1, 1, 0, 1, 0});
  CHECK(LabelsFromSegments({1, 1, 1}) == std::vector<int>{0, 0, 0});
  CHECK(LabelsFromSegments({}).empty());
  CHECK_THROWS_AS(LabelsFromSegments({2, 0}), InputError);
}

TEST_CASE("label audit accepts the pattern and rejects mutations") {
  const std::vector<int> labels = {1, 1, 0, 1, 0, 0};
  const std::vector<int> idx = {0, 0, 0, 1, 1, 2};
  CHECK(AuditLabelSequence(labels, idx, 3, "ep").empty());
  for (size_t i = 0; i < labels.size(); ++i) {
    std::vector<int> flipped = labels;
    flipped[i] = 1 - flipped[i];
    const auto v = AuditLabelSequence(flipped, idx, 3, "ep");
    CHECK_FALSE(v.empty());
  }
  CHECK_FALSE(AuditLabelSequence({1, 2, 0}, {0, 0, 0}, 1, "ep").empty());
  CHECK_FALSE(AuditLabelSequence({1, 0}, {0}, 1, "ep").empty());
  CHECK_FALSE(AuditLabelSequence({}, {}, 0, "ep").empty());
  const auto v = AuditLabelSequence({1, 0, 1, 1}, {0, 0, 1, 1}, 2, "ep");
  REQUIRE_FALSE(v.empty());
  CHECK(v.front().location.find("frame 3") != std::string::npos);
}

TEST_CASE("scripted labels agree with a replay of the environment") {
  for (TaskName name : kTasks) {
    const TaskSpec task = MakeTask(name);
    for (uint64_t seed = 0; seed < 20; ++seed) {
      const Trajectory t = CollectEpisode(task, seed);
      if (!t.success) continue;
      CHECK(AuditLabelSequence(t.Labels(), t.SubgoalIndices(),
                               task.num_subgoals(), "replay")
                .empty());
      WorldState s = ResetState(task, seed);
      for (const Frame& f : t.frames) {
        const Observation obs = Observe(task, s, f.subgoal_index, seed);
        CHECK((obs.cloud.points - f.observation.cloud.points).norm() == 0.0);
        s = StepState(task, s, f.action);
        CHECK(CheckSubgoal(task, f.subgoal_index, s) == (f.label == 0));
      }
      CHECK(CheckSuccess(task, s));
    }
  }
}

TEST_CASE("planner moves obey the step limit") {
  const TaskSpec task = MakeTask(TaskName::kDrawerOpenPlace);
  const Trajectory t = CollectEpisode(task, 3);
  for (const Frame& f : t.frames) {
    CHECK(std::abs(f.action.dx) <= kMaxStep);
    CHECK(std::abs(f.action.dy) <= kMaxStep);
  }
  Rng rng(1);
  CHECK_THROWS_AS(PlanSubgoalAction(task, 7, ResetState(task, 1), rng), InputError);
}

TEST_CASE("episode serialization round-trips") {
  const TaskSpec task = MakeTask(TaskName::kSlidePush);
  const Trajectory t = CollectEpisode(task, 2);
  DatasetManifest m;
  m.task_description = task.description;
  for (const auto& s : task.subgoals) m.subgoals.push_back(s.description);
  const std::string text = SerializeEpisode(t);
  const Trajectory back = ParseEpisode(text, m, 2);
  REQUIRE(back.frames.size() == t.frames.size());
  for (size_t i = 0; i < t.frames.size(); ++i) {
    CHECK((back.frames[i].observation.cloud.points -
           t.frames[i].observation.cloud.points).norm() == 0.0);
    CHECK(back.frames[i].observation.proprio == t.frames[i].observation.proprio);
    CHECK(back.frames[i].action.dx == t.frames[i].action.dx);
    CHECK(back.frames[i].action.grip == t.frames[i].action.grip);
    CHECK(back.frames[i].label == t.frames[i].label);
  }
  CHECK(SerializeEpisode(back) == text);
  CHECK_THROWS_AS(ParseEpisode("{\"proprio\":[1,2]}\n", m, 2), LoadError);
  CHECK_THROWS_AS(ParseEpisode("not json\n", m, 2), LoadError);
}

TEST_CASE("collection is byte-identical and audits clean") {
  for (TaskName name : kTasks) {
    const TaskSpec task = MakeTask(name);
    const fs::path a = testing::TempDir("collect_a");
    const fs::path b = testing::TempDir("collect_b");
    const DatasetManifest ma = CollectDataset(task, 5, 40, a);
    const DatasetManifest mb = CollectDataset(task, 5, 40, b);
    CHECK(ma.episode_count == 5);
    CHECK(ReadFile(a / "manifest.json") == ReadFile(b / "manifest.json"));
    for (const auto& f : ma.files) {
      CHECK(ReadFile(a / f.name) == ReadFile(b / f.name));
    }
    CHECK(AuditDataset(a).empty());
    const Dataset d = LoadDataset(a);
    CHECK(d.episodes.size() == 5);
    CHECK(d.manifest.subgoals.size() == static_cast<size_t>(task.num_subgoals()));
  }
}

TEST_CASE("recollection replaces stale episode files") {
  const TaskSpec task = MakeTask(TaskName::kPickPlace);
  const fs::path dir = testing::TempDir("collect_stale");
  CollectDataset(task, 4, 0, dir);
  CollectDataset(task, 2, 100, dir);
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".jsonl") ++files;
  }
  CHECK(files == 2);
  CHECK(AuditDataset(dir).empty());
}

TEST_CASE("audit localises a flipped label and tampering breaks loading") {
  const TaskSpec task = MakeTask(TaskName::kPickPlace);
  const fs::path dir = testing::TempDir("collect_tamper");
  const DatasetManifest m = CollectDataset(task, 3, 0, dir);
  const fs::path victim = dir / m.files[1].name;
  std::string text = ReadFile(victim);
  const size_t pos = text.find("\"label\":1");
  REQUIRE(pos != std::string::npos);
  text[pos + 8] = '0';
  WriteFile(victim, text);
  const auto v = AuditDataset(dir);
  REQUIRE_FALSE(v.empty());
  bool located = false;
  for (const auto& x : v) {
    if (x.location.find(m.files[1].name + ":frame 1") != std::string::npos) {
      located = true;
    }
  }
  CHECK(located);
  CHECK_THROWS_AS(LoadDataset(dir), LoadError);
  CHECK_THROWS_AS(LoadDataset(dir / "missing"), LoadError);
}

TEST_CASE("collection aborts when the planner cannot succeed") {
  TaskOptions opt;
  opt.unreachable_handle = true;
  const TaskSpec task = MakeTask(TaskName::kDrawerOpenPlace, opt);
  const fs::path dir = testing::TempDir("collect_fail");
  CHECK_THROWS_AS(CollectDataset(task, 1, 0, dir), Error);
  CHECK_FALSE(fs::exists(dir / "manifest.json"));
}

}  // namespace
}  // namespace sgpolicy
