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


#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sgpolicy/demogen.h"
#include "sgpolicy/diffusion.h"
#include "sgpolicy/policy.h"
#include "sgpolicy/runtime.h"
#include "sgpolicy/trainer.h"

namespace py = pybind11;

namespace sgpolicy {
namespace {

TaskSpec Task(const std::string& name, bool unreachable_handle) {
  const auto t = ParseTaskName(name);
  if (!t) throw InputError("unknown task '" + name + "'");
  TaskOptions opt;
  opt.unreachable_handle = unreachable_handle;
  return MakeTask(*t, opt);
}

py::dict ReportDict(const EvalReport& r) {
  py::dict d;
  d["episodes"] = r.episodes;
  d["successes"] = r.successes;
  d["success_rate"] = r.success_rate;
  d["mean_steps"] = r.mean_steps;
  d["stalls"] = r.stalls;
  d["failure_histogram"] = r.failure_histogram;
  return d;
}

py::list ViolationList(const std::vector<Violation>& v) {
  py::list out;
  for (const auto& x : v) out.append(py::make_tuple(x.location, x.message));
  return out;
}

}  // namespace
}  // namespace sgpolicy

PYBIND11_MODULE(_core, m) {
  using namespace sgpolicy;
  m.doc() = "Subgoal-conditioned diffusion policy core";

  py::register_exception<LoadError>(m, "LoadError", PyExc_IOError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("tasks", [] {
    return std::vector<std::string>{"pick_place", "slide_push",
                                    "drawer_open_place"};
  });
  m.def(
      "subgoals",
      [](const std::string& task) {
        std::vector<std::string> out;
        for (const auto& s : Task(task, false).subgoals) {
          out.push_back(s.description);
        }
        return out;
      },
      py::arg("task"));

  m.def("focal_loss",
        [](double p, int y, double beta, double gamma) {
          FocalConfig c;
          c.beta = beta;
          c.gamma = gamma;
          return FocalLoss(c, p, y).loss;
        },
        py::arg("p"), py::arg("y"), py::arg("beta") = 0.25,
        py::arg("gamma") = 2.0);
  m.def("alpha_bar",
        [](int steps, double beta_start, double beta_end) {
          return BuildSchedule(steps, beta_start, beta_end).alpha_bar;
        },
        py::arg("steps") = 50, py::arg("beta_start") = 1e-4,
        py::arg("beta_end") = 0.02);
  m.def("labels_from_segments", &LabelsFromSegments, py::arg("lengths"));
  m.def("threshold_advance_times", &ThresholdAdvanceTimes, py::arg("scores"),
        py::arg("tau"));

  m.def(
      "collect",
      [](const std::string& task, int episodes, uint64_t seed,
         const std::filesystem::path& out) {
        py::gil_scoped_release release;
        return CollectDataset(Task(task, false), episodes, seed, out)
            .episode_count;
      },
      py::arg("task"), py::arg("episodes"), py::arg("seed"), py::arg("out"));
  m.def(
      "audit_dataset",
      [](const std::filesystem::path& dir) {
        return ViolationList(AuditDataset(dir));
      },
      py::arg("dir"));
  m.def(
      "audit_trace",
      [](const std::filesystem::path& path) {
        const EpisodeTrace t = ReadTrace(path);
        return ViolationList(
            AuditTrace(t, Task(t.task, false).num_subgoals(), path.string()));
      },
      py::arg("path"));

  m.def(
      "train",
      [](const std::filesystem::path& data, const std::filesystem::path& out,
         int epochs, uint64_t seed, bool ablate,
         std::vector<int> point_widths, std::vector<int> hidden,
         int diffusion_steps) {
        py::gil_scoped_release release;
        TrainConfig tc;
        tc.epochs = epochs;
        tc.seed = seed;
        tc.ablate_subgoal = ablate;
        PolicyConfig pc;
        pc.init_seed = seed;
        if (!point_widths.empty()) pc.point_widths = point_widths;
        if (!hidden.empty()) pc.denoiser_hidden = hidden;
        pc.diffusion_steps = diffusion_steps;
        const Checkpoint ckpt = Train(data, tc, pc);
        SaveCheckpoint(out, ckpt);
        return ckpt.history.back().loss.l_total;
      },
      py::arg("data"), py::arg("out"), py::arg("epochs") = 500,
      py::arg("seed") = 0, py::arg("ablate") = false,
      py::arg("point_widths") = std::vector<int>{},
      py::arg("hidden") = std::vector<int>{}, py::arg("diffusion_steps") = 50);

  m.def(
      "evaluate",
      [](const std::filesystem::path& model, int episodes, uint64_t seed,
         bool oracle, double tau, int subgoal_timeout,
         bool unreachable_handle, std::string task) {
        py::gil_scoped_release release;
        const Checkpoint ckpt = LoadCheckpoint(model);
        RuntimeConfig c;
        c.oracle_completion = oracle;
        c.tau = tau;
        c.subgoal_timeout = subgoal_timeout;
        if (task.empty()) task = ckpt.task;
        const EvalReport r =
            Evaluate(ckpt, Task(task, unreachable_handle), episodes, c, seed);
        py::gil_scoped_acquire acquire;
        return ReportDict(r);
      },
      py::arg("model"), py::arg("episodes") = 20, py::arg("seed") = 1000,
      py::arg("oracle") = false, py::arg("tau") = 0.2,
      py::arg("subgoal_timeout") = 100, py::arg("unreachable_handle") = false,
      py::arg("task") = "");

  m.def(
      "trace",
      [](const std::filesystem::path& model, const std::filesystem::path& out,
         uint64_t episode_seed, bool oracle, int subgoal_timeout) {
        py::gil_scoped_release release;
        const Checkpoint ckpt = LoadCheckpoint(model);
        RuntimeConfig c;
        c.oracle_completion = oracle;
        c.subgoal_timeout = subgoal_timeout;
        const EpisodeTrace t =
            RunEpisode(ckpt, Task(ckpt.task, false), c, episode_seed);
        EmitTrace(t, out);
        return t.success;
      },
      py::arg("model"), py::arg("out"), py::arg("episode_seed") = 1000,
      py::arg("oracle") = false, py::arg("subgoal_timeout") = 100);
}
