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


#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "cli.h"
#include "doctest.h"
#include "sgpolicy/demogen.h"
#include "support/fixtures.h"

namespace sgpolicy {
namespace {

namespace fs = std::filesystem;

int Run(const std::string& args) {
  const std::string cmd =
      std::string(SGPOLICY_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string Q(const fs::path& p) { return "'" + p.string() + "'"; }

TEST_CASE("config text parsing") {
  const auto m = ParseConfigText("# comment\nepochs = 12\n--seed=4  # x\n\n");
  CHECK(m.size() == 2);
  CHECK(m.at("epochs") == "12");
  CHECK(m.at("seed") == "4");
  CHECK_THROWS_AS(ParseConfigText("epochs 12\n"), UsageError);
  CHECK_THROWS_AS(ParseConfigText(" = 3\n"), UsageError);
}

TEST_CASE("usage errors exit with 2") {
  const fs::path dir = testing::TempDir("cli_usage");
  CHECK(Run("") == kExitUsageError);
  CHECK(Run("frobnicate") == kExitUsageError);
  CHECK(Run("collect --task pick_place --episodes 0 --out " + Q(dir / "d")) ==
        kExitUsageError);
  CHECK(Run("collect --task nope --out " + Q(dir / "d")) == kExitUsageError);
  CHECK(Run("collect --task pick_place") == kExitUsageError);
  CHECK(Run("audit") == kExitUsageError);
  CHECK(Run("--help") == kExitOk);
  WriteFile(dir / "bad.cfg", "no_such_key = 1\n");
  CHECK(Run("--config " + Q(dir / "bad.cfg") +
            " collect --task pick_place --out " + Q(dir / "d")) ==
        kExitUsageError);
  CHECK(Run("--config " + Q(dir / "missing.cfg") +
            " collect --task pick_place --out " + Q(dir / "d")) ==
        kExitUsageError);
}

TEST_CASE("collect, train, eval, trace and audit end to end") {
  const fs::path dir = testing::TempDir("cli_e2e");
  const fs::path data = dir / "data";
  WriteFile(dir / "c.cfg", "task = pick_place\nepisodes = 5\nseed = 3\n");
  // the flag overrides the file
  REQUIRE(Run("--config " + Q(dir / "c.cfg") + " collect --episodes 2 --out " +
              Q(data)) == kExitOk);
  CHECK(ReadFile(data / "manifest.json").find("\"episode_count\": 2") !=
        std::string::npos);
  CHECK(ReadFile(data / "manifest.json").find("\"base_seed\": 3") !=
        std::string::npos);
  CHECK(fs::exists(data / "collect_config.json"));
  CHECK(Run("audit --data " + Q(data)) == kExitOk);

  const fs::path model = dir / "m.ckpt";
  REQUIRE(Run("train --data " + Q(data) + " --out " + Q(model) +
              " --epochs 1 --diffusion-steps 5 --metrics " +
              Q(dir / "metrics.jsonl")) == kExitOk);
  CHECK(fs::exists(model));
  CHECK(ReadFile(dir / "metrics.jsonl").find("\"l_action\"") !=
        std::string::npos);

  CHECK(Run("eval --model " + Q(model) +
            " --episodes 1 --subgoal-timeout 5 --report " +
            Q(dir / "r.jsonl")) == kExitOk);
  CHECK(fs::exists(dir / "r.jsonl"));
  CHECK(Run("eval --model " + Q(model) + " --task slide_push --episodes 1") ==
        kExitDomainError);
  CHECK(Run("eval --model " + Q(model) + " --threshold 2") == kExitUsageError);
  CHECK(Run("eval --model " + Q(dir / "none.ckpt")) == kExitDomainError);

  const fs::path trace = dir / "t.jsonl";
  REQUIRE(Run("trace --model " + Q(model) + " --subgoal-timeout 5 --out " +
              Q(trace)) == kExitOk);
  CHECK(Run("audit --trace " + Q(trace)) == kExitOk);
  CHECK(Run("audit --trace " + Q(trace) + " --data " + Q(data)) ==
        kExitUsageError);

  // a flipped label fails the audit
  std::string name;
  for (const auto& e : fs::directory_iterator(data)) {
    if (e.path().extension() == ".jsonl") name = e.path().filename().string();
  }
  REQUIRE_FALSE(name.empty());
  std::string text = ReadFile(data / name);
  const size_t pos = text.find("\"label\":0");
  REQUIRE(pos != std::string::npos);
  text[pos + 8] = '1';
  WriteFile(data / name, text);
  CHECK(Run("audit --data " + Q(data)) == kExitDomainError);
}

}  // namespace
}  // namespace sgpolicy
