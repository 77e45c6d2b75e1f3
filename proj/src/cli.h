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

#ifndef SGPOLICY_CLI_H_
#define SGPOLICY_CLI_H_

#include <map>
#include <string>
#include <string_view>

namespace sgpolicy {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsageError = 2;

// "key = value" lines; '#' starts a comment. Throws UsageError on
// malformed lines.
std::map<std::string, std::string> ParseConfigText(std::string_view text);

// Entry point of the command-line tool; returns the process exit code.
int RunCli(int argc, char** argv);

}  // namespace sgpolicy

#endif  // SGPOLICY_CLI_H_
