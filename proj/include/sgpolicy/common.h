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

#ifndef SGPOLICY_COMMON_H_
#define SGPOLICY_COMMON_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sgpolicy {

inline constexpr int kFormatVersion = 1;

// Error hierarchy. The CLI maps UsageError to exit code 2 and every other
// Error to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// inconsistent dimensions or hyperparameters
class ConfigError : public Error {
 public:
  using Error::Error;
};

// invalid argument values (empty strings, out-of-range indices, ...)
class InputError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward without a cached forward pass
class UsageError : public Error {
 public:
  using Error::Error;
};

// non-finite values produced during sampling or training
class NumericError : public Error {
 public:
  using Error::Error;
};

// unreadable, corrupt or incompatible files
class LoadError : public Error {
 public:
  using Error::Error;
};

// 64-bit FNV-1a. Used for file digests and string seeding; stable across
// platforms and processes.
inline constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

inline uint64_t Fnv1a(std::string_view bytes, uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

// splitmix64 finalizer, used to derive independent stream seeds
inline uint64_t Mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t DeriveSeed(uint64_t a, uint64_t b) {
  return Mix64(Mix64(a) ^ (b + 0x632be59bd9b4e019ULL));
}

std::string HexDigest(uint64_t h);

// Seeded generator. The engine is std::mt19937_64, whose output sequence is
// fixed by the standard; the real-valued draws are computed here rather than
// through <random> distributions, whose algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }

  // uniform in [0, 1)
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // uniform integer in [0, n)
  uint64_t Below(uint64_t n) { return n == 0 ? 0 : engine_() % n; }

  // standard normal via Box-Muller
  double Normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = Uniform();
    } while (u1 <= 0.0);
    const double u2 = Uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// decimal with 17 significant digits; round-trips every finite double
std::string FormatDouble(double value);

}  // namespace sgpolicy

#endif  // SGPOLICY_COMMON_H_
