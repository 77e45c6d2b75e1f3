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

// Differentiable building blocks: dense layers with FiLM modulation, a
// permutation-invariant point-cloud encoder and a deterministic text
// embedding. Batches are stored column-major: one column per sample.

#ifndef SGPOLICY_NETCORE_H_
#define SGPOLICY_NETCORE_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sgpolicy/common.h"

namespace sgpolicy {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { kRelu, kTanh, kIdentity };

std::string_view ActivationName(Activation a);

// A learnable tensor and its gradient accumulator.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Ordered, name-addressable collection of parameters. Layers refer to their
// parameters by index so that models stay copyable values.
class ParamSet {
 public:
  // registers a parameter; names must be unique
  size_t Add(std::string name, Matrix init);

  Param& operator[](size_t i) { return params_[i]; }
  const Param& operator[](size_t i) const { return params_[i]; }
  size_t size() const { return params_.size(); }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  std::optional<size_t> Find(std::string_view name) const;

  void ZeroGrad();

  // total number of scalar values
  size_t NumScalars() const;

  // digest over names, shapes and the exact bit patterns of all values
  uint64_t Digest() const;

  // throws NumericError naming the first parameter with a non-finite value
  void CheckFinite() const;

 private:
  std::vector<Param> params_;
};

// layer_widths[l] is the output width of layer l. film_layers holds indices
// of hidden layers (never the output layer) whose pre-activations are
// modulated by the conditioning signal.
struct MlpSpec {
  int input_width = 0;
  std::vector<int> layer_widths;
  std::vector<Activation> activations;
  std::set<int> film_layers;
  int film_width = 0;

  void Validate() const;
};

// Intermediate values recorded by a forward pass, consumed by Backward.
struct MlpCache {
  std::vector<Matrix> inputs;      // input of each layer
  std::vector<Matrix> linear;      // W h + b
  std::vector<Matrix> film_scale;  // 1 + residual, FiLM layers only
  std::vector<Matrix> pre_act;     // after modulation
  Matrix film;
  bool valid = false;
};

struct MlpGrads {
  Matrix input;
  Matrix film;  // empty when the net has no FiLM layers
};

class Mlp {
 public:
  Mlp() = default;

  // Registers weights under `prefix` in `params`. Dense weights use uniform
  // Glorot init, biases start at zero and FiLM projections start at zero so
  // that modulation is initially the identity.
  Mlp(MlpSpec spec, std::string_view prefix, ParamSet& params, Rng& rng);

  const MlpSpec& spec() const { return spec_; }
  int output_width() const { return spec_.layer_widths.back(); }

  // `film` must be given iff the spec has FiLM layers. With a non-null
  // cache, activations are recorded for Backward.
  Matrix Forward(const ParamSet& params, const Matrix& input,
                 const Matrix* film, MlpCache* cache) const;

  // Accumulates (+=) parameter gradients and returns gradients with respect
  // to the input and the FiLM signal.
  MlpGrads Backward(ParamSet& params, const MlpCache& cache,
                    const Matrix& output_grad) const;

 private:
  struct Layer {
    size_t weight = 0;
    size_t bias = 0;
    std::optional<size_t> film_weight;  // (2 * width) x film_width
    std::optional<size_t> film_bias;    // (2 * width) x 1
  };

  MlpSpec spec_;
  std::vector<Layer> layers_;
};

// N x 3 coordinates. The third coordinate is zero in the planar environment.
struct PointCloud {
  Eigen::MatrixX3d points;

  int size() const { return static_cast<int>(points.rows()); }
};

struct PointEncoderCache {
  MlpCache mlp;
  Eigen::MatrixXi argmax;  // d_pc x batch, global point column of each max
  std::vector<int> offsets;
  bool valid = false;
};

// Shared per-point MLP followed by coordinatewise max pooling over points.
class PointCloudEncoder {
 public:
  PointCloudEncoder() = default;
  PointCloudEncoder(const std::vector<int>& widths, std::string_view prefix,
                    ParamSet& params, Rng& rng);

  int output_width() const { return mlp_.output_width(); }

  // returns output_width() x clouds.size()
  Matrix Forward(const ParamSet& params,
                 std::span<const PointCloud* const> clouds,
                 PointEncoderCache* cache) const;

  // Routes each pooled gradient to the point that attained the maximum
  // (first such point on ties).
  void Backward(ParamSet& params, const PointEncoderCache& cache,
                const Matrix& output_grad) const;

 private:
  Mlp mlp_;
};

Vector EncodePointCloud(const ParamSet& params,
                        const PointCloudEncoder& encoder,
                        const PointCloud& cloud);

struct TextEmbedding {
  Vector vector;
  std::string source;
};

// Pseudorandom unit vector seeded by a hash of `text`; a pure function of
// (text, dim) on every platform.
TextEmbedding EmbedText(std::string_view text, int dim);

Matrix GlorotUniform(int rows, int cols, Rng& rng);

}  // namespace sgpolicy

#endif  // SGPOLICY_NETCORE_H_
