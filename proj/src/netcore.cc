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

#include "sgpolicy/netcore.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <utility>

namespace sgpolicy {

std::string HexDigest(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string FormatDouble(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string_view ActivationName(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      return "identity";
  }
  return "unknown";
}

// ---------------------------------------------------------------- ParamSet

size_t ParamSet::Add(std::string name, Matrix init) {
  if (Find(name)) throw ConfigError("duplicate parameter name: " + name);
  Param p;
  p.name = std::move(name);
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::optional<size_t> ParamSet::Find(std::string_view name) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

void ParamSet::ZeroGrad() {
  for (auto& p : params_) p.grad.setZero();
}

size_t ParamSet::NumScalars() const {
  size_t n = 0;
  for (const auto& p : params_) n += static_cast<size_t>(p.value.size());
  return n;
}

uint64_t ParamSet::Digest() const {
  uint64_t h = kFnvOffset;
  for (const auto& p : params_) {
    h = Fnv1a(p.name, h);
    const int64_t shape[2] = {p.value.rows(), p.value.cols()};
    h = Fnv1a(std::string_view(reinterpret_cast<const char*>(shape),
                               sizeof(shape)),
              h);
    h = Fnv1a(std::string_view(reinterpret_cast<const char*>(p.value.data()),
                               sizeof(double) * p.value.size()),
              h);
  }
  return h;
}

void ParamSet::CheckFinite() const {
  for (const auto& p : params_) {
    if (!p.value.allFinite()) {
      throw NumericError("non-finite value in parameter " + p.name);
    }
  }
}

// ----------------------------------------------------------------- MlpSpec

void MlpSpec::Validate() const {
  if (input_width <= 0) throw ConfigError("mlp input width must be positive");
  if (layer_widths.empty()) throw ConfigError("mlp needs at least one layer");
  if (activations.size() != layer_widths.size()) {
    throw ConfigError("mlp needs one activation per layer");
  }
  for (int w : layer_widths) {
    if (w <= 0) throw ConfigError("mlp layer widths must be positive");
  }
  const int num_hidden = static_cast<int>(layer_widths.size()) - 1;
  for (int l : film_layers) {
    if (l < 0 || l >= num_hidden) {
      throw ConfigError("film layer index " + std::to_string(l) +
                        " is not a hidden layer");
    }
  }
  if (!film_layers.empty() && film_width <= 0) {
    throw ConfigError("film layers need a positive conditioning width");
  }
}

Matrix GlorotUniform(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  // row-major fill order keeps the draw sequence independent of storage
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.Uniform(-limit, limit);
  }
  return m;
}

// --------------------------------------------------------------------- Mlp

namespace {

void ApplyActivation(Activation a, Matrix& m) {
  switch (a) {
    case Activation::kRelu:
      m = m.cwiseMax(0.0);
      break;
    case Activation::kTanh:
      m = m.array().tanh().matrix();
      break;
    case Activation::kIdentity:
      break;
  }
}

// multiplies `grad` in place by the activation derivative at `pre`
void ActivationBackward(Activation a, const Matrix& pre, Matrix& grad) {
  switch (a) {
    case Activation::kRelu:
      grad = (pre.array() > 0.0).select(grad, 0.0);
      break;
    case Activation::kTanh:
      grad.array() *= 1.0 - pre.array().tanh().square();
      break;
    case Activation::kIdentity:
      break;
  }
}

}  // namespace

Mlp::Mlp(MlpSpec spec, std::string_view prefix, ParamSet& params, Rng& rng)
    : spec_(std::move(spec)) {
  spec_.Validate();
  int in = spec_.input_width;
  const std::string base(prefix);
  for (size_t l = 0; l < spec_.layer_widths.size(); ++l) {
    const int out = spec_.layer_widths[l];
    const std::string tag = base + ".l" + std::to_string(l);
    Layer layer;
    layer.weight = params.Add(tag + ".w", GlorotUniform(out, in, rng));
    layer.bias = params.Add(tag + ".b", Matrix::Zero(out, 1));
    if (spec_.film_layers.count(static_cast<int>(l))) {
      layer.film_weight =
          params.Add(tag + ".film_w", Matrix::Zero(2 * out, spec_.film_width));
      layer.film_bias = params.Add(tag + ".film_b", Matrix::Zero(2 * out, 1));
    }
    layers_.push_back(layer);
    in = out;
  }
}

Matrix Mlp::Forward(const ParamSet& params, const Matrix& input,
                    const Matrix* film, MlpCache* cache) const {
  if (input.rows() != spec_.input_width) {
    throw ConfigError("mlp input has " + std::to_string(input.rows()) +
                      " rows, expected " + std::to_string(spec_.input_width));
  }
  const bool uses_film = !spec_.film_layers.empty();
  if (uses_film != (film != nullptr)) {
    throw ConfigError(uses_film ? "mlp with FiLM layers needs a film signal"
                                : "film signal given to an mlp without FiLM");
  }
  if (film != nullptr &&
      (film->rows() != spec_.film_width || film->cols() != input.cols())) {
    throw ConfigError("film signal shape does not match the mlp spec");
  }
  if (cache != nullptr) {
    *cache = MlpCache();
    if (film != nullptr) cache->film = *film;
  }

  Matrix h = input;
  for (size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    Matrix linear = params[layer.weight].value * h;
    linear.colwise() += params[layer.bias].value.col(0);
    Matrix pre;
    Matrix scale;
    if (layer.film_weight) {
      const int w = spec_.layer_widths[l];
      Matrix proj = params[*layer.film_weight].value * (*film);
      proj.colwise() += params[*layer.film_bias].value.col(0);
      scale = proj.topRows(w).array() + 1.0;
      pre = scale.cwiseProduct(linear) + proj.bottomRows(w);
    } else {
      pre = linear;
    }
    Matrix out = pre;
    ApplyActivation(spec_.activations[l], out);
    if (cache != nullptr) {
      cache->inputs.push_back(std::move(h));
      cache->linear.push_back(std::move(linear));
      cache->film_scale.push_back(std::move(scale));
      cache->pre_act.push_back(std::move(pre));
    }
    h = std::move(out);
  }
  if (cache != nullptr) cache->valid = true;
  return h;
}

MlpGrads Mlp::Backward(ParamSet& params, const MlpCache& cache,
                       const Matrix& output_grad) const {
  if (!cache.valid || cache.inputs.size() != layers_.size()) {
    throw UsageError("mlp backward called without a cached forward pass");
  }
  if (output_grad.rows() != output_width() ||
      output_grad.cols() != cache.inputs.front().cols()) {
    throw ConfigError("mlp output gradient shape mismatch");
  }
  MlpGrads grads;
  if (!spec_.film_layers.empty()) {
    grads.film = Matrix::Zero(spec_.film_width, cache.film.cols());
  }
  Matrix g = output_grad;
  for (size_t i = layers_.size(); i-- > 0;) {
    const Layer& layer = layers_[i];
    ActivationBackward(spec_.activations[i], cache.pre_act[i], g);
    Matrix d_linear;
    if (layer.film_weight) {
      const int w = spec_.layer_widths[i];
      Matrix d_proj(2 * w, g.cols());
      d_proj.topRows(w) = g.cwiseProduct(cache.linear[i]);
      d_proj.bottomRows(w) = g;
      d_linear = g.cwiseProduct(cache.film_scale[i]);
      Param& fw = params[*layer.film_weight];
      fw.grad.noalias() += d_proj * cache.film.transpose();
      params[*layer.film_bias].grad += d_proj.rowwise().sum();
      grads.film.noalias() += fw.value.transpose() * d_proj;
    } else {
      d_linear = std::move(g);
    }
    Param& weight = params[layer.weight];
    weight.grad.noalias() += d_linear * cache.inputs[i].transpose();
    params[layer.bias].grad += d_linear.rowwise().sum();
    g = weight.value.transpose() * d_linear;
  }
  grads.input = std::move(g);
  return grads;
}

// ------------------------------------------------------- PointCloudEncoder

PointCloudEncoder::PointCloudEncoder(const std::vector<int>& widths,
                                     std::string_view prefix, ParamSet& params,
                                     Rng& rng) {
  MlpSpec spec;
  spec.input_width = 3;
  spec.layer_widths = widths;
  spec.activations.assign(widths.size(), Activation::kRelu);
  mlp_ = Mlp(std::move(spec), prefix, params, rng);
}

Matrix PointCloudEncoder::Forward(const ParamSet& params,
                                  std::span<const PointCloud* const> clouds,
                                  PointEncoderCache* cache) const {
  std::vector<int> offsets(clouds.size() + 1, 0);
  for (size_t b = 0; b < clouds.size(); ++b) {
    const PointCloud& cloud = *clouds[b];
    if (cloud.size() < 1) throw InputError("point cloud is empty");
    if (!cloud.points.allFinite()) {
      throw InputError("point cloud has non-finite coordinates");
    }
    offsets[b + 1] = offsets[b] + cloud.size();
  }
  Matrix stacked(3, offsets.back());
  for (size_t b = 0; b < clouds.size(); ++b) {
    stacked.middleCols(offsets[b], clouds[b]->size()) =
        clouds[b]->points.transpose();
  }
  MlpCache* mlp_cache = cache != nullptr ? &cache->mlp : nullptr;
  const Matrix features = mlp_.Forward(params, stacked, nullptr, mlp_cache);

  const int width = output_width();
  const int batch = static_cast<int>(clouds.size());
  Matrix pooled(width, batch);
  Eigen::MatrixXi argmax(width, batch);
  for (int b = 0; b < batch; ++b) {
    for (int j = 0; j < width; ++j) {
      int best = offsets[b];
      double value = features(j, best);
      for (int c = offsets[b] + 1; c < offsets[b + 1]; ++c) {
        if (features(j, c) > value) {
          value = features(j, c);
          best = c;
        }
      }
      pooled(j, b) = value;
      argmax(j, b) = best;
    }
  }
  if (cache != nullptr) {
    cache->argmax = std::move(argmax);
    cache->offsets = std::move(offsets);
    cache->valid = true;
  }
  return pooled;
}

void PointCloudEncoder::Backward(ParamSet& params,
                                 const PointEncoderCache& cache,
                                 const Matrix& output_grad) const {
  if (!cache.valid) {
    throw UsageError("encoder backward called without a cached forward pass");
  }
  Matrix point_grad = Matrix::Zero(output_width(), cache.offsets.back());
  for (int b = 0; b < output_grad.cols(); ++b) {
    for (int j = 0; j < output_grad.rows(); ++j) {
      point_grad(j, cache.argmax(j, b)) += output_grad(j, b);
    }
  }
  mlp_.Backward(params, cache.mlp, point_grad);
}

Vector EncodePointCloud(const ParamSet& params,
                        const PointCloudEncoder& encoder,
                        const PointCloud& cloud) {
  const PointCloud* ptr = &cloud;
  return encoder.Forward(params, std::span<const PointCloud* const>(&ptr, 1),
                         nullptr)
      .col(0);
}

// ----------------------------------------------------------- EmbedText

TextEmbedding EmbedText(std::string_view text, int dim) {
  if (text.empty()) throw InputError("cannot embed an empty string");
  if (dim <= 0) throw ConfigError("embedding dimension must be positive");
  uint64_t state = Fnv1a(text) ^ static_cast<uint64_t>(dim);
  Vector v(dim);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (int i = 0; i < dim; ++i) {
      state = Mix64(state);
      // 53-bit uniform in [-1, 1): exact on every IEEE platform
      v[i] = static_cast<double>(state >> 11) * 0x1.0p-52 - 1.0;
      norm2 += v[i] * v[i];
    }
  } while (norm2 == 0.0);
  TextEmbedding out;
  out.vector = v / std::sqrt(norm2);
  out.source = std::string(text);
  return out;
}

}  // namespace sgpolicy
