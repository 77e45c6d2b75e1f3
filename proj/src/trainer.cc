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

#include "sgpolicy/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>

#include "json.hpp"

namespace sgpolicy {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::Validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 &&
        adam_beta2 < 1.0 && adam_epsilon > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  if (!(lambda_max >= 0.0)) throw ConfigError("lambda_max must be >= 0");
  focal.Validate();
}

Eigen::RowVector3d EncodeAction(const EnvAction& action) {
  double grip = 0.0;
  if (action.grip == GripCommand::kOpen) grip = -1.0;
  if (action.grip == GripCommand::kClose) grip = 1.0;
  return Eigen::RowVector3d(action.dx / kMaxStep, action.dy / kMaxStep, grip);
}

EnvAction DecodeAction(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  if (row.size() < 3) throw InputError("action row needs three entries");
  EnvAction a;
  a.dx = std::clamp(row[0], -1.0, 1.0) * kMaxStep;
  a.dy = std::clamp(row[1], -1.0, 1.0) * kMaxStep;
  a.grip = row[2] > 0.5    ? GripCommand::kClose
           : row[2] < -0.5 ? GripCommand::kOpen
                           : GripCommand::kHold;
  return a;
}

std::vector<TrainSample> MakeSamples(const std::vector<Trajectory>& episodes,
                                     int history, int horizon, int text_dim) {
  if (history < 1 || horizon < 1) {
    throw ConfigError("history and horizon must be >= 1");
  }
  size_t total = 0;
  for (const auto& e : episodes) total += e.frames.size();
  if (total == 0) throw InputError("dataset has no frames");

  std::map<std::string, Vector> embed_cache;
  auto embed = [&](const std::string& s) -> const Vector& {
    auto it = embed_cache.find(s);
    if (it == embed_cache.end()) {
      it = embed_cache.emplace(s, EmbedText(s, text_dim).vector).first;
    }
    return it->second;
  };

  std::vector<TrainSample> out;
  out.reserve(total);
  for (const auto& e : episodes) {
    const int n = static_cast<int>(e.frames.size());
    for (int t = 0; t < n; ++t) {
      const Frame& f = e.frames[t];
      TrainSample s;
      s.proprio_window.resize(history, 3);
      for (int i = 0; i < history; ++i) {
        const int src = std::max(0, t - (history - 1) + i);
        s.proprio_window.row(i) = e.frames[src].observation.proprio.transpose();
      }
      s.cloud = f.observation.cloud;
      s.task = e.task_description;
      s.subgoal = e.subgoals.at(f.subgoal_index);
      s.task_embed = embed(s.task);
      s.subgoal_embed = embed(s.subgoal);
      s.a0.resize(horizon, 3);
      for (int i = 0; i < horizon; ++i) {
        const int src = std::min(n - 1, t + i);
        s.a0.row(i) = EncodeAction(e.frames[src].action);
      }
      s.padded = t + horizon > n;
      s.label = f.label;
      out.push_back(std::move(s));
    }
  }
  return out;
}

void ApplyUpdate(ParamSet& params, OptimizerState& state,
                 const TrainConfig& config) {
  if (config.optimizer == OptimizerKind::kSgd) {
    for (auto& p : params.params()) p.value -= config.learning_rate * p.grad;
    ++state.step;
    return;
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params.params()) {
      state.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      state.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = params[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    m = b1 * m + (1.0 - b1) * p.grad;
    v = b2 * v + (1.0 - b2) * p.grad.cwiseAbs2();
    p.value.array() -= config.learning_rate * (m.array() / c1) /
                       ((v.array() / c2).sqrt() + config.adam_epsilon);
  }
}

LossReport TrainEpoch(SubgoalPolicy& policy, OptimizerState& optimizer,
                      const std::vector<TrainSample>& samples,
                      const TrainConfig& config, int epoch) {
  if (samples.empty()) throw InputError("no training samples");
  const PolicyConfig& pc = policy.config();
  const int n = static_cast<int>(samples.size());
  Rng rng(DeriveSeed(config.seed, static_cast<uint64_t>(epoch)));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[i], order[rng.Below(static_cast<uint64_t>(i) + 1)]);
  }
  const double lambda = LambdaSchedule(epoch, config.epochs, config.lambda_max);
  const int chunk = pc.ChunkWidth();

  LossReport sum;
  int batch_index = 0;
  for (int start = 0; start < n; start += config.batch_size, ++batch_index) {
    const int b = std::min(config.batch_size, n - start);
    PolicyBatch batch;
    batch.proprio.resize(pc.ProprioWidth(), b);
    batch.task_embed.resize(pc.text_dim, b);
    batch.subgoal_embed.resize(pc.text_dim, b);
    batch.actions.resize(chunk, b);
    batch.noise.resize(chunk, b);
    for (int j = 0; j < b; ++j) {
      const TrainSample& s = samples[order[start + j]];
      batch.clouds.push_back(&s.cloud);
      batch.proprio.col(j) = FlattenChunk(s.proprio_window);
      batch.task_embed.col(j) = s.task_embed;
      batch.subgoal_embed.col(j) = s.subgoal_embed;
      batch.actions.col(j) = FlattenChunk(s.a0);
      batch.labels.push_back(s.label);
      batch.timesteps.push_back(
          1 + static_cast<int>(rng.Below(static_cast<uint64_t>(pc.diffusion_steps))));
      for (int r = 0; r < chunk; ++r) batch.noise(r, j) = rng.Normal();
    }
    policy.params().ZeroGrad();
    LossReport r;
    try {
      r = policy.Objective(batch, lambda, config.focal, true);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                         std::to_string(batch_index) + ": " + e.what());
    }
    ApplyUpdate(policy.params(), optimizer, config);
    sum.l_action += r.l_action * b;
    sum.l_completion += r.l_completion * b;
  }
  policy.params().CheckFinite();
  return TotalLoss(sum.l_action / n, sum.l_completion / n, lambda);
}

// -------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'S', 'G', 'P', 'C', 'K', 'P', 'T', '\0'};

std::string_view OptimizerName(OptimizerKind k) {
  return k == OptimizerKind::kSgd ? "sgd" : "adam";
}

json PolicyJson(const PolicyConfig& p) {
  return {{"proprio_dim", p.proprio_dim},
          {"history", p.history},
          {"horizon", p.horizon},
          {"action_dim", p.action_dim},
          {"text_dim", p.text_dim},
          {"time_dim", p.time_dim},
          {"point_widths", p.point_widths},
          {"denoiser_hidden", p.denoiser_hidden},
          {"diffusion_steps", p.diffusion_steps},
          {"beta_start", p.beta_start},
          {"beta_end", p.beta_end},
          {"ablate_subgoal", p.ablate_subgoal},
          {"init_seed", p.init_seed}};
}

PolicyConfig PolicyFromJson(const json& j) {
  PolicyConfig p;
  p.proprio_dim = j.at("proprio_dim").get<int>();
  p.history = j.at("history").get<int>();
  p.horizon = j.at("horizon").get<int>();
  p.action_dim = j.at("action_dim").get<int>();
  p.text_dim = j.at("text_dim").get<int>();
  p.time_dim = j.at("time_dim").get<int>();
  p.point_widths = j.at("point_widths").get<std::vector<int>>();
  p.denoiser_hidden = j.at("denoiser_hidden").get<std::vector<int>>();
  p.diffusion_steps = j.at("diffusion_steps").get<int>();
  p.beta_start = j.at("beta_start").get<double>();
  p.beta_end = j.at("beta_end").get<double>();
  p.ablate_subgoal = j.at("ablate_subgoal").get<bool>();
  p.init_seed = j.at("init_seed").get<uint64_t>();
  return p;
}

json TrainJson(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"optimizer", OptimizerName(t.optimizer)},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"adam_epsilon", t.adam_epsilon},
          {"seed", t.seed},
          {"ablate_subgoal", t.ablate_subgoal},
          {"lambda_max", t.lambda_max},
          {"focal_beta", t.focal.beta},
          {"focal_gamma", t.focal.gamma}};
}

TrainConfig TrainFromJson(const json& j) {
  TrainConfig t;
  t.epochs = j.at("epochs").get<int>();
  t.batch_size = j.at("batch_size").get<int>();
  t.learning_rate = j.at("learning_rate").get<double>();
  t.optimizer = j.at("optimizer").get<std::string>() == "sgd"
                    ? OptimizerKind::kSgd
                    : OptimizerKind::kAdam;
  t.adam_beta1 = j.at("adam_beta1").get<double>();
  t.adam_beta2 = j.at("adam_beta2").get<double>();
  t.adam_epsilon = j.at("adam_epsilon").get<double>();
  t.seed = j.at("seed").get<uint64_t>();
  t.ablate_subgoal = j.at("ablate_subgoal").get<bool>();
  t.lambda_max = j.at("lambda_max").get<double>();
  t.focal.beta = j.at("focal_beta").get<double>();
  t.focal.gamma = j.at("focal_gamma").get<double>();
  return t;
}

template <typename T>
void Put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void PutTensor(std::string& out, const std::string& name, const Matrix& m) {
  Put<uint32_t>(out, static_cast<uint32_t>(name.size()));
  out += name;
  Put<uint64_t>(out, static_cast<uint64_t>(m.rows()));
  Put<uint64_t>(out, static_cast<uint64_t>(m.cols()));
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) Put<double>(out, m(r, c));
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T Get() {
    Need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string Bytes(size_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  size_t pos() const { return pos_; }

 private:
  void Need(size_t n) const {
    if (pos_ + n > bytes_.size()) throw LoadError("checkpoint is truncated");
  }

  const std::string& bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::string ConfigJson(const PolicyConfig& policy, const TrainConfig& train) {
  return json{{"policy", PolicyJson(policy)}, {"train", TrainJson(train)}}
      .dump();
}

std::string SerializeCheckpoint(const Checkpoint& ckpt) {
  const SubgoalPolicy& policy = ckpt.policy;
  const NoiseSchedule& sched = policy.schedule();
  json history = json::array();
  for (const auto& h : ckpt.history) {
    history.push_back({h.epoch, h.loss.l_action, h.loss.l_completion,
                       h.loss.lambda, h.loss.l_total});
  }
  const json header = {
      {"format_version", kFormatVersion},
      {"policy", PolicyJson(policy.config())},
      {"train", TrainJson(ckpt.train)},
      {"schedule",
       {{"num_steps", sched.num_steps},
        {"beta_start", sched.beta_start},
        {"beta_end", sched.beta_end},
        {"digest", HexDigest(sched.Digest())}}},
      {"epoch", ckpt.epoch},
      {"optimizer_step", ckpt.optimizer.step},
      {"rng_state_digest",
       HexDigest(DeriveSeed(ckpt.train.seed,
                            static_cast<uint64_t>(ckpt.epoch)))},
      {"param_digest", HexDigest(policy.params().Digest())},
      {"task", ckpt.task},
      {"task_description", ckpt.task_description},
      {"subgoals", ckpt.subgoals},
      {"dataset_digest", ckpt.dataset_digest},
      {"history", history}};
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  Put<uint32_t>(out, static_cast<uint32_t>(kFormatVersion));
  Put<uint64_t>(out, header_text.size());
  out += header_text;
  const ParamSet& params = policy.params();
  const bool has_moments = ckpt.optimizer.m.size() == params.size();
  Put<uint64_t>(out, params.size() * (has_moments ? 3 : 1));
  for (const auto& p : params.params()) PutTensor(out, p.name, p.value);
  if (has_moments) {
    for (size_t i = 0; i < params.size(); ++i) {
      PutTensor(out, "opt.m/" + params[i].name, ckpt.optimizer.m[i]);
    }
    for (size_t i = 0; i < params.size(); ++i) {
      PutTensor(out, "opt.v/" + params[i].name, ckpt.optimizer.v[i]);
    }
  }
  Put<uint64_t>(out, Fnv1a(out));
  return out;
}

void SaveCheckpoint(const fs::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  WriteFile(path, SerializeCheckpoint(ckpt));
}

Checkpoint DeserializeCheckpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw LoadError("not a checkpoint file");
  }
  uint64_t stored_digest;
  std::memcpy(&stored_digest, bytes.data() + bytes.size() - 8, 8);
  if (Fnv1a(std::string_view(bytes.data(), bytes.size() - 8)) !=
      stored_digest) {
    throw LoadError("checkpoint digest mismatch");
  }
  Reader in(bytes);
  in.Bytes(sizeof(kMagic));
  const uint32_t version = in.Get<uint32_t>();
  if (version != static_cast<uint32_t>(kFormatVersion)) {
    throw LoadError("unsupported checkpoint format_version " +
                    std::to_string(version));
  }
  json header;
  try {
    header = json::parse(in.Bytes(in.Get<uint64_t>()));
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    const PolicyConfig pc = PolicyFromJson(header.at("policy"));
    ckpt.train = TrainFromJson(header.at("train"));
    ckpt.policy = SubgoalPolicy(pc);
    const auto& sched = header.at("schedule");
    const NoiseSchedule rebuilt =
        BuildSchedule(sched.at("num_steps").get<int>(),
                      sched.at("beta_start").get<double>(),
                      sched.at("beta_end").get<double>());
    if (HexDigest(rebuilt.Digest()) != sched.at("digest").get<std::string>() ||
        HexDigest(ckpt.policy.schedule().Digest()) !=
            sched.at("digest").get<std::string>()) {
      throw LoadError("noise schedule digest mismatch");
    }
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.optimizer.step = header.at("optimizer_step").get<int64_t>();
    ckpt.task = header.at("task").get<std::string>();
    ckpt.task_description = header.at("task_description").get<std::string>();
    ckpt.subgoals = header.at("subgoals").get<std::vector<std::string>>();
    ckpt.dataset_digest = header.at("dataset_digest").get<std::string>();
    for (const auto& h : header.at("history")) {
      EpochRecord r;
      r.epoch = h.at(0).get<int>();
      r.loss.l_action = h.at(1).get<double>();
      r.loss.l_completion = h.at(2).get<double>();
      r.loss.lambda = h.at(3).get<double>();
      r.loss.l_total = h.at(4).get<double>();
      ckpt.history.push_back(r);
    }
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed checkpoint header: ") + e.what());
  }

  ParamSet params = ckpt.policy.params();
  const uint64_t count = in.Get<uint64_t>();
  std::map<std::string, Matrix> tensors;
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = in.Bytes(in.Get<uint32_t>());
    const uint64_t rows = in.Get<uint64_t>();
    const uint64_t cols = in.Get<uint64_t>();
    Matrix m(rows, cols);
    for (uint64_t r = 0; r < rows; ++r) {
      for (uint64_t c = 0; c < cols; ++c) m(r, c) = in.Get<double>();
    }
    tensors[name] = std::move(m);
  }
  for (auto& p : params.params()) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw LoadError("checkpoint lacks " + p.name);
    if (it->second.rows() != p.value.rows() ||
        it->second.cols() != p.value.cols()) {
      throw LoadError("shape mismatch for " + p.name);
    }
    p.value = it->second;
    p.grad.setZero();
  }
  if (tensors.count("opt.m/" + params[0].name)) {
    for (const auto& p : params.params()) {
      ckpt.optimizer.m.push_back(tensors.at("opt.m/" + p.name));
      ckpt.optimizer.v.push_back(tensors.at("opt.v/" + p.name));
    }
  }
  if (HexDigest(params.Digest()) != header.at("param_digest").get<std::string>()) {
    throw LoadError("parameter digest mismatch");
  }
  ckpt.policy.SetParams(std::move(params));
  return ckpt;
}

Checkpoint LoadCheckpoint(const fs::path& path) {
  return DeserializeCheckpoint(ReadFile(path));
}

// ---------------------------------------------------------------- training

std::string DatasetDigest(const DatasetManifest& manifest) {
  uint64_t h = kFnvOffset;
  for (const auto& f : manifest.files) h = Fnv1a(f.digest, h);
  return HexDigest(h);
}

std::string MetricsLine(const EpochRecord& record) {
  return "{\"epoch\":" + std::to_string(record.epoch) +
         ",\"l_action\":" + FormatDouble(record.loss.l_action) +
         ",\"l_completion\":" + FormatDouble(record.loss.l_completion) +
         ",\"lambda\":" + FormatDouble(record.loss.lambda) +
         ",\"l_total\":" + FormatDouble(record.loss.l_total) + "}";
}

Checkpoint InitCheckpoint(const Dataset& dataset, const TrainConfig& config,
                          PolicyConfig policy_config) {
  config.Validate();
  policy_config.ablate_subgoal = config.ablate_subgoal;
  policy_config.init_seed = config.seed;
  Checkpoint ckpt;
  ckpt.policy = SubgoalPolicy(policy_config);
  ckpt.train = config;
  ckpt.task = dataset.manifest.task;
  ckpt.task_description = dataset.manifest.task_description;
  ckpt.subgoals = dataset.manifest.subgoals;
  ckpt.dataset_digest = DatasetDigest(dataset.manifest);
  return ckpt;
}

void ContinueTraining(Checkpoint& ckpt, const std::vector<TrainSample>& samples,
                      const TrainHooks& hooks) {
  for (int epoch = ckpt.epoch; epoch < ckpt.train.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss =
        TrainEpoch(ckpt.policy, ckpt.optimizer, samples, ckpt.train, epoch);
    ckpt.epoch = epoch + 1;
    ckpt.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.checkpoint_every > 0 && !hooks.checkpoint_path.empty() &&
        ckpt.epoch % hooks.checkpoint_every == 0) {
      SaveCheckpoint(hooks.checkpoint_path, ckpt);
    }
    if (hooks.eval_every > 0 && hooks.on_eval &&
        ckpt.epoch % hooks.eval_every == 0) {
      hooks.on_eval(ckpt.epoch, ckpt);
    }
  }
}

Checkpoint Train(const Dataset& dataset, const TrainConfig& config,
                 const PolicyConfig& policy_config, const TrainHooks& hooks) {
  Checkpoint ckpt = InitCheckpoint(dataset, config, policy_config);
  const PolicyConfig& pc = ckpt.policy.config();
  const std::vector<TrainSample> samples =
      MakeSamples(dataset.episodes, pc.history, pc.horizon, pc.text_dim);
  ContinueTraining(ckpt, samples, hooks);
  return ckpt;
}

Checkpoint Train(const fs::path& dataset_dir, const TrainConfig& config,
                 const PolicyConfig& policy_config, const TrainHooks& hooks) {
  return Train(LoadDataset(dataset_dir), config, policy_config, hooks);
}

}  // namespace sgpolicy
