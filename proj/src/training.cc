// Copyright 2026 The hflow Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hflow/training.h"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

namespace hflow {

Json to_json(const TrainConfig& c) {
  Json j = to_json(c.model);
  j["learning_rate"] = c.learning_rate;
  j["beta_max"] = c.beta_max;
  j["anneal_fraction"] = c.anneal_fraction;
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["grad_clip"] = c.grad_clip;
  j["history_dropout"] = c.history_dropout;
  j["divergence_limit"] = c.divergence_limit;
  j["corpus_path"] = c.corpus_path;
  j["log_wall_time"] = c.log_wall_time;
  return j;
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
  TrainConfig c;
  StrictObject o(j, path);
  read_model_config(o, c.model);
  o.read("learning_rate", c.learning_rate);
  o.read("beta_max", c.beta_max);
  o.read("anneal_fraction", c.anneal_fraction);
  o.read("steps", c.steps);
  o.read("batch_size", c.batch_size);
  o.read("seed", c.seed);
  o.read("grad_clip", c.grad_clip);
  o.read("history_dropout", c.history_dropout);
  o.read("divergence_limit", c.divergence_limit);
  o.read("corpus_path", c.corpus_path);
  o.read("log_wall_time", c.log_wall_time);
  o.finish();
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(c.beta_max >= 0.0)) throw ConfigError("beta_max must be non-negative");
  if (!(c.anneal_fraction >= 0.0 && c.anneal_fraction <= 1.0)) {
    throw ConfigError("anneal_fraction must lie in [0, 1]");
  }
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(c.history_dropout >= 0.0 && c.history_dropout < 1.0)) {
    throw ConfigError("history_dropout must lie in [0, 1)");
  }
  if (!(c.divergence_limit > 0.0)) throw ConfigError("divergence_limit must be positive");
  return c;
}

double beta_at(const TrainConfig& config, std::size_t step) {
  const double ramp = config.anneal_fraction * static_cast<double>(config.steps);
  if (ramp <= 0.0) return config.beta_max;
  return config.beta_max * std::min(1.0, static_cast<double>(step) / ramp);
}

void adam_step(std::span<Param* const> params, AdamState& state, double lr,
               const AdamHyper& hyper) {
  if (state.first.empty()) {
    for (const Param* p : params) {
      state.first.emplace_back(p->value.rows(), p->value.cols());
      state.second.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (state.first.size() != params.size()) {
    throw DimensionError("adam_step: parameter count changed");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    Matrix& m = state.first[k];
    Matrix& v = state.second[k];
    if (p.grad.size() != p.value.size() || m.size() != p.value.size()) {
      throw DimensionError("adam_step: shape mismatch for " + p.name);
    }
    double* w = p.value.data();
    const double* g = p.grad.data();
    double* mm = m.data();
    double* vv = v.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      mm[i] = hyper.beta1 * mm[i] + (1.0 - hyper.beta1) * g[i];
      vv[i] = hyper.beta2 * vv[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double m_hat = mm[i] / c1;
      const double v_hat = vv[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
  }
}

double clip_grad_norm(std::span<Param* const> params, double max_norm) {
  double sq = 0.0;
  for (const Param* p : params) sq += dot(p->grad.flat(), p->grad.flat());
  const double total = std::sqrt(sq);
  if (std::isfinite(total) && total > max_norm && max_norm > 0.0) {
    const double scale = max_norm / total;
    for (Param* p : params) {
      for (double& g : p->grad.flat()) g *= scale;
    }
  }
  return total;
}

void MetricLog::append(const MetricRecord& r) {
  if (!std::isfinite(r.kl) || !std::isfinite(r.recon)) {
    throw NonFiniteError("metric log: non-finite record at step " +
                         std::to_string(r.step));
  }
  records_.push_back(r);
}

std::pair<double, double> MetricLog::final_epoch_means() const {
  if (records_.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan};
  }
  const std::size_t n = std::max<std::size_t>(1, records_.size() / 10);
  double kl = 0.0, recon = 0.0;
  for (std::size_t i = records_.size() - n; i < records_.size(); ++i) {
    kl += records_[i].kl;
    recon += records_[i].recon;
  }
  return {kl / static_cast<double>(n), recon / static_cast<double>(n)};
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string MetricLog::to_tsv() const {
  std::string out = "step\tkl\trecon\tbeta\twall_ms\n";
  for (const MetricRecord& r : records_) {
    out += std::to_string(r.step) + '\t' + fmt_double(r.kl) + '\t' +
           fmt_double(r.recon) + '\t' + fmt_double(r.beta) + '\t' +
           fmt_double(r.wall_ms) + '\n';
  }
  return out;
}

namespace {

constexpr char kCheckpointMagic[4] = {'H', 'F', 'V', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_le(std::vector<char>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::vector<char>& in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

Json metric_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double metric_from(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  Json params = Json::array();
  std::size_t offset = 0;
  for (const Param* p : ckpt.model.params()) {
    params.push_back({{"name", p->name},
                      {"shape", {p->value.rows(), p->value.cols()}},
                      {"offset", offset}});
    offset += p->value.size();
  }
  const Json header = {{"config", to_json(ckpt.config)},
                       {"step", ckpt.step},
                       {"final_kl", metric_or_null(ckpt.final_kl)},
                       {"final_recon", metric_or_null(ckpt.final_recon)},
                       {"params", std::move(params)}};
  const std::string text = header.dump();
  std::vector<char> out(kCheckpointMagic, kCheckpointMagic + 4);
  put_le(out, kCheckpointVersion, 4);
  put_le(out, text.size(), 8);
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + 4 * offset);
  for (const Param* p : ckpt.model.params()) {
    for (double v : p->value.flat()) {
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < 16 ||
      !std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.begin())) {
    throw FormatError("not an HFVC checkpoint");
  }
  const auto version = get_le(bytes, 4, 4);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t header_len = get_le(bytes, 8, 8);
  if (header_len > bytes.size() - 16) throw FormatError("truncated checkpoint header");
  Checkpoint ckpt;
  Json header;
  try {
    header = Json::parse(bytes.begin() + 16, bytes.begin() + 16 + header_len);
    ckpt.config = train_config_from_json(header.at("config"), "config");
    ckpt.step = header.at("step").get<std::size_t>();
    ckpt.final_kl = metric_from(header.at("final_kl"));
    ckpt.final_recon = metric_from(header.at("final_recon"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint header: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint config: " + std::string(e.what()));
  }
  ckpt.model = Model(ckpt.config.model);
  const std::size_t data_start = 16 + header_len;
  const std::size_t floats = (bytes.size() - data_start) / 4;
  if ((bytes.size() - data_start) % 4 != 0) throw FormatError("ragged parameter data");

  std::map<std::string, const Json*> entries;
  for (const Json& e : header.at("params")) entries[e.at("name").get<std::string>()] = &e;
  std::vector<Param*> params = ckpt.model.params();
  if (entries.size() != params.size()) {
    throw FormatError("checkpoint has " + std::to_string(entries.size()) +
                      " parameters, model expects " + std::to_string(params.size()));
  }
  for (Param* p : params) {
    auto it = entries.find(p->name);
    if (it == entries.end()) throw FormatError("checkpoint lacks parameter " + p->name);
    const Json& e = *it->second;
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols()) {
      throw FormatError("shape mismatch for parameter " + p->name);
    }
    const auto offset = e.at("offset").get<std::size_t>();
    if (offset + p->value.size() > floats) {
      throw FormatError("parameter " + p->name + " extends past end of data");
    }
    std::size_t at = data_start + 4 * offset;
    for (double& v : p->value.flat()) {
      v = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, at, 4))));
      at += 4;
    }
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<char> bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

TrainResult train(const TrainConfig& config, const Corpus& corpus) {
  const ModelConfig& mc = config.model;
  if (corpus.train.empty() && config.steps > 0) {
    throw std::invalid_argument("train: corpus has no training utterances");
  }
  if (corpus.spec.mel_bands != mc.mel_bands || corpus.spec.vocab > mc.vocab) {
    throw ConfigError("train: corpus bands/vocab do not match the model config");
  }
  if (config.batch_size == 0) throw ConfigError("train: batch_size must be positive");

  TrainResult result;
  Model model = Model::initialize(mc, config.seed);
  std::vector<Param*> params = model.params();
  AdamState adam;
  RngStream batch_rng(config.seed, "training/batch");
  RngStream noise_rng(config.seed, "training/noise");
  RngStream history_rng(config.seed, "training/history");
  std::vector<std::uint8_t> dropped;
  const auto start = std::chrono::steady_clock::now();
  const double weight = 1.0 / static_cast<double>(config.batch_size);
  const int last_index = static_cast<int>(corpus.train.size()) - 1;
  Vec eps(mc.latent_dim);

  for (std::size_t step = 0; step < config.steps; ++step) {
    const double beta = beta_at(config, step);
    model.zero_grad();
    double kl = 0.0, recon = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const Utterance& u = corpus.train[batch_rng.uniform_int(0, last_index)];
      noise_rng.fill_normal(eps);
      dropped.assign(u.mel.rows(), 0);
      if (config.history_dropout > 0.0) {
        for (std::uint8_t& d : dropped) d = history_rng.uniform() < config.history_dropout;
      }
      const LossBreakdown l =
          accumulate_gradients(model, u.mel, u.phonemes, eps, beta, weight, dropped);
      kl += l.kl * weight;
      recon += l.recon * weight;
    }
    MetricRecord record{step, kl, recon, beta, 0.0};
    if (config.log_wall_time) {
      record.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
    }
    const double grad_norm = clip_grad_norm(params, config.grad_clip);
    if (!std::isfinite(kl) || !std::isfinite(recon) || !std::isfinite(grad_norm)) {
      throw NumericAbort("non-finite loss at step " + std::to_string(step) +
                             " (kl=" + fmt_double(kl) + ", recon=" + fmt_double(recon) +
                             ", grad_norm=" + fmt_double(grad_norm) + ")",
                         record);
    }
    if (kl > config.divergence_limit || recon > config.divergence_limit) {
      throw NumericAbort("training diverged at step " + std::to_string(step) +
                             " (kl=" + fmt_double(kl) + ", recon=" + fmt_double(recon) + ")",
                         record);
    }
    result.log.append(record);
    adam_step(params, adam, config.learning_rate);
  }

  for (Param* p : params) round_to_float(p->value.flat());
  model.zero_grad();
  const auto [final_kl, final_recon] = result.log.final_epoch_means();
  result.checkpoint.config = config;
  result.checkpoint.step = config.steps;
  result.checkpoint.final_kl = final_kl;
  result.checkpoint.final_recon = final_recon;
  result.checkpoint.model = std::move(model);
  return result;
}

std::vector<TrainConfig> architecture_grid(const TrainConfig& base) {
  std::vector<TrainConfig> grid;
  TrainConfig vanilla = base;
  vanilla.model.arch = Arch::kVanilla;
  vanilla.model.num_vectors = 0;
  grid.push_back(vanilla);
  for (Arch arch : {Arch::kArch1, Arch::kArch2, Arch::kArch3}) {
    for (std::size_t k : {2, 4, 8, 16}) {
      TrainConfig c = base;
      c.model.arch = arch;
      c.model.num_vectors = k;
      grid.push_back(c);
    }
  }
  return grid;
}

std::vector<SweepRow> sweep(
    const std::vector<TrainConfig>& configs, const Corpus& corpus, unsigned jobs,
    const std::function<void(std::size_t, const TrainConfig&, const TrainResult*)>& on_done) {
  std::vector<SweepRow> rows(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      const TrainConfig& c = configs[i];
      SweepRow& row = rows[i];
      row.arch = c.model.arch;
      row.num_vectors = c.model.flow_vectors();
      row.seed = c.seed;
      try {
        TrainResult r = train(c, corpus);
        row.final_kl = r.checkpoint.final_kl;
        row.final_recon = r.checkpoint.final_recon;
        row.ok = std::isfinite(row.final_kl) && std::isfinite(row.final_recon);
        if (!row.ok) row.error = "no finite final metrics";
        if (on_done) {
          std::lock_guard<std::mutex> lock(callback_mutex);
          on_done(i, c, &r);
        }
      } catch (const std::exception& e) {
        row.ok = false;
        row.final_kl = row.final_recon = std::numeric_limits<double>::quiet_NaN();
        row.error = e.what();
        if (on_done) {
          std::lock_guard<std::mutex> lock(callback_mutex);
          on_done(i, c, nullptr);
        }
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(configs.size())));
  std::vector<std::thread> threads;
  for (unsigned t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  for (std::thread& t : threads) t.join();
  return rows;
}

std::string sweep_tsv(const std::vector<SweepRow>& rows) {
  std::string out = "arch\tK\tfinal_kl\tfinal_recon\tstatus\n";
  for (const SweepRow& r : rows) {
    out += std::string(arch_name(r.arch)) + '\t' + std::to_string(r.num_vectors) + '\t' +
           fmt_double(r.final_kl) + '\t' + fmt_double(r.final_recon) + '\t' +
           (r.ok ? "ok" : "failed") + '\n';
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<SweepRow> sweep_medians(const std::vector<SweepRow>& rows) {
  std::vector<SweepRow> out;
  std::vector<std::vector<double>> kls, recons;
  for (const SweepRow& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SweepRow& o) {
      return o.arch == r.arch && o.num_vectors == r.num_vectors;
    });
    std::size_t idx = static_cast<std::size_t>(it - out.begin());
    if (it == out.end()) {
      SweepRow g;
      g.arch = r.arch;
      g.num_vectors = r.num_vectors;
      out.push_back(g);
      kls.emplace_back();
      recons.emplace_back();
    }
    if (r.ok) {
      out[idx].ok = true;
      kls[idx].push_back(r.final_kl);
      recons[idx].push_back(r.final_recon);
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].final_kl = median(kls[i]);
    out[i].final_recon = median(recons[i]);
  }
  return out;
}

}  // namespace hflow
