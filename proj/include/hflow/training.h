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

// Deterministic training, checkpoints and architecture sweeps.
//
// Checkpoint file layout:
//   "HFVC" | u32 LE version (1) | u64 LE header length | JSON header |
//   float32 LE parameter data
// The header lists every parameter's name, shape and offset (in floats from
// the start of the data block) together with the training config, step and
// final metrics.

#ifndef HFLOW_TRAINING_H_
#define HFLOW_TRAINING_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hflow/json_io.h"
#include "hflow/model.h"
#include "hflow/synthdata.h"

namespace hflow {

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 2e-3;
  // KL weight ramps linearly from 0 to beta_max over the first
  // anneal_fraction of the steps, then stays at beta_max.
  double beta_max = 1e-3;
  double anneal_fraction = 0.2;
  std::size_t steps = 6000;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  double grad_clip = 5.0;
  // Probability that the decoder sees the zero frame instead of the previous
  // ground-truth frame at a training step, forcing it to rely on the text
  // and style conditioning rather than copying its input.
  double history_dropout = 0.9;
  // A step whose kl or recon exceeds this aborts the run as diverged.
  double divergence_limit = 1e6;
  std::string corpus_path;
  // When false the wall_ms column is written as 0 so logs are reproducible.
  bool log_wall_time = false;
};

Json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& j, const std::string& path = "");

double beta_at(const TrainConfig& config, std::size_t step);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::int64_t t = 0;
};

// One bias-corrected Adam update from each Param's grad. State is sized on
// first use; later calls must pass params of the same shapes.
void adam_step(std::span<Param* const> params, AdamState& state, double lr,
               const AdamHyper& hyper = {});

// Scales all grads so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<Param* const> params, double max_norm);

struct MetricRecord {
  std::size_t step = 0;
  double kl = 0.0;
  double recon = 0.0;
  double beta = 0.0;
  double wall_ms = 0.0;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

class MetricLog {
 public:
  // Throws NonFiniteError for non-finite kl or recon.
  void append(const MetricRecord& record);
  const std::vector<MetricRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // Means of kl and recon over the last 10% of records (at least one).
  std::pair<double, double> final_epoch_means() const;

  // step\tkl\trecon\tbeta\twall_ms
  std::string to_tsv() const;

  friend bool operator==(const MetricLog&, const MetricLog&) = default;

 private:
  std::vector<MetricRecord> records_;
};

struct Checkpoint {
  TrainConfig config;
  std::size_t step = 0;
  double final_kl = 0.0;
  double final_recon = 0.0;
  Model model;
};

std::vector<char> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::vector<char>& bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Non-finite loss during training. `record` holds the offending step.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(const std::string& what, MetricRecord record)
      : std::runtime_error(what), record(record) {}
  MetricRecord record;
};

struct TrainResult {
  Checkpoint checkpoint;
  MetricLog log;
};

// Runs config.steps Adam steps on corpus.train. Parameters of the returned
// checkpoint are rounded to float32 so they survive a save/load unchanged.
TrainResult train(const TrainConfig& config, const Corpus& corpus);

struct SweepRow {
  Arch arch = Arch::kVanilla;
  std::size_t num_vectors = 0;
  std::uint64_t seed = 0;
  double final_kl = 0.0;
  double final_recon = 0.0;
  bool ok = false;
  std::string error;
};

// Vanilla plus arch1..3 for each K in {2, 4, 8, 16}: 13 configs.
std::vector<TrainConfig> architecture_grid(const TrainConfig& base);

// Trains every config (in parallel on up to `jobs` threads) and records one
// row each; a failed run is recorded and the sweep continues. `on_done`, when
// set, receives each finished run (called from worker threads, serialized).
std::vector<SweepRow> sweep(
    const std::vector<TrainConfig>& configs, const Corpus& corpus,
    unsigned jobs = 1,
    const std::function<void(std::size_t, const TrainConfig&, const TrainResult*)>&
        on_done = {});

// arch\tK\tfinal_kl\tfinal_recon\tstatus
std::string sweep_tsv(const std::vector<SweepRow>& rows);

// Median final metrics per (arch, K) over the rows' seeds, in first-seen
// order; status is "ok" if at least one run of the group succeeded.
std::vector<SweepRow> sweep_medians(const std::vector<SweepRow>& rows);

double median(std::vector<double> values);

}  // namespace hflow

#endif  // HFLOW_TRAINING_H_
