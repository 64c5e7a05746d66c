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

// One-shot style transfer and its objective measurement.
//
// Emotional strength has no objective definition, so the report scores each
// generated spectrogram with style_oracle and treats the recovered modulation
// depth (a_hat) as the intensity of the transferred style.

#ifndef HFLOW_EVAL_H_
#define HFLOW_EVAL_H_

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hflow/json_io.h"
#include "hflow/model.h"
#include "hflow/synthdata.h"

namespace hflow {

// Encodes `reference` with eps = 0, applies the flow, and free-runs the
// decoder for n_frames conditioned on `prompt`.
MelGram one_shot_synthesize(const Model& model, const MelGram& reference,
                            const PhonemeSequence& prompt, std::size_t n_frames);

struct OneShotResult {
  std::string prompt_id;
  std::string level;
  MelGram generated;
  StyleFactors estimate;
};

struct LevelMedian {
  std::string level;
  double reference_intensity = 0.0;
  double median_a_hat = 0.0;
  double median_b_hat = 0.0;
};

struct TransferReport {
  std::vector<OneShotResult> rows;  // level-major, prompts in corpus order
  std::vector<LevelMedian> levels;  // one-shot levels, ascending intensity
  // Same prompts synthesized from the least intense training utterance.
  std::string neutral_reference_id;
  double neutral_median_a_hat = 0.0;
  bool monotonic = false;            // medians strictly increase with level
  bool neutral_below_highest = false;
};

// Synthesizes every (one-shot reference, prompt) pair plus the neutral
// reference over the prompts. Pure in (model, corpus); `jobs` only changes
// wall time.
TransferReport transfer_report(const Model& model, const Corpus& corpus,
                               unsigned jobs = 1);

// level\tprompt_id\ta_hat\tb_hat
std::string transfer_tsv(const TransferReport& report);
Json transfer_summary(const TransferReport& report);

}  // namespace hflow

#endif  // HFLOW_EVAL_H_
