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

#include "hflow/eval.h"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <stdexcept>
#include <thread>

#include "hflow/training.h"

namespace hflow {

MelGram one_shot_synthesize(const Model& model, const MelGram& reference,
                            const PhonemeSequence& prompt, std::size_t n_frames) {
  if (reference.rows() == 0) {
    throw std::invalid_argument("one_shot_synthesize: empty reference");
  }
  return synthesize(model, reference, prompt, n_frames);
}

namespace {

struct Job {
  const Utterance* reference;
  const Prompt* prompt;
  std::string level;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

TransferReport transfer_report(const Model& model, const Corpus& corpus,
                               unsigned jobs) {
  const PhonemeInventory inventory = make_inventory(corpus.spec);
  TransferReport report;

  std::vector<Job> work;
  for (const Utterance& ref : corpus.one_shot) {
    for (const Prompt& p : corpus.prompts) work.push_back({&ref, &p, ref.level});
  }
  const Utterance* neutral = nullptr;
  for (const Utterance& u : corpus.train) {
    if (neutral == nullptr || u.style.intensity < neutral->style.intensity) neutral = &u;
  }
  const std::size_t transfer_jobs = work.size();
  if (neutral != nullptr) {
    report.neutral_reference_id = neutral->id;
    for (const Prompt& p : corpus.prompts) work.push_back({neutral, &p, "neutral"});
  }

  std::vector<OneShotResult> results(work.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      const Job& job = work[i];
      const std::size_t n = rendered_length(job.prompt->phonemes, inventory);
      OneShotResult& r = results[i];
      r.prompt_id = job.prompt->id;
      r.level = job.level;
      r.generated = one_shot_synthesize(model, job.reference->mel, job.prompt->phonemes, n);
      r.estimate = style_oracle(r.generated, job.prompt->phonemes, corpus.spec, inventory);
    }
  };
  jobs = std::max(1u, jobs);
  std::vector<std::thread> threads;
  for (unsigned t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  for (std::thread& t : threads) t.join();

  std::vector<double> neutral_a;
  for (std::size_t i = transfer_jobs; i < results.size(); ++i) {
    neutral_a.push_back(results[i].estimate.intensity);
  }
  report.neutral_median_a_hat = median(neutral_a);
  results.resize(transfer_jobs);
  report.rows = std::move(results);

  for (const Utterance& ref : corpus.one_shot) {
    std::vector<double> a, b;
    for (const OneShotResult& r : report.rows) {
      if (r.level != ref.level) continue;
      a.push_back(r.estimate.intensity);
      b.push_back(r.estimate.tilt);
    }
    report.levels.push_back({ref.level, ref.style.intensity, median(a), median(b)});
  }
  report.monotonic = !report.levels.empty();
  for (std::size_t i = 1; i < report.levels.size(); ++i) {
    if (!(report.levels[i - 1].median_a_hat < report.levels[i].median_a_hat)) {
      report.monotonic = false;
    }
  }
  report.neutral_below_highest =
      neutral != nullptr && !report.levels.empty() &&
      report.neutral_median_a_hat < report.levels.back().median_a_hat;
  return report;
}

std::string transfer_tsv(const TransferReport& report) {
  std::string out = "level\tprompt_id\ta_hat\tb_hat\n";
  for (const OneShotResult& r : report.rows) {
    out += r.level + '\t' + r.prompt_id + '\t' + fmt(r.estimate.intensity) + '\t' +
           fmt(r.estimate.tilt) + '\n';
  }
  return out;
}

Json transfer_summary(const TransferReport& report) {
  Json levels = Json::array();
  for (const LevelMedian& l : report.levels) {
    levels.push_back({{"level", l.level},
                      {"reference_intensity", l.reference_intensity},
                      {"median_a_hat", l.median_a_hat},
                      {"median_b_hat", l.median_b_hat}});
  }
  Json neutral = nullptr;
  if (!report.neutral_reference_id.empty()) {
    neutral = {{"reference_id", report.neutral_reference_id},
               {"median_a_hat", report.neutral_median_a_hat}};
  }
  return {{"measure", "style_oracle intensity estimate (objective surrogate)"},
          {"rows", report.rows.size()},
          {"levels", std::move(levels)},
          {"neutral", std::move(neutral)},
          {"monotonic", report.monotonic},
          {"neutral_below_highest", report.neutral_below_highest}};
}

}  // namespace hflow
