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

// hflow: synthetic corpus generation, training, sweeps, one-shot synthesis,
// transfer evaluation and listening-test statistics.
//
// Exit codes: 0 success, 2 config/input error, 3 I/O error, 4 numeric abort.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "hflow/config.h"
#include "hflow/eval.h"
#include "hflow/stats.h"
#include "hflow/synthdata.h"
#include "hflow/training.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw hflow::IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

unsigned default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::string corpus;
  std::string checkpoint;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t seeds = 3;
  unsigned jobs = 0;
  std::string grid;
  std::string reference;
  std::string prompt;
  std::size_t frames = 0;
  std::string responses;
  std::string question = "emotion";
  double alpha = 0.05;
};

int cmd_gen_data(const Options& o) {
  const hflow::CliConfig config = hflow::load_cli_config(o.config, o.overrides);
  config.corpus.validate();
  const hflow::Corpus corpus = hflow::generate_corpus(config.corpus, o.seed);
  ensure_dir(o.out);
  hflow::write_corpus(corpus, o.out);
  std::cout << "train " << corpus.train.size() << "\none_shot " << corpus.one_shot.size()
            << "\nprompts " << corpus.prompts.size() << "\n";
  return 0;
}

hflow::TrainConfig train_config(const Options& o) {
  hflow::TrainConfig c = hflow::load_cli_config(o.config, o.overrides).train;
  if (o.seed_given) c.seed = o.seed;
  return c;
}

int cmd_train(const Options& o) {
  hflow::TrainConfig config = train_config(o);
  config.corpus_path = o.corpus;
  const hflow::Corpus corpus = hflow::read_corpus(o.corpus);
  ensure_dir(o.out);
  hflow::TrainResult result;
  try {
    result = hflow::train(config, corpus);
  } catch (const hflow::NumericAbort& e) {
    const hflow::MetricRecord& r = e.record;
    std::cerr << "numeric abort: " << e.what() << "\nstep\tkl\trecon\tbeta\n"
              << r.step << '\t' << r.kl << '\t' << r.recon << '\t' << r.beta << '\n';
    return kExitNumeric;
  }
  hflow::write_checkpoint(fs::path(o.out) / "checkpoint.hfvc", result.checkpoint);
  hflow::write_text_file(fs::path(o.out) / "metrics.tsv", result.log.to_tsv());
  if (result.log.empty()) {
    std::cout << "final_kl n/a\nfinal_recon n/a\n";
  } else {
    std::cout << "final_kl " << fmt(result.checkpoint.final_kl) << "\nfinal_recon "
              << fmt(result.checkpoint.final_recon) << "\n";
  }
  return 0;
}

// Grid file: {"train": {...base...}, "runs": [{...overrides...}, ...]}.
// Without "runs" the 13-config architecture grid is used.
std::vector<hflow::TrainConfig> load_grid(const Options& o, hflow::TrainConfig& base) {
  hflow::Json doc = hflow::Json::object();
  if (!o.grid.empty()) {
    try {
      doc = hflow::Json::parse(hflow::read_text_file(o.grid));
    } catch (const nlohmann::json::parse_error& e) {
      throw hflow::ConfigError(o.grid + ": " + e.what());
    }
  }
  for (const std::string& s : o.overrides) hflow::apply_override(doc, s);
  if (!doc.is_object()) throw hflow::ConfigError("grid file must hold a JSON object");
  hflow::Json runs;
  if (auto it = doc.find("runs"); it != doc.end()) {
    runs = *it;
    doc.erase(it);
  }
  base = hflow::cli_config_from_json(doc).train;
  if (o.seed_given) base.seed = o.seed;
  base.corpus_path = o.corpus;
  if (runs.is_null()) return hflow::architecture_grid(base);
  if (!runs.is_array() || runs.empty()) {
    throw hflow::ConfigError("key 'runs' must be a non-empty array");
  }
  std::vector<hflow::TrainConfig> configs;
  const hflow::Json base_json = hflow::to_json(base);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!runs[i].is_object()) throw hflow::ConfigError("runs[" + std::to_string(i) + "] must be an object");
    hflow::Json merged = base_json;
    merged.update(runs[i]);
    configs.push_back(hflow::train_config_from_json(merged, "runs[" + std::to_string(i) + "]"));
  }
  return configs;
}

int cmd_sweep(const Options& o) {
  hflow::TrainConfig base;
  const std::vector<hflow::TrainConfig> grid = load_grid(o, base);
  if (o.seeds == 0) throw hflow::ConfigError("--seeds must be >= 1");
  const hflow::Corpus corpus = hflow::read_corpus(o.corpus);
  ensure_dir(o.out);

  std::vector<hflow::TrainConfig> configs;
  for (const hflow::TrainConfig& c : grid) {
    for (std::size_t s = 0; s < o.seeds; ++s) {
      hflow::TrainConfig run = c;
      run.seed = c.seed + s;
      configs.push_back(run);
    }
  }
  const unsigned jobs = o.jobs == 0 ? default_jobs() : o.jobs;
  const std::vector<hflow::SweepRow> rows = hflow::sweep(
      configs, corpus, jobs,
      [&](std::size_t i, const hflow::TrainConfig& c, const hflow::TrainResult* r) {
        std::cerr << "[" << i + 1 << "/" << configs.size() << "] "
                  << hflow::arch_name(c.model.arch) << " K=" << c.model.flow_vectors()
                  << " seed=" << c.seed << (r ? " done" : " FAILED") << "\n";
      });
  const std::vector<hflow::SweepRow> medians = hflow::sweep_medians(rows);
  hflow::write_text_file(fs::path(o.out) / "sweep.tsv", hflow::sweep_tsv(rows));
  hflow::write_text_file(fs::path(o.out) / "sweep_median.tsv", hflow::sweep_tsv(medians));

  hflow::Json runs = hflow::Json::array();
  std::size_t succeeded = 0;
  for (const hflow::SweepRow& r : rows) {
    succeeded += r.ok ? 1 : 0;
    hflow::Json row = {{"arch", hflow::arch_name(r.arch)}, {"K", r.num_vectors},
                       {"seed", r.seed}, {"status", r.ok ? "ok" : "failed"}};
    if (r.ok) {
      row["final_kl"] = r.final_kl;
      row["final_recon"] = r.final_recon;
    } else {
      row["error"] = r.error;
    }
    runs.push_back(std::move(row));
  }
  hflow::Json summary = {{"seeds", o.seeds}, {"runs", std::move(runs)}};
  const hflow::SweepRow* vanilla = nullptr;
  for (const hflow::SweepRow& m : medians) {
    if (m.arch == hflow::Arch::kVanilla && m.ok) vanilla = &m;
  }
  if (vanilla != nullptr && vanilla->final_kl > 0.0) {
    hflow::Json rel = hflow::Json::array();
    for (const hflow::SweepRow& m : medians) {
      if (m.arch == hflow::Arch::kVanilla || !m.ok) continue;
      rel.push_back({{"arch", hflow::arch_name(m.arch)},
                     {"K", m.num_vectors},
                     {"relative_kl_change", (vanilla->final_kl - m.final_kl) / vanilla->final_kl},
                     {"recon_ratio", m.final_recon / vanilla->final_recon}});
    }
    summary["relative_to_vanilla"] = std::move(rel);
  }
  hflow::write_text_file(fs::path(o.out) / "sweep_summary.json", summary.dump(2) + "\n");
  std::cout << hflow::sweep_tsv(medians);
  std::cout << "succeeded " << succeeded << "/" << rows.size() << "\n";
  return succeeded > 0 ? 0 : kExitNumeric;
}

int cmd_synth(const Options& o) {
  const hflow::Checkpoint ckpt = hflow::read_checkpoint(o.checkpoint);
  const hflow::Corpus corpus = hflow::read_corpus(o.corpus);
  const hflow::Utterance* ref = corpus.find_utterance(o.reference);
  if (ref == nullptr) throw UsageError("unknown reference utterance id '" + o.reference + "'");
  hflow::PhonemeSequence prompt;
  if (const hflow::Utterance* u = corpus.find_utterance(o.prompt)) {
    prompt = u->phonemes;
  } else if (const hflow::Prompt* p = corpus.find_prompt(o.prompt)) {
    prompt = p->phonemes;
  } else {
    try {
      prompt = hflow::parse_phoneme_list(o.prompt);
    } catch (const std::exception&) {
      throw UsageError("prompt '" + o.prompt + "' is neither a known id nor a phoneme list");
    }
  }
  prompt.validate(ckpt.config.model.vocab);
  const hflow::PhonemeInventory inventory = hflow::make_inventory(corpus.spec);
  const std::size_t n = o.frames > 0 ? o.frames : hflow::rendered_length(prompt, inventory);
  const hflow::MelGram mel = hflow::one_shot_synthesize(ckpt.model, ref->mel, prompt, n);
  hflow::write_mel(o.out, mel);
  const hflow::StyleFactors est = hflow::style_oracle(mel, prompt, corpus.spec, inventory);
  std::cout << "frames " << mel.rows() << "\na_hat " << fmt(est.intensity) << "\nb_hat "
            << fmt(est.tilt) << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  const hflow::Checkpoint ckpt = hflow::read_checkpoint(o.checkpoint);
  const hflow::Corpus corpus = hflow::read_corpus(o.corpus);
  const hflow::TransferReport report =
      hflow::transfer_report(ckpt.model, corpus, o.jobs == 0 ? default_jobs() : o.jobs);
  ensure_dir(o.out);
  hflow::write_text_file(fs::path(o.out) / "report.tsv", hflow::transfer_tsv(report));
  hflow::write_text_file(fs::path(o.out) / "summary.json",
                         hflow::transfer_summary(report).dump(2) + "\n");
  for (const hflow::LevelMedian& l : report.levels) {
    std::cout << l.level << " median_a_hat " << fmt(l.median_a_hat) << "\n";
  }
  std::cout << "neutral median_a_hat " << fmt(report.neutral_median_a_hat) << "\nmonotonic "
            << (report.monotonic ? "true" : "false") << "\n";
  return 0;
}

int cmd_mushra(const Options& o) {
  const std::vector<hflow::MushraResponse> responses =
      hflow::parse_mushra_csv(hflow::read_text_file(o.responses));
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
  std::vector<hflow::SummaryRow> rows = hflow::aggregate(responses, hflow::GroupBy::kSystem);
  const std::vector<hflow::SummaryRow> by_level =
      hflow::aggregate(responses, hflow::GroupBy::kSystemIntensity);
  rows.insert(rows.end(), by_level.begin(), by_level.end());
  const std::vector<hflow::ComparisonFamily> families =
      hflow::mushra_compare_all(responses, o.alpha);
  ensure_dir(o.out);
  hflow::write_text_file(fs::path(o.out) / "summary.tsv", hflow::summary_tsv(rows));
  hflow::write_text_file(fs::path(o.out) / "tests.json",
                         hflow::outcomes_json(families, o.question, o.alpha).dump(2) + "\n");
  std::size_t dropped = 0;
  for (const auto& f : families) dropped += f.dropped_cells;
  if (dropped > 0) std::cerr << "warning: " << dropped << " unaligned cells dropped\n";
  std::cout << hflow::summary_tsv(rows);
  for (const hflow::TestOutcome& t : families.front().outcomes) {
    std::cout << t.system_a << " vs " << t.system_b << ": p=" << fmt(t.p)
              << (t.reject ? " reject" : " accept") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hflow: Householder-flow VAE experiments on synthetic speech-like data"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", o.config, "Config JSON (sections: corpus, train)");
    c->add_option("--set", o.overrides, "Override a config value: section.key=value");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  add_config(gen);
  gen->add_option("--out", o.out, "Corpus directory")->required();
  gen->add_option("--seed", o.seed, "Corpus seed")->default_val(0);

  CLI::App* train = app.add_subcommand("train", "Train one model");
  add_config(train);
  train->add_option("--corpus", o.corpus, "Corpus directory")->required();
  train->add_option("--out", o.out, "Output directory")->required();
  train->add_option("--seed", o.seed, "Training seed (overrides train.seed)")
      ->each([&](const std::string&) { o.seed_given = true; });

  CLI::App* sw = app.add_subcommand("sweep", "Train an architecture grid over seeds");
  sw->add_option("--grid", o.grid, "Grid JSON (train base and optional runs list)");
  sw->add_option("--set", o.overrides, "Override a grid value: train.key=value");
  sw->add_option("--corpus", o.corpus, "Corpus directory")->required();
  sw->add_option("--out", o.out, "Output directory")->required();
  sw->add_option("--seeds", o.seeds, "Seeds per config")->default_val(3);
  sw->add_option("--seed", o.seed, "First training seed")
      ->each([&](const std::string&) { o.seed_given = true; });
  sw->add_option("--jobs", o.jobs, "Parallel runs (default: hardware threads)");

  CLI::App* synth = app.add_subcommand("synth", "One-shot synthesis from a reference");
  synth->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  synth->add_option("--corpus", o.corpus, "Corpus directory")->required();
  synth->add_option("--reference", o.reference, "Reference utterance id")->required();
  synth->add_option("--prompt", o.prompt, "Utterance/prompt id or phoneme list 3,14,7")
      ->required();
  synth->add_option("--frames", o.frames, "Frames to generate (default: rendered length)");
  synth->add_option("--out", o.out, "Output .mels file")->required();

  CLI::App* ev = app.add_subcommand("eval", "One-shot transfer report");
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  ev->add_option("--corpus", o.corpus, "Corpus directory")->required();
  ev->add_option("--out", o.out, "Output directory")->required();
  ev->add_option("--jobs", o.jobs, "Worker threads (default: hardware threads)");

  CLI::App* mu = app.add_subcommand("mushra", "Aggregate and test MUSHRA responses");
  mu->add_option("--responses", o.responses, "Response CSV")->required();
  mu->add_option("--question", o.question, "Question label (naturalness, emotion, ...)");
  mu->add_option("--alpha", o.alpha, "Family-wise significance level")->default_val(0.05);
  mu->add_option("--out", o.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*train) return cmd_train(o);
    if (*sw) return cmd_sweep(o);
    if (*synth) return cmd_synth(o);
    if (*ev) return cmd_eval(o);
    if (*mu) return cmd_mushra(o);
  } catch (const hflow::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const hflow::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const hflow::NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const hflow::NonFiniteError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    // Config errors, malformed input, unknown ids, bad phoneme lists.
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
